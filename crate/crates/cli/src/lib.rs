//! File formats, config handling and subcommands of the `fpmatch` tool.
//!
//! The binary is a thin wrapper around [`run`], which tests call directly.

pub mod artifacts;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod exec;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::{CliError, FieldError};

#[derive(Debug, Parser)]
#[command(name = "fpmatch", version, about = "Floorplan and photograph matching experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps and heatmaps.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Repeat for more detail on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset to disk.
    Gen,
    /// Train one model and write its checkpoint.
    Train,
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate all ten fusion cells.
    SweepFusion,
    /// Train and evaluate the four encoder fine-tuning regimes.
    SweepFinetune,
    /// Train pair and k-way models and evaluate each on every smaller k.
    CrossEval,
    /// Receptive-field heatmap of one test floorplan.
    Rfviz {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Greedy segment simplification of one test floorplan.
    Localize {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Place each of a test apartment's photographs on its floorplan.
    Place {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Rank the test split's photographs against one floorplan.
    Retrieve {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // A second call in the same process (tests) is harmless.
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code: 0 success, 1 bad invocation or config, 2 runtime
/// failure. Errors go to stderr as one line of JSON.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_line());
            e.exit_code()
        }
    }
}
