//! The experiment config file: one TOML document shared by every subcommand.
//!
//! Precedence is flags, then file, then built-in defaults. A single top-level
//! `seed` feeds every random stream (data, initialisation, batches, test
//! draws, noise); per-section seeds are overwritten with it.

use std::path::Path;

use fpmatch_core::harness::{EvalConfig, Solver, TrainConfig};
use fpmatch_core::interpret::{RfConfig, SimplifyConfig};
use fpmatch_core::matchers::MatchProblem;
use fpmatch_core::synthgen::{GeneratorSpec, ObjectKind, RoomType};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, FieldError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub interpret: InterpretSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default)]
    pub generator: GeneratorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    /// Test samples; absent means one per test apartment.
    pub samples: Option<usize>,
    pub batch_size: usize,
    pub solver: Solver,
    /// Problem to evaluate on; absent means the checkpoint's own.
    pub problem: Option<MatchProblem>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { samples: None, batch_size: 64, solver: Solver::Native, problem: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    /// Room whose photographs the cross-evaluation matrix uses.
    pub cross_room: RoomType,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { cross_room: RoomType::Bathroom }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpretSection {
    /// Index into the test split of the apartment to probe.
    pub case: usize,
    pub room: RoomType,
    pub object: ObjectKind,
    pub top_n: usize,
    pub rf: RfConfig,
    pub simplify: SimplifyConfig,
}

impl Default for InterpretSection {
    fn default() -> Self {
        InterpretSection {
            case: 0,
            room: RoomType::Bathroom,
            object: ObjectKind::Bathtub,
            top_n: 10,
            rf: RfConfig::default(),
            simplify: SimplifyConfig::default(),
        }
    }
}

impl Config {
    /// Test-time settings with the global seed.
    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig { seed: self.seed, samples: self.eval.samples, batch_size: self.eval.batch_size }
    }

    /// Pushes the global seed into every section that carries one.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.interpret.rf.seed = seed;
    }

    /// Semantic checks on a parsed config; every violation is reported.
    pub fn check(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        // TOML integers are signed, so larger seeds could not be written back.
        if self.seed > i64::MAX as u64 {
            errs.push(FieldError::new("seed", format!("{} exceeds {}", self.seed, i64::MAX)));
        }
        let mut push = |e: fpmatch_core::Error| errs.push(FieldError::from_core(e));
        if let Err(e) = self.data.generator.validate() {
            push(e);
        }
        if let Err(e) = self.train.validate() {
            push(e);
        }
        if let Some(p) = &self.eval.problem {
            if let Err(e) = p.validate() {
                push(e);
            }
        }
        if let Err(e) = self.interpret.rf.validate(self.data.generator.floorplan_size, self.data.generator.floorplan_size) {
            push(e);
        }
        let need = self.train.problem.candidates().max(2);
        if self.data.n_train < need {
            errs.push(FieldError::new("data.n_train", format!("{} is fewer than the {need} apartments training needs", self.data.n_train)));
        }
        if self.data.n_test < 2 {
            errs.push(FieldError::new("data.n_test", format!("{} is fewer than 2", self.data.n_test)));
        }
        if self.eval.batch_size == 0 {
            errs.push(FieldError::new("eval.batch_size", "must be positive".into()));
        }
        if self.eval.samples.is_some_and(|n| n < 5) {
            errs.push(FieldError::new("eval.samples", "must be at least 5 (one per evaluation group)".into()));
        }
        if self.interpret.top_n == 0 {
            errs.push(FieldError::new("interpret.top_n", "must be positive".into()));
        }
        if !self.interpret.object.legal_in(self.interpret.room) {
            errs.push(FieldError::new(
                "interpret.object",
                format!("{} cannot appear in a {}", self.interpret.object.name(), self.interpret.room.name()),
            ));
        }
        errs
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialise")
    }
}

/// Dotted paths of every leaf key in a TOML tree.
fn leaf_paths(v: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        toml::Value::Table(t) => {
            for (k, child) in t {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                leaf_paths(child, &p, out);
            }
        }
        _ => out.push(prefix.to_string()),
    }
}

fn has_path(v: &toml::Value, path: &str) -> bool {
    let mut cur = v;
    for part in path.split('.') {
        match cur.get(part) {
            Some(next) => cur = next,
            None => return false,
        }
    }
    true
}

/// Parses, fills defaults and validates. Returns the normalized config or
/// the complete list of problems found.
pub fn parse_config(text: &str, seed_override: Option<u64>) -> Result<Config, CliError> {
    let raw: toml::Value = text.parse::<toml::Table>().map(toml::Value::Table).map_err(|e| {
        CliError::Config(vec![FieldError::new("<file>", e.message().to_string())])
    })?;
    let mut errs = Vec::new();
    let mut required = vec!["data.n_train", "data.n_test"];
    if seed_override.is_none() {
        required.insert(0, "seed");
    }
    for field in required {
        if !has_path(&raw, field) {
            errs.push(FieldError::new(field, "required field is missing".into()));
        }
    }
    // Fill what is missing so type errors in other fields still surface.
    let mut filled = raw.clone();
    if let toml::Value::Table(t) = &mut filled {
        t.entry("seed").or_insert(toml::Value::Integer(seed_override.unwrap_or(0) as i64));
        let data = t.entry("data").or_insert_with(|| toml::Value::Table(Default::default()));
        if let toml::Value::Table(d) = data {
            d.entry("n_train").or_insert(toml::Value::Integer(0));
            d.entry("n_test").or_insert(toml::Value::Integer(0));
        }
    }
    let mut cfg: Config = match Config::deserialize(filled) {
        Ok(c) => c,
        Err(e) => {
            errs.push(FieldError::new("<schema>", e.message().to_string()));
            return Err(CliError::Config(errs));
        }
    };
    // Keys that deserialisation silently dropped are typos.
    let normalized: toml::Value = toml::Value::try_from(&cfg).expect("configs always serialise");
    let mut paths = Vec::new();
    leaf_paths(&raw, "", &mut paths);
    for p in paths {
        if !has_path(&normalized, &p) {
            errs.push(FieldError::new(&p, "unknown field".into()));
        }
    }
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    cfg.apply_seed(seed_override.unwrap_or(cfg.seed));
    let errs = cfg.check();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(errs))
    }
}

/// Reads and validates a config file without touching anything else.
pub fn validate_config(path: &Path, seed_override: Option<u64>) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(vec![FieldError::new("--config", format!("cannot read {}: {e}", path.display()))]))?;
    parse_config(&text, seed_override)
}
