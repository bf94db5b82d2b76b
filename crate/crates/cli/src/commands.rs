//! One function per subcommand. Each reads the validated config, does its
//! work through `fpmatch-core` and writes artifacts under `--out` only.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use fpmatch_core::harness::{
    cross_eval, evaluate, finetune_sweep, format_accuracy, format_table, fusion_sweep, train_with, Checkpoint,
    EpochLoss, EvalReport, Solver, CROSS_EVAL_K,
};
use fpmatch_core::interpret::{object_sensitivity, place_photos, retrieve, rf_map_with, simplify_localize};
use fpmatch_core::matchers::MatchModel;
use fpmatch_core::synthgen::{generate_dataset, Apartment, Dataset, Image, RoomType};
use serde::Serialize;

use crate::artifacts::{heatmap_rows, write_csv, write_dataset, write_heatmap_png, write_json};
use crate::checkpoint;
use crate::config::{validate_config, Config};
use crate::error::CliError;
use crate::exec::Jobs;
use crate::{Cli, Command};

pub const CHECKPOINT_FILE: &str = "checkpoint.fpm";

struct Ctx<'a> {
    cfg: Config,
    out: &'a Path,
    jobs: Jobs,
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::usage("--config is required".into()))?;
    let cfg = validate_config(path, cli.seed)?;
    let jobs = Jobs::new(cli.jobs)?;
    fs::create_dir_all(&cli.out)?;
    fs::write(cli.out.join("config.toml"), cfg.to_toml())?;
    let ctx = Ctx { cfg, out: &cli.out, jobs };
    match &cli.command {
        Command::Gen => gen(&ctx),
        Command::Train => train(&ctx),
        Command::Eval { checkpoint } => eval(&ctx, checkpoint),
        Command::SweepFusion => sweep_fusion(&ctx),
        Command::SweepFinetune => sweep_finetune(&ctx),
        Command::CrossEval => cross(&ctx),
        Command::Rfviz { checkpoint } => rfviz(&ctx, checkpoint),
        Command::Localize { checkpoint } => localize(&ctx, checkpoint),
        Command::Place { checkpoint } => place(&ctx, checkpoint),
        Command::Retrieve { checkpoint } => ranking(&ctx, checkpoint),
    }
}

fn dataset(cfg: &Config) -> Result<Dataset, CliError> {
    log::info!("generating {} + {} apartments", cfg.data.n_train, cfg.data.n_test);
    Ok(generate_dataset(cfg.seed, &cfg.data.generator, cfg.data.n_train, cfg.data.n_test)?)
}

fn load_model(path: &Path) -> Result<MatchModel<f32>, CliError> {
    Ok(checkpoint::load::<f32>(path)?.to_model()?)
}

fn solver_name(s: Solver) -> &'static str {
    match s {
        Solver::Native => "native",
        Solver::PairScores => "pair_scores",
        Solver::Duplicate => "duplicate",
    }
}

const REPORT_HEADER: [&str; 10] =
    ["cell", "problem", "accuracy_mean", "accuracy_std", "g1", "g2", "g3", "g4", "g5", "chance"];

fn report_row(cell: &str, r: &EvalReport) -> Vec<String> {
    let mut row = vec![cell.to_string(), r.problem.clone(), r.accuracy_mean.to_string(), r.accuracy_std.to_string()];
    row.extend(r.group_accuracies.iter().map(|g| g.to_string()));
    row.push(r.chance.to_string());
    row
}

fn loss_rows(cell: &str, losses: &[EpochLoss]) -> Vec<Vec<String>> {
    losses.iter().map(|l| vec![cell.to_string(), l.epoch.to_string(), l.mean_loss.to_string()]).collect()
}

fn gen(ctx: &Ctx) -> Result<(), CliError> {
    let data = dataset(&ctx.cfg)?;
    write_dataset(ctx.out, &data)
}

fn train(ctx: &Ctx) -> Result<(), CliError> {
    let data = dataset(&ctx.cfg)?;
    let out = train_with::<f32>(&ctx.cfg.train, &data.train, |e, l| log::info!("epoch {e} loss {l:.4}"))?;
    checkpoint::save(&ctx.out.join(CHECKPOINT_FILE), &Checkpoint::from_model(&out.model, ctx.cfg.seed))?;
    write_csv(&ctx.out.join("losses.csv"), ctx.cfg.seed, &["cell", "epoch", "mean_loss"], &loss_rows("train", &out.losses))
}

fn eval(ctx: &Ctx, ck: &Path) -> Result<(), CliError> {
    let model = load_model(ck)?;
    let data = dataset(&ctx.cfg)?;
    let problem = ctx.cfg.eval.problem.unwrap_or(*model.problem());
    let solver = ctx.cfg.eval.solver;
    let r = evaluate(&model, &data.test, &problem, solver, &ctx.cfg.eval_config())?;
    log::info!("{} {}", r.problem, format_accuracy(&r));
    write_csv(&ctx.out.join("metrics.csv"), ctx.cfg.seed, &REPORT_HEADER, &[report_row(solver_name(solver), &r)])
}

fn write_cells(ctx: &Ctx, cells: &[(String, EvalReport, Vec<EpochLoss>)], extra: Option<(&str, Vec<String>)>) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = cells.iter().map(|(n, r, _)| report_row(n, r)).collect();
    write_csv(&ctx.out.join("metrics.csv"), ctx.cfg.seed, &REPORT_HEADER, &rows)?;
    let losses: Vec<Vec<String>> = cells.iter().flat_map(|(n, _, l)| loss_rows(n, l)).collect();
    write_csv(&ctx.out.join("losses.csv"), ctx.cfg.seed, &["cell", "epoch", "mean_loss"], &losses)?;
    let (extra_head, extra_vals) = match extra {
        Some((h, v)) => (Some(h), v),
        None => (None, vec![]),
    };
    let mut header = vec!["cell", "accuracy"];
    header.extend(extra_head);
    let table: Vec<Vec<String>> = cells
        .iter()
        .enumerate()
        .map(|(i, (n, r, _))| {
            let mut row = vec![n.clone(), format_accuracy(r)];
            row.extend(extra_vals.get(i).cloned());
            row
        })
        .collect();
    fs::write(ctx.out.join("table.txt"), format_table(&header, &table))?;
    Ok(())
}

fn sweep_fusion(ctx: &Ctx) -> Result<(), CliError> {
    let data = dataset(&ctx.cfg)?;
    let cells = fusion_sweep::<f32, _>(&data, &ctx.cfg.train, &ctx.cfg.eval_config(), &ctx.jobs)?;
    let cells: Vec<_> = cells.into_iter().map(|c| (c.result.name, c.result.report, c.result.losses)).collect();
    write_cells(ctx, &cells, None)
}

fn sweep_finetune(ctx: &Ctx) -> Result<(), CliError> {
    let data = dataset(&ctx.cfg)?;
    let cells = finetune_sweep::<f32, _>(&data, &ctx.cfg.train, &ctx.cfg.eval_config(), &ctx.jobs)?;
    let params: Vec<String> = cells.iter().map(|c| c.photo_params.to_string()).collect();
    let cells: Vec<_> = cells.into_iter().map(|c| (c.result.name, c.result.report, c.result.losses)).collect();
    write_cells(ctx, &cells, Some(("photo_params", params)))
}

fn cross(ctx: &Ctx) -> Result<(), CliError> {
    let data = dataset(&ctx.cfg)?;
    let rows = cross_eval::<f32, _>(&data, &ctx.cfg.train, ctx.cfg.sweep.cross_room, &ctx.cfg.eval_config(), &ctx.jobs)?;
    let mut metrics = Vec::new();
    let mut losses = Vec::new();
    let mut table = Vec::new();
    for row in &rows {
        let name = if row.trained_k == 1 { "pair".to_string() } else { format!("{}-way", row.trained_k) };
        losses.extend(loss_rows(&name, &row.losses));
        let mut line = vec![name.clone()];
        for (cell, k) in row.cells.iter().zip(CROSS_EVAL_K) {
            match cell {
                Some(r) => {
                    metrics.push(report_row(&format!("{name}->{k}-way"), r));
                    line.push(format_accuracy(r));
                }
                None => line.push("-".into()),
            }
        }
        table.push(line);
    }
    write_csv(&ctx.out.join("metrics.csv"), ctx.cfg.seed, &REPORT_HEADER, &metrics)?;
    write_csv(&ctx.out.join("losses.csv"), ctx.cfg.seed, &["cell", "epoch", "mean_loss"], &losses)?;
    fs::write(ctx.out.join("table.txt"), format_table(&["trained", "2-way", "4-way", "8-way"], &table))?;
    Ok(())
}

/// The test apartment under study.
fn case(ctx: &Ctx, data: &Dataset) -> Result<Apartment, CliError> {
    let i = ctx.cfg.interpret.case;
    data.test.get(i).cloned().ok_or_else(|| {
        CliError::Config(vec![crate::FieldError::new(
            "interpret.case",
            format!("{i} is past the {} test apartments", data.test.len()),
        )])
    })
}

/// Photographs the model expects: all three rooms for set models, the
/// model's own room for room-specific ones, else the configured room.
fn model_photos<'a>(ctx: &Ctx, model: &MatchModel<f32>, a: &'a Apartment) -> Vec<(&'a Image, RoomType)> {
    let p = model.problem();
    if p.photos_per_apartment == 3 {
        RoomType::ALL.iter().map(|&rt| (a.photo(rt), rt)).collect()
    } else {
        let rt = p.room_type.unwrap_or(ctx.cfg.interpret.room);
        vec![(a.photo(rt), rt)]
    }
}

fn rfviz(ctx: &Ctx, ck: &Path) -> Result<(), CliError> {
    let model = load_model(ck)?;
    let data = dataset(&ctx.cfg)?;
    let a = case(ctx, &data)?;
    let photos = model_photos(ctx, &model, &a);
    let map = rf_map_with(&model, &a.floorplan, &photos, &ctx.cfg.interpret.rf, &ctx.jobs)?;
    let header: Vec<String> = (0..map.cols).map(|c| format!("c{c}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&ctx.out.join("heatmap.csv"), ctx.cfg.seed, &header, &heatmap_rows(&map))?;
    write_heatmap_png(&ctx.out.join("heatmap.png"), &map, 4)?;
    crate::artifacts::write_png(&ctx.out.join("floorplan.png"), &a.floorplan)
}

#[derive(Serialize)]
struct LocalizeRecord {
    apartment: u64,
    removed: Vec<u32>,
    survivors: Vec<u32>,
    scores: Vec<f64>,
    sensitivity: Option<[[f64; 2]; 2]>,
}

fn localize(ctx: &Ctx, ck: &Path) -> Result<(), CliError> {
    let model = load_model(ck)?;
    let data = dataset(&ctx.cfg)?;
    let a = case(ctx, &data)?;
    let photos = model_photos(ctx, &model, &a);
    let loc = simplify_localize(&model, &a, &photos, &ctx.cfg.interpret.simplify)?;
    // Only meaningful for a single photograph whose room can hold the object.
    let object = ctx.cfg.interpret.object;
    let sensitivity = match photos.as_slice() {
        [(_, rt)] if object.legal_in(*rt) => Some(object_sensitivity(&model, &a, *rt, object)?),
        _ => None,
    };
    let rec = LocalizeRecord { apartment: a.id, removed: loc.removed, survivors: loc.survivors, scores: loc.scores, sensitivity };
    write_json(&ctx.out.join("localize.json"), ctx.cfg.seed, &rec)
}

fn place(ctx: &Ctx, ck: &Path) -> Result<(), CliError> {
    let model = load_model(ck)?;
    let data = dataset(&ctx.cfg)?;
    let a = case(ctx, &data)?;
    // Only rooms the model has a photograph encoder for.
    let photos: BTreeMap<RoomType, Image> = model.problem().rooms().into_iter().map(|rt| (rt, a.photo(rt).clone())).collect();
    let placed = place_photos(&model, &a.floorplan, &photos, &ctx.cfg.interpret.rf, &ctx.jobs)?;
    let named: BTreeMap<&str, _> = placed.iter().map(|(rt, p)| (rt.name(), *p)).collect();
    write_json(&ctx.out.join("placement.json"), ctx.cfg.seed, &serde_json::json!({ "apartment": a.id, "placements": named }))
}

fn ranking(ctx: &Ctx, ck: &Path) -> Result<(), CliError> {
    let model = load_model(ck)?;
    let data = dataset(&ctx.cfg)?;
    let a = case(ctx, &data)?;
    let rt = model.problem().room_type.unwrap_or(ctx.cfg.interpret.room);
    let corpus: Vec<&Image> = data.test.iter().map(|t| t.photo(rt)).collect();
    let ranked = retrieve(&model, &a.floorplan, &corpus, rt, ctx.cfg.interpret.top_n)?;
    let rows: Vec<Vec<String>> = ranked
        .iter()
        .enumerate()
        .map(|(rank, &(i, s))| {
            let id = data.test[i].id;
            vec![(rank + 1).to_string(), id.to_string(), s.to_string(), (id == a.id).to_string()]
        })
        .collect();
    write_csv(&ctx.out.join("ranking.csv"), ctx.cfg.seed, &["rank", "apartment", "score", "is_query"], &rows)
}
