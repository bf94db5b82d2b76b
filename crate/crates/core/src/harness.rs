//! Training loop, evaluation protocol and experiment drivers.
//!
//! Every table cell is trained from scratch with its own copy of the base
//! [`TrainConfig`]; cells never share parameters. Sampling streams are keyed
//! by purpose ([`stream::TRAIN`], [`stream::TEST`]) so training draws never
//! influence test draws.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::matchers::{
    argmax_lowest, duplicate_slots, kway_predict, slot_sum_predict, Batch, BatchItem, FusionFunc, FusionLayer,
    FusionSpec, MatchModel, MatchProblem, ModelConfig, PhotoSharing, ProblemKind, RoomMode, Targets,
};
use crate::optim::{OptimizerConfig, OptimizerState};
use crate::params::ParamStore;
use crate::rng::{self, rng_for, stream};
use crate::synthgen::{make_kway_sample_for, make_pair_sample_for, make_pair_sample_labeled, Apartment, Dataset, KwaySample, PairSample, RoomType};
use crate::tensor::{Scalar, Tensor};

pub const GROUPS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub margin: f64,
    pub seed: u64,
    pub problem: MatchProblem,
    pub model: ModelConfig,
    /// Training samples per epoch; `None` draws one sample per training
    /// apartment (each apartment anchors exactly one floorplan).
    pub samples_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            optimizer: OptimizerConfig::default(),
            margin: 1.0,
            seed: 0,
            problem: MatchProblem::default(),
            model: ModelConfig::default(),
            samples_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::Config { field: String::from(field), reason: String::from(reason) });
        if self.epochs < 1 {
            return bad("train.epochs", "must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("train.batch_size", "must be at least 1");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("train.margin", "must be positive");
        }
        if self.samples_per_epoch == Some(0) {
            return bad("train.samples_per_epoch", "must be positive");
        }
        self.optimizer.validate()?;
        self.problem.validate()?;
        self.model.validate(&self.problem)
    }

    pub fn with_problem(&self, problem: MatchProblem) -> Self {
        TrainConfig { problem, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Learned parameters plus everything needed to rebuild the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub problem: MatchProblem,
    pub model: ModelConfig,
    pub seed: u64,
    pub params: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_model(model: &MatchModel<T>, seed: u64) -> Self {
        let params = model
            .store()
            .iter()
            // Values only; trainability is rebuilt from the model config.
            .map(|(_, name, t)| {
                let plain = Tensor::new(t.shape(), t.data().to_vec()).expect("shape already valid");
                (String::from(name), plain)
            })
            .collect();
        Checkpoint { problem: *model.problem(), model: model.config().clone(), seed, params }
    }

    /// Rebuilds the architecture and overwrites every parameter; names and
    /// shapes must match exactly.
    pub fn to_model(&self) -> Result<MatchModel<T>> {
        let mut model = MatchModel::build(self.problem, self.model.clone(), self.seed)?;
        let mut incoming = ParamStore::new();
        for (name, t) in &self.params {
            incoming.add(name, t.clone())?;
        }
        if incoming.len() != model.store().len() {
            return Err(Error::Mismatch(format!(
                "checkpoint has {} tensors, model expects {}",
                incoming.len(),
                model.store().len()
            )));
        }
        let loaded = model.store_mut().load_from(&incoming)?;
        if loaded != incoming.len() {
            return Err(Error::Mismatch(format!("checkpoint names match only {loaded} of {} tensors", incoming.len())));
        }
        if model.config().freeze_encoders {
            let ids = model.encoder_params();
            model.store_mut().set_trainable(&ids, false);
        }
        Ok(model)
    }
}

pub struct TrainOutcome<T> {
    pub model: MatchModel<T>,
    pub losses: Vec<EpochLoss>,
}

/// Samples of one batch, drawn from a dedicated stream.
enum Drawn {
    Pair(Vec<PairSample>),
    Kway(Vec<KwaySample>),
}

/// Draws one sample per anchor. With `balanced`, pair labels alternate
/// positive / negative by position instead of being drawn independently.
fn draw(
    problem: &MatchProblem,
    split: &[Apartment],
    anchors: &[usize],
    rng: &mut rng::Rng,
    balanced: bool,
) -> Result<Drawn> {
    let sel = problem.room_selection();
    Ok(match problem.kind {
        ProblemKind::Kway => Drawn::Kway(
            anchors.iter().map(|&a| make_kway_sample_for(split, a, rng, problem.k, sel)).collect::<Result<_>>()?,
        ),
        _ if balanced => Drawn::Pair(
            anchors
                .iter()
                .enumerate()
                .map(|(i, &a)| make_pair_sample_labeled(split, a, rng, sel, i % 2 == 0))
                .collect::<Result<_>>()?,
        ),
        _ => Drawn::Pair(anchors.iter().map(|&a| make_pair_sample_for(split, a, rng, sel)).collect::<Result<_>>()?),
    })
}

fn assemble<'a, T: Scalar>(
    model: &MatchModel<T>,
    split: &'a [Apartment],
    drawn: &Drawn,
) -> Result<(Vec<BatchItem<'a>>, Targets)> {
    match drawn {
        Drawn::Pair(s) => Ok((
            s.iter().map(|x| model.pair_item(split, x)).collect::<Result<_>>()?,
            Targets::Pair(s.iter().map(|x| x.label).collect()),
        )),
        Drawn::Kway(s) => Ok((
            s.iter().map(|x| model.kway_item(split, x)).collect::<Result<_>>()?,
            Targets::Kway(s.iter().map(|x| x.true_index).collect()),
        )),
    }
}

/// Anchor floorplans for one epoch, in shuffled order.
fn epoch_anchors(seed: u64, epoch: usize, n_train: usize, samples: Option<usize>) -> Vec<usize> {
    let mut rng = rng_for(seed, &[stream::TRAIN, epoch as u64]);
    let total = samples.unwrap_or(n_train);
    let mut out = Vec::with_capacity(total);
    while out.len() < total {
        let mut order: Vec<usize> = (0..n_train).collect();
        order.shuffle(&mut rng);
        out.extend(order.into_iter().take(total - out.len()));
    }
    out
}

/// One optimisation step on a batch; returns the batch loss.
pub fn train_step<T: Scalar>(
    model: &mut MatchModel<T>,
    opt: &mut OptimizerState<T>,
    items: &[BatchItem<'_>],
    targets: &Targets,
    margin: f64,
) -> Result<f64> {
    let batch = Batch::build(items)?;
    let (loss, grads) = {
        let mut g = Graph::new(model.store());
        let out = model.forward(&mut g, &batch)?;
        let loss = model.loss(&mut g, out, targets, margin)?;
        (g.value(loss)[0].to_f64_lossy(), g.backward(loss)?)
    };
    if !loss.is_finite() {
        return Err(Error::NonFinite { op: "loss" });
    }
    grads.accumulate_into(model.store_mut())?;
    opt.step(model.store_mut());
    Ok(loss)
}

/// Trains a fresh model on `train`. Each batch draws its samples from a
/// stream seeded by `(seed, epoch, batch index)`; that seed is reported if
/// the loss or any activation turns non-finite.
pub fn train<T: Scalar>(config: &TrainConfig, train: &[Apartment]) -> Result<TrainOutcome<T>> {
    train_with(config, train, |_, _| {})
}

/// [`train`] with a per-epoch progress callback `(epoch, mean_loss)`.
pub fn train_with<T: Scalar>(
    config: &TrainConfig,
    train: &[Apartment],
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let need = config.problem.candidates().max(2);
    if train.len() < need {
        return Err(Error::Dataset(format!("training needs at least {need} apartments, have {}", train.len())));
    }
    let mut model = MatchModel::<T>::build(config.problem, config.model.clone(), config.seed)?;
    let mut opt = OptimizerState::new(config.optimizer, model.store())?;
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let anchors = epoch_anchors(config.seed, epoch, train.len(), config.samples_per_epoch);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in anchors.chunks(config.batch_size).enumerate() {
            let batch_seed = rng::derive(config.seed, &[stream::TRAIN, epoch as u64, b as u64]);
            let mut rng = rng_for(batch_seed, &[]);
            let drawn = draw(&config.problem, train, chunk, &mut rng, true)?;
            let (items, targets) = assemble(&model, train, &drawn)?;
            let loss = match train_step(&mut model, &mut opt, &items, &targets, config.margin) {
                Ok(l) => l,
                Err(Error::NonFinite { .. }) => return Err(Error::NonFiniteLoss { epoch, batch_seed }),
                Err(e) => return Err(e),
            };
            total += loss;
            batches += 1;
        }
        let mean_loss = total / batches as f64;
        on_epoch(epoch, mean_loss);
        losses.push(EpochLoss { epoch, mean_loss });
    }
    Ok(TrainOutcome { model, losses })
}

/// Accuracy summary over [`GROUPS`] contiguous groups of test samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub problem: String,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub group_accuracies: Vec<f64>,
    pub chance: f64,
    pub samples: usize,
}

impl EvalReport {
    /// Builds the report from per-sample outcomes in test order. Group `g`
    /// holds samples `g * n / 5 .. (g + 1) * n / 5`.
    pub fn from_outcomes(problem: String, chance: f64, correct: &[bool]) -> Result<Self> {
        let n = correct.len();
        if n < GROUPS {
            return Err(Error::Dataset(format!("evaluation needs at least {GROUPS} samples, have {n}")));
        }
        let group_accuracies: Vec<f64> = (0..GROUPS)
            .map(|g| {
                let part = &correct[g * n / GROUPS..(g + 1) * n / GROUPS];
                100.0 * part.iter().filter(|&&c| c).count() as f64 / part.len() as f64
            })
            .collect();
        let (accuracy_mean, accuracy_std) = mean_std(&group_accuracies);
        Ok(EvalReport { problem, accuracy_mean, accuracy_std, group_accuracies, chance, samples: n })
    }
}

/// Mean and sample standard deviation (`n - 1` denominator), summed left to
/// right so the result is reproducible from the inputs.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

/// How a model is applied to a test problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// The model's own head on its own problem.
    Native,
    /// A pair/set model scores each of `k` candidates; the argmax wins.
    PairScores,
    /// A `K`-way model sees each of `k` candidates `K / k` times; slot
    /// probabilities are summed per candidate.
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seed: u64,
    /// Test samples; `None` anchors one sample on every test apartment.
    pub samples: Option<usize>,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { seed: 0, samples: None, batch_size: 64 }
    }
}

fn test_anchors(n_test: usize, samples: Option<usize>) -> Vec<usize> {
    let total = samples.unwrap_or(n_test);
    (0..total).map(|i| i % n_test).collect()
}

/// Evaluates `model` on `problem` over `test`. Sample `i` is drawn from a
/// stream keyed by `(seed, i)` alone, so every model evaluated with the same
/// seed and problem sees the same test samples.
pub fn evaluate<T: Scalar>(
    model: &MatchModel<T>,
    test: &[Apartment],
    problem: &MatchProblem,
    solver: Solver,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    problem.validate()?;
    let trained = *model.problem();
    match solver {
        Solver::Native => {
            if trained != *problem {
                return Err(Error::Mismatch(format!(
                    "model head is {} but the problem is {}",
                    trained.label(),
                    problem.label()
                )));
            }
        }
        Solver::PairScores => {
            if trained.kind == ProblemKind::Kway || problem.kind != ProblemKind::Kway {
                return Err(Error::Mismatch("pair-score solving needs a pair model and a k-way problem".into()));
            }
            if trained.rooms() != problem.rooms() {
                return Err(Error::Mismatch("pair model and problem use different photographs".into()));
            }
        }
        Solver::Duplicate => {
            if trained.kind != ProblemKind::Kway || problem.kind != ProblemKind::Kway {
                return Err(Error::Mismatch("duplication needs a k-way model and a k-way problem".into()));
            }
            duplicate_slots(problem.k, trained.k)?;
            if trained.rooms() != problem.rooms() {
                return Err(Error::Mismatch("k-way models use different photographs".into()));
            }
        }
    }
    let need = problem.candidates().max(2);
    if test.len() < need {
        return Err(Error::Dataset(format!("evaluation needs at least {need} apartments, have {}", test.len())));
    }
    let anchors = test_anchors(test.len(), cfg.samples);
    let drawn_all: Vec<Drawn> = anchors
        .iter()
        .enumerate()
        .map(|(i, &a)| draw(problem, test, &[a], &mut rng_for(cfg.seed, &[stream::TEST, i as u64]), false))
        .collect::<Result<_>>()?;
    let mut correct = Vec::with_capacity(anchors.len());
    for chunk in drawn_all.chunks(cfg.batch_size.max(1)) {
        correct.extend(judge(model, test, problem, solver, chunk)?);
    }
    EvalReport::from_outcomes(problem.label(), problem.chance(), &correct)
}

fn judge<T: Scalar>(
    model: &MatchModel<T>,
    test: &[Apartment],
    problem: &MatchProblem,
    solver: Solver,
    chunk: &[Drawn],
) -> Result<Vec<bool>> {
    match solver {
        Solver::Native => {
            let mut items = Vec::new();
            let mut truth: Vec<(i8, usize)> = Vec::new();
            for d in chunk {
                match d {
                    Drawn::Pair(s) => {
                        items.push(model.pair_item(test, &s[0])?);
                        truth.push((s[0].label, 0));
                    }
                    Drawn::Kway(s) => {
                        items.push(model.kway_item(test, &s[0])?);
                        truth.push((0, s[0].true_index));
                    }
                }
            }
            let batch = Batch::build(&items)?;
            if problem.kind == ProblemKind::Kway {
                let probs = kway_predict(model, &batch)?;
                Ok(probs.iter().zip(&truth).map(|(p, t)| argmax_lowest(p) == Some(t.1)).collect())
            } else {
                let scores = model.scores(&batch)?;
                Ok(scores.iter().zip(&truth).map(|(&s, t)| (s > T::zero()) == (t.0 > 0)).collect())
            }
        }
        Solver::PairScores => {
            let mut items = Vec::new();
            let mut truth = Vec::new();
            for d in chunk {
                let Drawn::Kway(s) = d else { unreachable!("k-way problem draws k-way samples") };
                let s = &s[0];
                for &c in &s.candidates {
                    let pair = PairSample {
                        floorplan: s.floorplan,
                        photo_source: c,
                        rooms: s.rooms.clone(),
                        label: if c == s.floorplan { 1 } else { -1 },
                        seed: s.seed,
                    };
                    items.push(model.pair_item(test, &pair)?);
                }
                truth.push(s.true_index);
            }
            let scores = model.scores(&Batch::build(&items)?)?;
            Ok(scores.chunks(problem.k).zip(&truth).map(|(sc, &t)| argmax_lowest(sc) == Some(t)).collect())
        }
        Solver::Duplicate => {
            let big_k = model.problem().k;
            let owner = duplicate_slots(problem.k, big_k)?;
            let mut items = Vec::new();
            let mut truth = Vec::new();
            for d in chunk {
                let Drawn::Kway(s) = d else { unreachable!("k-way problem draws k-way samples") };
                let s = &s[0];
                let expanded = KwaySample {
                    floorplan: s.floorplan,
                    candidates: owner.iter().map(|&c| s.candidates[c]).collect(),
                    rooms: s.rooms.clone(),
                    true_index: 0,
                    seed: s.seed,
                };
                items.push(model.kway_item(test, &expanded)?);
                truth.push(s.true_index);
            }
            let probs = kway_predict(model, &Batch::build(&items)?)?;
            probs
                .iter()
                .zip(&truth)
                .map(|(p, &t)| Ok(slot_sum_predict(p, problem.k)? == t))
                .collect()
        }
    }
}

/// Runs independent jobs. Implementations must return results in input
/// order so serial and parallel execution produce identical tables.
pub trait Executor {
    fn map<I: Sync, O: Send>(&self, items: &[I], f: &(dyn Fn(&I) -> O + Sync)) -> Vec<O>;
}

pub struct Serial;

impl Executor for Serial {
    fn map<I: Sync, O: Send>(&self, items: &[I], f: &(dyn Fn(&I) -> O + Sync)) -> Vec<O> {
        items.iter().map(f).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub name: String,
    pub report: EvalReport,
    pub losses: Vec<EpochLoss>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionCell {
    pub fusion: FusionSpec,
    pub result: CellResult,
}

/// Trains and evaluates one cell.
pub fn run_cell<T: Scalar>(
    name: &str,
    config: &TrainConfig,
    data: &Dataset,
    eval: &EvalConfig,
) -> Result<(MatchModel<T>, CellResult)> {
    let out = train::<T>(config, &data.train)?;
    let report = evaluate(&out.model, &data.test, &config.problem, Solver::Native, eval)?;
    Ok((out.model, CellResult { name: String::from(name), report, losses: out.losses }))
}

/// Photograph-set matching over every fusion layer and function. The base
/// problem's room mode is kept; its kind and fusion are overridden.
pub fn fusion_sweep<T: Scalar, E: Executor>(
    data: &Dataset,
    base: &TrainConfig,
    eval: &EvalConfig,
    exec: &E,
) -> Result<Vec<FusionCell>> {
    if base.problem.photos_per_apartment != 3 {
        return Err(Error::Config {
            field: String::from("problem.photos_per_apartment"),
            reason: String::from("the fusion sweep needs three photographs per apartment"),
        });
    }
    let cells: Vec<FusionSpec> = FusionLayer::ALL
        .iter()
        .flat_map(|&layer| FusionFunc::ALL.iter().map(move |&func| FusionSpec { layer, func }))
        .collect();
    let results = exec.map(&cells, &|&fusion| {
        let cfg = base.with_problem(MatchProblem::set(fusion, base.problem.room_mode));
        let name = format!("{}+{}", fusion.layer.name(), fusion.func.name());
        run_cell::<T>(&name, &cfg, data, eval).map(|(_, r)| FusionCell { fusion, result: r })
    });
    results.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneVariant {
    FrozenEncoders,
    RoomAgnostic,
    RoomAwareFcOnly,
    RoomAwareFull,
}

impl FinetuneVariant {
    pub const ALL: [FinetuneVariant; 4] = [
        FinetuneVariant::FrozenEncoders,
        FinetuneVariant::RoomAgnostic,
        FinetuneVariant::RoomAwareFcOnly,
        FinetuneVariant::RoomAwareFull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FinetuneVariant::FrozenEncoders => "frozen_encoders",
            FinetuneVariant::RoomAgnostic => "room_agnostic",
            FinetuneVariant::RoomAwareFcOnly => "room_aware_fc_only",
            FinetuneVariant::RoomAwareFull => "room_aware_full",
        }
    }

    /// Training configuration of this variant derived from `base`.
    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        let fusion = base.problem.fusion;
        let (mode, sharing, freeze) = match self {
            FinetuneVariant::FrozenEncoders => (RoomMode::Aware, PhotoSharing::PerRoom, true),
            FinetuneVariant::RoomAgnostic => (RoomMode::Agnostic, PhotoSharing::Shared, false),
            FinetuneVariant::RoomAwareFcOnly => (RoomMode::Aware, PhotoSharing::SharedConvPerRoomFc, false),
            FinetuneVariant::RoomAwareFull => (RoomMode::Aware, PhotoSharing::PerRoom, false),
        };
        cfg.problem = MatchProblem::set(fusion, mode);
        cfg.model.photo_sharing = Some(sharing);
        cfg.model.freeze_encoders = freeze;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneCell {
    pub variant: FinetuneVariant,
    /// Trainable photograph-branch parameter count.
    pub photo_params: usize,
    pub result: CellResult,
}

/// The four encoder fine-tuning regimes on photograph-set matching.
pub fn finetune_sweep<T: Scalar, E: Executor>(
    data: &Dataset,
    base: &TrainConfig,
    eval: &EvalConfig,
    exec: &E,
) -> Result<Vec<FinetuneCell>> {
    if base.problem.photos_per_apartment != 3 {
        return Err(Error::Config {
            field: String::from("problem.photos_per_apartment"),
            reason: String::from("the fine-tuning sweep needs three photographs per apartment"),
        });
    }
    let results = exec.map(&FinetuneVariant::ALL, &|&variant| {
        let cfg = variant.configure(base);
        let (model, result) = run_cell::<T>(variant.name(), &cfg, data, eval)?;
        let ids = model.photo_params();
        let photo_params = if cfg.model.freeze_encoders { 0 } else { model.store().numel_of(&ids) };
        Ok(FinetuneCell { variant, photo_params, result })
    });
    results.into_iter().collect()
}

/// Problems of the cross-evaluation rows (training) and columns (testing).
pub const CROSS_TRAIN_K: [usize; 4] = [1, 2, 4, 8];
pub const CROSS_EVAL_K: [usize; 3] = [2, 4, 8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalRow {
    /// `1` marks the pair-trained row.
    pub trained_k: usize,
    pub losses: Vec<EpochLoss>,
    /// One entry per [`CROSS_EVAL_K`] column; `None` where the model was
    /// trained on fewer candidates than the column asks for.
    pub cells: Vec<Option<EvalReport>>,
}

/// Problem used to train row `k` (pair when `k == 1`).
pub fn cross_train_problem(k: usize, room: RoomType) -> MatchProblem {
    if k == 1 {
        MatchProblem::pair(room)
    } else {
        MatchProblem::kway(k, room)
    }
}

/// Trains pair, 2-, 4- and 8-way models on photographs of `room` and tests
/// each on the 2-, 4- and 8-way problems it can address.
pub fn cross_eval<T: Scalar, E: Executor>(
    data: &Dataset,
    base: &TrainConfig,
    room: RoomType,
    eval: &EvalConfig,
    exec: &E,
) -> Result<Vec<CrossEvalRow>> {
    let rows = exec.map(&CROSS_TRAIN_K, &|&tk| -> Result<CrossEvalRow> {
        let cfg = base.with_problem(cross_train_problem(tk, room));
        let out = train::<T>(&cfg, &data.train)?;
        let mut cells = Vec::with_capacity(CROSS_EVAL_K.len());
        for &ek in &CROSS_EVAL_K {
            let problem = MatchProblem::kway(ek, room);
            let solver = match tk {
                1 => Solver::PairScores,
                _ if tk < ek => {
                    cells.push(None);
                    continue;
                }
                _ if tk == ek => Solver::Native,
                _ => Solver::Duplicate,
            };
            cells.push(Some(evaluate(&out.model, &data.test, &problem, solver, eval)?));
        }
        Ok(CrossEvalRow { trained_k: tk, losses: out.losses, cells })
    });
    rows.into_iter().collect()
}

/// Aligned plain-text table: a header row then one row per entry.
pub fn format_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width = vec![0usize; cols];
    for (i, h) in header.iter().enumerate() {
        width[i] = h.chars().count();
    }
    for r in rows {
        for (i, c) in r.iter().enumerate().take(cols) {
            width[i] = width[i].max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .enumerate()
            .map(|(i, c)| format!("{c:<w$}", w = width[i]))
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&mut header.iter().copied());
    for r in rows {
        line(&mut r.iter().map(|s| s.as_str()));
    }
    out
}

/// `mean ± std` with one decimal.
pub fn format_accuracy(r: &EvalReport) -> String {
    format!("{:.1} ± {:.1}", r.accuracy_mean, r.accuracy_std)
}
