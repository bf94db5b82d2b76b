//! Pair, photo-set and k-way matching networks.
//!
//! A [`MatchModel`] owns its parameters and is built from a [`MatchProblem`]
//! plus a [`ModelConfig`]. Inputs arrive as a [`Batch`] of slots; slot `s`
//! holds the `s`-th photograph of every sample (for k-way, candidate `j`
//! photo `i` sits in slot `j * n + i`).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::encoders::{Dense, Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::rng::{self, rng_for, stream};
use crate::synthgen::Image;
use crate::synthgen::{Apartment, KwaySample, PairSample, RoomType};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Pair,
    Set,
    Kway,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomMode {
    Aware,
    Agnostic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionLayer {
    Image,
    Conv3,
    Conv4,
    Fc6,
    Score,
}

impl FusionLayer {
    pub const ALL: [FusionLayer; 5] =
        [FusionLayer::Image, FusionLayer::Conv3, FusionLayer::Conv4, FusionLayer::Fc6, FusionLayer::Score];

    pub fn name(self) -> &'static str {
        match self {
            FusionLayer::Image => "image",
            FusionLayer::Conv3 => "conv3",
            FusionLayer::Conv4 => "conv4",
            FusionLayer::Fc6 => "fc6",
            FusionLayer::Score => "score",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionFunc {
    Averaging,
    Concatenation,
}

impl FusionFunc {
    pub const ALL: [FusionFunc; 2] = [FusionFunc::Averaging, FusionFunc::Concatenation];

    pub fn name(self) -> &'static str {
        match self {
            FusionFunc::Averaging => "averaging",
            FusionFunc::Concatenation => "concatenation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FusionSpec {
    pub layer: FusionLayer,
    pub func: FusionFunc,
}

impl Default for FusionSpec {
    fn default() -> Self {
        FusionSpec { layer: FusionLayer::Fc6, func: FusionFunc::Concatenation }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchProblem {
    pub kind: ProblemKind,
    pub k: usize,
    pub photos_per_apartment: usize,
    pub room_mode: RoomMode,
    /// Written `"any"` when absent, so a missing key still means the default.
    #[serde(with = "room_or_any")]
    pub room_type: Option<RoomType>,
    pub fusion: FusionSpec,
}

mod room_or_any {
    use super::RoomType;
    use alloc::string::String;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(room: &Option<RoomType>, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(room.map_or("any", RoomType::name))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> core::result::Result<Option<RoomType>, D::Error> {
        let name = String::deserialize(d)?;
        match name.as_str() {
            "any" => Ok(None),
            other => RoomType::parse(other)
                .map(Some)
                .ok_or_else(|| D::Error::custom(alloc::format!("unknown room type {other:?}"))),
        }
    }
}

impl Default for MatchProblem {
    fn default() -> Self {
        MatchProblem::pair(RoomType::Bathroom)
    }
}

impl MatchProblem {
    /// Room-aware pair matching with one photograph of `room`.
    pub fn pair(room: RoomType) -> Self {
        MatchProblem {
            kind: ProblemKind::Pair,
            k: 1,
            photos_per_apartment: 1,
            room_mode: RoomMode::Aware,
            room_type: Some(room),
            fusion: FusionSpec::default(),
        }
    }

    /// Room-aware k-way matching with one photograph of `room` per candidate.
    pub fn kway(k: usize, room: RoomType) -> Self {
        MatchProblem { kind: ProblemKind::Kway, k, ..MatchProblem::pair(room) }
    }

    /// Photograph-set matching over all three rooms.
    pub fn set(fusion: FusionSpec, room_mode: RoomMode) -> Self {
        MatchProblem {
            kind: ProblemKind::Set,
            k: 1,
            photos_per_apartment: 3,
            room_mode,
            room_type: None,
            fusion,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| Err(Error::Config { field: format!("problem.{field}"), reason });
        match self.kind {
            ProblemKind::Kway if self.k < 2 => return bad("k", format!("k-way matching needs k >= 2, got {}", self.k)),
            ProblemKind::Pair | ProblemKind::Set if self.k != 1 => {
                return bad("k", format!("pair and set matching need k = 1, got {}", self.k))
            }
            _ => {}
        }
        if self.photos_per_apartment != 1 && self.photos_per_apartment != 3 {
            return bad("photos_per_apartment", format!("must be 1 or 3, got {}", self.photos_per_apartment));
        }
        if self.kind == ProblemKind::Pair && self.photos_per_apartment != 1 {
            return bad("photos_per_apartment", "pair matching uses one photograph".into());
        }
        if self.photos_per_apartment == 3 && self.room_type.is_some() {
            return bad("room_type", "a fixed room type needs photos_per_apartment = 1".into());
        }
        if self.photos_per_apartment == 1 && self.room_type.is_none() && self.room_mode == RoomMode::Aware {
            return bad("room_type", "a room-aware single-photograph problem needs a room type".into());
        }
        if self.kind == ProblemKind::Kway && self.room_mode == RoomMode::Agnostic {
            return bad("room_mode", "room-agnostic k-way matching is not supported".into());
        }
        if self.kind == ProblemKind::Set && self.photos_per_apartment == 1 && self.fusion.layer != FusionLayer::Fc6 {
            return bad(
                "fusion.layer",
                format!("fusion layer {} is incompatible with photo count 1", self.fusion.layer.name()),
            );
        }
        Ok(())
    }

    /// Room types of the photographs in one photo(-set), in canonical order.
    pub fn rooms(&self) -> Vec<RoomType> {
        match (self.photos_per_apartment, self.room_type) {
            (1, Some(rt)) => vec![rt],
            (1, None) => RoomType::ALL.to_vec(),
            _ => RoomType::ALL.to_vec(),
        }
    }

    pub fn room_selection(&self) -> crate::synthgen::RoomSelection {
        crate::synthgen::RoomSelection::from_problem(self.photos_per_apartment, self.room_type)
    }

    /// Candidates per sample (1 for pair and set problems).
    pub fn candidates(&self) -> usize {
        if self.kind == ProblemKind::Kway {
            self.k
        } else {
            1
        }
    }

    pub fn slots(&self) -> usize {
        self.candidates() * self.photos_per_apartment
    }

    /// Accuracy of uninformed guessing, in percent.
    pub fn chance(&self) -> f64 {
        match self.kind {
            ProblemKind::Kway => 100.0 / self.k as f64,
            _ => 50.0,
        }
    }

    pub fn label(&self) -> String {
        let rooms = match self.room_type {
            Some(rt) => String::from(rt.name()),
            None if self.photos_per_apartment == 3 => String::from("all"),
            None => String::from("any"),
        };
        let mode = match self.room_mode {
            RoomMode::Aware => "aware",
            RoomMode::Agnostic => "agnostic",
        };
        match self.kind {
            ProblemKind::Pair => format!("pair/{rooms}/{mode}"),
            ProblemKind::Set => {
                format!("set/{rooms}/{mode}/{}+{}", self.fusion.layer.name(), self.fusion.func.name())
            }
            ProblemKind::Kway => format!("{}-way/{rooms}/{mode}", self.k),
        }
    }
}

/// How photograph encoders share parameters across room types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotoSharing {
    /// Independent encoder per room type.
    PerRoom,
    /// One encoder for every room type.
    Shared,
    /// Shared convolutions, per-room `fc6`.
    SharedConvPerRoomFc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub floorplan: EncoderConfig,
    pub photo: EncoderConfig,
    /// Head hidden width; `None` means twice the feature dimension.
    pub hidden_dim: Option<usize>,
    /// `None` derives the sharing from the problem's room mode.
    pub photo_sharing: Option<PhotoSharing>,
    /// Keep every encoder parameter at its initial value.
    pub freeze_encoders: bool,
    /// Score-layer averaging with one learned weight per photograph.
    pub untied_score_weights: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            floorplan: EncoderConfig::default().with_input(64),
            photo: EncoderConfig::default().with_input(48),
            hidden_dim: None,
            photo_sharing: None,
            freeze_encoders: false,
            untied_score_weights: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, problem: &MatchProblem) -> Result<()> {
        self.floorplan.validate("model.floorplan")?;
        self.photo.validate("model.photo")?;
        if self.floorplan.feature_dim != self.photo.feature_dim {
            return Err(Error::Config {
                field: String::from("model.photo.feature_dim"),
                reason: format!(
                    "floorplan and photograph features must have equal width ({} vs {})",
                    self.floorplan.feature_dim, self.photo.feature_dim
                ),
            });
        }
        if self.hidden_dim == Some(0) {
            return Err(Error::Config { field: String::from("model.hidden_dim"), reason: String::from("must be positive") });
        }
        let sharing = self.sharing(problem);
        if problem.room_mode == RoomMode::Agnostic && sharing != PhotoSharing::Shared {
            return Err(Error::Config {
                field: String::from("model.photo_sharing"),
                reason: String::from("room-agnostic problems need shared photograph encoders"),
            });
        }
        if sharing == PhotoSharing::SharedConvPerRoomFc
            && problem.kind == ProblemKind::Set
            && !matches!(problem.fusion.layer, FusionLayer::Fc6 | FusionLayer::Score)
        {
            return Err(Error::Config {
                field: String::from("model.photo_sharing"),
                reason: format!("per-room fc6 is undefined for fusion at {}", problem.fusion.layer.name()),
            });
        }
        if problem.kind == ProblemKind::Set && matches!(problem.fusion.layer, FusionLayer::Conv3 | FusionLayer::Conv4) {
            let need = if problem.fusion.layer == FusionLayer::Conv3 { 3 } else { 4 };
            if self.photo.conv_blocks.len() < need {
                return Err(Error::Config {
                    field: String::from("model.photo.conv_blocks"),
                    reason: format!("{} fusion needs at least {need} blocks", problem.fusion.layer.name()),
                });
            }
        }
        Ok(())
    }

    pub fn sharing(&self, problem: &MatchProblem) -> PhotoSharing {
        self.photo_sharing.unwrap_or(match problem.room_mode {
            RoomMode::Aware => PhotoSharing::PerRoom,
            RoomMode::Agnostic => PhotoSharing::Shared,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden_dim.unwrap_or(2 * self.photo.feature_dim)
    }
}

/// Two dense layers: `din -> hidden -> relu -> dout`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Head {
    pub l1: Dense,
    pub l2: Dense,
}

impl Head {
    fn build<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        din: usize,
        hidden: usize,
        dout: usize,
        sigma: f64,
        rng: &mut rng::Rng,
    ) -> Result<Self> {
        // The hidden layer gets He scaling: with the small Gaussian everywhere
        // the product of three tiny layers leaves the loss flat for epochs.
        // The output layer keeps `sigma` so initial scores sit near zero.
        Ok(Head {
            l1: Dense::build(store, &format!("{name}.fc1"), din, hidden, libm::sqrt(2.0 / din as f64), rng)?,
            l2: Dense::build(store, &format!("{name}.fc2"), hidden, dout, sigma, rng)?,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: NodeId) -> Result<NodeId> {
        let h = self.l1.forward(g, x)?;
        let h = g.relu(h)?;
        self.l2.forward(g, h)
    }

    /// Pair score: `tanh(head([floorplan, photo]))`, shape `[N, 1]`.
    pub fn pair_score<T: Scalar>(&self, g: &mut Graph<'_, T>, floorplan: NodeId, photo: NodeId) -> Result<NodeId> {
        let (a, b) = (g.shape(floorplan).to_vec(), g.shape(photo).to_vec());
        if a != b {
            return Err(Error::Dimension { op: "pair_score", detail: format!("floorplan {a:?} vs photo {b:?}") });
        }
        let x = g.concat(&[floorplan, photo])?;
        let y = self.forward(g, x)?;
        g.tanh(y)
    }

    pub fn params(&self) -> [ParamId; 4] {
        let [a, b] = self.l1.params();
        let [c, d] = self.l2.params();
        [a, b, c, d]
    }
}

/// Single-example pair score from precomputed feature vectors.
pub fn pair_score<T: Scalar>(store: &ParamStore<T>, head: &Head, floorplan_feat: &[T], photo_feat: &[T]) -> Result<T> {
    let mut g = Graph::inference(store);
    let f = g.input(Tensor::new(&[1, floorplan_feat.len()], floorplan_feat.to_vec())?);
    let p = g.input(Tensor::new(&[1, photo_feat.len()], photo_feat.to_vec())?);
    let s = head.pair_score(&mut g, f, p)?;
    Ok(g.value(s)[0])
}

#[derive(Debug, Clone, PartialEq)]
enum Combiner {
    /// Plain mean of scores (tied weights).
    Mean,
    /// Softmax-normalised learned weights, one per photograph.
    Weighted(ParamId),
    /// Dense layer over the score vector followed by tanh.
    Dense(Dense),
}

#[derive(Debug, Clone, PartialEq)]
enum Arch {
    /// One photograph encoder per slot, features concatenated into the head.
    Features { photo: BTreeMap<RoomType, Encoder>, head: Head, fuse: FusionFunc },
    /// Photographs fused pixel-wise before a single encoder.
    Image { photo: Encoder, head: Head, fuse: FusionFunc },
    /// Per-photo partial encoders, fusion of tap maps, then a shared trunk.
    Taps { photo: BTreeMap<RoomType, Encoder>, trunk: Encoder, head: Head, fuse: FusionFunc },
    /// Per-photo pair scores combined into one.
    Score { photo: BTreeMap<RoomType, Encoder>, head: Head, combiner: Combiner },
    /// k-way classifier over concatenated candidate features.
    Kway { photo: BTreeMap<RoomType, Encoder>, head: Head },
}

pub struct MatchModel<T> {
    problem: MatchProblem,
    config: ModelConfig,
    store: ParamStore<T>,
    floorplan: Encoder,
    arch: Arch,
}

fn photo_bank<T: Scalar>(
    store: &mut ParamStore<T>,
    cfg: &EncoderConfig,
    rooms: &[RoomType],
    sharing: PhotoSharing,
    blocks: Option<usize>,
    rng: &mut rng::Rng,
) -> Result<BTreeMap<RoomType, Encoder>> {
    let nb = cfg.conv_blocks.len();
    let partial = |store: &mut ParamStore<T>, prefix: &str, rng: &mut rng::Rng| match blocks {
        Some(b) => Encoder::build_stage(store, prefix, cfg, 0..b, cfg.in_channels, false, rng),
        None => Encoder::build(store, prefix, cfg, rng),
    };
    let mut bank = BTreeMap::new();
    match sharing {
        PhotoSharing::PerRoom => {
            for &rt in rooms {
                bank.insert(rt, partial(store, &format!("photo.{}", rt.name()), rng)?);
            }
        }
        PhotoSharing::Shared => {
            let shared = partial(store, "photo.shared", rng)?;
            for &rt in rooms {
                bank.insert(rt, shared.clone());
            }
        }
        PhotoSharing::SharedConvPerRoomFc => {
            let conv = Encoder::build_stage(store, "photo.shared", cfg, 0..nb, cfg.in_channels, false, rng)?;
            for &rt in rooms {
                let fc = Dense::build(store, &format!("photo.{}.fc6", rt.name()), cfg.flat_dim(), cfg.feature_dim, cfg.init_sigma, rng)?;
                bank.insert(rt, conv.clone().with_fc(fc));
            }
        }
    }
    Ok(bank)
}

impl<T: Scalar> MatchModel<T> {
    /// Builds and initialises a model; parameters depend only on `seed`.
    pub fn build(problem: MatchProblem, config: ModelConfig, seed: u64) -> Result<Self> {
        problem.validate()?;
        config.validate(&problem)?;
        let mut rng = rng_for(seed, &[stream::INIT]);
        let mut store = ParamStore::new();
        let floorplan = Encoder::build(&mut store, "floorplan", &config.floorplan, &mut rng)?;
        let d = config.photo.feature_dim;
        let hidden = config.hidden();
        let sigma = config.photo.init_sigma;
        let rooms = problem.rooms();
        let sharing = config.sharing(&problem);
        let n = problem.photos_per_apartment;
        let arch = match problem.kind {
            ProblemKind::Pair => {
                let photo = photo_bank(&mut store, &config.photo, &rooms, sharing, None, &mut rng)?;
                let head = Head::build(&mut store, "head", 2 * d, hidden, 1, sigma, &mut rng)?;
                Arch::Features { photo, head, fuse: FusionFunc::Concatenation }
            }
            ProblemKind::Kway => {
                let photo = photo_bank(&mut store, &config.photo, &rooms, sharing, None, &mut rng)?;
                let din = (1 + problem.k * n) * d;
                let head = Head::build(&mut store, "head", din, hidden, problem.k, sigma, &mut rng)?;
                Arch::Kway { photo, head }
            }
            ProblemKind::Set => {
                let fuse = problem.fusion.func;
                match problem.fusion.layer {
                    FusionLayer::Fc6 => {
                        let photo = photo_bank(&mut store, &config.photo, &rooms, sharing, None, &mut rng)?;
                        let din = match fuse {
                            FusionFunc::Concatenation => (1 + n) * d,
                            FusionFunc::Averaging => 2 * d,
                        };
                        let head = Head::build(&mut store, "head", din, hidden, 1, sigma, &mut rng)?;
                        Arch::Features { photo, head, fuse }
                    }
                    FusionLayer::Image => {
                        let mut cfg = config.photo.clone();
                        if fuse == FusionFunc::Concatenation {
                            cfg.in_channels *= n;
                        }
                        let photo = Encoder::build(&mut store, "photo.fused", &cfg, &mut rng)?;
                        let head = Head::build(&mut store, "head", 2 * d, hidden, 1, sigma, &mut rng)?;
                        Arch::Image { photo, head, fuse }
                    }
                    FusionLayer::Conv3 | FusionLayer::Conv4 => {
                        let at = if problem.fusion.layer == FusionLayer::Conv3 { 3 } else { 4 };
                        let photo = photo_bank(&mut store, &config.photo, &rooms, sharing, Some(at), &mut rng)?;
                        let (c, _, _) = config.photo.shape_after(at);
                        let cin = if fuse == FusionFunc::Concatenation { c * n } else { c };
                        let nb = config.photo.conv_blocks.len();
                        let trunk = Encoder::build_stage(&mut store, "photo.trunk", &config.photo, at..nb, cin, true, &mut rng)?;
                        let head = Head::build(&mut store, "head", 2 * d, hidden, 1, sigma, &mut rng)?;
                        Arch::Taps { photo, trunk, head, fuse }
                    }
                    FusionLayer::Score => {
                        let photo = photo_bank(&mut store, &config.photo, &rooms, sharing, None, &mut rng)?;
                        let head = Head::build(&mut store, "head", 2 * d, hidden, 1, sigma, &mut rng)?;
                        let combiner = match fuse {
                            FusionFunc::Averaging if config.untied_score_weights => {
                                Combiner::Weighted(store.add("combine.logits", Tensor::zeros(&[1, n]))?)
                            }
                            FusionFunc::Averaging => Combiner::Mean,
                            FusionFunc::Concatenation => {
                                Combiner::Dense(Dense::build(&mut store, "combine", n, 1, sigma, &mut rng)?)
                            }
                        };
                        Arch::Score { photo, head, combiner }
                    }
                }
            }
        };
        let mut model = MatchModel { problem, config, store, floorplan, arch };
        if model.config.freeze_encoders {
            let ids = model.encoder_params();
            model.store.set_trainable(&ids, false);
        }
        Ok(model)
    }

    pub fn problem(&self) -> &MatchProblem {
        &self.problem
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn floorplan_encoder(&self) -> &Encoder {
        &self.floorplan
    }

    /// Photograph encoders keyed by room type (empty for image fusion).
    pub fn photo_encoders(&self) -> BTreeMap<RoomType, Encoder> {
        match &self.arch {
            Arch::Features { photo, .. } | Arch::Taps { photo, .. } | Arch::Score { photo, .. } | Arch::Kway { photo, .. } => {
                photo.clone()
            }
            Arch::Image { .. } => BTreeMap::new(),
        }
    }

    /// The head that scores one floorplan feature against one photograph
    /// feature, when the architecture has one.
    pub fn pair_head(&self) -> Option<Head> {
        match &self.arch {
            Arch::Features { head, .. } | Arch::Image { head, .. } | Arch::Taps { head, .. } | Arch::Score { head, .. } => {
                Some(*head)
            }
            Arch::Kway { .. } => None,
        }
    }

    /// Parameters of the floorplan and photograph branches, deduplicated.
    pub fn encoder_params(&self) -> Vec<ParamId> {
        let mut ids = self.floorplan.params();
        match &self.arch {
            Arch::Features { photo, .. } | Arch::Score { photo, .. } | Arch::Kway { photo, .. } => {
                ids.extend(photo.values().flat_map(|e| e.params()));
            }
            Arch::Image { photo, .. } => ids.extend(photo.params()),
            Arch::Taps { photo, trunk, .. } => {
                ids.extend(photo.values().flat_map(|e| e.params()));
                ids.extend(trunk.params());
            }
        }
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Photograph-branch parameters only.
    pub fn photo_params(&self) -> Vec<ParamId> {
        let fp = self.floorplan.params();
        self.encoder_params().into_iter().filter(|id| !fp.contains(id)).collect()
    }

    fn encode_slot(
        &self,
        g: &mut Graph<'_, T>,
        bank: &BTreeMap<RoomType, Encoder>,
        batch: &Batch<T>,
        s: usize,
    ) -> Result<NodeId> {
        let slot = &batch.slots[s];
        let enc = slot_encoder(bank, &slot.rooms)?;
        let x = g.input(slot.images.clone());
        Ok(enc.encode(g, x)?.0)
    }

    fn encode_floorplan(&self, g: &mut Graph<'_, T>, batch: &Batch<T>) -> Result<NodeId> {
        let x = g.input(batch.floorplans.clone());
        Ok(self.floorplan.encode(g, x)?.0)
    }

    fn check_batch(&self, batch: &Batch<T>) -> Result<()> {
        let want = self.problem.slots();
        if batch.slots.len() != want {
            return Err(Error::Mismatch(format!(
                "batch has {} photograph slots, {} expects {want}",
                batch.slots.len(),
                self.problem.label()
            )));
        }
        Ok(())
    }

    /// Scores `[N, 1]` in `[-1, 1]` for pair/set problems, logits `[N, k]`
    /// for k-way problems.
    pub fn forward(&self, g: &mut Graph<'_, T>, batch: &Batch<T>) -> Result<NodeId> {
        self.check_batch(batch)?;
        let f = self.encode_floorplan(g, batch)?;
        let nslots = batch.slots.len();
        match &self.arch {
            Arch::Features { photo, head, fuse } => {
                let feats = (0..nslots).map(|s| self.encode_slot(g, photo, batch, s)).collect::<Result<Vec<_>>>()?;
                let x = match fuse {
                    FusionFunc::Concatenation => {
                        let mut parts = vec![f];
                        parts.extend(feats);
                        g.concat(&parts)?
                    }
                    FusionFunc::Averaging => {
                        let m = g.mean(&feats)?;
                        g.concat(&[f, m])?
                    }
                };
                let y = head.forward(g, x)?;
                g.tanh(y)
            }
            Arch::Image { photo, head, fuse } => {
                let imgs: Vec<NodeId> = batch.slots.iter().map(|s| g.input(s.images.clone())).collect();
                let x = match fuse {
                    FusionFunc::Concatenation => g.concat(&imgs)?,
                    FusionFunc::Averaging => g.mean(&imgs)?,
                };
                let p = photo.encode(g, x)?.0;
                head.pair_score(g, f, p)
            }
            Arch::Taps { photo, trunk, head, fuse } => {
                let maps = (0..nslots).map(|s| self.encode_slot(g, photo, batch, s)).collect::<Result<Vec<_>>>()?;
                let x = match fuse {
                    FusionFunc::Concatenation => g.concat(&maps)?,
                    FusionFunc::Averaging => g.mean(&maps)?,
                };
                let p = trunk.encode(g, x)?.0;
                head.pair_score(g, f, p)
            }
            Arch::Score { photo, head, combiner } => {
                let mut scores = Vec::with_capacity(nslots);
                for s in 0..nslots {
                    let p = self.encode_slot(g, photo, batch, s)?;
                    scores.push(head.pair_score(g, f, p)?);
                }
                match combiner {
                    Combiner::Mean => g.mean(&scores),
                    Combiner::Weighted(logits) => {
                        let v = g.concat(&scores)?;
                        let l = g.param(*logits);
                        let w = g.softmax(l)?;
                        g.linear(v, w, None)
                    }
                    Combiner::Dense(d) => {
                        let v = g.concat(&scores)?;
                        let y = d.forward(g, v)?;
                        g.tanh(y)
                    }
                }
            }
            Arch::Kway { photo, head } => {
                let mut parts = vec![f];
                for s in 0..nslots {
                    parts.push(self.encode_slot(g, photo, batch, s)?);
                }
                let x = g.concat(&parts)?;
                head.forward(g, x)
            }
        }
    }

    /// Training loss: mean hinge for pair/set, mean cross entropy for k-way.
    pub fn loss(&self, g: &mut Graph<'_, T>, out: NodeId, targets: &Targets, margin: f64) -> Result<NodeId> {
        match (self.problem.kind, targets) {
            (ProblemKind::Kway, Targets::Kway(t)) => g.cross_entropy(out, t),
            (ProblemKind::Pair | ProblemKind::Set, Targets::Pair(labels)) => {
                let l: Vec<T> = labels.iter().map(|&v| if v > 0 { T::one() } else { -T::one() }).collect();
                g.hinge(out, &l, T::from_f64_lossy(margin))
            }
            _ => Err(Error::Mismatch(format!("targets do not fit problem {}", self.problem.label()))),
        }
    }

    /// Forward pass without gradient bookkeeping; one row per sample.
    pub fn predict(&self, batch: &Batch<T>) -> Result<Vec<Vec<T>>> {
        let mut g = Graph::inference(&self.store);
        let out = self.forward(&mut g, batch)?;
        let width = g.shape(out)[1];
        let mut rows: Vec<Vec<T>> = g.value(out).chunks(width).map(|r| r.to_vec()).collect();
        if self.problem.kind == ProblemKind::Kway {
            for r in &mut rows {
                crate::autodiff::softmax_in_place(r);
            }
        }
        Ok(rows)
    }

    /// Match scores for a pair/set batch.
    pub fn scores(&self, batch: &Batch<T>) -> Result<Vec<T>> {
        if self.problem.kind == ProblemKind::Kway {
            return Err(Error::Mismatch("scores requested from a k-way model".into()));
        }
        Ok(self.predict(batch)?.into_iter().map(|r| r[0]).collect())
    }

    /// Batch item for one pair/set sample drawn from `split`. Room-agnostic
    /// photo sets are shuffled with the sample's own seed.
    pub fn pair_item<'a>(&self, split: &'a [Apartment], sample: &PairSample) -> Result<BatchItem<'a>> {
        let fp = split.get(sample.floorplan).ok_or_else(|| Error::Dataset("sample index out of range".into()))?;
        let src = split.get(sample.photo_source).ok_or_else(|| Error::Dataset("sample index out of range".into()))?;
        let mut rooms = sample.rooms.clone();
        if self.problem.room_mode == RoomMode::Agnostic && rooms.len() > 1 {
            rooms.shuffle(&mut rng_for(sample.seed, &[stream::SHUFFLE]));
        }
        let photos = rooms.iter().map(|&rt| Ok((src.photo(rt), rt))).collect::<Result<Vec<_>>>()?;
        Ok(BatchItem { floorplan: &fp.floorplan, photos })
    }

    pub fn kway_item<'a>(&self, split: &'a [Apartment], sample: &KwaySample) -> Result<BatchItem<'a>> {
        let fp = split.get(sample.floorplan).ok_or_else(|| Error::Dataset("sample index out of range".into()))?;
        let mut photos = Vec::new();
        for &c in &sample.candidates {
            let apt = split.get(c).ok_or_else(|| Error::Dataset("sample index out of range".into()))?;
            for &rt in &sample.rooms {
                photos.push((apt.photo(rt), rt));
            }
        }
        Ok(BatchItem { floorplan: &fp.floorplan, photos })
    }
}

fn slot_encoder<'b>(bank: &'b BTreeMap<RoomType, Encoder>, rooms: &[RoomType]) -> Result<&'b Encoder> {
    let first = rooms.first().ok_or_else(|| Error::Mismatch("empty batch".into()))?;
    let enc = bank.get(first).ok_or_else(|| Error::Mismatch(format!("no photograph encoder for {}", first.name())))?;
    for rt in rooms {
        match bank.get(rt) {
            Some(e) if e == enc => {}
            Some(_) => return Err(Error::Mismatch("room types in one slot need a shared encoder".into())),
            None => return Err(Error::Mismatch(format!("no photograph encoder for {}", rt.name()))),
        }
    }
    Ok(enc)
}

/// Supervision for one batch.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// `+1` / `-1` per sample.
    Pair(Vec<i8>),
    /// True candidate index per sample.
    Kway(Vec<usize>),
}

/// Inputs for one sample before batching.
#[derive(Debug, Clone)]
pub struct BatchItem<'a> {
    pub floorplan: &'a Image,
    pub photos: Vec<(&'a Image, RoomType)>,
}

#[derive(Debug, Clone)]
pub struct Slot<T> {
    /// `[N, C, H, W]`.
    pub images: Tensor<T>,
    /// Room type of each sample's photograph in this slot.
    pub rooms: Vec<RoomType>,
}

#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub floorplans: Tensor<T>,
    pub slots: Vec<Slot<T>>,
}

/// Inputs are centred on a fixed mid-grey so the first convolution sees
/// zero-mean data.
pub const PIXEL_MEAN: f64 = 0.5;

fn stack<T: Scalar>(images: &[&Image]) -> Result<Tensor<T>> {
    let first = images.first().ok_or_else(|| Error::Mismatch("empty batch".into()))?;
    let (c, h, w) = (first.channels, first.height, first.width);
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for im in images {
        if (im.channels, im.height, im.width) != (c, h, w) {
            return Err(Error::Mismatch(format!(
                "ragged images: {}x{}x{} vs {c}x{h}x{w}",
                im.channels, im.height, im.width
            )));
        }
        data.extend(im.data.iter().map(|&v| T::from_f64_lossy(v as f64 - PIXEL_MEAN)));
    }
    Tensor::new(&[images.len(), c, h, w], data)
}

impl<T: Scalar> Batch<T> {
    pub fn build(items: &[BatchItem<'_>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::Mismatch("empty batch".into()))?;
        let nslots = first.photos.len();
        if let Some(bad) = items.iter().find(|it| it.photos.len() != nslots) {
            return Err(Error::Mismatch(format!("ragged candidates: {} vs {nslots} photographs", bad.photos.len())));
        }
        let fps: Vec<&Image> = items.iter().map(|it| it.floorplan).collect();
        let slots = (0..nslots)
            .map(|s| {
                let imgs: Vec<&Image> = items.iter().map(|it| it.photos[s].0).collect();
                Ok(Slot { images: stack(&imgs)?, rooms: items.iter().map(|it| it.photos[s].1).collect() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Batch { floorplans: stack(&fps)?, slots })
    }

    pub fn len(&self) -> usize {
        self.floorplans.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax_lowest<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if !(v > values[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Softmax probabilities over the `k` candidates of each sample.
pub fn kway_predict<T: Scalar>(model: &MatchModel<T>, batch: &Batch<T>) -> Result<Vec<Vec<T>>> {
    if model.problem().kind != ProblemKind::Kway {
        return Err(Error::Mismatch("kway_predict needs a k-way model".into()));
    }
    model.predict(batch)
}

/// Scores the floorplan against each candidate with a pair model and picks
/// the highest score, lowest index on ties.
pub fn solve_kway_with_pair_model<T: Scalar>(
    model: &MatchModel<T>,
    floorplan: &Image,
    candidates: &[Vec<(&Image, RoomType)>],
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidates".into()));
    }
    let items: Vec<BatchItem<'_>> =
        candidates.iter().map(|c| BatchItem { floorplan, photos: c.clone() }).collect();
    let scores = model.scores(&Batch::build(&items)?)?;
    Ok(argmax_lowest(&scores).expect("non-empty"))
}

/// Slot layout used to present `k` candidates to a `big_k`-way model: each
/// candidate fills `big_k / k` consecutive slots.
pub fn duplicate_slots(k: usize, big_k: usize) -> Result<Vec<usize>> {
    if k == 0 || big_k % k != 0 {
        return Err(Error::InvalidArgument(format!("k = {k} does not divide K = {big_k}")));
    }
    let r = big_k / k;
    Ok((0..big_k).map(|slot| slot / r).collect())
}

/// Sums slot probabilities per candidate and returns the best candidate,
/// lowest index on ties.
pub fn slot_sum_predict<T: Scalar>(slot_probs: &[T], k: usize) -> Result<usize> {
    let owner = duplicate_slots(k, slot_probs.len())?;
    let mut sums = vec![T::zero(); k];
    for (p, &c) in slot_probs.iter().zip(&owner) {
        sums[c] = sums[c] + *p;
    }
    Ok(argmax_lowest(&sums).expect("k >= 1"))
}

/// Solves a `k`-way problem with a model trained for `K` candidates by
/// duplicating each candidate `K / k` times.
pub fn solve_smallk_with_bigk_model<T: Scalar>(
    model: &MatchModel<T>,
    floorplan: &Image,
    candidates: &[Vec<(&Image, RoomType)>],
) -> Result<usize> {
    let big_k = model.problem().k;
    let owner = duplicate_slots(candidates.len(), big_k)?;
    let photos = owner.iter().flat_map(|&c| candidates[c].iter().copied()).collect();
    let batch = Batch::build(&[BatchItem { floorplan, photos }])?;
    let probs = kway_predict(model, &batch)?;
    slot_sum_predict(&probs[0], candidates.len())
}

#[cfg(test)]
mod tests;
