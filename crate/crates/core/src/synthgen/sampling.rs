use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{generate_apartment, Apartment, GeneratorSpec, RoomType, GENERATOR_VERSION};
use crate::error::{Error, Result};
use crate::rng::{self, stream};

/// Which photographs accompany a floorplan in a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomSelection {
    /// One photograph of a fixed room type.
    Single(RoomType),
    /// One photograph of a room type drawn uniformly per sample.
    AnyOne,
    /// All three photographs in the fixed room order.
    All,
}

impl RoomSelection {
    pub fn from_problem(photos: usize, room_type: Option<RoomType>) -> Self {
        match (photos, room_type) {
            (1, Some(rt)) => RoomSelection::Single(rt),
            (1, None) => RoomSelection::AnyOne,
            _ => RoomSelection::All,
        }
    }

    fn draw(self, rng: &mut rng::Rng) -> Vec<RoomType> {
        match self {
            RoomSelection::Single(rt) => alloc::vec![rt],
            RoomSelection::AnyOne => alloc::vec![RoomType::ALL[rng.gen_range(0..3)]],
            RoomSelection::All => RoomType::ALL.to_vec(),
        }
    }
}

/// Floorplan of `floorplan` against photos of `photo_source`; indices refer
/// to the split the sample was drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSample {
    pub floorplan: usize,
    pub photo_source: usize,
    pub rooms: Vec<RoomType>,
    /// `+1` when both come from the same apartment, `-1` otherwise.
    pub label: i8,
    /// Seed private to this sample (photo-order shuffles and similar).
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KwaySample {
    pub floorplan: usize,
    pub candidates: Vec<usize>,
    pub rooms: Vec<RoomType>,
    pub true_index: usize,
    pub seed: u64,
}

/// In-memory train/test splits.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub seed: u64,
    pub spec: GeneratorSpec,
    pub train: Vec<Apartment>,
    pub test: Vec<Apartment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator_version: u32,
    pub seed: u64,
    pub spec: GeneratorSpec,
    pub train_ids: Vec<u64>,
    pub test_ids: Vec<u64>,
    /// Apartment id to directory, relative to the manifest.
    #[serde(default)]
    pub paths: BTreeMap<u64, String>,
}

impl Dataset {
    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            generator_version: GENERATOR_VERSION,
            seed: self.seed,
            spec: self.spec,
            train_ids: self.train.iter().map(|a| a.id).collect(),
            test_ids: self.test.iter().map(|a| a.id).collect(),
            paths: BTreeMap::new(),
        }
    }
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<u64> = self.train_ids.iter().chain(&self.test_ids).copied().collect();
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != n {
            return Err(Error::Dataset("train and test splits share apartment ids".into()));
        }
        Ok(())
    }
}

pub fn apartment_seed(dataset_seed: u64, id: u64) -> u64 {
    rng::derive(dataset_seed, &[stream::APARTMENT, id])
}

/// Apartments `0..n_train` form the training split, the next `n_test` the
/// test split. Each apartment's seed depends only on `(seed, id)`.
pub fn generate_dataset(seed: u64, spec: &GeneratorSpec, n_train: usize, n_test: usize) -> Result<Dataset> {
    let make = |range: core::ops::Range<u64>| -> Result<Vec<Apartment>> {
        range.map(|id| generate_apartment(id, apartment_seed(seed, id), spec)).collect()
    };
    let total = (n_train + n_test) as u64;
    Ok(Dataset { seed, spec: *spec, train: make(0..n_train as u64)?, test: make(n_train as u64..total)? })
}

fn other_than(rng: &mut rng::Rng, n: usize, anchor: usize) -> usize {
    let j = rng.gen_range(0..n - 1);
    if j >= anchor {
        j + 1
    } else {
        j
    }
}

/// Positive (same apartment) or negative (uniform other apartment) pair
/// with probability 1/2 each, for a given floorplan.
pub fn make_pair_sample_for(
    apartments: &[Apartment],
    floorplan: usize,
    rng: &mut rng::Rng,
    rooms: RoomSelection,
) -> Result<PairSample> {
    if apartments.len() < 2 {
        return Err(Error::Dataset(format!("pair sampling needs 2 apartments, have {}", apartments.len())));
    }
    let positive = rng.gen_bool(0.5);
    make_pair_sample_labeled(apartments, floorplan, rng, rooms, positive)
}

/// Pair sample with a prescribed label; training uses this to hold the
/// positive:negative ratio at exactly 1:1 inside every batch.
pub fn make_pair_sample_labeled(
    apartments: &[Apartment],
    floorplan: usize,
    rng: &mut rng::Rng,
    rooms: RoomSelection,
    positive: bool,
) -> Result<PairSample> {
    if apartments.len() < 2 {
        return Err(Error::Dataset(format!("pair sampling needs 2 apartments, have {}", apartments.len())));
    }
    let photo_source = if positive { floorplan } else { other_than(rng, apartments.len(), floorplan) };
    let rooms = rooms.draw(rng);
    Ok(PairSample { floorplan, photo_source, rooms, label: if positive { 1 } else { -1 }, seed: rng.gen() })
}

pub fn make_pair_sample(apartments: &[Apartment], rng: &mut rng::Rng, rooms: RoomSelection) -> Result<PairSample> {
    if apartments.is_empty() {
        return Err(Error::Dataset("empty dataset".into()));
    }
    let anchor = rng.gen_range(0..apartments.len());
    make_pair_sample_for(apartments, anchor, rng, rooms)
}

/// One true candidate at a uniform slot plus `k - 1` distinct distractors.
pub fn make_kway_sample_for(
    apartments: &[Apartment],
    floorplan: usize,
    rng: &mut rng::Rng,
    k: usize,
    rooms: RoomSelection,
) -> Result<KwaySample> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k-way sampling needs k >= 2, got {k}")));
    }
    if k > apartments.len() {
        return Err(Error::Dataset(format!("k = {k} exceeds the {} available apartments", apartments.len())));
    }
    let true_index = rng.gen_range(0..k);
    let mut candidates = Vec::with_capacity(k);
    while candidates.len() < k - 1 {
        let c = other_than(rng, apartments.len(), floorplan);
        if !candidates.contains(&c) {
            candidates.push(c);
        }
    }
    candidates.insert(true_index, floorplan);
    let rooms = rooms.draw(rng);
    Ok(KwaySample { floorplan, candidates, rooms, true_index, seed: rng.gen() })
}

pub fn make_kway_sample(
    apartments: &[Apartment],
    rng: &mut rng::Rng,
    k: usize,
    rooms: RoomSelection,
) -> Result<KwaySample> {
    if apartments.is_empty() {
        return Err(Error::Dataset("empty dataset".into()));
    }
    let anchor = rng.gen_range(0..apartments.len());
    make_kway_sample_for(apartments, anchor, rng, k, rooms)
}
