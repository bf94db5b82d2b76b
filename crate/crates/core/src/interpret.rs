//! Occlusion probing of trained matchers and the applications built on it:
//! receptive-field heatmaps, object-toggle sensitivity, greedy
//! simplification, photo placement and retrieval.
//!
//! Nothing here mutates a model; every op borrows it immutably.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{Executor, Serial};
use crate::matchers::{Batch, BatchItem, MatchModel, PIXEL_MEAN};
use crate::rng::{rng_for, stream};
use crate::synthgen::{blank_segments, toggle_object, Apartment, Image, Modality, ObjectKind, RoomType};
use crate::tensor::Scalar;

/// Floorplans scored per forward pass.
const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfConfig {
    /// Odd side of the square noise window.
    pub window: usize,
    pub stride: usize,
    pub samples_per_window: usize,
    /// Standard deviation of the fill, in network input units.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig { window: 11, stride: 1, samples_per_window: 5, noise_sigma: 1.0, seed: 0 }
    }
}

impl RfConfig {
    pub fn validate(&self, side_x: usize, side_y: usize) -> Result<()> {
        let bad = |field: &str, reason: String| Err(Error::Config { field: format!("interpret.{field}"), reason });
        if self.window == 0 || self.window % 2 == 0 {
            return bad("window", format!("{} must be odd", self.window));
        }
        if self.window > side_x || self.window > side_y {
            return bad("window", format!("{} exceeds the {side_x}x{side_y} raster", self.window));
        }
        if self.stride == 0 {
            return bad("stride", String::from("must be at least 1"));
        }
        if self.samples_per_window == 0 {
            return bad("samples_per_window", String::from("must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma", format!("{} must be a non-negative number", self.noise_sigma));
        }
        Ok(())
    }

    /// Grid extent along an axis of `side` pixels.
    pub fn extent(&self, side: usize) -> usize {
        (side - self.window) / self.stride + 1
    }
}

/// Score drop per window position; cell `(r, c)` covers the window whose
/// top-left pixel is `(c * stride, r * stride)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    pub window: usize,
    pub stride: usize,
    pub baseline: f64,
    /// Row-major, `rows * cols`.
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// Largest cell; ties resolve to the lowest row-major index.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }

    /// Floorplan pixel `(x, y)` at the centre of a cell's window.
    pub fn center(&self, row: usize, col: usize) -> (usize, usize) {
        (col * self.stride + self.window / 2, row * self.stride + self.window / 2)
    }
}

/// Scores every floorplan against the same photographs.
pub fn score_floorplans<T: Scalar>(
    model: &MatchModel<T>,
    floorplans: &[&Image],
    photos: &[(&Image, RoomType)],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(floorplans.len());
    for chunk in floorplans.chunks(CHUNK) {
        let items: Vec<BatchItem<'_>> =
            chunk.iter().map(|&fp| BatchItem { floorplan: fp, photos: photos.to_vec() }).collect();
        out.extend(model.scores(&Batch::build(&items)?)?.into_iter().map(|s| s.to_f64_lossy()));
    }
    Ok(out)
}

fn score_one<T: Scalar>(model: &MatchModel<T>, floorplan: &Image, photos: &[(&Image, RoomType)]) -> Result<f64> {
    Ok(score_floorplans(model, &[floorplan], photos)?[0])
}

/// `floorplan` with the window at `(x0, y0)` replaced by Gaussian noise drawn
/// from the stream of that window and sample.
fn noised(floorplan: &Image, x0: usize, y0: usize, cfg: &RfConfig, row: usize, col: usize, sample: usize) -> Image {
    let mut rng = rng_for(cfg.seed, &[stream::NOISE, row as u64, col as u64, sample as u64]);
    let mut img = floorplan.clone();
    let (w, h) = (img.width, img.height);
    for c in 0..img.channels {
        for y in y0..y0 + cfg.window {
            for x in x0..x0 + cfg.window {
                let z: f64 = rng.sample(StandardNormal);
                img.data[(c * h + y) * w + x] = (PIXEL_MEAN + cfg.noise_sigma * z) as f32;
            }
        }
    }
    img
}

/// Receptive-field heatmap: at each window position, the baseline score
/// minus the mean score over noise fills of that window. Positive cells mark
/// regions whose corruption hurts the match.
pub fn rf_map<T: Scalar + Send + Sync>(
    model: &MatchModel<T>,
    floorplan: &Image,
    photos: &[(&Image, RoomType)],
    cfg: &RfConfig,
) -> Result<Heatmap> {
    rf_map_with(model, floorplan, photos, cfg, &Serial)
}

/// [`rf_map`] with grid rows distributed over `exec`. Noise depends only on
/// the seed and window position, so any executor gives identical maps.
pub fn rf_map_with<T: Scalar + Send + Sync, E: Executor>(
    model: &MatchModel<T>,
    floorplan: &Image,
    photos: &[(&Image, RoomType)],
    cfg: &RfConfig,
    exec: &E,
) -> Result<Heatmap> {
    cfg.validate(floorplan.width, floorplan.height)?;
    let baseline = score_one(model, floorplan, photos)?;
    let (rows, cols) = (cfg.extent(floorplan.height), cfg.extent(floorplan.width));
    let row_ids: Vec<usize> = (0..rows).collect();
    let per_row = exec.map(&row_ids, &|&r| -> Result<Vec<f64>> {
        let mut imgs = Vec::with_capacity(cols * cfg.samples_per_window);
        for c in 0..cols {
            for s in 0..cfg.samples_per_window {
                imgs.push(noised(floorplan, c * cfg.stride, r * cfg.stride, cfg, r, c, s));
            }
        }
        let refs: Vec<&Image> = imgs.iter().collect();
        let scores = score_floorplans(model, &refs, photos)?;
        Ok(scores
            .chunks(cfg.samples_per_window)
            .map(|w| baseline - w.iter().sum::<f64>() / cfg.samples_per_window as f64)
            .collect())
    });
    let mut values = Vec::with_capacity(rows * cols);
    for row in per_row {
        values.extend(row?);
    }
    Ok(Heatmap { rows, cols, window: cfg.window, stride: cfg.stride, baseline, values })
}

/// Pair scores with one object toggled independently in each modality.
/// Entry `[i][j]` has the object present on the floorplan iff `i == 1` and
/// in the photograph iff `j == 1`.
pub fn object_sensitivity<T: Scalar>(
    model: &MatchModel<T>,
    apartment: &Apartment,
    room_type: RoomType,
    kind: ObjectKind,
) -> Result<[[f64; 2]; 2]> {
    let mut plans = Vec::with_capacity(2);
    let mut photos = Vec::with_capacity(2);
    for present in [false, true] {
        plans.push(toggle_object(apartment, room_type, kind, present, Modality::Floorplan)?.floorplan);
        photos.push(toggle_object(apartment, room_type, kind, present, Modality::Photo)?.photo(room_type).clone());
    }
    let plan_refs: Vec<&Image> = plans.iter().collect();
    let mut out = [[0.0; 2]; 2];
    for (j, photo) in photos.iter().enumerate() {
        let s = score_floorplans(model, &plan_refs, &[(photo, room_type)])?;
        out[0][j] = s[0];
        out[1][j] = s[1];
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimplifyConfig {
    /// Stop before a removal that would leave less than this fraction of the
    /// current score.
    pub retain: f64,
}

impl Default for SimplifyConfig {
    fn default() -> Self {
        SimplifyConfig { retain: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    /// Segment ids in removal order.
    pub removed: Vec<u32>,
    /// Ascending ids of the segments left standing.
    pub survivors: Vec<u32>,
    /// Score before any removal, then after each one.
    pub scores: Vec<f64>,
}

/// Greedy simplification: repeatedly blank the segment whose removal moves
/// the score least, until a removal would cost too much or one segment is
/// left. Terminates in at most `#segments - 1` removals.
///
/// With scores in `[-1, 1]` the retention threshold is taken on the
/// magnitude: a step is refused when it lowers the score by more than
/// `(1 - retain) * |current|`.
pub fn simplify_localize<T: Scalar>(
    model: &MatchModel<T>,
    apartment: &Apartment,
    photos: &[(&Image, RoomType)],
    cfg: &SimplifyConfig,
) -> Result<Localization> {
    if apartment.segments.is_empty() {
        return Err(Error::InvalidArgument(String::from("apartment has no segments")));
    }
    if !(0.0..=1.0).contains(&cfg.retain) {
        return Err(Error::Config { field: String::from("interpret.retain"), reason: format!("{} outside [0, 1]", cfg.retain) });
    }
    let mut alive: Vec<u32> = apartment.segments.iter().map(|s| s.id).collect();
    alive.sort_unstable();
    let mut removed = Vec::new();
    let mut current = score_one(model, &apartment.floorplan, photos)?;
    let mut scores = alloc::vec![current];
    while alive.len() > 1 {
        let trials: Vec<Image> = alive
            .iter()
            .map(|&id| {
                let mut gone = removed.clone();
                gone.push(id);
                blank_segments(apartment, &gone)
            })
            .collect();
        let refs: Vec<&Image> = trials.iter().collect();
        let trial_scores = score_floorplans(model, &refs, photos)?;
        // `alive` is ascending, so the first minimum is the lowest id.
        let mut best = 0;
        for (i, s) in trial_scores.iter().enumerate() {
            if (s - current).abs() < (trial_scores[best] - current).abs() {
                best = i;
            }
        }
        let next = trial_scores[best];
        if next < current - (1.0 - cfg.retain) * current.abs() {
            break;
        }
        removed.push(alive.remove(best));
        current = next;
        scores.push(current);
    }
    Ok(Localization { removed, survivors: alive, scores })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub row: usize,
    pub col: usize,
    /// Floorplan pixel at the centre of the winning window.
    pub x: usize,
    pub y: usize,
    pub response: f64,
}

/// Places each photograph at the argmax of its receptive-field map.
pub fn place_photos<T: Scalar + Send + Sync, E: Executor>(
    model: &MatchModel<T>,
    floorplan: &Image,
    photos: &BTreeMap<RoomType, Image>,
    cfg: &RfConfig,
    exec: &E,
) -> Result<BTreeMap<RoomType, Placement>> {
    let mut out = BTreeMap::new();
    for (&rt, photo) in photos {
        let map = rf_map_with(model, floorplan, &[(photo, rt)], cfg, exec)?;
        let (row, col) = map.argmax();
        let (x, y) = map.center(row, col);
        out.insert(rt, Placement { row, col, x, y, response: map.get(row, col) });
    }
    Ok(out)
}

/// Ranks `corpus` by pair score against `floorplan`, best first; equal
/// scores keep corpus order. Returns at most `top_n` `(index, score)` rows.
pub fn retrieve<T: Scalar>(
    model: &MatchModel<T>,
    floorplan: &Image,
    corpus: &[&Image],
    room_type: RoomType,
    top_n: usize,
) -> Result<Vec<(usize, f64)>> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument(String::from("empty retrieval corpus")));
    }
    let mut scores = Vec::with_capacity(corpus.len());
    for chunk in corpus.chunks(CHUNK) {
        let items: Vec<BatchItem<'_>> =
            chunk.iter().map(|&p| BatchItem { floorplan, photos: alloc::vec![(p, room_type)] }).collect();
        scores.extend(model.scores(&Batch::build(&items)?)?.into_iter().map(|s| s.to_f64_lossy()));
    }
    let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(core::cmp::Ordering::Equal));
    ranked.truncate(top_n);
    Ok(ranked)
}

#[cfg(test)]
mod tests;
