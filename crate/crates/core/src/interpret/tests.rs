use super::*;
use crate::encoders::{ConvInit, EncoderConfig};
use crate::matchers::{MatchProblem, ModelConfig, RoomMode};
use crate::synthgen::{generate_dataset, GeneratorSpec};

fn tiny_encoder() -> EncoderConfig {
    EncoderConfig {
        input_size: (32, 32),
        in_channels: 3,
        conv_blocks: vec![(4, 1), (6, 1)],
        feature_dim: 6,
        init_sigma: 0.3,
        conv_init: ConvInit::He,
    }
}

fn model_for(problem: MatchProblem) -> MatchModel<f64> {
    let cfg = ModelConfig { floorplan: tiny_encoder(), photo: tiny_encoder(), hidden_dim: Some(8), ..Default::default() };
    MatchModel::build(problem, cfg, 3).unwrap()
}

/// One shared photograph encoder, so every room type can be scored.
fn any_room_model() -> MatchModel<f64> {
    model_for(MatchProblem { room_type: None, room_mode: RoomMode::Agnostic, ..MatchProblem::pair(RoomType::Bathroom) })
}

fn apartments(n: usize) -> Vec<Apartment> {
    let spec = GeneratorSpec { floorplan_size: 32, photo_size: 32, ..Default::default() };
    generate_dataset(17, &spec, n, 0).unwrap().train
}

fn small_cfg() -> RfConfig {
    RfConfig { window: 7, stride: 5, samples_per_window: 2, ..Default::default() }
}

/// Runs jobs back to front, then restores input order.
struct Reversed;

impl Executor for Reversed {
    fn map<I: Sync, O: Send>(&self, items: &[I], f: &(dyn Fn(&I) -> O + Sync)) -> Vec<O> {
        let mut out: Vec<O> = items.iter().rev().map(f).collect();
        out.reverse();
        out
    }
}

#[test]
fn grid_extent_arithmetic() {
    let cfg = RfConfig::default();
    assert_eq!(cfg.extent(64), 54);
    assert_eq!(RfConfig { stride: 4, ..cfg }.extent(64), 14);
    assert_eq!(RfConfig { window: 63, ..cfg }.extent(64), 2);
}

#[test]
fn invalid_windows_are_rejected() {
    let model = any_room_model();
    let a = &apartments(1)[0];
    let photos = [(a.photo(RoomType::Bathroom), RoomType::Bathroom)];
    for cfg in [
        RfConfig { window: 33, ..small_cfg() },
        RfConfig { window: 6, ..small_cfg() },
        RfConfig { stride: 0, ..small_cfg() },
        RfConfig { samples_per_window: 0, ..small_cfg() },
    ] {
        assert!(matches!(rf_map(&model, &a.floorplan, &photos, &cfg), Err(Error::Config { .. })), "{cfg:?}");
    }
}

#[test]
fn heatmap_shape_and_determinism() {
    let model = any_room_model();
    let a = &apartments(1)[0];
    let photos = [(a.photo(RoomType::Kitchen), RoomType::Kitchen)];
    let map = rf_map(&model, &a.floorplan, &photos, &small_cfg()).unwrap();
    assert_eq!((map.rows, map.cols), (6, 6));
    assert_eq!(map.values.len(), 36);
    assert_eq!(map.baseline, score_floorplans(&model, &[&a.floorplan], &photos).unwrap()[0]);
    assert!(map.values.iter().all(|v| v.is_finite()));
    assert_eq!(map, rf_map(&model, &a.floorplan, &photos, &small_cfg()).unwrap());
    assert_eq!(map, rf_map_with(&model, &a.floorplan, &photos, &small_cfg(), &Reversed).unwrap());
    let other = rf_map(&model, &a.floorplan, &photos, &RfConfig { seed: 1, ..small_cfg() }).unwrap();
    assert_ne!(map.values, other.values);
}

#[test]
fn zero_noise_on_a_grey_plan_changes_nothing() {
    let model = any_room_model();
    let a = &apartments(1)[0];
    let grey = Image::filled(32, 32, [PIXEL_MEAN as f32; 3]);
    let photos = [(a.photo(RoomType::Bathroom), RoomType::Bathroom)];
    let cfg = RfConfig { noise_sigma: 0.0, ..small_cfg() };
    let map = rf_map(&model, &grey, &photos, &cfg).unwrap();
    assert!(map.values.iter().all(|&v| v == 0.0));
    // On a real plan the constant fill differs from the pixels it replaces.
    let map = rf_map(&model, &a.floorplan, &photos, &cfg).unwrap();
    assert!(map.values.iter().any(|&v| v != 0.0));
}

#[test]
fn heatmap_argmax_prefers_first_of_ties() {
    let map = Heatmap { rows: 2, cols: 3, window: 3, stride: 2, baseline: 0.0, values: vec![0.0, 2.0, 1.0, 2.0, 0.0, 2.0] };
    assert_eq!(map.argmax(), (0, 1));
    assert_eq!(map.center(1, 2), (5, 3));
}

#[test]
fn monte_carlo_spread_shrinks_with_samples() {
    let model = any_room_model();
    let a = &apartments(1)[0];
    let photos = [(a.photo(RoomType::Bathroom), RoomType::Bathroom)];
    let spread = |samples: usize| {
        let cells: Vec<f64> = (0..40)
            .map(|seed| {
                let cfg = RfConfig { window: 15, stride: 17, samples_per_window: samples, seed, ..Default::default() };
                rf_map(&model, &a.floorplan, &photos, &cfg).unwrap().get(0, 0)
            })
            .collect();
        let m = cells.iter().sum::<f64>() / cells.len() as f64;
        (cells.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / (cells.len() - 1) as f64).sqrt()
    };
    let ratio = spread(5) / spread(80);
    // 1/sqrt(samples) scaling predicts 4.
    assert!((2.5..=6.5).contains(&ratio), "spread ratio {ratio}");
}

#[test]
fn sensitivity_matrix_contains_the_plain_score() {
    let model = model_for(MatchProblem::pair(RoomType::Bathroom));
    let a = apartments(20)
        .into_iter()
        .find(|a| a.room(RoomType::Bathroom).object(ObjectKind::Bathtub).unwrap().present)
        .unwrap();
    let m = object_sensitivity(&model, &a, RoomType::Bathroom, ObjectKind::Bathtub).unwrap();
    let plain = score_floorplans(&model, &[&a.floorplan], &[(a.photo(RoomType::Bathroom), RoomType::Bathroom)]).unwrap()[0];
    assert_eq!(m[1][1], plain);
    assert!(m.iter().flatten().all(|v| v.is_finite() && (-1.0..=1.0).contains(v)));
    assert!(object_sensitivity(&model, &a, RoomType::Bathroom, ObjectKind::Stove).is_err());
}

#[test]
fn simplification_terminates_and_partitions_segments() {
    let model = any_room_model();
    for a in apartments(4) {
        let photos = [(a.photo(RoomType::LivingRoom), RoomType::LivingRoom)];
        let loc = simplify_localize(&model, &a, &photos, &SimplifyConfig::default()).unwrap();
        assert!(loc.removed.len() < a.segments.len());
        assert!(!loc.survivors.is_empty());
        assert_eq!(loc.scores.len(), loc.removed.len() + 1);
        let mut all: Vec<u32> = loc.removed.iter().chain(&loc.survivors).copied().collect();
        all.sort_unstable();
        let mut ids: Vec<u32> = a.segments.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        assert_eq!(all, ids);
        assert_eq!(loc, simplify_localize(&model, &a, &photos, &SimplifyConfig::default()).unwrap());
        // The removal order ignores the threshold, so a looser one only extends it.
        let greedy = simplify_localize(&model, &a, &photos, &SimplifyConfig { retain: 0.0 }).unwrap();
        assert_eq!(greedy.removed[..loc.removed.len()], loc.removed[..]);
    }
}

#[test]
fn single_segment_survives() {
    let model = any_room_model();
    let mut a = apartments(1).remove(0);
    a.segments.truncate(1);
    let id = a.segments[0].id;
    let photo = a.photo(RoomType::Kitchen).clone();
    let photos = [(&photo, RoomType::Kitchen)];
    let loc = simplify_localize(&model, &a, &photos, &SimplifyConfig::default()).unwrap();
    assert_eq!((loc.removed, loc.survivors), (vec![], vec![id]));
    a.segments.clear();
    assert!(simplify_localize(&model, &a, &photos, &SimplifyConfig::default()).is_err());
}

#[test]
fn placements_are_in_bounds_and_deterministic() {
    let model = any_room_model();
    let a = &apartments(1)[0];
    let cfg = small_cfg();
    let mut photos: BTreeMap<RoomType, Image> = RoomType::ALL.iter().map(|&rt| (rt, a.photo(rt).clone())).collect();
    let placed = place_photos(&model, &a.floorplan, &photos, &cfg, &Serial).unwrap();
    assert_eq!(placed.len(), 3);
    for p in placed.values() {
        assert!(p.row < cfg.extent(32) && p.col < cfg.extent(32));
        assert!(p.x < 32 && p.y < 32);
    }
    assert_eq!(placed, place_photos(&model, &a.floorplan, &photos, &cfg, &Reversed).unwrap());
    // Identical photographs through the shared encoder land in the same place.
    photos.insert(RoomType::Kitchen, photos[&RoomType::Bathroom].clone());
    let placed = place_photos(&model, &a.floorplan, &photos, &cfg, &Serial).unwrap();
    assert_eq!(placed[&RoomType::Kitchen], placed[&RoomType::Bathroom]);
}

#[test]
fn retrieval_ranks_the_whole_corpus() {
    let model = model_for(MatchProblem::pair(RoomType::Bathroom));
    let apts = apartments(12);
    let corpus: Vec<&Image> = apts.iter().map(|a| a.photo(RoomType::Bathroom)).collect();
    let ranked = retrieve(&model, &apts[0].floorplan, &corpus, RoomType::Bathroom, 100).unwrap();
    assert_eq!(ranked.len(), 12);
    let mut ids: Vec<usize> = ranked.iter().map(|r| r.0).collect();
    ids.sort_unstable();
    assert_eq!(ids, (0..12).collect::<Vec<_>>());
    assert!(ranked.windows(2).all(|w| w[0].1 >= w[1].1));
    assert_eq!(retrieve(&model, &apts[0].floorplan, &corpus, RoomType::Bathroom, 3).unwrap(), ranked[..3].to_vec());
    let same = vec![corpus[0]; 5];
    let tied = retrieve(&model, &apts[0].floorplan, &same, RoomType::Bathroom, 5).unwrap();
    assert_eq!(tied.iter().map(|r| r.0).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    assert!(retrieve(&model, &apts[0].floorplan, &[], RoomType::Bathroom, 1).is_err());
}

#[test]
fn probing_leaves_parameters_untouched() {
    let model = any_room_model();
    let before = model.store().checksum();
    let a = &apartments(1)[0];
    let photos = [(a.photo(RoomType::Bathroom), RoomType::Bathroom)];
    rf_map(&model, &a.floorplan, &photos, &small_cfg()).unwrap();
    simplify_localize(&model, a, &photos, &SimplifyConfig::default()).unwrap();
    object_sensitivity(&model, a, RoomType::Bathroom, ObjectKind::Basin).unwrap();
    assert_eq!(model.store().checksum(), before);
}
