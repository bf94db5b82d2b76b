use super::*;
use crate::encoders::ConvInit;
use crate::synthgen::{generate_dataset, make_kway_sample, GeneratorSpec, RoomSelection};
use rand::Rng as _;

fn tiny_encoder(size: usize, blocks: usize) -> EncoderConfig {
    EncoderConfig {
        input_size: (size, size),
        in_channels: 3,
        conv_blocks: vec![(4, 1); blocks],
        feature_dim: 6,
        init_sigma: 0.3,
        conv_init: ConvInit::He,
    }
}

fn tiny_config() -> ModelConfig {
    ModelConfig { floorplan: tiny_encoder(16, 2), photo: tiny_encoder(16, 4), hidden_dim: Some(8), ..Default::default() }
}

fn image(seed: u64, size: usize) -> Image {
    let mut rng = rng_for(seed, &[]);
    Image { width: size, height: size, channels: 3, data: (0..3 * size * size).map(|_| rng.gen::<f32>()).collect() }
}

struct Fixture {
    floorplans: Vec<Image>,
    photos: Vec<Image>,
}

impl Fixture {
    fn new(n: usize, slots: usize, seed: u64) -> Self {
        Fixture {
            floorplans: (0..n).map(|i| image(seed * 1000 + i as u64, 16)).collect(),
            photos: (0..n * slots).map(|i| image(seed * 1000 + 500 + i as u64, 16)).collect(),
        }
    }

    /// Items whose slot `s` holds photo `order[s]` tagged with `rooms[order[s]]`.
    fn items(&self, rooms: &[RoomType], order: &[usize]) -> Vec<BatchItem<'_>> {
        let slots = order.len();
        self.floorplans
            .iter()
            .enumerate()
            .map(|(i, fp)| BatchItem {
                floorplan: fp,
                photos: order.iter().map(|&s| (&self.photos[i * slots + s], rooms[s % rooms.len()])).collect(),
            })
            .collect()
    }
}

fn scores(model: &MatchModel<f64>, items: &[BatchItem<'_>]) -> Vec<f64> {
    model.scores(&Batch::build(items).unwrap()).unwrap()
}

#[test]
fn pair_scores_stay_in_range() {
    let mut cfg = tiny_config();
    cfg.floorplan.init_sigma = 3.0;
    cfg.photo.init_sigma = 3.0;
    let model = MatchModel::<f64>::build(MatchProblem::pair(RoomType::Bathroom), cfg, 1).unwrap();
    let fx = Fixture::new(20, 1, 1);
    for s in scores(&model, &fx.items(&[RoomType::Bathroom], &[0])) {
        assert!((-1.0..=1.0).contains(&s));
    }
}

#[test]
fn zero_head_scores_zero() {
    let mut model = MatchModel::<f64>::build(MatchProblem::pair(RoomType::Kitchen), tiny_config(), 2).unwrap();
    let head = model.pair_head().unwrap();
    for id in head.params() {
        model.store_mut().get_mut(id).data_mut().fill(0.0);
    }
    let fx = Fixture::new(4, 1, 2);
    assert!(scores(&model, &fx.items(&[RoomType::Kitchen], &[0])).iter().all(|&s| s == 0.0));
}

#[test]
fn pair_score_is_not_symmetric() {
    let model = MatchModel::<f64>::build(MatchProblem::pair(RoomType::Bathroom), tiny_config(), 3).unwrap();
    let head = model.pair_head().unwrap();
    let a = [0.3, -0.1, 0.8, 0.0, 0.5, -0.7];
    let b = [-0.4, 0.9, 0.1, 0.2, -0.3, 0.6];
    let ab = pair_score(model.store(), &head, &a, &b).unwrap();
    let ba = pair_score(model.store(), &head, &b, &a).unwrap();
    assert_ne!(ab, ba);
    assert!(pair_score(model.store(), &head, &a, &b[..5]).is_err());
}

#[test]
fn single_photo_set_reduces_to_pair() {
    let pair = MatchModel::<f64>::build(MatchProblem::pair(RoomType::Bathroom), tiny_config(), 4).unwrap();
    let fx = Fixture::new(6, 1, 4);
    let items = fx.items(&[RoomType::Bathroom], &[0]);
    let want = scores(&pair, &items);
    for func in FusionFunc::ALL {
        let problem = MatchProblem {
            kind: ProblemKind::Set,
            photos_per_apartment: 1,
            room_type: Some(RoomType::Bathroom),
            fusion: FusionSpec { layer: FusionLayer::Fc6, func },
            ..MatchProblem::pair(RoomType::Bathroom)
        };
        let set = MatchModel::<f64>::build(problem, tiny_config(), 4).unwrap();
        assert_eq!(set.store().checksum(), pair.store().checksum());
        assert_eq!(scores(&set, &items), want, "{}", func.name());
    }
    let bad = MatchProblem {
        kind: ProblemKind::Set,
        photos_per_apartment: 1,
        fusion: FusionSpec { layer: FusionLayer::Conv3, func: FusionFunc::Averaging },
        ..MatchProblem::pair(RoomType::Bathroom)
    };
    assert!(bad.validate().is_err());
}

const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

#[test]
fn averaging_fusion_is_permutation_invariant() {
    for mode in [RoomMode::Aware, RoomMode::Agnostic] {
        for layer in FusionLayer::ALL {
            let problem = MatchProblem::set(FusionSpec { layer, func: FusionFunc::Averaging }, mode);
            let model = MatchModel::<f64>::build(problem, tiny_config(), 5).unwrap();
            let fx = Fixture::new(4, 3, 5);
            let want = scores(&model, &fx.items(&RoomType::ALL, &PERMS[0]));
            for perm in &PERMS[1..] {
                assert_eq!(scores(&model, &fx.items(&RoomType::ALL, perm)), want, "{} {perm:?}", problem.label());
            }
        }
    }
}

#[test]
fn concatenation_fusion_depends_on_order() {
    let problem = MatchProblem::set(FusionSpec { layer: FusionLayer::Fc6, func: FusionFunc::Concatenation }, RoomMode::Agnostic);
    let model = MatchModel::<f64>::build(problem, tiny_config(), 6).unwrap();
    let fx = Fixture::new(4, 3, 6);
    let rooms = [RoomType::Bathroom; 3];
    let a = scores(&model, &fx.items(&rooms, &[0, 1, 2]));
    let b = scores(&model, &fx.items(&rooms, &[2, 0, 1]));
    assert!(a.iter().zip(&b).any(|(x, y)| x != y));
}

#[test]
fn untied_score_weights_are_order_sensitive_once_trained() {
    let mut cfg = tiny_config();
    cfg.untied_score_weights = true;
    let problem = MatchProblem::set(FusionSpec { layer: FusionLayer::Score, func: FusionFunc::Averaging }, RoomMode::Agnostic);
    let mut model = MatchModel::<f64>::build(problem, cfg, 7).unwrap();
    let logits = model.store().find("combine.logits").unwrap();
    model.store_mut().get_mut(logits).data_mut().copy_from_slice(&[2.0, 0.0, -1.0]);
    let fx = Fixture::new(4, 3, 7);
    let rooms = [RoomType::Bathroom; 3];
    let a = scores(&model, &fx.items(&rooms, &[0, 1, 2]));
    let b = scores(&model, &fx.items(&rooms, &[2, 1, 0]));
    assert!(a.iter().zip(&b).any(|(x, y)| x != y));
}

#[test]
fn ragged_batches_and_wrong_slot_counts_fail() {
    let a = image(1, 16);
    let b = image(2, 8);
    let items = [
        BatchItem { floorplan: &a, photos: vec![(&a, RoomType::Bathroom)] },
        BatchItem { floorplan: &a, photos: vec![(&b, RoomType::Bathroom)] },
    ];
    assert!(matches!(Batch::<f32>::build(&items), Err(Error::Mismatch(_))));
    let items = [
        BatchItem { floorplan: &a, photos: vec![(&a, RoomType::Bathroom)] },
        BatchItem { floorplan: &a, photos: vec![] },
    ];
    assert!(matches!(Batch::<f32>::build(&items), Err(Error::Mismatch(_))));
    let model = MatchModel::<f64>::build(MatchProblem::kway(3, RoomType::Bathroom), tiny_config(), 1).unwrap();
    let batch = Batch::build(&[BatchItem { floorplan: &a, photos: vec![(&a, RoomType::Bathroom)] }]).unwrap();
    assert!(model.predict(&batch).is_err());
}

#[test]
fn kway_probabilities_sum_to_one() {
    let model = MatchModel::<f64>::build(MatchProblem::kway(4, RoomType::LivingRoom), tiny_config(), 8).unwrap();
    let fx = Fixture::new(5, 4, 8);
    let batch = Batch::build(&fx.items(&[RoomType::LivingRoom], &[0, 1, 2, 3])).unwrap();
    for row in kway_predict(&model, &batch).unwrap() {
        assert_eq!(row.len(), 4);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&p| p > 0.0));
    }
}

#[test]
fn untrained_kway_hits_chance() {
    let mut spec = GeneratorSpec::default();
    spec.floorplan_size = 32;
    spec.photo_size = 32;
    let data = generate_dataset(3, &spec, 40, 0).unwrap();
    let mut cfg = ModelConfig::default();
    cfg.floorplan = cfg.floorplan.with_input(32);
    cfg.photo = cfg.photo.with_input(32);
    let k = 4;
    let problem = MatchProblem::kway(k, RoomType::Bathroom);
    let model = MatchModel::<f32>::build(problem, cfg, 9).unwrap();
    let mut rng = rng_for(10, &[]);
    let n = 2000;
    let mut hits = 0;
    let samples: Vec<_> = (0..n)
        .map(|_| make_kway_sample(&data.train, &mut rng, k, RoomSelection::Single(RoomType::Bathroom)).unwrap())
        .collect();
    for chunk in samples.chunks(100) {
        let items: Vec<_> = chunk.iter().map(|s| model.kway_item(&data.train, s).unwrap()).collect();
        let probs = kway_predict(&model, &Batch::build(&items).unwrap()).unwrap();
        hits += chunk.iter().zip(&probs).filter(|(s, p)| argmax_lowest(p) == Some(s.true_index)).count();
    }
    let rate = hits as f64 / n as f64;
    assert!((rate - 0.25).abs() <= 0.05, "untrained hit rate {rate}");
}

#[test]
fn argmax_prefers_lowest_index() {
    assert_eq!(argmax_lowest(&[0.2, 0.9, -0.1, 0.9]), Some(1));
    assert_eq!(argmax_lowest(&[1.0, 1.0]), Some(0));
    assert_eq!(argmax_lowest::<f64>(&[]), None);
}

#[test]
fn duplication_layout_and_slot_sums() {
    assert_eq!(duplicate_slots(2, 8).unwrap(), vec![0, 0, 0, 0, 1, 1, 1, 1]);
    assert_eq!(duplicate_slots(4, 8).unwrap(), vec![0, 0, 1, 1, 2, 2, 3, 3]);
    assert!(duplicate_slots(3, 8).is_err());
    assert!(duplicate_slots(0, 8).is_err());
    let p = [0.1, 0.1, 0.1, 0.1, 0.15, 0.15, 0.15, 0.15];
    assert_eq!(slot_sum_predict(&p, 2).unwrap(), 1);
    assert_eq!(slot_sum_predict(&[0.25; 8], 2).unwrap(), 0);
}

#[test]
fn slot_sum_matches_brute_force() {
    let mut rng = rng_for(11, &[]);
    for case in 0..500 {
        let (k, big_k) = [(2, 4), (2, 8), (4, 8)][case % 3];
        let raw: Vec<f64> = (0..big_k).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|v| v / total).collect();
        // Candidate c owns the slots whose scaled index floor(j * k / K) is c.
        let mut best = (0, f64::NEG_INFINITY);
        for c in 0..k {
            let s: f64 = (0..big_k).filter(|j| j * k / big_k == c).map(|j| probs[j]).sum();
            if s > best.1 {
                best = (c, s);
            }
        }
        assert_eq!(slot_sum_predict(&probs, k).unwrap(), best.0);
    }
}

fn all_problems() -> Vec<MatchProblem> {
    let mut out = vec![MatchProblem::pair(RoomType::Bathroom), MatchProblem::kway(3, RoomType::Kitchen)];
    for layer in FusionLayer::ALL {
        for func in FusionFunc::ALL {
            out.push(MatchProblem::set(FusionSpec { layer, func }, RoomMode::Aware));
            out.push(MatchProblem::set(FusionSpec { layer, func }, RoomMode::Agnostic));
        }
    }
    out
}

#[test]
fn gradients_reach_every_parameter() {
    for (i, problem) in all_problems().into_iter().enumerate() {
        let mut cfg = tiny_config();
        cfg.untied_score_weights = i % 2 == 0;
        let model = MatchModel::<f64>::build(problem, cfg, 12 + i as u64).unwrap();
        let slots = problem.slots();
        let fx = Fixture::new(6, slots, 12);
        let order: Vec<usize> = (0..slots).collect();
        let items = fx.items(&problem.rooms(), &order);
        let batch = Batch::build(&items).unwrap();
        let targets = match problem.kind {
            ProblemKind::Kway => Targets::Kway(vec![0, 1, 2, 0, 1, 2]),
            _ => Targets::Pair(vec![1, -1, 1, -1, 1, -1]),
        };
        let mut g = Graph::new(model.store());
        let out = model.forward(&mut g, &batch).unwrap();
        let loss = model.loss(&mut g, out, &targets, 1.0).unwrap();
        let grads = g.backward(loss).unwrap();
        for (id, name, _) in model.store().iter() {
            let gr = grads.param(id).unwrap_or_else(|| panic!("{}: {name} detached", problem.label()));
            assert!(gr.iter().any(|&v| v != 0.0), "{}: {name} has an all-zero gradient", problem.label());
        }
    }
}

#[test]
fn mismatched_targets_are_rejected() {
    let model = MatchModel::<f64>::build(MatchProblem::pair(RoomType::Bathroom), tiny_config(), 1).unwrap();
    let fx = Fixture::new(2, 1, 1);
    let batch = Batch::build(&fx.items(&[RoomType::Bathroom], &[0])).unwrap();
    let mut g = Graph::new(model.store());
    let out = model.forward(&mut g, &batch).unwrap();
    assert!(model.loss(&mut g, out, &Targets::Kway(vec![0, 0]), 1.0).is_err());
}

#[test]
fn agnostic_banks_alias_and_aware_banks_do_not() {
    let fusion = FusionSpec::default();
    let agnostic = MatchModel::<f32>::build(MatchProblem::set(fusion, RoomMode::Agnostic), tiny_config(), 1).unwrap();
    let encs: Vec<Encoder> = agnostic.photo_encoders().into_values().collect();
    assert!(encs.windows(2).all(|w| w[0].params() == w[1].params()));
    let aware = MatchModel::<f32>::build(MatchProblem::set(fusion, RoomMode::Aware), tiny_config(), 1).unwrap();
    let encs: Vec<Encoder> = aware.photo_encoders().into_values().collect();
    for i in 0..3 {
        for j in i + 1..3 {
            assert!(encs[i].params().iter().all(|p| !encs[j].params().contains(p)));
        }
    }
    assert_eq!(aware.photo_params().len(), 3 * agnostic.photo_params().len());
    let bad = ModelConfig { photo_sharing: Some(PhotoSharing::PerRoom), ..tiny_config() };
    assert!(MatchModel::<f32>::build(MatchProblem::set(fusion, RoomMode::Agnostic), bad, 1).is_err());
}

#[test]
fn aware_encoders_diverge_after_disjoint_updates() {
    use crate::optim::{OptimizerConfig, OptimizerState};
    let problem = MatchProblem::set(FusionSpec::default(), RoomMode::Aware);
    let mut model = MatchModel::<f64>::build(problem, tiny_config(), 13).unwrap();
    let bank = model.photo_encoders();
    let (bath, kitchen) = (&bank[&RoomType::Bathroom], &bank[&RoomType::Kitchen]);
    // Start both encoders from identical weights.
    for (&src, &dst) in bath.params().iter().zip(&kitchen.params()) {
        let t = model.store().get(src).clone();
        *model.store_mut().get_mut(dst) = t;
    }
    let probe = image(99, 16);
    let features = |model: &MatchModel<f64>, enc: &Encoder| {
        let mut g = Graph::inference(model.store());
        let x = g.input(Batch::<f64>::build(&[BatchItem { floorplan: &probe, photos: vec![] }]).unwrap().floorplans);
        let (f, _) = enc.encode(&mut g, x).unwrap();
        g.value(f).to_vec()
    };
    assert_eq!(features(&model, bath), features(&model, kitchen));
    let fx = Fixture::new(4, 3, 14);
    let items = fx.items(&RoomType::ALL, &[0, 1, 2]);
    let batch = Batch::build(&items).unwrap();
    let mut opt = OptimizerState::new(OptimizerConfig::default(), model.store()).unwrap();
    let grads = {
        let mut g = Graph::new(model.store());
        let out = model.forward(&mut g, &batch).unwrap();
        let loss = model.loss(&mut g, out, &Targets::Pair(vec![1, -1, 1, -1]), 1.0).unwrap();
        g.backward(loss).unwrap()
    };
    grads.accumulate_into(model.store_mut()).unwrap();
    opt.step(model.store_mut());
    assert_ne!(features(&model, bath), features(&model, kitchen));
}

#[test]
fn frozen_encoders_are_not_trainable() {
    let cfg = ModelConfig { freeze_encoders: true, ..tiny_config() };
    let model = MatchModel::<f32>::build(MatchProblem::pair(RoomType::Bathroom), cfg, 1).unwrap();
    let frozen = model.encoder_params();
    for (id, _, t) in model.store().iter() {
        assert_eq!(t.requires_grad(), !frozen.contains(&id));
    }
}

#[test]
fn labels_name_the_problem() {
    assert_eq!(MatchProblem::pair(RoomType::Bathroom).label(), "pair/bathroom/aware");
    assert_eq!(MatchProblem::kway(4, RoomType::Kitchen).label(), "4-way/kitchen/aware");
    assert_eq!(MatchProblem::kway(8, RoomType::Kitchen).chance(), 12.5);
    let s = MatchProblem::set(FusionSpec { layer: FusionLayer::Conv3, func: FusionFunc::Averaging }, RoomMode::Agnostic);
    assert_eq!(s.label(), "set/all/agnostic/conv3+averaging");
    assert!(MatchProblem { k: 1, ..MatchProblem::kway(2, RoomType::Kitchen) }.validate().is_err());
}
