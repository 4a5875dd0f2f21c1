mod common;

use proptest::prelude::*;
use selfplay_csc::corruptor::PseudoPair;
use selfplay_csc::embedder::{Encoder, NgramEncoder};
use selfplay_csc::harness::toy;
use selfplay_csc::policy::{FeatureMap, PolicyParams};
use selfplay_csc::reward::{pairwise_from_cosine, RewardConfig};
use selfplay_csc::rng::stream;
use selfplay_csc::trainer::{
    clipped_objective, collect_rollouts, compute_advantages, initial_checkpoint, lr_schedule, refit_baseline, train,
    BaselineKind, TrainerConfig, TrainingSet, ValueBaseline,
};

fn small_cfg() -> TrainerConfig {
    TrainerConfig {
        batch_size: 8,
        candidates_per_input: 4,
        total_updates: 3,
        ..Default::default()
    }
}

fn toy_set(fmap: &FeatureMap) -> TrainingSet {
    let (train, _) = common::toy_split(1, 42);
    TrainingSet::new(train, &toy::tables(), fmap).unwrap()
}

#[test]
fn rollouts_replay_identically() {
    let fmap = FeatureMap::new(256);
    let set = toy_set(&fmap);
    let cfg = small_cfg();
    let enc = NgramEncoder::default();
    let params = PolicyParams {
        theta: (0..256).map(|i| ((i * 37) % 11) as f64 / 10.0 - 0.5).collect(),
    };
    let a = collect_rollouts(&params, &set, &cfg, &RewardConfig::default(), &enc, 7, 5).unwrap();
    let b = collect_rollouts(&params, &set, &cfg, &RewardConfig::default(), &enc, 7, 5).unwrap();
    assert_eq!(a.to_jsonl(), b.to_jsonl());
    let c = collect_rollouts(&params, &set, &cfg, &RewardConfig::default(), &enc, 7, 6).unwrap();
    assert_ne!(a.to_jsonl(), c.to_jsonl());
}

#[test]
fn zero_updates_returns_the_initialization() {
    let fmap = FeatureMap::new(256);
    let set = toy_set(&fmap);
    let cfg = TrainerConfig {
        total_updates: 0,
        init_keep_bias: 0.5,
        ..small_cfg()
    };
    let out = train(&cfg, &RewardConfig::default(), &set, &NgramEncoder::default(), &fmap, 3, |_, _| {}).unwrap();
    assert_eq!(out.checkpoint, initial_checkpoint(&cfg, &fmap, 3));
    assert!(out.log.is_empty() && out.telemetry.is_none());
}

#[test]
fn ratio_is_one_at_every_first_evaluation() {
    let fmap = FeatureMap::new(512);
    let set = toy_set(&fmap);
    let cfg = small_cfg();
    let mut seen = 0;
    train(&cfg, &RewardConfig::default(), &set, &NgramEncoder::default(), &fmap, 1, |_, s| {
        assert_eq!(s.first_epoch_ratio_deviation, 0.0);
        seen += 1;
    })
    .unwrap();
    assert_eq!(seen, 3);
}

#[test]
fn training_replays_bit_identically() {
    let fmap = FeatureMap::new(512);
    let set = toy_set(&fmap);
    let cfg = TrainerConfig {
        total_updates: 20,
        baseline: BaselineKind::Mlp,
        ..small_cfg()
    };
    let run = || train(&cfg, &RewardConfig::default(), &set, &NgramEncoder::default(), &fmap, 9, |_, _| {}).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.log, b.log);
    assert_eq!(a.checkpoint, b.checkpoint);
    let t = a.telemetry.unwrap();
    assert!(t.bound.is_finite() && t.min_grad_norm_sq.is_finite());
    assert!(t.max_score_norm > 0.0);
}

#[test]
fn raw_advantages_are_bounded_by_one_plus_the_value() {
    let fmap = FeatureMap::new(256);
    let set = toy_set(&fmap);
    let cfg = TrainerConfig {
        advantage_standardize: false,
        ..small_cfg()
    };
    let enc = NgramEncoder::default();
    let params = PolicyParams::zeros(256);
    for t in 0..5 {
        let mut batch = collect_rollouts(&params, &set, &cfg, &RewardConfig::default(), &enc, 4, t).unwrap();
        let mut v = ValueBaseline::new(BaselineKind::Mlp, 4);
        refit_baseline(&mut v, &batch);
        compute_advantages(&mut batch, &v, &cfg);
        for rec in &batch.records {
            for c in &rec.candidates {
                assert!(c.advantage.abs() <= 1.0 + rec.value.abs() + 1e-12);
            }
        }
    }
}

/// With `alpha = 1` each candidate's reward depends on the candidate alone,
/// so `E[R | x]` is a finite sum over the lattice.
#[test]
fn exact_baseline_gives_zero_mean_advantage() {
    let tables = common::tiny_tables();
    let fmap = FeatureMap::new(64);
    let pairs = vec![
        PseudoPair {
            x: "axcy#".into(),
            y: "accd".into(),
            operator_id: 0,
            seed: 0,
        },
        PseudoPair {
            x: "bxuv".into(),
            y: "bbe".into(),
            operator_id: 0,
            seed: 1,
        },
    ];
    let set = TrainingSet::new(pairs.clone(), &tables, &fmap).unwrap();
    let rcfg = RewardConfig {
        alpha: 1.0,
        ..Default::default()
    };
    let enc = NgramEncoder::new(64);
    let mut r = stream(5);
    let params = PolicyParams {
        theta: (0..64).map(|_| rand::Rng::gen_range(&mut r, -1.0..1.0)).collect(),
    };
    let cos = |a: &selfplay_csc::Sentence, b: &selfplay_csc::Sentence| {
        let (u, v) = (enc.encode(a), enc.encode(b));
        u.dot(&v) / (u.norm() * v.norm())
    };
    let expected: Vec<f64> = (0..2)
        .map(|i| {
            let lat = set.lattice(i);
            lat.lattice()
                .enumerate(10_000)
                .unwrap()
                .iter()
                .map(|c| {
                    let p = lat.logprob(&params, c).unwrap().exp();
                    p * pairwise_from_cosine(cos(&lat.realize(c).unwrap(), &pairs[i].y), &rcfg)
                })
                .sum()
        })
        .collect();

    let cfg = TrainerConfig {
        batch_size: 32,
        candidates_per_input: 4,
        ..Default::default()
    };
    let mut sums = [0.0; 2];
    let mut sqs = [0.0; 2];
    let mut counts = [0usize; 2];
    for t in 0..400 {
        let batch = collect_rollouts(&params, &set, &cfg, &rcfg, &enc, 21, t).unwrap();
        for rec in &batch.records {
            for c in &rec.candidates {
                let a = c.reward.reward - expected[rec.index];
                sums[rec.index] += a;
                sqs[rec.index] += a * a;
                counts[rec.index] += 1;
            }
        }
    }
    for i in 0..2 {
        let n = counts[i] as f64;
        let mean = sums[i] / n;
        let se = ((sqs[i] / n - mean * mean) / n).sqrt();
        assert!(mean.abs() <= 3.0 * se + 1e-12, "input {i}: mean advantage {mean}, se {se}");
        assert!(expected[i] > 0.0 && expected[i] < 1.0);
    }
}

#[test]
fn schedule_decays_with_the_square_root() {
    let cfg = TrainerConfig {
        eta0: 0.3,
        ..Default::default()
    };
    for t in [0usize, 3, 99, 9999] {
        assert!((lr_schedule(&cfg, t) - 0.3 / ((t + 1) as f64).sqrt()).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn clipped_objective_never_exceeds_unclipped(
        ratio in 0.0f64..5.0,
        adv in -10.0f64..10.0,
        eps in 0.001f64..=0.2,
    ) {
        let (v, clipped) = clipped_objective(ratio, adv, eps);
        prop_assert!(v <= ratio * adv + 1e-15);
        let lo = (1.0 - eps) * adv;
        let hi = (1.0 + eps) * adv;
        if clipped {
            prop_assert!(ratio < 1.0 - eps || ratio > 1.0 + eps);
            prop_assert!(v == lo || v == hi);
        } else {
            prop_assert_eq!(v, ratio * adv);
        }
    }
}
