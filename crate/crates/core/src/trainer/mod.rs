//! Proximal policy optimization of the lattice policy against the
//! cluster-consensus reward.
//!
//! One update is: sample `B` training pairs, draw `L` candidate corrections
//! per input, score them, refit and freeze the value baseline, compute
//! advantages `R - V(x)`, then take `K` full-batch ascent steps on the
//! clipped surrogate with learning rate `eta0 / sqrt(t + 1)`.

mod baseline;
mod checkpoint;
mod metrics;

pub use baseline::{input_features, BaselineKind, ValueBaseline, HIDDEN_WIDTH, VALUE_INPUTS};
pub use checkpoint::{Checkpoint, CheckpointError};
pub use metrics::{evaluate, score_outputs, Metrics};

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corruptor::{ConfusionTables, PseudoPair};
use crate::embedder::Encoder;
use crate::policy::{FeatureMap, FeaturizedLattice, PolicyError, PolicyParams};
use crate::reward::{score_candidates, RewardBreakdown, RewardConfig, RewardError};
use crate::rng::{self, mix_seed};
use crate::textcore::Sentence;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("non-finite gradient at update {t}, epoch {epoch}")]
    NonFiniteGradient { t: usize, epoch: usize },
    #[error("empty training set")]
    EmptyDataset,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("invalid trainer config: {0}")]
    BadConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub eta0: f64,
    pub decay_exponent: f64,
    pub clip_epsilon: f64,
    pub batch_size: usize,
    pub candidates_per_input: usize,
    pub ppo_epochs: usize,
    pub total_updates: usize,
    pub top_p: f64,
    pub temperature: f64,
    pub advantage_standardize: bool,
    pub baseline: BaselineKind,
    /// Initial weight of the keep-action bias bucket.
    pub init_keep_bias: f64,
    /// Write measured wall time into the log; off keeps logs reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            eta0: 2.0,
            decay_exponent: 0.5,
            clip_epsilon: 0.05,
            batch_size: 96,
            candidates_per_input: 4,
            ppo_epochs: 2,
            total_updates: 2000,
            top_p: 1.0,
            temperature: 1.0,
            advantage_standardize: true,
            baseline: BaselineKind::Linear,
            init_keep_bias: 0.0,
            record_wall_time: false,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::BadConfig(m.into()));
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return bad("eta0 must be positive");
        }
        if !(self.decay_exponent >= 0.0 && self.decay_exponent.is_finite()) {
            return bad("decay_exponent must be non-negative");
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon <= 0.2) {
            return bad("clip_epsilon must lie in (0, 0.2]");
        }
        if self.batch_size == 0 || self.candidates_per_input == 0 || self.ppo_epochs == 0 {
            return bad("batch_size, candidates_per_input and ppo_epochs must be positive");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must lie in (0, 1]");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !self.init_keep_bias.is_finite() {
            return bad("init_keep_bias must be finite");
        }
        Ok(())
    }
}

/// `eta0 / (t + 1)^decay_exponent`.
pub fn lr_schedule(cfg: &TrainerConfig, t: usize) -> f64 {
    let n = (t + 1) as f64;
    if cfg.decay_exponent == 0.5 {
        cfg.eta0 / n.sqrt()
    } else {
        cfg.eta0 / n.powf(cfg.decay_exponent)
    }
}

/// Training pairs with their lattices built once up front.
pub struct TrainingSet {
    pairs: Vec<PseudoPair>,
    lattices: Vec<FeaturizedLattice>,
}

impl TrainingSet {
    pub fn new(pairs: Vec<PseudoPair>, tables: &ConfusionTables, fmap: &FeatureMap) -> Result<Self, TrainError> {
        if pairs.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let lattices = pairs
            .iter()
            .map(|p| FeaturizedLattice::build(&p.x, tables, fmap))
            .collect::<Result<_, _>>()?;
        Ok(TrainingSet { pairs, lattices })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[PseudoPair] {
        &self.pairs
    }

    pub fn lattice(&self, i: usize) -> &FeaturizedLattice {
        &self.lattices[i]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateRollout {
    pub choices: Vec<usize>,
    pub old_logprob: f64,
    pub output: Sentence,
    pub reward: RewardBreakdown,
    pub advantage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RolloutRecord {
    /// Index into the training set.
    pub index: usize,
    pub x: Sentence,
    pub y: Sentence,
    pub value: f64,
    pub candidates: Vec<CandidateRollout>,
}

impl RolloutRecord {
    pub fn mean_reward(&self) -> f64 {
        self.candidates.iter().map(|c| c.reward.reward).sum::<f64>() / self.candidates.len() as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RolloutBatch {
    pub records: Vec<RolloutRecord>,
}

impl RolloutBatch {
    pub fn candidates(&self) -> impl Iterator<Item = &CandidateRollout> {
        self.records.iter().flat_map(|r| r.candidates.iter())
    }

    pub fn mean_reward(&self) -> f64 {
        let (sum, n) = self
            .candidates()
            .fold((0.0, 0usize), |(s, n), c| (s + c.reward.reward, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("rollouts serialize") + "\n")
            .collect()
    }
}

/// Sample `batch_size` training inputs and `candidates_per_input` candidates
/// for each, scoring them against the stored clean reference. Record `i`
/// of update `t` uses its own random stream, so collection runs in
/// parallel without affecting the result.
pub fn collect_rollouts<E: Encoder + ?Sized>(
    params: &PolicyParams,
    set: &TrainingSet,
    cfg: &TrainerConfig,
    reward_cfg: &RewardConfig,
    encoder: &E,
    seed: u64,
    t: usize,
) -> Result<RolloutBatch, TrainError> {
    if set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut pick = rng::stream(mix_seed(seed ^ rng::domain::BATCH, t as u64, 0));
    let indices: Vec<usize> = (0..cfg.batch_size).map(|_| pick.gen_range(0..set.len())).collect();
    let records = indices
        .par_iter()
        .enumerate()
        .map(|(slot, &index)| {
            let mut r = rng::stream(mix_seed(seed ^ rng::domain::ROLLOUT, t as u64, slot as u64));
            let lattice = set.lattice(index);
            let pair = &set.pairs[index];
            let mut samples = Vec::with_capacity(cfg.candidates_per_input);
            let mut outputs = Vec::with_capacity(cfg.candidates_per_input);
            for _ in 0..cfg.candidates_per_input {
                let s = lattice.sample(params, &mut r, cfg.top_p, cfg.temperature)?;
                outputs.push(lattice.realize(&s.choices)?);
                samples.push(s);
            }
            let rewards = score_candidates(encoder, &outputs, &pair.y, reward_cfg)?;
            let candidates = samples
                .into_iter()
                .zip(outputs)
                .zip(rewards)
                .map(|((s, output), reward)| CandidateRollout {
                    choices: s.choices,
                    old_logprob: s.logprob,
                    output,
                    reward,
                    advantage: 0.0,
                })
                .collect();
            Ok(RolloutRecord {
                index,
                x: pair.x.clone(),
                y: pair.y.clone(),
                value: 0.0,
                candidates,
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    Ok(RolloutBatch { records })
}

/// Fit the baseline to the batch's per-input mean rewards.
pub fn refit_baseline(baseline: &mut ValueBaseline, batch: &RolloutBatch) {
    let inputs: Vec<Vec<f64>> = batch.records.iter().map(|r| input_features(&r.x)).collect();
    let targets: Vec<f64> = batch.records.iter().map(RolloutRecord::mean_reward).collect();
    baseline.refit(&inputs, &targets);
}

/// Set `A = R - V(x)`, optionally standardized within the batch. Returns
/// the mean advantage before standardization.
pub fn compute_advantages(batch: &mut RolloutBatch, baseline: &ValueBaseline, cfg: &TrainerConfig) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for rec in &mut batch.records {
        rec.value = baseline.predict(&rec.x);
        for c in &mut rec.candidates {
            c.advantage = c.reward.reward - rec.value;
            sum += c.advantage;
            n += 1;
        }
    }
    let mean = if n == 0 { 0.0 } else { sum / n as f64 };
    if cfg.advantage_standardize && n > 0 {
        let var = batch
            .candidates()
            .map(|c| (c.advantage - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let scale = if var < 1e-12 { None } else { Some(var.sqrt()) };
        for c in batch.records.iter_mut().flat_map(|r| r.candidates.iter_mut()) {
            c.advantage = match scale {
                Some(sd) => (c.advantage - mean) / sd,
                None => 0.0,
            };
        }
    }
    mean
}

/// Per-sample clipped surrogate `min(rho A, clip(rho, 1-eps, 1+eps) A)` and
/// whether the clipped branch is the (strict) minimum.
pub fn clipped_objective(ratio: f64, advantage: f64, epsilon: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage;
    if clipped < unclipped {
        (clipped, true)
    } else {
        (unclipped, false)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct UpdateStats {
    pub mean_reward: f64,
    /// L2 norm of the first-epoch surrogate gradient.
    pub grad_norm: f64,
    /// Fraction of (sample, epoch) evaluations where clipping was active.
    pub clip_fraction: f64,
    /// Mean of `old_logprob - new_logprob` after the update.
    pub kl: f64,
    /// Mean surrogate value at the first epoch.
    pub surrogate: f64,
    /// Largest per-sample score-function norm seen at the first epoch.
    pub max_score_norm: f64,
    /// max |rho - 1| at the first epoch (zero when ratios are anchored
    /// at the sampling parameters).
    pub first_epoch_ratio_deviation: f64,
}

/// `K` ascent steps on the batch-mean clipped surrogate.
pub fn ppo_update(
    params: &mut PolicyParams,
    batch: &RolloutBatch,
    set: &TrainingSet,
    cfg: &TrainerConfig,
    t: usize,
) -> Result<UpdateStats, TrainError> {
    let lr = lr_schedule(cfg, t);
    let n = batch.candidates().count();
    let mut stats = UpdateStats {
        mean_reward: batch.mean_reward(),
        ..Default::default()
    };
    if n == 0 {
        return Ok(stats);
    }
    let mut clipped_count = 0usize;
    for epoch in 0..cfg.ppo_epochs {
        let mut grad = vec![0.0; params.dim()];
        let mut surrogate = 0.0;
        for rec in &batch.records {
            let lattice = set.lattice(rec.index);
            for c in &rec.candidates {
                let (lp, score) = lattice.logprob_and_grad(params, &c.choices)?;
                let ratio = (lp - c.old_logprob).exp();
                let (obj, clipped) = clipped_objective(ratio, c.advantage, cfg.clip_epsilon);
                surrogate += obj;
                if clipped {
                    clipped_count += 1;
                } else {
                    score.add_scaled_to(&mut grad, c.advantage * ratio / n as f64);
                }
                if epoch == 0 {
                    stats.max_score_norm = stats.max_score_norm.max(score.norm());
                    stats.first_epoch_ratio_deviation = stats.first_epoch_ratio_deviation.max((ratio - 1.0).abs());
                }
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFiniteGradient { t, epoch });
        }
        if epoch == 0 {
            stats.grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            stats.surrogate = surrogate / n as f64;
        }
        params.theta.iter_mut().zip(&grad).for_each(|(p, g)| *p += lr * g);
    }
    let mut kl = 0.0;
    for rec in &batch.records {
        let lattice = set.lattice(rec.index);
        for c in &rec.candidates {
            kl += c.old_logprob - lattice.logprob(params, &c.choices)?;
        }
    }
    stats.kl = kl / n as f64;
    stats.clip_fraction = clipped_count as f64 / (n * cfg.ppo_epochs) as f64;
    Ok(stats)
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateLog {
    pub t: usize,
    pub lr: f64,
    pub mean_reward: f64,
    pub grad_norm: f64,
    pub clip_fraction: f64,
    pub kl: f64,
    pub baseline_bias: f64,
    pub wall_ms: u64,
}

/// Empirical quantities entering the non-asymptotic rate
/// `8 (1 - J0) / (eta sqrt(T)) + 2 G^2 eps^2 + 4 B^2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTelemetry {
    pub updates: usize,
    pub initial_reward: f64,
    /// Largest per-sample score-function norm observed.
    pub max_score_norm: f64,
    /// Largest |mean advantage| before standardization.
    pub max_baseline_bias: f64,
    pub min_grad_norm_sq: f64,
    pub bound: f64,
    pub below_bound: bool,
}

impl ConvergenceTelemetry {
    pub fn from_run(cfg: &TrainerConfig, logs: &[UpdateLog], max_score_norm: f64) -> Option<Self> {
        let first = logs.first()?;
        let t = logs.len() as f64;
        let max_bias = logs.iter().map(|l| l.baseline_bias.abs()).fold(0.0, f64::max);
        let min_sq = logs.iter().map(|l| l.grad_norm * l.grad_norm).fold(f64::INFINITY, f64::min);
        let bound = 8.0 * (1.0 - first.mean_reward) / (cfg.eta0 * t.sqrt())
            + 2.0 * max_score_norm.powi(2) * cfg.clip_epsilon.powi(2)
            + 4.0 * max_bias.powi(2);
        Some(ConvergenceTelemetry {
            updates: logs.len(),
            initial_reward: first.mean_reward,
            max_score_norm,
            max_baseline_bias: max_bias,
            min_grad_norm_sq: min_sq,
            bound,
            below_bound: min_sq <= bound,
        })
    }
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<UpdateLog>,
    pub telemetry: Option<ConvergenceTelemetry>,
}

/// Initial parameters: zero weights except the keep-action bias.
pub fn initial_checkpoint(cfg: &TrainerConfig, fmap: &FeatureMap, seed: u64) -> Checkpoint {
    let mut params = PolicyParams::zeros(fmap.buckets());
    params.theta[crate::policy::Action::Keep.kind_index()] = cfg.init_keep_bias;
    Checkpoint {
        params,
        baseline: ValueBaseline::new(cfg.baseline, seed),
    }
}

/// Run `total_updates` rounds of collect, refit, advantages, update.
/// `on_update` sees every log record and the update's stats as they are
/// produced.
pub fn train<E: Encoder + ?Sized>(
    cfg: &TrainerConfig,
    reward_cfg: &RewardConfig,
    set: &TrainingSet,
    encoder: &E,
    fmap: &FeatureMap,
    seed: u64,
    mut on_update: impl FnMut(&UpdateLog, &UpdateStats),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    reward_cfg.validate()?;
    let mut ckpt = initial_checkpoint(cfg, fmap, seed);
    let mut log = Vec::with_capacity(cfg.total_updates);
    let mut max_score_norm: f64 = 0.0;
    for t in 0..cfg.total_updates {
        let start = Instant::now();
        let mut batch = collect_rollouts(&ckpt.params, set, cfg, reward_cfg, encoder, seed, t)?;
        refit_baseline(&mut ckpt.baseline, &batch);
        let bias = compute_advantages(&mut batch, &ckpt.baseline, cfg);
        let stats = ppo_update(&mut ckpt.params, &batch, set, cfg, t)?;
        max_score_norm = max_score_norm.max(stats.max_score_norm);
        let entry = UpdateLog {
            t,
            lr: lr_schedule(cfg, t),
            mean_reward: stats.mean_reward,
            grad_norm: stats.grad_norm,
            clip_fraction: stats.clip_fraction,
            kl: stats.kl,
            baseline_bias: bias,
            wall_ms: if cfg.record_wall_time {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        on_update(&entry, &stats);
        log.push(entry);
    }
    let telemetry = ConvergenceTelemetry::from_run(cfg, &log, max_score_norm);
    Ok(TrainOutcome {
        checkpoint: ckpt,
        log,
        telemetry,
    })
}
