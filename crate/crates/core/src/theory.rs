//! Executable checks of the reward and optimization guarantees on synthetic
//! constructions.
//!
//! Every check is deterministic given its seed and reduces to a
//! [`CheckRecord`] `{check, seed, measured, bound, pass}`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::corruptor::ConfusionTables;
use crate::embedder::{cosine, Embedding};
use crate::policy::{FeatureMap, FeaturizedLattice, PolicyParams};
use crate::reward::{score_embeddings, RewardConfig, RewardError};
use crate::rng::{self, mix_seed, StreamRng};

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub check: String,
    pub seed: u64,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

fn check_stream(seed: u64, check: u64, trial: u64) -> StreamRng {
    rng::stream(mix_seed(seed ^ rng::domain::THEORY, check, trial))
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Embedding {
    loop {
        let v = Embedding::new((0..dim).map(|_| StandardNormal.sample(rng)).collect());
        if v.norm() > 1e-6 {
            return v.normalized();
        }
    }
}

/// A unit vector at cosine exactly-ish `c` to the unit vector `reference`.
fn at_cosine<R: Rng + ?Sized>(rng: &mut R, reference: &Embedding, c: f64) -> Embedding {
    let dim = reference.dim();
    let ortho = loop {
        let u = unit_vector(rng, dim);
        let proj = u.dot(reference);
        let v = Embedding::new(
            u.values()
                .iter()
                .zip(reference.values())
                .map(|(a, r)| a - proj * r)
                .collect(),
        );
        if v.norm() > 1e-6 {
            break v.normalized();
        }
    };
    let s = (1.0 - c * c).max(0.0).sqrt();
    Embedding::new(
        reference
            .values()
            .iter()
            .zip(ortho.values())
            .map(|(r, o)| c * r + s * o)
            .collect(),
    )
}

/// Margin world: valid candidates within `gamma` of the reference in
/// cosine distance, invalid ones at least `delta` away.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginWorld {
    pub gamma: f64,
    pub delta: f64,
    pub reference: Embedding,
    pub candidates: Vec<Embedding>,
    /// `Z`: true for valid candidates.
    pub labels: Vec<bool>,
}

impl MarginWorld {
    pub fn validate(&self) -> Result<(), TheoryError> {
        let bad = |m: String| Err(TheoryError::Precondition(m));
        if !(0.0..1.0).contains(&self.gamma) || !(self.delta > self.gamma && self.delta <= 2.0) {
            return bad(format!("need 0 <= gamma < delta, got gamma={} delta={}", self.gamma, self.delta));
        }
        if self.candidates.len() != self.labels.len() {
            return bad("one label per candidate".into());
        }
        for (i, (c, &z)) in self.candidates.iter().zip(&self.labels).enumerate() {
            let cos = cosine(c, &self.reference).map_err(|e| TheoryError::Precondition(e.to_string()))?;
            let ok = if z {
                cos >= 1.0 - self.gamma - 1e-12
            } else {
                cos <= 1.0 - self.delta + 1e-12
            };
            if !ok {
                return bad(format!("candidate {i} (label {z}) at cosine {cos} leaves its band"));
            }
        }
        Ok(())
    }

    /// Degenerate construction: `n_valid` exact copies of a random reference
    /// and `n_invalid` vectors at cosine uniform in `[-0.5, max_invalid_cos]`,
    /// shuffled together.
    pub fn degenerate<R: Rng + ?Sized>(
        rng: &mut R,
        dim: usize,
        n_valid: usize,
        n_invalid: usize,
        max_invalid_cos: f64,
    ) -> Self {
        let reference = unit_vector(rng, dim);
        let mut items: Vec<(Embedding, bool)> = (0..n_valid).map(|_| (reference.clone(), true)).collect();
        for _ in 0..n_invalid {
            let c = rng.gen_range(-0.5..=max_invalid_cos);
            items.push((at_cosine(rng, &reference, c), false));
        }
        // Fisher-Yates with the same stream keeps the construction seeded
        for i in (1..items.len()).rev() {
            items.swap(i, rng.gen_range(0..=i));
        }
        let (candidates, labels) = items.into_iter().unzip();
        MarginWorld {
            gamma: 0.0,
            delta: 1.0 - max_invalid_cos,
            reference,
            candidates,
            labels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub trial: usize,
    pub candidate: usize,
    pub label: bool,
    pub reward: f64,
    pub cosine: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma1Report {
    pub trials: usize,
    pub max_error: f64,
    pub violations: Vec<Violation>,
}

/// Largest invalid cosine admissible for `cfg`: invalid candidates must
/// clear both thresholds and sit outside the DBSCAN radius of the valid
/// cluster.
pub fn lemma1_invalid_ceiling(cfg: &RewardConfig) -> f64 {
    cfg.tau.min(cfg.beta).min(1.0 - cfg.dbscan_radius)
}

/// Check `R = Z` on a single world.
pub fn lemma1_world(world: &MarginWorld, cfg: &RewardConfig) -> Result<Vec<(f64, f64)>, TheoryError> {
    world.validate()?;
    cfg.validate()?;
    let valid = world.labels.iter().filter(|z| **z).count();
    if valid < cfg.min_pts {
        return Err(TheoryError::Precondition(format!(
            "purity needs at least min_pts = {} valid candidates, found {valid}",
            cfg.min_pts
        )));
    }
    let invalid = world.labels.len() - valid;
    if invalid >= valid {
        return Err(TheoryError::Precondition("valid candidates must be the majority".into()));
    }
    if 1.0 - world.delta > lemma1_invalid_ceiling(cfg) + 1e-12 {
        return Err(TheoryError::Precondition(format!(
            "invalid cosine ceiling {} exceeds min(tau, beta, 1 - radius) = {}",
            1.0 - world.delta,
            lemma1_invalid_ceiling(cfg)
        )));
    }
    let rewards = score_embeddings(&world.candidates, &world.reference, cfg)?;
    Ok(rewards
        .iter()
        .zip(&world.labels)
        .map(|(r, &z)| (r.reward, if z { 1.0 } else { 0.0 }))
        .collect())
}

/// `trials` random degenerate worlds; any candidate with `|R - Z| > 1e-9`
/// is a violation.
pub fn lemma1_check(cfg: &RewardConfig, trials: usize, seed: u64) -> Result<Lemma1Report, TheoryError> {
    let ceiling = lemma1_invalid_ceiling(cfg);
    let mut report = Lemma1Report {
        trials,
        max_error: 0.0,
        violations: Vec::new(),
    };
    for trial in 0..trials {
        let mut r = check_stream(seed, 1, trial as u64);
        let dim = r.gen_range(4..=32);
        let n_valid = r.gen_range(cfg.min_pts.max(1)..=cfg.min_pts.max(1) + 6);
        let n_invalid = r.gen_range(0..n_valid);
        let world = MarginWorld::degenerate(&mut r, dim, n_valid, n_invalid, ceiling);
        for (k, (reward, z)) in lemma1_world(&world, cfg)?.into_iter().enumerate() {
            let err = (reward - z).abs();
            report.max_error = report.max_error.max(err);
            if err > 1e-9 {
                report.violations.push(Violation {
                    trial,
                    candidate: k,
                    label: z == 1.0,
                    reward,
                    cosine: cosine(&world.candidates[k], &world.reference).unwrap_or(f64::NAN),
                });
            }
        }
    }
    Ok(report)
}

/// Mean, variance and the standard error of the (biased) sample variance.
fn variance_with_se(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (mean, m2, ((m4 - m2 * m2).max(0.0) / n).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceReport {
    pub p_valid: f64,
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
    /// Three standard errors of the variance estimate.
    pub slack: f64,
    pub pass: bool,
    /// Trace of the covariance of `grad_logprob * R` on a small lattice
    /// policy whose reward is binary.
    pub score_variance: f64,
    /// `G^2 / 4` with `G` the largest observed score norm.
    pub score_bound: f64,
}

/// Binary-reward world: each draw scores candidate 0 of a fresh degenerate
/// margin world in which candidate 0 is valid with probability `p_valid`.
pub fn variance_check(cfg: &RewardConfig, p_valid: f64, samples: usize, seed: u64) -> Result<VarianceReport, TheoryError> {
    if !(0.0..=1.0).contains(&p_valid) || samples < 2 {
        return Err(TheoryError::Precondition("need p in [0, 1] and at least 2 samples".into()));
    }
    let ceiling = lemma1_invalid_ceiling(cfg);
    let tag = (p_valid * 1e6).round() as u64;
    let mut rewards = Vec::with_capacity(samples);
    for i in 0..samples {
        let mut r = check_stream(seed, 2, mix_seed(tag, i as u64, 0));
        let z = r.gen_bool(p_valid);
        let dim = r.gen_range(4..=16);
        let reference = unit_vector(&mut r, dim);
        let first = if z {
            reference.clone()
        } else {
            let c = r.gen_range(-0.5..=ceiling);
            at_cosine(&mut r, &reference, c)
        };
        let mut candidates = vec![first];
        let siblings = cfg.min_pts.max(1) + 1;
        candidates.extend(std::iter::repeat_n(reference.clone(), siblings));
        let world = MarginWorld {
            gamma: 0.0,
            delta: 1.0 - ceiling,
            reference,
            labels: std::iter::once(z).chain(std::iter::repeat_n(true, siblings)).collect(),
            candidates,
        };
        rewards.push(lemma1_world(&world, cfg)?[0].0);
    }
    let (mean, variance, se) = variance_with_se(&rewards);
    let (score_variance, g) = score_variance(p_valid, samples, seed);
    Ok(VarianceReport {
        p_valid,
        samples,
        mean,
        variance,
        slack: 3.0 * se,
        pass: variance <= 0.25 + 3.0 * se,
        score_variance,
        score_bound: g * g / 4.0,
    })
}

/// Trace covariance of `g R` for a three-slot lattice policy where `R = 1`
/// when the first slot keeps its input (sampled) and the keep probability is
/// set to `p`.
fn score_variance(p: f64, samples: usize, seed: u64) -> (f64, f64) {
    let mut tables = ConfusionTables::new(vec!['#']).expect("one symbol");
    tables.add_homophone('b', &['a']).expect("fresh source");
    tables.add_homophone('c', &['a']).expect("fresh source");
    let fmap = FeatureMap::new(16);
    let lattice = FeaturizedLattice::build(&"a#a".into(), &tables, &fmap).expect("non-empty input");
    let mut params = PolicyParams::zeros(fmap.buckets());
    // choose the keep bias so that slot 0 keeps with probability p; the
    // other replace weights stay at zero
    let [keep, _] = lattice.features(0, 0);
    params.theta[keep] = if p <= 0.0 {
        -30.0
    } else if p >= 1.0 {
        30.0
    } else {
        (2.0 * p / (1.0 - p)).ln()
    };
    let mut r = check_stream(seed, 3, (p * 1e6).round() as u64);
    let mut sum = vec![0.0; fmap.buckets()];
    let mut sum_sq = 0.0;
    let mut g_max: f64 = 0.0;
    for _ in 0..samples {
        let s = lattice.sample(&params, &mut r, 1.0, 1.0).expect("params match lattice");
        let g = lattice.grad_logprob(&params, &s.choices).expect("sampled choices are consistent");
        g_max = g_max.max(g.norm());
        let reward = if s.choices[0] == 0 { 1.0 } else { 0.0 };
        g.add_scaled_to(&mut sum, reward);
        sum_sq += reward * g.norm().powi(2);
    }
    let n = samples as f64;
    let mean_sq: f64 = sum.iter().map(|x| (x / n).powi(2)).sum();
    (sum_sq / n - mean_sq, g_max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClipBiasReport {
    pub trials: usize,
    /// Largest `bias / (2 eps A_max)` over all trials.
    pub max_ratio: f64,
    pub violations: usize,
}

/// `|E[(rho - 1) A] - E[(clip(rho) - 1) A]|` by exact enumeration over a
/// finite distribution of `(probability, rho, A)` support points.
pub fn clip_bias(support: &[(f64, f64, f64)], epsilon: f64) -> f64 {
    let raw: f64 = support.iter().map(|(p, rho, a)| p * (rho - 1.0) * a).sum();
    let clipped: f64 = support
        .iter()
        .map(|(p, rho, a)| p * (rho.clamp(1.0 - epsilon, 1.0 + epsilon) - 1.0) * a)
        .sum();
    (raw - clipped).abs()
}

/// Random finite distributions with ratios in `[1 - 3 eps, 1 + 3 eps]` and
/// `|A| <= a_max`; each must satisfy `bias <= 2 eps a_max`.
pub fn clip_bias_check(a_max: f64, trials: usize, seed: u64) -> Result<ClipBiasReport, TheoryError> {
    if !(a_max > 0.0 && a_max.is_finite()) {
        return Err(TheoryError::Precondition("a_max must be positive".into()));
    }
    let mut report = ClipBiasReport {
        trials,
        max_ratio: 0.0,
        violations: 0,
    };
    for trial in 0..trials {
        let mut r = check_stream(seed, 4, trial as u64);
        let epsilon = r.gen_range(0.01..=0.2);
        let k = r.gen_range(1..=8);
        let weights: Vec<f64> = (0..k).map(|_| r.gen_range(0.0..1.0) + 1e-3).collect();
        let total: f64 = weights.iter().sum();
        let support: Vec<(f64, f64, f64)> = weights
            .iter()
            .map(|w| {
                (
                    w / total,
                    r.gen_range(1.0 - 3.0 * epsilon..=1.0 + 3.0 * epsilon),
                    r.gen_range(-a_max..=a_max),
                )
            })
            .collect();
        let bound = 2.0 * epsilon * a_max;
        let bias = clip_bias(&support, epsilon);
        report.max_ratio = report.max_ratio.max(bias / bound);
        if bias > bound + 1e-12 {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// `sqrt(ln(2 / delta) / (2 n))`.
pub fn hoeffding_bound(n: f64, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * n)).sqrt()
}

/// Fixed reward distribution for the generalization check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum RewardSource {
    Bernoulli(f64),
    Constant(f64),
}

impl RewardSource {
    pub fn mean(&self) -> f64 {
        match *self {
            RewardSource::Bernoulli(p) => p,
            RewardSource::Constant(c) => c,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RewardSource::Bernoulli(p) => f64::from(u8::from(rng.gen_bool(p))),
            RewardSource::Constant(c) => c,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HoeffdingReport {
    pub n: usize,
    pub delta: f64,
    pub bound: f64,
    pub resamples: usize,
    pub violation_rate: f64,
    /// `delta + 3 sqrt(delta (1 - delta) / resamples)`.
    pub allowed_rate: f64,
    pub pass: bool,
}

pub fn hoeffding_check(
    source: RewardSource,
    n: usize,
    delta: f64,
    resamples: usize,
    seed: u64,
) -> Result<HoeffdingReport, TheoryError> {
    if n == 0 || resamples == 0 || !(delta > 0.0 && delta < 1.0) {
        return Err(TheoryError::Precondition("need n, resamples > 0 and delta in (0, 1)".into()));
    }
    if !(0.0..=1.0).contains(&source.mean()) {
        return Err(TheoryError::Precondition("rewards must lie in [0, 1]".into()));
    }
    let bound = hoeffding_bound(n as f64, delta);
    let mu = source.mean();
    let mut violations = 0usize;
    for i in 0..resamples {
        let mut r = check_stream(seed, 5, i as u64);
        let mean = (0..n).map(|_| source.draw(&mut r)).sum::<f64>() / n as f64;
        if (mean - mu).abs() > bound {
            violations += 1;
        }
    }
    let violation_rate = violations as f64 / resamples as f64;
    let allowed_rate = delta + 3.0 * (delta * (1.0 - delta) / resamples as f64).sqrt();
    Ok(HoeffdingReport {
        n,
        delta,
        bound,
        resamples,
        violation_rate,
        allowed_rate,
        pass: violation_rate <= allowed_rate,
    })
}

/// Dataset size behind the "at most 0.0003" generalization-gap claim.
pub const LARGE_N: f64 = 4.4e7;
pub const LARGE_N_GAP: f64 = 3e-4;

/// Worlds used by the variance check.
pub const VARIANCE_WORLDS: [f64; 5] = [0.0, 0.1, 0.5, 0.9, 1.0];

/// The full suite with default sizes.
pub fn run_suite(cfg: &RewardConfig, seed: u64) -> Result<Vec<CheckRecord>, TheoryError> {
    let mut out = Vec::new();
    let rec = |check: &str, measured: f64, bound: f64, pass: bool| CheckRecord {
        check: check.into(),
        seed,
        measured,
        bound,
        pass,
    };

    let l1 = lemma1_check(cfg, 1000, seed)?;
    out.push(rec("lemma1", l1.violations.len() as f64, 0.0, l1.violations.is_empty()));

    for p in VARIANCE_WORLDS {
        let v = variance_check(cfg, p, 20_000, seed)?;
        out.push(rec(&format!("variance_p{p}"), v.variance, 0.25 + v.slack, v.pass));
    }

    let cb = clip_bias_check(2.0, 200, seed)?;
    out.push(rec("clip_bias", cb.max_ratio, 1.0, cb.violations == 0));

    let h = hoeffding_check(RewardSource::Bernoulli(0.5), 1000, 0.05, 2000, seed)?;
    out.push(rec("hoeffding_resample", h.violation_rate, h.allowed_rate, h.pass));
    let big = hoeffding_bound(LARGE_N, 0.05);
    out.push(rec("hoeffding_large_n", big, LARGE_N_GAP, big <= LARGE_N_GAP));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(dim: usize, i: usize) -> Embedding {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Embedding::new(v)
    }

    #[test]
    fn four_copies_and_one_orthogonal() {
        let e0 = basis(4, 0);
        let world = MarginWorld {
            gamma: 0.0,
            delta: 1.0,
            reference: e0.clone(),
            candidates: vec![e0.clone(), e0.clone(), e0.clone(), e0, basis(4, 1)],
            labels: vec![true, true, true, true, false],
        };
        let out = lemma1_world(&world, &RewardConfig::default()).unwrap();
        let rewards: Vec<f64> = out.iter().map(|x| x.0).collect();
        assert_eq!(rewards, vec![1.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn all_invalid_fails_purity_and_pair_term_clamps() {
        let world = MarginWorld {
            gamma: 0.0,
            delta: 1.0,
            reference: basis(3, 0),
            candidates: vec![basis(3, 1), basis(3, 2)],
            labels: vec![false, false],
        };
        assert!(matches!(
            lemma1_world(&world, &RewardConfig::default()),
            Err(TheoryError::Precondition(_))
        ));
        let r = score_embeddings(&world.candidates, &world.reference, &RewardConfig::default()).unwrap();
        assert!(r.iter().all(|b| b.r_pair == 0.0));
    }

    #[test]
    fn bad_configuration_is_rejected() {
        let mut r = rng::stream(0);
        let world = MarginWorld::degenerate(&mut r, 8, 3, 1, 0.8);
        assert!(matches!(
            lemma1_world(&world, &RewardConfig::default()),
            Err(TheoryError::Precondition(_))
        ));
    }

    #[test]
    fn degenerate_worlds_respect_bands() {
        let mut r = rng::stream(5);
        for _ in 0..50 {
            MarginWorld::degenerate(&mut r, 6, 3, 2, 0.7).validate().unwrap();
        }
    }

    #[test]
    fn lemma1_holds() {
        let rep = lemma1_check(&RewardConfig::default(), 200, 42).unwrap();
        assert!(rep.violations.is_empty(), "{:?}", rep.violations.first());
    }

    #[test]
    fn constant_reward_has_zero_variance() {
        let v = variance_check(&RewardConfig::default(), 1.0, 500, 1).unwrap();
        assert!((v.mean - 1.0).abs() < 1e-12 && v.variance < 1e-24, "{v:?}");
    }

    #[test]
    fn bernoulli_variance_matches_closed_form() {
        for (p, n) in [(0.5, 20_000), (0.9, 20_000)] {
            let v = variance_check(&RewardConfig::default(), p, n, 3).unwrap();
            let exact: f64 = p * (1.0 - p);
            assert!((v.variance - exact).abs() <= v.slack, "p={p}: {} vs {exact}", v.variance);
            assert!(v.pass);
        }
    }

    #[test]
    fn clip_bias_examples() {
        assert_eq!(clip_bias(&[(0.5, 0.7, 1.0), (0.5, 1.3, 1.0)], 0.2), 0.0);
        assert!((clip_bias(&[(1.0, 1.5, 1.0)], 0.2) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn clip_bias_bound_fails_far_from_one() {
        // outside |rho - 1| <= 3 eps the lemma does not hold
        let bias = clip_bias(&[(1.0, 2.0, 1.0)], 0.2);
        assert!((bias - 0.8).abs() < 1e-15);
        assert!(bias > 2.0 * 0.2 * 1.0);
    }

    #[test]
    fn hoeffding_values() {
        assert!((hoeffding_bound(1000.0, 0.05) - (40f64.ln() / 2000.0).sqrt()).abs() < 1e-15);
        assert!((hoeffding_bound(1000.0, 0.05) - 0.0429).abs() < 1e-4);
        let big = hoeffding_bound(LARGE_N, 0.05);
        assert!((big - 2.05e-4).abs() < 5e-7 && big <= LARGE_N_GAP);
    }

    #[test]
    fn constant_rewards_never_deviate() {
        let h = hoeffding_check(RewardSource::Constant(1.0), 100, 0.05, 200, 0).unwrap();
        assert_eq!(h.violation_rate, 0.0);
    }

    #[test]
    fn suite_is_deterministic() {
        let cfg = RewardConfig::default();
        let a = clip_bias_check(2.0, 50, 9).unwrap();
        let b = clip_bias_check(2.0, 50, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(lemma1_check(&cfg, 20, 4).unwrap(), lemma1_check(&cfg, 20, 4).unwrap());
    }
}
