//! Log-linear edit-lattice correction policy.
//!
//! At every visited input position the policy picks one action from the
//! position's candidate list with probability
//! `softmax_c(theta . phi(x, i, c))`, independently across positions. Since
//! the whole model is a product of small categoricals, log-probabilities,
//! score-function gradients, and normalization are exact.

mod features;
mod lattice;

pub use features::{FeatureMap, DEFAULT_BUCKETS, NUM_KINDS};
pub use lattice::{Action, CandidateLattice};

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::corruptor::ConfusionTables;
use crate::textcore::Sentence;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("empty input sentence")]
    EmptyInput,
    #[error("inconsistent choices: {0}")]
    InconsistentChoices(String),
    #[error("parameter dimension {found} does not match feature map {expected}")]
    DimMismatch { expected: usize, found: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub theta: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(buckets: usize) -> Self {
        PolicyParams {
            theta: vec![0.0; buckets],
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }
}

/// Sparse vector with sorted, unique indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVec(Vec<(usize, f64)>);

impl SparseVec {
    pub fn from_map(map: BTreeMap<usize, f64>) -> Self {
        SparseVec(map.into_iter().collect())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.0
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0
            .binary_search_by_key(&index, |e| e.0)
            .map_or(0.0, |i| self.0[i].1)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    /// `dense += scale * self`
    pub fn add_scaled_to(&self, dense: &mut [f64], scale: f64) {
        for &(i, v) in &self.0 {
            dense[i] += scale * v;
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut d = vec![0.0; dim];
        self.add_scaled_to(&mut d, 1.0);
        d
    }
}

/// A lattice with its feature buckets precomputed.
#[derive(Clone, Debug)]
pub struct FeaturizedLattice {
    lattice: CandidateLattice,
    features: Vec<Vec<[usize; 2]>>,
    buckets: usize,
}

/// A sampled choice sequence with its log-probability under the untruncated,
/// temperature-1 policy.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampled {
    pub choices: Vec<usize>,
    pub logprob: f64,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

impl FeaturizedLattice {
    pub fn new(lattice: CandidateLattice, fmap: &FeatureMap) -> Self {
        let chars = lattice.input().chars();
        let features = lattice
            .slots()
            .iter()
            .enumerate()
            .map(|(i, slot)| {
                let left = if i == 0 { None } else { Some(chars[i - 1]) };
                slot.iter().map(|a| fmap.active(a, chars[i], left)).collect()
            })
            .collect();
        FeaturizedLattice {
            lattice,
            features,
            buckets: fmap.buckets(),
        }
    }

    pub fn build(x: &Sentence, tables: &ConfusionTables, fmap: &FeatureMap) -> Result<Self, PolicyError> {
        Ok(Self::new(CandidateLattice::build(x, tables)?, fmap))
    }

    pub fn lattice(&self) -> &CandidateLattice {
        &self.lattice
    }

    /// Active buckets of action `c` at position `pos`.
    pub fn features(&self, pos: usize, c: usize) -> [usize; 2] {
        self.features[pos][c]
    }

    fn check(&self, params: &PolicyParams) -> Result<(), PolicyError> {
        if params.dim() != self.buckets {
            return Err(PolicyError::DimMismatch {
                expected: self.buckets,
                found: params.dim(),
            });
        }
        Ok(())
    }

    pub fn logits(&self, params: &PolicyParams, pos: usize) -> Vec<f64> {
        self.features[pos]
            .iter()
            .map(|[a, b]| params.theta[*a] + params.theta[*b])
            .collect()
    }

    pub fn logprob(&self, params: &PolicyParams, choices: &[usize]) -> Result<f64, PolicyError> {
        self.check(params)?;
        let mut total = 0.0;
        for (pos, c) in self.lattice.walk(choices)? {
            if self.features[pos].len() > 1 {
                total += log_softmax(&self.logits(params, pos))[c];
            }
        }
        Ok(total)
    }

    /// `sum_slots phi(chosen) - E_softmax[phi]`.
    pub fn grad_logprob(&self, params: &PolicyParams, choices: &[usize]) -> Result<SparseVec, PolicyError> {
        Ok(self.logprob_and_grad(params, choices)?.1)
    }

    pub fn logprob_and_grad(
        &self,
        params: &PolicyParams,
        choices: &[usize],
    ) -> Result<(f64, SparseVec), PolicyError> {
        self.check(params)?;
        let mut lp = 0.0;
        let mut grad: BTreeMap<usize, f64> = BTreeMap::new();
        for (pos, c) in self.lattice.walk(choices)? {
            let feats = &self.features[pos];
            if feats.len() == 1 {
                continue;
            }
            let ls = log_softmax(&self.logits(params, pos));
            lp += ls[c];
            for b in feats[c] {
                *grad.entry(b).or_default() += 1.0;
            }
            for (f, l) in feats.iter().zip(&ls) {
                let p = l.exp();
                for &b in f {
                    *grad.entry(b).or_default() -= p;
                }
            }
        }
        Ok((lp, SparseVec::from_map(grad)))
    }

    /// Nucleus sampling per position: temperature-scaled softmax, keep the
    /// smallest most-probable prefix with mass >= `top_p`, renormalize,
    /// sample.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        params: &PolicyParams,
        rng: &mut R,
        top_p: f64,
        temperature: f64,
    ) -> Result<Sampled, PolicyError> {
        self.check(params)?;
        debug_assert!(top_p > 0.0 && top_p <= 1.0 && temperature > 0.0);
        let mut choices = Vec::new();
        let mut pos = 0;
        let n = self.features.len();
        while pos < n {
            let c = if self.features[pos].len() == 1 {
                0
            } else {
                let scaled: Vec<f64> = self.logits(params, pos).iter().map(|l| l / temperature).collect();
                let probs = softmax(&scaled);
                let mut order: Vec<usize> = (0..probs.len()).collect();
                // stable: equal probabilities keep lattice order
                order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
                let mut kept = 0;
                let mut mass = 0.0;
                for &i in &order {
                    mass += probs[i];
                    kept += 1;
                    if mass >= top_p {
                        break;
                    }
                }
                let u = rng.gen::<f64>() * mass;
                let mut acc = 0.0;
                let mut pick = order[kept - 1];
                for &i in &order[..kept] {
                    acc += probs[i];
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            };
            choices.push(c);
            pos += self.lattice.slots()[pos][c].span();
        }
        let logprob = self.logprob(params, &choices)?;
        Ok(Sampled { choices, logprob })
    }

    /// Highest-scoring action per position, ties to lattice order.
    pub fn decode_choices(&self, params: &PolicyParams) -> Vec<usize> {
        let mut choices = Vec::new();
        let mut pos = 0;
        while pos < self.features.len() {
            let logits = self.logits(params, pos);
            let mut best = 0;
            for (i, l) in logits.iter().enumerate() {
                if *l > logits[best] {
                    best = i;
                }
            }
            choices.push(best);
            pos += self.lattice.slots()[pos][best].span();
        }
        choices
    }

    pub fn decode(&self, params: &PolicyParams) -> Sentence {
        self.lattice
            .realize(&self.decode_choices(params))
            .expect("greedy walk is consistent")
    }

    pub fn realize(&self, choices: &[usize]) -> Result<Sentence, PolicyError> {
        self.lattice.realize(choices)
    }
}

/// Convenience front end that builds lattices on demand.
#[derive(Clone, Copy, Debug)]
pub struct Policy<'a> {
    pub tables: &'a ConfusionTables,
    pub features: FeatureMap,
}

impl<'a> Policy<'a> {
    pub fn new(tables: &'a ConfusionTables, features: FeatureMap) -> Self {
        Policy { tables, features }
    }

    pub fn lattice(&self, x: &Sentence) -> Result<FeaturizedLattice, PolicyError> {
        FeaturizedLattice::build(x, self.tables, &self.features)
    }

    pub fn logprob(&self, params: &PolicyParams, x: &Sentence, choices: &[usize]) -> Result<f64, PolicyError> {
        self.lattice(x)?.logprob(params, choices)
    }

    pub fn grad_logprob(
        &self,
        params: &PolicyParams,
        x: &Sentence,
        choices: &[usize],
    ) -> Result<SparseVec, PolicyError> {
        self.lattice(x)?.grad_logprob(params, choices)
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        params: &PolicyParams,
        x: &Sentence,
        rng: &mut R,
        top_p: f64,
        temperature: f64,
    ) -> Result<Sampled, PolicyError> {
        self.lattice(x)?.sample(params, rng, top_p, temperature)
    }

    pub fn decode(&self, params: &PolicyParams, x: &Sentence) -> Result<Sentence, PolicyError> {
        Ok(self.lattice(x)?.decode(params))
    }
}
