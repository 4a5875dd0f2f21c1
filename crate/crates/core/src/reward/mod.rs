//! Cluster-consensus reward.
//!
//! A candidate correction earns
//!
//! ```text
//! R = alpha * r_pair + (1 - alpha) * r_cons
//! r_pair = max(0, (cos(e(cand), e(ref)) - tau) / (1 - tau))
//! r_cons = max(0, (cos(e(cand), c) - beta) / (1 - beta))
//! ```
//!
//! where `c` is the normalized centroid of the largest DBSCAN cluster among
//! the sibling candidates sampled for the same input.

mod dbscan;

pub use dbscan::{cosine_distance, dbscan, largest_cluster, Cluster};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedder::{cosine_unchecked, Embedding, Encoder};
use crate::textcore::Sentence;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("no candidates")]
    EmptyCandidates,
    #[error("candidate index {index} out of range for {len} candidates")]
    BadIndex { index: usize, len: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("invalid reward config: {0}")]
    BadConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub alpha: f64,
    pub tau: f64,
    pub beta: f64,
    /// DBSCAN radius in cosine-distance units.
    pub dbscan_radius: f64,
    pub min_pts: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            alpha: 0.5,
            tau: 0.70,
            beta: 0.75,
            dbscan_radius: 0.10,
            min_pts: 2,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        let bad = |m: &str| Err(RewardError::BadConfig(m.into()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.dbscan_radius > 0.0 && self.dbscan_radius.is_finite()) {
            return bad("dbscan_radius must be positive");
        }
        if self.min_pts == 0 {
            return bad("min_pts must be positive");
        }
        Ok(())
    }
}

/// Reward components for one candidate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_pair: f64,
    pub r_cons: f64,
    pub reward: f64,
}

/// Thresholded, rescaled similarity, clamped to [0, 1].
pub fn rescale(cos: f64, threshold: f64) -> f64 {
    ((cos - threshold) / (1.0 - threshold)).clamp(0.0, 1.0)
}

pub fn pairwise_from_cosine(cos: f64, cfg: &RewardConfig) -> f64 {
    rescale(cos, cfg.tau)
}

pub fn consensus_from_cosine(cos: f64, cfg: &RewardConfig) -> f64 {
    rescale(cos, cfg.beta)
}

pub fn mix(r_pair: f64, r_cons: f64, alpha: f64) -> f64 {
    alpha * r_pair + (1.0 - alpha) * r_cons
}

fn check_dims(vectors: &[Embedding], dim: usize) -> Result<(), RewardError> {
    match vectors.iter().find(|v| v.dim() != dim) {
        Some(v) => Err(RewardError::DimMismatch {
            expected: dim,
            found: v.dim(),
        }),
        None => Ok(()),
    }
}

/// Consensus term for every candidate, from precomputed embeddings.
pub fn consensus_scores(candidates: &[Embedding], cfg: &RewardConfig) -> Result<Vec<f64>, RewardError> {
    let clusters = dbscan(candidates, cfg.dbscan_radius, cfg.min_pts)?;
    let top = largest_cluster(&clusters, candidates).ok_or(RewardError::EmptyCandidates)?;
    Ok(candidates
        .iter()
        .map(|e| consensus_from_cosine(cosine_unchecked(e, &top.centroid), cfg))
        .collect())
}

/// Full reward breakdown for every candidate, from precomputed embeddings.
pub fn score_embeddings(
    candidates: &[Embedding],
    reference: &Embedding,
    cfg: &RewardConfig,
) -> Result<Vec<RewardBreakdown>, RewardError> {
    if candidates.is_empty() {
        return Err(RewardError::EmptyCandidates);
    }
    check_dims(candidates, reference.dim())?;
    let cons = consensus_scores(candidates, cfg)?;
    Ok(candidates
        .iter()
        .zip(cons)
        .map(|(e, r_cons)| {
            let r_pair = pairwise_from_cosine(cosine_unchecked(e, reference), cfg);
            RewardBreakdown {
                r_pair,
                r_cons,
                reward: mix(r_pair, r_cons, cfg.alpha),
            }
        })
        .collect())
}

/// Embed and score a set of sibling candidates against a clean reference.
pub fn score_candidates<E: Encoder + ?Sized>(
    encoder: &E,
    candidates: &[Sentence],
    reference: &Sentence,
    cfg: &RewardConfig,
) -> Result<Vec<RewardBreakdown>, RewardError> {
    let embs: Vec<Embedding> = candidates.iter().map(|c| encoder.encode(c)).collect();
    score_embeddings(&embs, &encoder.encode(reference), cfg)
}

pub fn pairwise_reward<E: Encoder + ?Sized>(
    encoder: &E,
    candidate: &Sentence,
    reference: &Sentence,
    cfg: &RewardConfig,
) -> f64 {
    pairwise_from_cosine(
        cosine_unchecked(&encoder.encode(candidate), &encoder.encode(reference)),
        cfg,
    )
}

pub fn consensus_reward<E: Encoder + ?Sized>(
    encoder: &E,
    k: usize,
    candidates: &[Sentence],
    cfg: &RewardConfig,
) -> Result<f64, RewardError> {
    if k >= candidates.len() {
        return Err(RewardError::BadIndex {
            index: k,
            len: candidates.len(),
        });
    }
    let embs: Vec<Embedding> = candidates.iter().map(|c| encoder.encode(c)).collect();
    Ok(consensus_scores(&embs, cfg)?[k])
}

pub fn final_reward<E: Encoder + ?Sized>(
    encoder: &E,
    k: usize,
    candidates: &[Sentence],
    reference: &Sentence,
    cfg: &RewardConfig,
) -> Result<f64, RewardError> {
    let r_cons = consensus_reward(encoder, k, candidates, cfg)?;
    let r_pair = pairwise_reward(encoder, &candidates[k], reference, cfg);
    Ok(mix(r_pair, r_cons, cfg.alpha))
}
