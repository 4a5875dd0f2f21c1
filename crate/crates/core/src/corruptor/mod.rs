//! Stochastic corruption of clean sentences into (corrupted, clean) training
//! pairs.
//!
//! Five operators are available: homophone swap, near-glyph replacement,
//! radical edit, character split, and symbol noise. Each generated pair draws
//! one operator from an [`OperatorPrior`] and applies it to the clean
//! sentence with a random stream derived from the master seed, the record
//! index, and the copy index.

mod tables;

pub use tables::{ConfusionTables, TableError};

use std::io::{BufRead, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedder::{cosine_unchecked, Encoder};
use crate::rng::{self, mix_seed};
use crate::textcore::{edit_distance, normalize, Sentence};

pub const NUM_OPERATORS: usize = 5;

/// Per-occurrence firing probability of the table-driven operators.
pub const FIRE_PROB: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum CorruptError {
    #[error("operator index {0} out of range")]
    BadOperator(usize),
    #[error("cannot corrupt an empty sentence")]
    EmptySentence,
    #[error("empty sample")]
    EmptySample,
    #[error("invalid prior: {0}")]
    BadPrior(String),
    #[error("copies per sentence must be at least 1")]
    NoCopies,
    #[error("line {line}: {msg}")]
    BadRecord { line: usize, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    Homophone,
    NearGlyph,
    Radical,
    Split,
    Symbol,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; NUM_OPERATORS] = [
        OperatorKind::Homophone,
        OperatorKind::NearGlyph,
        OperatorKind::Radical,
        OperatorKind::Split,
        OperatorKind::Symbol,
    ];

    pub fn from_index(k: usize) -> Result<Self, CorruptError> {
        Self::ALL.get(k).copied().ok_or(CorruptError::BadOperator(k))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Homophone => "homophone",
            OperatorKind::NearGlyph => "near_glyph",
            OperatorKind::Radical => "radical",
            OperatorKind::Split => "split",
            OperatorKind::Symbol => "symbol",
        }
    }
}

/// Anything that maps a clean sentence to a corrupted one.
pub trait Perturbation {
    fn perturb<R: Rng + ?Sized>(&self, y: &Sentence, rng: &mut R) -> Sentence;
}

/// A built-in operator bound to a set of tables.
#[derive(Clone, Copy, Debug)]
pub struct TableOperator<'a> {
    pub kind: OperatorKind,
    pub tables: &'a ConfusionTables,
}

impl Perturbation for TableOperator<'_> {
    fn perturb<R: Rng + ?Sized>(&self, y: &Sentence, rng: &mut R) -> Sentence {
        let t = self.tables;
        let mut chars = y.chars().to_vec();
        match self.kind {
            OperatorKind::Homophone => {
                replace_first_firing(&mut chars, rng, |c| t.homophone().get(&c).map(Vec::as_slice))
            }
            OperatorKind::NearGlyph => {
                replace_first_firing(&mut chars, rng, |c| t.near_glyph().get(&c).map(Vec::as_slice))
            }
            OperatorKind::Radical => {
                replace_first_firing(&mut chars, rng, |c| t.radical().get(&c).map(std::slice::from_ref))
            }
            OperatorKind::Split => {
                let eligible: Vec<usize> = (0..chars.len())
                    .filter(|&i| t.split().contains_key(&chars[i]))
                    .collect();
                if !eligible.is_empty() {
                    let i = eligible[rng.gen_range(0..eligible.len())];
                    let parts = t.split()[&chars[i]].clone();
                    chars.splice(i..=i, parts);
                }
            }
            OperatorKind::Symbol => {
                let pos = rng.gen_range(0..=chars.len());
                let sym = t.symbols()[rng.gen_range(0..t.symbols().len())];
                chars.insert(pos, sym);
            }
        }
        normalize(&Sentence::from_chars(chars))
    }
}

/// Scan left to right; every table hit fires with probability [`FIRE_PROB`];
/// the first one that fires is replaced and the scan stops.
fn replace_first_firing<'t, R, F>(chars: &mut [char], rng: &mut R, lookup: F)
where
    R: Rng + ?Sized,
    F: Fn(char) -> Option<&'t [char]>,
{
    for c in chars.iter_mut() {
        if let Some(targets) = lookup(*c) {
            if rng.gen::<f64>() < FIRE_PROB {
                *c = targets[rng.gen_range(0..targets.len())];
                return;
            }
        }
    }
}

pub fn apply_operator<R: Rng + ?Sized>(
    tables: &ConfusionTables,
    k: usize,
    y: &Sentence,
    rng: &mut R,
) -> Result<Sentence, CorruptError> {
    let kind = OperatorKind::from_index(k)?;
    if y.is_empty() {
        return Err(CorruptError::EmptySentence);
    }
    Ok(TableOperator { kind, tables }.perturb(y, rng))
}

/// Categorical prior over the five operators.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorPrior {
    weights: [f64; NUM_OPERATORS],
    sampler: WeightedIndex<f64>,
}

impl OperatorPrior {
    pub fn new(weights: [f64; NUM_OPERATORS]) -> Result<Self, CorruptError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CorruptError::BadPrior("weights must be finite and non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorruptError::BadPrior(format!("weights sum to {sum}, not 1")));
        }
        let sampler = WeightedIndex::new(weights).map_err(|e| CorruptError::BadPrior(e.to_string()))?;
        Ok(OperatorPrior { weights, sampler })
    }

    pub fn uniform() -> Self {
        Self::new([0.2; NUM_OPERATORS]).expect("uniform prior is valid")
    }

    pub fn weights(&self) -> &[f64; NUM_OPERATORS] {
        &self.weights
    }
}

impl Default for OperatorPrior {
    fn default() -> Self {
        Self::uniform()
    }
}

pub fn sample_operator<R: Rng + ?Sized>(prior: &OperatorPrior, rng: &mut R) -> usize {
    prior.sampler.sample(rng)
}

/// Mean of `ED(op(y), y) / |y|` over the sample.
pub fn estimate_corruption_rate<P: Perturbation, R: Rng + ?Sized>(
    op: &P,
    sample: &[Sentence],
    rng: &mut R,
) -> Result<f64, CorruptError> {
    if sample.is_empty() {
        return Err(CorruptError::EmptySample);
    }
    let mut total = 0.0;
    for y in sample {
        if y.is_empty() {
            return Err(CorruptError::EmptySentence);
        }
        let x = op.perturb(y, rng);
        total += edit_distance(&x, y) as f64 / y.len() as f64;
    }
    Ok(total / sample.len() as f64)
}

/// One generated training pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoPair {
    pub x: Sentence,
    pub y: Sentence,
    #[serde(rename = "op")]
    pub operator_id: usize,
    pub seed: u64,
}

/// Acceptance filters applied to each generated pair.
pub struct PairFilter<'a> {
    pub encoder: &'a dyn Encoder,
    pub max_edit_distance: usize,
    pub min_cosine: f64,
}

impl<'a> PairFilter<'a> {
    pub const MAX_EDIT_DISTANCE: usize = 8;
    pub const MIN_COSINE: f64 = 0.65;

    pub fn standard(encoder: &'a dyn Encoder) -> Self {
        PairFilter {
            encoder,
            max_edit_distance: Self::MAX_EDIT_DISTANCE,
            min_cosine: Self::MIN_COSINE,
        }
    }

    /// `None` if the pair passes, otherwise the index of the first failing
    /// filter: 0 empty output, 1 edit distance, 2 embedding cosine.
    pub fn reject_reason(&self, x: &Sentence, y: &Sentence) -> Option<usize> {
        if x.is_empty() {
            return Some(0);
        }
        if edit_distance(x, y) > self.max_edit_distance {
            return Some(1);
        }
        let c = cosine_unchecked(&self.encoder.encode(x), &self.encoder.encode(y));
        if c < self.min_cosine {
            return Some(2);
        }
        None
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OperatorStats {
    pub name: &'static str,
    pub attempts: usize,
    pub accepted: usize,
    /// Empirical corruption rate over all attempts with this operator.
    pub corruption_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generated: usize,
    pub accepted: usize,
    /// Accepted pairs where no rule fired (x == y).
    pub identity: usize,
    /// Rejections per filter: empty output, edit distance, cosine.
    pub rejected_by_filter: [usize; 3],
    pub operators: Vec<OperatorStats>,
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub pairs: Vec<PseudoPair>,
    pub stats: GenerationStats,
}

struct Attempt {
    pair: PseudoPair,
    rate: f64,
    rejected: Option<usize>,
}

/// Seed of the stream used for copy `copy` of record `record`.
pub fn pair_seed(master_seed: u64, record: usize, copy: usize) -> u64 {
    mix_seed(master_seed ^ rng::domain::CORRUPT, record as u64, copy as u64)
}

/// Run `copies` corruption attempts per corpus sentence. Records are
/// processed in parallel but emitted in corpus order, copies in order.
pub fn generate_pairs(
    corpus: &[Sentence],
    tables: &ConfusionTables,
    prior: &OperatorPrior,
    copies: usize,
    master_seed: u64,
    filter: Option<&PairFilter<'_>>,
) -> Result<Generated, CorruptError> {
    if copies == 0 {
        return Err(CorruptError::NoCopies);
    }
    if corpus.is_empty() {
        return Err(CorruptError::EmptySample);
    }
    if corpus.iter().any(Sentence::is_empty) {
        return Err(CorruptError::EmptySentence);
    }
    let attempts: Vec<Vec<Attempt>> = corpus
        .par_iter()
        .enumerate()
        .map(|(record, y)| {
            (0..copies)
                .map(|copy| {
                    let seed = pair_seed(master_seed, record, copy);
                    let mut rng = rng::stream(seed);
                    let k = sample_operator(prior, &mut rng);
                    let kind = OperatorKind::ALL[k];
                    let x = TableOperator { kind, tables }.perturb(y, &mut rng);
                    let rate = edit_distance(&x, y) as f64 / y.len() as f64;
                    let rejected = filter.and_then(|f| f.reject_reason(&x, y));
                    Attempt {
                        pair: PseudoPair {
                            x,
                            y: y.clone(),
                            operator_id: k,
                            seed,
                        },
                        rate,
                        rejected,
                    }
                })
                .collect()
        })
        .collect();

    let mut stats = GenerationStats {
        generated: 0,
        accepted: 0,
        identity: 0,
        rejected_by_filter: [0; 3],
        operators: OperatorKind::ALL
            .iter()
            .map(|k| OperatorStats {
                name: k.name(),
                ..Default::default()
            })
            .collect(),
    };
    let mut pairs = Vec::new();
    for a in attempts.into_iter().flatten() {
        stats.generated += 1;
        let op = &mut stats.operators[a.pair.operator_id];
        op.attempts += 1;
        op.corruption_rate += a.rate;
        match a.rejected {
            Some(reason) => stats.rejected_by_filter[reason] += 1,
            None => {
                op.accepted += 1;
                stats.accepted += 1;
                if a.pair.x == a.pair.y {
                    stats.identity += 1;
                }
                pairs.push(a.pair);
            }
        }
    }
    for op in &mut stats.operators {
        if op.attempts > 0 {
            op.corruption_rate /= op.attempts as f64;
        }
    }
    Ok(Generated { pairs, stats })
}

pub fn write_pairs<W: Write>(mut w: W, pairs: &[PseudoPair]) -> std::io::Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_pairs<R: BufRead>(r: R) -> Result<Vec<PseudoPair>, ReadPairsError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: PseudoPair = serde_json::from_str(&line).map_err(|e| CorruptError::BadRecord {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(pair);
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum ReadPairsError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Record(#[from] CorruptError),
}

/// Read a clean corpus: one sentence per line, whitespace-normalized, blank
/// lines skipped.
pub fn read_corpus<R: BufRead>(r: R) -> std::io::Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let s = Sentence::new(&line?).normalized();
        if !s.is_empty() {
            out.push(s);
        }
    }
    Ok(out)
}
