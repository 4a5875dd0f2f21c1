//! Sentence-level correction metrics.

use serde::Serialize;

use super::TrainError;
use crate::corruptor::PseudoPair;
use crate::policy::{Policy, PolicyParams};
use crate::textcore::Sentence;

/// A sentence is *flagged* when the output differs from the input and
/// *correct* when the output equals the reference.
///
/// - precision = |flagged and correct| / |flagged| (0 if nothing flagged)
/// - recall = |flagged and correct| / |x != y| (0 if no pair has an error)
/// - f1 = harmonic mean (0 if both are 0)
/// - exact_match = |correct| / total
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub exact_match: f64,
    pub total: usize,
}

pub fn score_outputs(pairs: &[PseudoPair], outputs: &[Sentence]) -> Result<Metrics, TrainError> {
    if pairs.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }
    assert_eq!(pairs.len(), outputs.len(), "one output per pair");
    let mut flagged = 0usize;
    let mut flagged_correct = 0usize;
    let mut errorful = 0usize;
    let mut correct = 0usize;
    for (p, out) in pairs.iter().zip(outputs) {
        let f = *out != p.x;
        let c = *out == p.y;
        flagged += usize::from(f);
        flagged_correct += usize::from(f && c);
        errorful += usize::from(p.x != p.y);
        correct += usize::from(c);
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(flagged_correct, flagged);
    let recall = ratio(flagged_correct, errorful);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        precision,
        recall,
        f1,
        exact_match: ratio(correct, pairs.len()),
        total: pairs.len(),
    })
}

/// Greedy-decode every input and score the outputs.
pub fn evaluate(policy: &Policy<'_>, params: &PolicyParams, pairs: &[PseudoPair]) -> Result<Metrics, TrainError> {
    if pairs.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }
    let outputs = pairs
        .iter()
        .map(|p| policy.decode(params, &p.x))
        .collect::<Result<Vec<_>, _>>()?;
    score_outputs(pairs, &outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(x: &str, y: &str) -> PseudoPair {
        PseudoPair {
            x: x.into(),
            y: y.into(),
            operator_id: 0,
            seed: 0,
        }
    }

    #[test]
    fn one_fixed_one_untouched() {
        let pairs = vec![pair("ax", "ab"), pair("cx", "cd")];
        let m = score_outputs(&pairs, &["ab".into(), "cx".into()]).unwrap();
        assert_eq!((m.precision, m.recall), (1.0, 0.5));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.exact_match, 0.5);
    }

    #[test]
    fn identity_and_oracle() {
        let pairs = vec![pair("ax", "ab"), pair("cx", "cd")];
        let xs: Vec<Sentence> = pairs.iter().map(|p| p.x.clone()).collect();
        let ys: Vec<Sentence> = pairs.iter().map(|p| p.y.clone()).collect();
        let m = score_outputs(&pairs, &xs).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.exact_match), (0.0, 0.0, 0.0, 0.0));
        let m = score_outputs(&pairs, &ys).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.exact_match), (1.0, 1.0, 1.0, 1.0));
        assert!(matches!(score_outputs(&[], &[]), Err(TrainError::EmptyTestSet)));
    }
}
