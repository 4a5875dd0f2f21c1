//! Value baseline `V(x)` over hashed input features.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::policy::FeatureMap;
use crate::rng;
use crate::textcore::Sentence;

/// Hashed (character, left context) buckets plus one bias input.
pub const VALUE_BUCKETS: usize = 32;
pub const VALUE_INPUTS: usize = VALUE_BUCKETS + 1;
pub const HIDDEN_WIDTH: usize = 32;

const RIDGE: f64 = 1e-3;
const MLP_STEPS: usize = 50;
const MLP_LR: f64 = 0.2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    #[default]
    Linear,
    Mlp,
}

/// `psi(x)`: length-normalized bucket counts, then a constant 1.
pub fn input_features(x: &Sentence) -> Vec<f64> {
    let mut psi = vec![0.0; VALUE_INPUTS];
    let chars = x.chars();
    if !chars.is_empty() {
        let w = 1.0 / chars.len() as f64;
        for (i, &c) in chars.iter().enumerate() {
            let left = if i == 0 { None } else { Some(chars[i - 1]) };
            psi[FeatureMap::input_bucket(c, left, VALUE_BUCKETS)] += w;
        }
    }
    psi[VALUE_BUCKETS] = 1.0;
    psi
}

#[derive(Clone, Debug, PartialEq)]
pub enum ValueBaseline {
    Linear {
        weights: Vec<f64>,
    },
    /// One tanh hidden layer, linear output.
    Mlp {
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    },
}

impl ValueBaseline {
    pub fn new(kind: BaselineKind, seed: u64) -> Self {
        match kind {
            BaselineKind::Linear => ValueBaseline::Linear {
                weights: vec![0.0; VALUE_INPUTS],
            },
            BaselineKind::Mlp => {
                let mut r = rng::stream(rng::mix_seed(seed ^ rng::domain::BASELINE, 0, 0));
                let scale = 1.0 / (VALUE_INPUTS as f64).sqrt();
                ValueBaseline::Mlp {
                    w1: (0..HIDDEN_WIDTH * VALUE_INPUTS)
                        .map(|_| r.gen_range(-scale..scale))
                        .collect(),
                    b1: vec![0.0; HIDDEN_WIDTH],
                    w2: vec![0.0; HIDDEN_WIDTH],
                    b2: 0.0,
                }
            }
        }
    }

    pub fn kind(&self) -> BaselineKind {
        match self {
            ValueBaseline::Linear { .. } => BaselineKind::Linear,
            ValueBaseline::Mlp { .. } => BaselineKind::Mlp,
        }
    }

    /// All parameters in a fixed order (see the checkpoint format).
    pub fn flat(&self) -> Vec<f64> {
        match self {
            ValueBaseline::Linear { weights } => weights.clone(),
            ValueBaseline::Mlp { w1, b1, w2, b2 } => {
                let mut v = w1.clone();
                v.extend(b1);
                v.extend(w2);
                v.push(*b2);
                v
            }
        }
    }

    pub fn from_flat(kind: BaselineKind, values: &[f64]) -> Option<Self> {
        match kind {
            BaselineKind::Linear => (values.len() == VALUE_INPUTS).then(|| ValueBaseline::Linear {
                weights: values.to_vec(),
            }),
            BaselineKind::Mlp => {
                let n1 = HIDDEN_WIDTH * VALUE_INPUTS;
                (values.len() == n1 + 2 * HIDDEN_WIDTH + 1).then(|| ValueBaseline::Mlp {
                    w1: values[..n1].to_vec(),
                    b1: values[n1..n1 + HIDDEN_WIDTH].to_vec(),
                    w2: values[n1 + HIDDEN_WIDTH..n1 + 2 * HIDDEN_WIDTH].to_vec(),
                    b2: values[n1 + 2 * HIDDEN_WIDTH],
                })
            }
        }
    }

    fn raw(&self, psi: &[f64]) -> f64 {
        match self {
            ValueBaseline::Linear { weights } => dot(weights, psi),
            ValueBaseline::Mlp { w1, b1, w2, b2 } => {
                let h = hidden(w1, b1, psi);
                dot(w2, &h) + b2
            }
        }
    }

    /// Predicted reward, clamped to [0, 1].
    pub fn predict_features(&self, psi: &[f64]) -> f64 {
        self.raw(psi).clamp(0.0, 1.0)
    }

    pub fn predict(&self, x: &Sentence) -> f64 {
        self.predict_features(&input_features(x))
    }

    /// Refit on (psi, target) pairs: ridge least squares for the linear
    /// baseline, a fixed number of full-batch gradient steps on squared
    /// error (warm-started) for the hidden-layer one.
    pub fn refit(&mut self, inputs: &[Vec<f64>], targets: &[f64]) {
        if inputs.is_empty() {
            return;
        }
        match self {
            ValueBaseline::Linear { weights } => {
                let n = inputs.len();
                let x = DMatrix::from_fn(n, VALUE_INPUTS, |i, j| inputs[i][j]);
                let y = DVector::from_column_slice(targets);
                let gram = x.transpose() * &x + DMatrix::identity(VALUE_INPUTS, VALUE_INPUTS) * RIDGE;
                let rhs = x.transpose() * y;
                if let Some(chol) = gram.cholesky() {
                    let w = chol.solve(&rhs);
                    *weights = w.iter().copied().collect();
                }
            }
            ValueBaseline::Mlp { w1, b1, w2, b2 } => {
                let n = inputs.len() as f64;
                for _ in 0..MLP_STEPS {
                    let mut gw1 = vec![0.0; w1.len()];
                    let mut gb1 = vec![0.0; b1.len()];
                    let mut gw2 = vec![0.0; w2.len()];
                    let mut gb2 = 0.0;
                    for (psi, &t) in inputs.iter().zip(targets) {
                        let h = hidden(w1, b1, psi);
                        let err = (dot(w2, &h) + *b2 - t) / n;
                        gb2 += err;
                        for j in 0..HIDDEN_WIDTH {
                            gw2[j] += err * h[j];
                            let dh = err * w2[j] * (1.0 - h[j] * h[j]);
                            gb1[j] += dh;
                            for (k, p) in psi.iter().enumerate() {
                                gw1[j * VALUE_INPUTS + k] += dh * p;
                            }
                        }
                    }
                    let step = |w: &mut [f64], g: &[f64]| w.iter_mut().zip(g).for_each(|(a, b)| *a -= MLP_LR * b);
                    step(w1, &gw1);
                    step(b1, &gb1);
                    step(w2, &gw2);
                    *b2 -= MLP_LR * gb2;
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn hidden(w1: &[f64], b1: &[f64], psi: &[f64]) -> Vec<f64> {
    (0..HIDDEN_WIDTH)
        .map(|j| (dot(&w1[j * VALUE_INPUTS..(j + 1) * VALUE_INPUTS], psi) + b1[j]).tanh())
        .collect()
}
