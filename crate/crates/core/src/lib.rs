//! Label-free self-play reinforcement learning for character-level text
//! correction.
//!
//! The pipeline has three stages:
//!
//! 1. [`corruptor`] turns clean sentences into (corrupted, clean) training
//!    pairs with a small library of stochastic perturbation operators.
//! 2. [`reward`] scores sampled corrections with a cluster-consensus reward
//!    computed over sentence embeddings from [`embedder`].
//! 3. [`trainer`] optimizes a log-linear edit-lattice [`policy`] with clipped
//!    proximal policy updates.
//!
//! [`theory`] contains executable checks of the analytical guarantees the
//! method relies on, and [`harness`] wires everything into the CLI.

pub mod corruptor;
pub mod embedder;
pub mod harness;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod textcore;
pub mod theory;
pub mod trainer;

pub use textcore::{edit_distance, normalize, Sentence};
