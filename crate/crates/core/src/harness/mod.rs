//! Command-line pipelines: corruption, embedding cache, training,
//! evaluation, reward scoring and theory checks.

pub mod cli;
pub mod config;
pub mod toy;

pub use config::RunConfig;

use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corruptor::{self, ConfusionTables, PseudoPair};
use crate::embedder::{CachedEncoder, EmbeddingCache, Encoder, NgramEncoder};
use crate::rng::splitmix64;
use crate::textcore::Sentence;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_THEORY: i32 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Data(String),
    #[error("{0} theory check(s) failed")]
    TheoryFailed(usize),
}

impl HarnessError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn data(e: impl std::fmt::Display) -> Self {
        HarnessError::Data(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) | HarnessError::Config(_) => EXIT_USAGE,
            HarnessError::Io { .. } | HarnessError::Data(_) => EXIT_IO,
            HarnessError::TheoryFailed(_) => EXIT_THEORY,
        }
    }
}

/// Record `i` is held out when its hash is divisible by ten.
pub fn is_holdout(index: usize) -> bool {
    splitmix64(index as u64).is_multiple_of(10)
}

/// Deterministic 90/10 split by record index: `(train, test)`.
pub fn split_holdout(pairs: &[PseudoPair]) -> (Vec<PseudoPair>, Vec<PseudoPair>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        if is_holdout(i) {
            test.push(p.clone());
        } else {
            train.push(p.clone());
        }
    }
    (train, test)
}

fn open(path: &Path) -> Result<BufReader<File>, HarnessError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| HarnessError::io(path, e))
}

pub fn load_tables(cfg: &RunConfig) -> Result<ConfusionTables, HarnessError> {
    match &cfg.tables {
        Some(p) => ConfusionTables::load(p).map_err(|e| HarnessError::Data(format!("{}: {e}", p.display()))),
        None => Ok(toy::tables()),
    }
}

pub fn load_sentences(path: Option<&Path>) -> Result<Vec<Sentence>, HarnessError> {
    match path {
        Some(p) => corruptor::read_corpus(open(p)?).map_err(|e| HarnessError::io(p, e)),
        None => Ok(toy::corpus()),
    }
}

pub fn load_pairs(path: &Path) -> Result<Vec<PseudoPair>, HarnessError> {
    corruptor::read_pairs(open(path)?).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

/// The n-gram encoder, fronted by the configured embedding cache if any.
pub fn build_encoder(cfg: &RunConfig) -> Result<Box<dyn Encoder>, HarnessError> {
    let base = NgramEncoder::new(cfg.encoder_dim);
    match &cfg.embedding_cache {
        Some(p) => {
            let cache = EmbeddingCache::read(p, Some(cfg.encoder_dim))
                .map_err(|e| HarnessError::Data(format!("{}: {e}", p.display())))?;
            Ok(Box::new(CachedEncoder::new(cache, base).map_err(HarnessError::data)?))
        }
        None => Ok(Box::new(base)),
    }
}
