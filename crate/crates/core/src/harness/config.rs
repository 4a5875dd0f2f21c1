//! Flat run configuration: defaults, then a TOML file, then `key=value`
//! overrides from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::corruptor::{OperatorPrior, PairFilter, NUM_OPERATORS};
use crate::embedder::DEFAULT_DIM;
use crate::policy::DEFAULT_BUCKETS;
use crate::reward::RewardConfig;
use crate::trainer::{BaselineKind, TrainerConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Clean corpus; the bundled toy corpus when unset.
    pub corpus: Option<PathBuf>,
    /// Confusion tables; the bundled toy tables when unset.
    pub tables: Option<PathBuf>,
    /// Pseudo-pair dataset (JSON lines) for `train` and `eval`.
    pub pairs: Option<PathBuf>,
    /// Binary embedding cache consulted before the built-in encoder.
    pub embedding_cache: Option<PathBuf>,

    pub copies: usize,
    pub filter: bool,
    pub max_edit_distance: usize,
    pub min_cosine: f64,
    /// Weights of homophone, near-glyph, radical, split, symbol.
    pub operator_prior: [f64; NUM_OPERATORS],

    pub encoder_dim: usize,
    pub feature_buckets: usize,

    pub alpha: f64,
    pub tau: f64,
    pub beta: f64,
    pub dbscan_radius: f64,
    pub min_pts: usize,

    pub eta0: f64,
    pub clip_epsilon: f64,
    pub batch_size: usize,
    pub candidates_per_input: usize,
    pub ppo_epochs: usize,
    pub total_updates: usize,
    pub top_p: f64,
    pub temperature: f64,
    pub advantage_standardize: bool,
    pub baseline: BaselineKind,
    pub init_keep_bias: f64,
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let r = RewardConfig::default();
        let t = TrainerConfig::default();
        RunConfig {
            seed: 42,
            out: PathBuf::from("out"),
            corpus: None,
            tables: None,
            pairs: None,
            embedding_cache: None,
            copies: 4,
            filter: true,
            max_edit_distance: PairFilter::MAX_EDIT_DISTANCE,
            min_cosine: PairFilter::MIN_COSINE,
            operator_prior: *OperatorPrior::uniform().weights(),
            encoder_dim: DEFAULT_DIM,
            feature_buckets: DEFAULT_BUCKETS,
            alpha: r.alpha,
            tau: r.tau,
            beta: r.beta,
            dbscan_radius: r.dbscan_radius,
            min_pts: r.min_pts,
            eta0: t.eta0,
            clip_epsilon: t.clip_epsilon,
            batch_size: t.batch_size,
            candidates_per_input: t.candidates_per_input,
            ppo_epochs: t.ppo_epochs,
            total_updates: t.total_updates,
            top_p: t.top_p,
            temperature: t.temperature,
            advantage_standardize: t.advantage_standardize,
            baseline: t.baseline,
            init_keep_bias: t.init_keep_bias,
            record_wall_time: t.record_wall_time,
        }
    }
}

impl RunConfig {
    /// Defaults, overlaid with `file` (if any), overlaid with `overrides`.
    /// Each override is `key=value` with a TOML value; bare words that do
    /// not parse as TOML are taken as strings.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self, HarnessError> {
        let mut table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("override {o:?} is not key=value")))?;
            let key = key.trim();
            let value = format!("v = {}", raw.trim())
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
            table.insert(key.to_string(), value);
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.reward().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.trainer().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        OperatorPrior::new(self.operator_prior).map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.copies == 0 {
            return bad("copies must be at least 1".into());
        }
        if self.encoder_dim == 0 {
            return bad("encoder_dim must be positive".into());
        }
        if self.feature_buckets <= crate::policy::NUM_KINDS {
            return bad(format!("feature_buckets must exceed {}", crate::policy::NUM_KINDS));
        }
        if !(-1.0..=1.0).contains(&self.min_cosine) {
            return bad("min_cosine must lie in [-1, 1]".into());
        }
        Ok(())
    }

    pub fn reward(&self) -> RewardConfig {
        RewardConfig {
            alpha: self.alpha,
            tau: self.tau,
            beta: self.beta,
            dbscan_radius: self.dbscan_radius,
            min_pts: self.min_pts,
        }
    }

    pub fn trainer(&self) -> TrainerConfig {
        TrainerConfig {
            eta0: self.eta0,
            clip_epsilon: self.clip_epsilon,
            batch_size: self.batch_size,
            candidates_per_input: self.candidates_per_input,
            ppo_epochs: self.ppo_epochs,
            total_updates: self.total_updates,
            top_p: self.top_p,
            temperature: self.temperature,
            advantage_standardize: self.advantage_standardize,
            baseline: self.baseline,
            init_keep_bias: self.init_keep_bias,
            record_wall_time: self.record_wall_time,
            ..TrainerConfig::default()
        }
    }

    pub fn prior(&self) -> OperatorPrior {
        OperatorPrior::new(self.operator_prior).expect("validated on resolve")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
