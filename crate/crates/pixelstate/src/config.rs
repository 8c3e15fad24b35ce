//! The declarative run configuration.
//!
//! One TOML file pins every parameter and seed of a run; serializing the
//! parsed struct reproduces an equivalent file, and unknown keys are
//! rejected rather than ignored so typos cannot silently fall back to
//! defaults.

use crate::dataset::ResetPolicy;
use crate::env::EnvParams;
use crate::error::{Error, Result};
use crate::eval::Bounds;
use crate::predictor::TrainConfig;
use crate::rl::RLConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Name of the run directory under `output_root`.
    pub id: String,
    pub output_root: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { id: "default".into(), output_root: PathBuf::from("runs") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_samples: u64,
    pub bins_per_dim: [usize; 4],
    pub v_cap: f64,
    pub omega_cap: f64,
    pub seed: u64,
    pub reset_policy: ResetPolicy,
    pub split_ratio: f64,
    pub split_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_samples: 200_000,
            bins_per_dim: [5, 5, 5, 5],
            v_cap: 3.0,
            omega_cap: 3.0,
            seed: 0,
            reset_policy: ResetPolicy::BinBalanced,
            split_ratio: 0.8,
            split_seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config { detail: "dataset.n_samples must be ≥ 1".into() });
        }
        if self.bins_per_dim.iter().any(|&b| b == 0) {
            return Err(Error::Config { detail: "dataset.bins_per_dim entries must be ≥ 1".into() });
        }
        if !(self.v_cap > 0.0 && self.omega_cap > 0.0) {
            return Err(Error::Config { detail: "dataset velocity caps must be positive".into() });
        }
        if !(self.split_ratio > 0.0 && self.split_ratio <= 1.0) {
            return Err(Error::Config { detail: "dataset.split_ratio must lie in (0, 1]".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_rollouts: u32,
    pub seed: u64,
    pub max_steps: u32,
    pub bounds: Bounds,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { n_rollouts: 10, seed: 0, max_steps: 500, bounds: Bounds::default() }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rollouts == 0 || self.max_steps == 0 {
            return Err(Error::Config { detail: "eval.n_rollouts and eval.max_steps must be ≥ 1".into() });
        }
        self.bounds.validate()
    }
}

/// The whole pipeline configuration. Defaults reproduce the reference
/// experiment scales.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub env: EnvParams,
    pub dataset: DatasetConfig,
    pub predictor: TrainConfig,
    pub rl: RLConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config { detail: format!("{}: {e}", path.display()) })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.run.output_root.join(&self.run.id)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.dataset.validate()?;
        self.predictor.validate()?;
        self.rl.validate()?;
        self.eval.validate()?;
        if self.run.id.is_empty() {
            return Err(Error::Config { detail: "run.id must be nonempty".into() });
        }
        Ok(())
    }
}
