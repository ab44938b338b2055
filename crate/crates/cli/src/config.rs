//! Experiment configuration files.

use std::path::{Path, PathBuf};

use gridweave::accounting::CostMode;
use gridweave::agents::{Algo, ReturnEstimator, TrainConfig};
use gridweave::env::EnvConfig;
use gridweave::oracle::DEFAULT_SOC_LEVELS;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Overrides applied on top of the published hyperparameters of the chosen
/// algorithm.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_actor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_critic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_coef: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub returns: Option<ReturnEstimator>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSettings {
    #[serde(default = "default_soc_levels")]
    pub soc_levels: usize,
}

fn default_soc_levels() -> usize {
    DEFAULT_SOC_LEVELS
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            soc_levels: DEFAULT_SOC_LEVELS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub env: EnvConfig,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub oracle: OracleSettings,
    /// Output directory used when `--out` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Command-line settings that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub no_noise: bool,
    pub mode: Option<CostMode>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.env.validate()?;
        if self.oracle.soc_levels < 2 {
            anyhow::bail!("oracle.soc_levels must be >= 2");
        }
        Ok(())
    }

    pub fn apply(mut self, o: &CliOverrides) -> Self {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if o.no_noise {
            self.env.datagen.noise_enabled = false;
        }
        if let Some(mode) = o.mode {
            self.env.mode = mode;
        }
        self
    }

    /// Published hyperparameters for `algo` with this file's overrides.
    pub fn train_config(&self, algo: Algo) -> anyhow::Result<TrainConfig> {
        let o = &self.train;
        let base = TrainConfig::for_algo(algo);
        let tc = TrainConfig {
            n_actions: self.env.n_actions,
            lr_actor: o.lr_actor.unwrap_or(base.lr_actor),
            lr_critic: o.lr_critic.unwrap_or(base.lr_critic),
            hidden: o.hidden.unwrap_or(base.hidden),
            gamma: o.gamma.unwrap_or(base.gamma),
            batch_size: o.batch_size.unwrap_or(base.batch_size),
            rollout_steps: o.rollout_steps.unwrap_or(base.rollout_steps),
            training_steps: o.training_steps.unwrap_or(base.training_steps),
            entropy_coef: o.entropy_coef.unwrap_or(base.entropy_coef),
            returns: o.returns.unwrap_or(base.returns),
        };
        tc.validate()?;
        Ok(tc)
    }

    /// Canonical serialization: compact JSON in declaration order.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}
