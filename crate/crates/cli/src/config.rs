//! Run configuration: one JSON document wiring every module together.
//!
//! All sections are optional and default to the full-scale reference
//! scenario; unknown keys are rejected. The resolved (post-default) document
//! is echoed into every command's output directory so any artifact can be
//! reproduced from the echo alone. The `CFPF_SEED` environment variable
//! overrides `master_seed`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cfpf_core::channel::NetworkConfig;
use cfpf_core::rdn::{Activation, OutputActivation, RdnConfig, TrainConfig};
use cfpf_core::solver::SolverOptions;

/// Network architecture section (geometry comes from `network`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub growth: usize,
    pub dense_layers: usize,
    pub inner_activation: Activation,
    pub output_activation: OutputActivation,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            growth: 32,
            dense_layers: 4,
            inner_activation: Activation::Tanh,
            output_activation: OutputActivation::Sigmoid,
        }
    }
}

/// Deterministic order-preserving split sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train: 10_000,
            val: 1_000,
            test: 1_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Samples produced by `generate`.
    pub count: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { count: 12_000 }
    }
}

/// Default artifact locations; command-line flags take precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub solver: SolverOptions,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub split: SplitSection,
    pub dataset: DatasetSection,
    pub paths: PathsSection,
    pub master_seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate().context("network section")?;
        self.solver.validate().context("solver section")?;
        self.train.validate().context("train section")?;
        if self.model.growth == 0 || self.model.dense_layers == 0 {
            anyhow::bail!("model section: growth and dense_layers must be >= 1");
        }
        Ok(())
    }

    /// Architecture plus geometry, as the network code consumes it.
    pub fn rdn_config(&self) -> RdnConfig {
        RdnConfig {
            growth: self.model.growth,
            dense_layers: self.model.dense_layers,
            aps: self.network.aps,
            users: self.network.users,
            pilot_len: self.network.pilot_len,
            inner_activation: self.model.inner_activation,
            output_activation: self.model.output_activation,
        }
    }

    /// Pretty-printed resolved document.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the resolved document, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Loads a config file, applies defaults, applies the `CFPF_SEED` override,
/// and validates.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg: RunConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    if let Ok(seed) = std::env::var("CFPF_SEED") {
        cfg.master_seed = seed
            .parse()
            .context("CFPF_SEED must be an unsigned 64-bit integer")?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes the resolved config into an output directory.
pub fn echo_config(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let path = out_dir.join("resolved_config.json");
    fs::write(&path, cfg.to_json()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
