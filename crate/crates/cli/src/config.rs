//! Run configuration: a TOML file whose values command-line flags override.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hspp_core::evaluation::ImportanceMetric;
use hspp_core::membership::TrainConfig;
use hspp_core::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Fraction of samples held out when a command splits its own data.
    pub test_fraction: f64,
    /// Shuffles per feature for permutation importance; 0 disables it.
    pub importance_repeats: usize,
    pub importance_metric: ImportanceMetric,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.3,
            importance_repeats: 10,
            importance_metric: ImportanceMetric::BinaryAuc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; when set it replaces `train.seed`.
    pub seed: Option<u64>,
    pub manifest: Option<PathBuf>,
    pub assets: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let src = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&src).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    /// Propagates the master seed and checks ranges and referenced paths.
    pub fn finish(mut self) -> Result<Self> {
        self.train.seed = self.seed();
        self.seed = Some(self.train.seed);
        self.train.validate()?;
        if !(0.0..1.0).contains(&self.eval.test_fraction) {
            bail!("eval.test_fraction must be in [0, 1), got {}", self.eval.test_fraction);
        }
        for p in [&self.manifest, &self.assets].into_iter().flatten() {
            if !p.exists() {
                bail!("{} does not exist", p.display());
            }
        }
        Ok(self)
    }

    pub fn manifest(&self) -> Result<&Path> {
        self.manifest.as_deref().context("no manifest given (--manifest or `manifest` in the config)")
    }

    pub fn out(&self) -> Result<&Path> {
        self.out.as_deref().context("no output path given (--out or `out` in the config)")
    }
}
