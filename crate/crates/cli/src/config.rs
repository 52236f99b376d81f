//! Run configuration, read from a single TOML file. Every field has a default,
//! so an empty file is a valid configuration (the synthetic circle on S²).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wgplvm::kernels::{KernelFamily, KernelSpec};
use wgplvm::model::{EncodeConfig, ModelKind, OptimizerConfig};

use crate::synth::{SynthKind, SynthParams};
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub kernel: KernelConfig,
    pub optimizer: OptimizerConfig,
    pub split: SplitConfig,
    pub encode: EncodeConfig,
    pub uq: UqConfig,
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            kernel: KernelConfig::default(),
            optimizer: OptimizerConfig::default(),
            split: SplitConfig::default(),
            encode: EncodeConfig::default(),
            uq: UqConfig::default(),
            run: RunSection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// Generated in memory by one of the synthetic generators.
    Synthetic,
    /// `x,y,z[,label]` rows on S².
    Directions,
    /// `x1,y1,…,xN,yN[,species]` planar landmark rows.
    Landmarks,
    /// Upper-triangle rows of SPD matrices.
    Spd,
    /// Price table turned into rolling covariance matrices.
    Prices,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    pub path: Option<PathBuf>,
    pub generator: SynthKind,
    pub seed: u64,
    /// Number of generated points.
    pub size: usize,
    /// Standard deviation of the tangent-space noise of generated points.
    pub noise: f64,
    /// Geodesic radius of the generated circle.
    pub radius: f64,
    /// Landmarks per generated shape.
    pub landmarks: usize,
    /// Matrix size for generated and loaded SPD data.
    pub spd_dim: usize,
    /// Half-length of the generated SPD geodesic segment.
    pub span: f64,
    /// Row of the landmark file every shape is aligned to.
    pub reference_index: usize,
    pub window: usize,
    pub stride: usize,
    /// Use log-returns instead of raw prices for rolling covariances.
    pub log_returns: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DatasetSource::Synthetic,
            path: None,
            generator: SynthKind::SphereCircle,
            seed: 0,
            size: SynthParams::default().size,
            noise: SynthParams::default().noise,
            radius: SynthParams::default().radius,
            landmarks: SynthParams::default().landmarks,
            spd_dim: SynthParams::default().spd_dim,
            span: SynthParams::default().span,
            reference_index: 0,
            window: 20,
            stride: 7,
            log_returns: false,
        }
    }
}

impl DatasetConfig {
    pub fn synth_params(&self) -> SynthParams {
        SynthParams {
            size: self.size,
            noise: self.noise,
            radius: self.radius,
            landmarks: self.landmarks,
            spd_dim: self.spd_dim,
            span: self.span,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub latent_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Wgplvm,
            latent_dim: 1,
        }
    }
}

/// Initial hyperparameters on the natural scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub signal_var: f64,
    pub lengthscale_sq: f64,
    pub noise_var: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: KernelFamily::Rbf,
            signal_var: 1.0,
            lengthscale_sq: 1.0,
            noise_var: 1e-2,
        }
    }
}

impl KernelConfig {
    pub fn spec(&self) -> KernelSpec {
        KernelSpec::new(self.family, self.signal_var, self.lengthscale_sq, self.noise_var)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train_fraction: 0.8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UqConfig {
    /// Predictive samples drawn per test point.
    pub num_samples: usize,
    pub bins: usize,
}

impl Default for UqConfig {
    fn default() -> Self {
        Self {
            num_samples: 50,
            bins: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub repetitions: usize,
    /// Root of every random stream of a run (splits, encoder starts, sampling).
    pub seed: u64,
    pub output: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            repetitions: 10,
            seed: 0,
            output: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.model.latent_dim == 0 {
            return bad("model.latent_dim must be at least 1");
        }
        if self.kernel.family == KernelFamily::Periodic && self.model.latent_dim != 1 {
            return bad("the periodic kernel needs model.latent_dim = 1");
        }
        if !(self.kernel.signal_var > 0.0 && self.kernel.lengthscale_sq > 0.0 && self.kernel.noise_var > 0.0) {
            return bad("kernel variances must be positive");
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return bad("split.train_fraction must lie in (0, 1)");
        }
        if self.run.repetitions == 0 {
            return bad("run.repetitions must be at least 1");
        }
        if self.uq.num_samples == 0 || self.uq.bins == 0 {
            return bad("uq.num_samples and uq.bins must be positive");
        }
        if self.dataset.source != DatasetSource::Synthetic && self.dataset.path.is_none() {
            return bad("dataset.path is required for file datasets");
        }
        self.dataset.synth_params().check().map_err(CliError::Config)
    }
}
