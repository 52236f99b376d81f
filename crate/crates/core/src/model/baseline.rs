//! The three compared models: the wrapped GPLVM on the data manifold, the
//! Euclidean GPLVM on ambient coordinates, and the Euclidean GPLVM whose
//! predictions are projected back onto the data manifold.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EncodeConfig, Encoding, FitSummary, ModelState, OptimizerConfig, Posterior};
use crate::error::Result;
use crate::kernels::KernelSpec;
use crate::manifolds::{Manifold, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Wgplvm,
    Gplvm,
    GplvmProj,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Wgplvm => "wgplvm",
            ModelKind::Gplvm => "gplvm",
            ModelKind::GplvmProj => "gplvm_proj",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "wgplvm" => Ok(ModelKind::Wgplvm),
            "gplvm" => Ok(ModelKind::Gplvm),
            "gplvm_proj" => Ok(ModelKind::GplvmProj),
            other => Err(format!("unknown model '{other}' (expected wgplvm, gplvm or gplvm_proj)")),
        }
    }
}

/// Euclidean GPLVM on raw ambient coordinate vectors: the basepoint is the
/// arithmetic mean and the tangent data are the centered vectors.
pub fn baseline_gplvm(data: &[DVector<f64>], latent_dim: usize, kernel: KernelSpec) -> Result<ModelState> {
    let dim = data.first().map(|v| v.len()).unwrap_or(0);
    let points = data.iter().cloned().map(Point::new).collect();
    ModelState::new(Manifold::euclidean(dim), points, latent_dim, kernel)
}

/// A prediction in both representations: `raw` in the coordinates the model
/// lives in, `on_manifold` projected onto the data manifold when needed.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub raw: DVector<f64>,
    pub on_manifold: Point,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub kind: ModelKind,
    /// The manifold the data live on.
    pub target: Manifold,
    pub state: ModelState,
    /// Per-point metadata carried along for export.
    pub labels: BTreeMap<String, Vec<String>>,
}

impl Model {
    pub fn new(kind: ModelKind, target: Manifold, data: &[Point], latent_dim: usize, kernel: KernelSpec) -> Result<Self> {
        for p in data {
            target.validate(p)?;
        }
        let state = match kind {
            ModelKind::Wgplvm => ModelState::new(target.clone(), data.to_vec(), latent_dim, kernel)?,
            ModelKind::Gplvm | ModelKind::GplvmProj => {
                let raw: Vec<DVector<f64>> = data.iter().map(|p| p.coords.clone()).collect();
                baseline_gplvm(&raw, latent_dim, kernel)?
            }
        };
        Ok(Self {
            kind,
            target,
            state,
            labels: BTreeMap::new(),
        })
    }

    pub fn fit(&mut self, cfg: &OptimizerConfig) -> Result<FitSummary> {
        self.state.fit(cfg)
    }

    pub fn posterior(&self) -> Result<Posterior<'_>> {
        self.state.posterior()
    }

    /// Encodes a point of the data manifold; the baselines use its ambient
    /// coordinates directly.
    pub fn encode(&self, posterior: &Posterior<'_>, p: &Point, cfg: &EncodeConfig) -> Result<Encoding> {
        posterior.encode(p, cfg)
    }

    fn wrap(&self, raw: DVector<f64>) -> Result<Prediction> {
        let on_manifold = match self.kind {
            ModelKind::Wgplvm => Point::new(raw.clone()),
            ModelKind::Gplvm | ModelKind::GplvmProj => self.target.project(&raw)?,
        };
        Ok(Prediction { raw, on_manifold })
    }

    /// The point this model reports: the projected point for the projected
    /// baseline, the raw prediction otherwise.
    pub fn reported(&self, prediction: &Prediction) -> DVector<f64> {
        match self.kind {
            ModelKind::GplvmProj => prediction.on_manifold.coords.clone(),
            _ => prediction.raw.clone(),
        }
    }

    pub fn mean_prediction(&self, posterior: &Posterior<'_>, x: &[f64]) -> Result<Prediction> {
        let pred = posterior.predict(x)?;
        self.wrap(pred.mean_point()?.coords)
    }

    pub fn sample_predictive<R: Rng + ?Sized>(
        &self,
        posterior: &Posterior<'_>,
        x: &[f64],
        rng: &mut R,
        count: usize,
    ) -> Result<Vec<Prediction>> {
        let pred = posterior.predict(x)?;
        pred.sample(rng, count)?
            .into_iter()
            .map(|p| self.wrap(p.coords))
            .collect()
    }
}
