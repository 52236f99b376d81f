//! Version-tagged JSON checkpoints of fitted models.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Model, ModelKind, ModelState};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::manifolds::{Manifold, Point};

pub const CHECKPOINT_FORMAT: &str = "wgplvm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelKind,
    /// Manifold the data live on.
    pub target: Manifold,
    /// Manifold the model works in (the target for the wrapped model,
    /// Euclidean ambient space for the baselines).
    pub manifold: Manifold,
    pub basepoint: Vec<f64>,
    pub latents: Vec<Vec<f64>>,
    pub kernel: KernelSpec,
    pub tangent_data: Vec<Vec<f64>>,
    pub fit_trace: Vec<(usize, f64)>,
    #[serde(default)]
    pub labels: BTreeMap<String, Vec<String>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::Checkpoint(format!(
            "ragged matrix: expected {ncols} columns, found {}",
            bad.len()
        )));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        let s = &model.state;
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            model: model.kind,
            target: model.target.clone(),
            manifold: s.manifold.clone(),
            basepoint: s.basepoint.coords.iter().copied().collect(),
            latents: rows(&s.latents),
            kernel: s.kernel.clone(),
            tangent_data: rows(&s.tangent_data),
            fit_trace: s.fit_trace.clone(),
            labels: model.labels.clone(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format '{}'", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let q = self.latents.first().map(Vec::len).unwrap_or(0);
        let d = self.manifold.intrinsic_dim();
        let state = ModelState::from_parts(
            self.manifold,
            Point::from_slice(&self.basepoint),
            matrix(&self.tangent_data, d)?,
            matrix(&self.latents, q)?,
            self.kernel,
            self.fit_trace,
        )?;
        Ok(Model {
            kind: self.model,
            target: self.target,
            state,
            labels: self.labels,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OptimizerConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_preserves_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = Manifold::sphere(2);
        let base = Point::from_slice(&[0.0, 0.0, 1.0]);
        let data: Vec<Point> = (0..10)
            .map(|_| m.exp(&base, &m.random_tangent(&base, 0.4, &mut rng).unwrap()).unwrap())
            .collect();
        let mut model = Model::new(ModelKind::Wgplvm, m, &data, 1, KernelSpec::rbf()).unwrap();
        model.fit(&OptimizerConfig { max_iter: 20, ..Default::default() }).unwrap();
        model.labels.insert("timestamp".into(), (0..10).map(|i| i.to_string()).collect());
        let ck = Checkpoint::from_model(&model);
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        let restored = back.into_model().unwrap();
        assert_eq!(restored.state.latents, model.state.latents);
        assert_eq!(restored.state.objective().unwrap(), model.state.objective().unwrap());
        for (a, b) in restored.state.data.iter().zip(&model.state.data) {
            assert!((&a.coords - &b.coords).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_foreign_format() {
        let text = r#"{"format":"other","version":1}"#;
        assert!(Checkpoint::from_json(text).is_err());
    }
}
