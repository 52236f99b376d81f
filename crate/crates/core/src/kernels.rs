//! Stationary covariance functions on the latent space.
//!
//! Hyperparameters live in log space: `ln σ²`, `ln ℓ²` and `ln σₙ²`. The
//! white-noise variance σₙ² is never part of [`KernelSpec::eval`]; it only
//! appears on the diagonal of Gram matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of kernel hyperparameters (signal variance, lengthscale, noise).
pub const NUM_HYPER: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `σ² exp(−‖x − x'‖² / (2ℓ²))`
    Rbf,
    /// `σ² exp(−2 sin²(|t − t'| / 2) / ℓ²)`, period 2π, 1-D latents only.
    Periodic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub log_signal_var: f64,
    pub log_lengthscale: f64,
    pub log_noise_var: f64,
}

impl KernelSpec {
    /// Builds a kernel from variances given on the natural scale; `lengthscale_sq` is ℓ².
    pub fn new(family: KernelFamily, signal_var: f64, lengthscale_sq: f64, noise_var: f64) -> Self {
        Self {
            family,
            log_signal_var: signal_var.ln(),
            log_lengthscale: lengthscale_sq.ln(),
            log_noise_var: noise_var.ln(),
        }
    }

    pub fn rbf() -> Self {
        Self::new(KernelFamily::Rbf, 1.0, 1.0, 1e-2)
    }

    pub fn periodic() -> Self {
        Self::new(KernelFamily::Periodic, 1.0, 1.0, 1e-2)
    }

    pub fn signal_var(&self) -> f64 {
        self.log_signal_var.exp()
    }

    pub fn lengthscale_sq(&self) -> f64 {
        self.log_lengthscale.exp()
    }

    pub fn noise_var(&self) -> f64 {
        self.log_noise_var.exp()
    }

    /// `[ln σ², ln ℓ², ln σₙ²]`
    pub fn hyper(&self) -> [f64; NUM_HYPER] {
        [self.log_signal_var, self.log_lengthscale, self.log_noise_var]
    }

    pub fn set_hyper(&mut self, h: [f64; NUM_HYPER]) {
        self.log_signal_var = h[0];
        self.log_lengthscale = h[1];
        self.log_noise_var = h[2];
    }

    pub fn check_latent_dim(&self, q: usize) -> Result<()> {
        if q == 0 {
            return Err(Error::InvalidArgument("latent dimension must be positive".into()));
        }
        if self.family == KernelFamily::Periodic && q != 1 {
            return Err(Error::InvalidArgument(format!(
                "periodic kernel needs 1-D latents, got {q}"
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        self.check_latent_dim(x.len())?;
        Ok(self.eval_unchecked(x, y))
    }

    /// Shape term `r` such that `k = σ² exp(−r)`.
    fn shape(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Rbf => sq_dist(x, y) / (2.0 * self.lengthscale_sq()),
            KernelFamily::Periodic => {
                let s = (0.5 * (x[0] - y[0])).sin();
                2.0 * s * s / self.lengthscale_sq()
            }
        }
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        self.signal_var() * (-self.shape(x, y)).exp()
    }

    /// Kernel value and its gradient with respect to the first argument.
    pub fn eval_grad_x(&self, x: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
        let k = self.eval_unchecked(x, y);
        let l2 = self.lengthscale_sq();
        let grad = match self.family {
            KernelFamily::Rbf => x.iter().zip(y).map(|(a, b)| -k * (a - b) / l2).collect(),
            KernelFamily::Periodic => vec![-k * (x[0] - y[0]).sin() / l2],
        };
        (k, grad)
    }

    /// Derivatives of `k(x, y)` with respect to `ln σ²` and `ln ℓ²`.
    fn eval_grad_hyper(&self, x: &[f64], y: &[f64]) -> (f64, f64) {
        let r = self.shape(x, y);
        let k = self.signal_var() * (-r).exp();
        // both shape terms scale as 1/ℓ², so ∂k/∂ln ℓ² = k·r
        (k, k * r)
    }

    /// Gram matrix with σₙ² on the diagonal.
    pub fn gram(&self, latents: &DMatrix<f64>) -> DMatrix<f64> {
        let rows = latent_rows(latents);
        let n = rows.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.signal_var() + self.noise_var();
            for j in 0..i {
                let v = self.eval_unchecked(&rows[i], &rows[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Covariances `k(x*, xᵢ)` between a test latent and each training latent.
    pub fn cross(&self, latents: &DMatrix<f64>, x: &[f64]) -> DVector<f64> {
        let rows = latent_rows(latents);
        DVector::from_iterator(rows.len(), rows.iter().map(|r| self.eval_unchecked(x, r)))
    }

    /// `∂K/∂ln σ²`, `∂K/∂ln ℓ²`, `∂K/∂ln σₙ²`.
    pub fn grad_hyper(&self, latents: &DMatrix<f64>) -> [DMatrix<f64>; NUM_HYPER] {
        let rows = latent_rows(latents);
        let n = rows.len();
        let mut ds = DMatrix::zeros(n, n);
        let mut dl = DMatrix::zeros(n, n);
        for i in 0..n {
            ds[(i, i)] = self.signal_var();
            for j in 0..i {
                let (a, b) = self.eval_grad_hyper(&rows[i], &rows[j]);
                ds[(i, j)] = a;
                ds[(j, i)] = a;
                dl[(i, j)] = b;
                dl[(j, i)] = b;
            }
        }
        let dn = DMatrix::identity(n, n) * self.noise_var();
        [ds, dl, dn]
    }

    /// `∂K/∂X[i, a]`; nonzero only in row and column `i`.
    pub fn grad_input(&self, latents: &DMatrix<f64>, i: usize, a: usize) -> DMatrix<f64> {
        let rows = latent_rows(latents);
        let n = rows.len();
        let mut d = DMatrix::zeros(n, n);
        for j in 0..n {
            if j == i {
                continue;
            }
            let (_, g) = self.eval_grad_x(&rows[i], &rows[j]);
            d[(i, j)] = g[a];
            d[(j, i)] = g[a];
        }
        d
    }
}

pub(crate) fn latent_rows(latents: &DMatrix<f64>) -> Vec<Vec<f64>> {
    latents
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect()
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}
