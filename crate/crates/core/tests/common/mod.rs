//! Direct textbook formulas used as independent oracles. Everything here uses
//! explicit inverses and determinants rather than the factorizations of the
//! library under test.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use wgplvm::kernels::KernelFamily;

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Clone, Copy, Debug)]
pub struct Hyper {
    pub signal_var: f64,
    pub lengthscale_sq: f64,
    pub noise_var: f64,
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn kernel(family: KernelFamily, h: Hyper, x: &[f64], y: &[f64]) -> f64 {
    match family {
        KernelFamily::Rbf => {
            let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            h.signal_var * (-r2 / (2.0 * h.lengthscale_sq)).exp()
        }
        KernelFamily::Periodic => {
            let s = ((x[0] - y[0]) / 2.0).sin();
            h.signal_var * (-2.0 * s * s / h.lengthscale_sq).exp()
        }
    }
}

/// ∂k(x, y)/∂x
fn kernel_dx(family: KernelFamily, h: Hyper, x: &[f64], y: &[f64]) -> Vec<f64> {
    let k = kernel(family, h, x, y);
    match family {
        KernelFamily::Rbf => x.iter().zip(y).map(|(a, b)| -k * (a - b) / h.lengthscale_sq).collect(),
        KernelFamily::Periodic => vec![-k * (x[0] - y[0]).sin() / h.lengthscale_sq],
    }
}

/// ∂k(x, y)/∂ln ℓ²
fn kernel_dlog_lengthscale(family: KernelFamily, h: Hyper, x: &[f64], y: &[f64]) -> f64 {
    let k = kernel(family, h, x, y);
    match family {
        KernelFamily::Rbf => {
            let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            k * r2 / (2.0 * h.lengthscale_sq)
        }
        KernelFamily::Periodic => {
            let s = ((x[0] - y[0]) / 2.0).sin();
            k * 2.0 * s * s / h.lengthscale_sq
        }
    }
}

pub fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn gram(family: KernelFamily, h: Hyper, x: &DMatrix<f64>) -> DMatrix<f64> {
    let r = rows(x);
    let n = r.len();
    DMatrix::from_fn(n, n, |i, j| kernel(family, h, &r[i], &r[j]) + if i == j { h.noise_var } else { 0.0 })
}

/// `ln p(Y | X) = Σ_d ln N(Y[:, d] | 0, K)`
pub fn log_likelihood(family: KernelFamily, h: Hyper, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let k = gram(family, h, x);
    let kinv = k.clone().try_inverse().expect("invertible Gram matrix");
    let det = k.determinant();
    let (n, d) = y.shape();
    let mut total = 0.0;
    for c in 0..d {
        let col = y.column(c);
        total += -0.5 * n as f64 * LN_2PI - 0.5 * det.ln() - 0.5 * (col.transpose() * &kinv * col)[(0, 0)];
    }
    total
}

/// Gradients of [`log_likelihood`] with respect to every latent coordinate
/// and `(ln σ², ln ℓ², ln σₙ²)`, via `½ tr((K⁻¹YYᵀK⁻¹ − dK⁻¹) ∂K)` with each
/// `∂K` assembled as a full matrix.
pub fn gradients(family: KernelFamily, h: Hyper, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (DMatrix<f64>, [f64; 3]) {
    let k = gram(family, h, x);
    let kinv = k.try_inverse().unwrap();
    let d = y.ncols() as f64;
    let inner = &kinv * y * y.transpose() * &kinv - &kinv * d;
    let contract = |dk: &DMatrix<f64>| 0.5 * (&inner * dk).trace();
    let r = rows(x);
    let (n, q) = x.shape();
    let mut gx = DMatrix::zeros(n, q);
    for i in 0..n {
        for a in 0..q {
            let mut dk = DMatrix::zeros(n, n);
            for j in 0..n {
                if j != i {
                    let g = kernel_dx(family, h, &r[i], &r[j])[a];
                    dk[(i, j)] = g;
                    dk[(j, i)] = g;
                }
            }
            gx[(i, a)] = contract(&dk);
        }
    }
    let signal = DMatrix::from_fn(n, n, |i, j| kernel(family, h, &r[i], &r[j]));
    let length = DMatrix::from_fn(n, n, |i, j| kernel_dlog_lengthscale(family, h, &r[i], &r[j]));
    let noise = DMatrix::identity(n, n) * h.noise_var;
    (gx, [contract(&signal), contract(&length), contract(&noise)])
}

/// GP regression posterior `(Yᵀ K⁻¹ k*, k(x,x) + σₙ² − k*ᵀ K⁻¹ k*)`.
pub fn gp_posterior(family: KernelFamily, h: Hyper, x: &DMatrix<f64>, y: &DMatrix<f64>, xs: &[f64]) -> (DVector<f64>, f64) {
    let kinv = gram(family, h, x).try_inverse().unwrap();
    let r = rows(x);
    let kstar = DVector::from_iterator(r.len(), r.iter().map(|xi| kernel(family, h, xs, xi)));
    let mean = y.transpose() * &kinv * &kstar;
    let var = kernel(family, h, xs, xs) + h.noise_var - (kstar.transpose() * &kinv * &kstar)[(0, 0)];
    (mean, var)
}

/// Law of `x₁ | x₂ = obs` for `(x₁, x₂) ~ N((μ₁, μ₂), [[S₁₁, S₁₂], [S₁₂ᵀ, S₂₂]])`.
pub fn gaussian_conditional(
    mu1: &DVector<f64>,
    mu2: &DVector<f64>,
    s11: &DMatrix<f64>,
    s12: &DMatrix<f64>,
    s22: &DMatrix<f64>,
    obs: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let s22inv = s22.clone().try_inverse().unwrap();
    let gain = s12 * s22inv;
    (mu1 + &gain * (obs - mu2), s11 - &gain * s12.transpose())
}

/// Log-density of a wrapped normal on the circle, summing `2·terms + 1` windings.
pub fn wrapped_normal_log_density(theta: f64, sigma: f64, terms: i32) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let exponents: Vec<f64> = (-terms..=terms)
        .map(|k| {
            let t = theta + two_pi * k as f64;
            -t * t / (2.0 * sigma * sigma)
        })
        .collect();
    let top = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = exponents.iter().map(|e| (e - top).exp()).sum();
    top + s.ln() - 0.5 * LN_2PI - sigma.ln()
}
