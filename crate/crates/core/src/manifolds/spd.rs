//! Symmetric positive-definite matrices under the Log-Euclidean metric.
//!
//! Points and tangent vectors are both stored as the upper triangle of a
//! symmetric matrix, row by row, with off-diagonal entries scaled by √2 so the
//! flat inner product of two coordinate vectors equals the Frobenius inner
//! product of the matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalues at or below this are rejected by the matrix logarithm.
pub const LOG_EIGEN_FLOOR: f64 = 1e-12;
/// Eigenvalue floor applied by [`project`].
pub const PROJECTION_EIGEN_FLOOR: f64 = 1e-8;

pub fn coordinate_len(n: usize) -> usize {
    n * (n + 1) / 2
}

pub fn flatten(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(coordinate_len(n));
    for i in 0..n {
        for j in i..n {
            if i == j {
                out.push(m[(i, i)]);
            } else {
                out.push(std::f64::consts::SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
    }
    DVector::from_vec(out)
}

pub fn unflatten(coords: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            if i == j {
                m[(i, i)] = coords[k];
            } else {
                let v = coords[k] / std::f64::consts::SQRT_2;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            k += 1;
        }
    }
    m
}

/// Flattens an upper triangle given without the √2 scaling.
pub fn from_unscaled_upper(values: &[f64], n: usize) -> DVector<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = values[k];
            m[(j, i)] = values[k];
            k += 1;
        }
    }
    flatten(&m)
}

pub fn to_unscaled_upper(coords: &DVector<f64>, n: usize) -> Vec<f64> {
    let m = unflatten(coords, n);
    let mut out = Vec::with_capacity(coordinate_len(n));
    for i in 0..n {
        for j in i..n {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn eigenvalues(coords: &DVector<f64>, n: usize) -> DVector<f64> {
    SymmetricEigen::new(unflatten(coords, n)).eigenvalues
}

pub(crate) fn matrix_log(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(p.clone());
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    let min = eig.eigenvalues.min();
    if min <= LOG_EIGEN_FLOOR {
        return Err(Error::InvalidPoint(format!(
            "SPD matrix has eigenvalue {min:e} at or below {LOG_EIGEN_FLOOR:e}"
        )));
    }
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::ln)) * v.transpose();
    Ok(linalg::symmetrize(&out))
}

pub(crate) fn matrix_exp(s: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::map_symmetric(s, f64::exp)
}

pub(crate) fn log_coords(p: &DVector<f64>, n: usize) -> Result<DVector<f64>> {
    Ok(flatten(&matrix_log(&unflatten(p, n))?))
}

pub(crate) fn exp_coords(s: &DVector<f64>, n: usize) -> DVector<f64> {
    flatten(&matrix_exp(&unflatten(s, n)))
}

pub(crate) fn exp(p: &DVector<f64>, v: &DVector<f64>, n: usize) -> Result<DVector<f64>> {
    let log_p = log_coords(p, n)?;
    Ok(exp_coords(&(log_p + v), n))
}

pub(crate) fn log(p: &DVector<f64>, q: &DVector<f64>, n: usize) -> Result<DVector<f64>> {
    Ok(log_coords(q, n)? - log_coords(p, n)?)
}

pub(crate) fn project(x: &DVector<f64>, n: usize) -> DVector<f64> {
    let m = linalg::symmetrize(&unflatten(x, n));
    flatten(&linalg::map_symmetric(&m, |l| l.max(PROJECTION_EIGEN_FLOOR)))
}

/// Amount by which the smallest eigenvalue falls short of being positive.
pub(crate) fn violation(x: &DVector<f64>, n: usize) -> f64 {
    let min = eigenvalues(x, n).min();
    if min > 0.0 {
        0.0
    } else {
        -min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flattening_preserves_frobenius_norm() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let f = flatten(&m);
        assert_eq!(f.len(), 6);
        assert!((f.norm() - m.norm()).abs() < 1e-12);
        assert_eq!(unflatten(&f, 3), m);
    }

    #[test]
    fn unscaled_roundtrip() {
        let vals = [2.0, 0.5, 0.1, 3.0, 0.2, 1.0];
        let f = from_unscaled_upper(&vals, 3);
        let back = to_unscaled_upper(&f, 3);
        for (a, b) in vals.iter().zip(back) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn log_rejects_singular() {
        let m = flatten(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])));
        assert!(matches!(log_coords(&m, 2), Err(Error::InvalidPoint(_))));
    }
}
