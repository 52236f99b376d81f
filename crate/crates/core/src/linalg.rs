//! Small dense linear-algebra helpers shared by the geometry and GP code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Diagonal jitter tried, in order, after a plain factorization fails.
pub const JITTER_LADDER: [f64; 4] = [1e-12, 1e-10, 1e-8, 1e-6];

/// Cholesky factor together with the diagonal jitter that made it succeed.
#[derive(Clone, Debug)]
pub struct JitteredCholesky {
    pub factor: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl JitteredCholesky {
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Cholesky {
                max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
            });
        }
        if let Some(factor) = Cholesky::new(matrix.clone()) {
            return Ok(Self { factor, jitter: 0.0 });
        }
        let n = matrix.nrows();
        for &jitter in JITTER_LADDER.iter() {
            let shifted = matrix + DMatrix::identity(n, n) * jitter;
            if let Some(factor) = Cholesky::new(shifted) {
                return Ok(Self { factor, jitter });
            }
        }
        Err(Error::Cholesky {
            max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
        })
    }

    pub fn ln_det(&self) -> f64 {
        let l = self.factor.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(rhs)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.factor.inverse()
    }

    /// Lower-triangular factor `L` with `L Lᵀ = K + jitter·I`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.factor.l()
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted
/// in descending order (columns of the returned eigenvector matrix follow).
pub fn sorted_symmetric_eigen(matrix: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(matrix.clone());
    let n = matrix.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn map_symmetric(matrix: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(matrix.clone());
    let mapped = eig.eigenvalues.map(f);
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&mapped) * v.transpose();
    symmetrize(&out)
}

pub fn symmetrize(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    (matrix + matrix.transpose()) * 0.5
}

pub fn min_eigenvalue(matrix: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(matrix.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
