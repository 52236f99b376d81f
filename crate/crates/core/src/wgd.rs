//! Wrapped Gaussian distributions.
//!
//! A wrapped Gaussian `N_M(μ, K)` is the push-forward of a centered Gaussian
//! `N(0, K)` on the tangent space at `μ` through `Exp_μ`. The covariance is
//! expressed in the intrinsic coordinates of the deterministic frame returned
//! by [`Manifold::tangent_basis`].
//!
//! Densities and conditionals use only the minimal-norm preimage of a point,
//! which is exact whenever the cut locus of the basepoint is empty.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, JitteredCholesky};
use crate::manifolds::{Frame, Manifold, Point};

/// Symmetry and PSD tolerance for covariance matrices.
pub const COV_TOL: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug)]
pub struct WrappedGaussian {
    manifold: Manifold,
    basepoint: Point,
    frame: Frame,
    cov: DMatrix<f64>,
}

/// Approximate log-density together with the diagonal jitter that was needed
/// to factor the covariance (zero when none).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogDensity {
    pub value: f64,
    pub jitter: f64,
}

fn check_covariance(cov: &DMatrix<f64>, dim: usize) -> Result<()> {
    if cov.nrows() != dim || cov.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: cov.nrows(),
        });
    }
    let asym = (cov - cov.transpose()).amax();
    if asym > COV_TOL {
        return Err(Error::InvalidArgument(format!(
            "covariance is not symmetric (max asymmetry {asym:e})"
        )));
    }
    if dim > 0 {
        let min = linalg::min_eigenvalue(cov);
        if min < -COV_TOL {
            return Err(Error::InvalidArgument(format!(
                "covariance is not positive semidefinite (min eigenvalue {min:e})"
            )));
        }
    }
    Ok(())
}

impl WrappedGaussian {
    pub fn new(manifold: Manifold, basepoint: Point, cov: DMatrix<f64>) -> Result<Self> {
        manifold.validate(&basepoint)?;
        let frame = manifold.tangent_basis(&basepoint)?;
        check_covariance(&cov, frame.dim())?;
        Ok(Self {
            manifold,
            basepoint,
            frame,
            cov,
        })
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn basepoint(&self) -> &Point {
        &self.basepoint
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `count` draws from a ChaCha8 stream seeded with `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Result<Vec<Point>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, count)
    }

    /// Draws `z = L ε` with `L Lᵀ = K` (jittered if needed) and
    /// `ε ~ N(0, I)` (ziggurat standard normals), then maps `Exp_μ(E z)`.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<Point>> {
        let d = self.frame.dim();
        let chol = JitteredCholesky::new(&self.cov)?;
        let l = chol.lower();
        (0..count)
            .map(|_| {
                let eps = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let v = self.frame.from_intrinsic(&(&l * eps))?;
                self.manifold.exp(&self.basepoint, &v)
            })
            .collect()
    }

    /// `log N(E⁻¹ Log_μ(p) | 0, K)`; a lower bound of the exact wrapped
    /// log-density, exact when the cut locus is empty.
    pub fn log_density_approx(&self, p: &Point) -> Result<LogDensity> {
        let v = self.manifold.log(&self.basepoint, p)?;
        let c = self.frame.to_intrinsic(&v)?;
        let chol = JitteredCholesky::new(&self.cov)?;
        Ok(LogDensity {
            value: gaussian_log_density(&chol, &c),
            jitter: chol.jitter,
        })
    }
}

/// `log N(c | 0, K)` from a Cholesky factor of `K`.
pub(crate) fn gaussian_log_density(chol: &JitteredCholesky, c: &DVector<f64>) -> f64 {
    let d = c.len() as f64;
    let quad = c.dot(&chol.solve_vec(c));
    -0.5 * d * LN_2PI - 0.5 * chol.ln_det() - 0.5 * quad
}

/// Two jointly wrapped Gaussian points `(X₁, X₂)` on `M₁ × M₂`.
#[derive(Clone, Debug)]
pub struct JointWrappedGaussian {
    first: WrappedGaussian,
    second: WrappedGaussian,
    cross_cov: DMatrix<f64>,
}

impl JointWrappedGaussian {
    pub fn new(first: WrappedGaussian, second: WrappedGaussian, cross_cov: DMatrix<f64>) -> Result<Self> {
        let (d1, d2) = (first.frame.dim(), second.frame.dim());
        if cross_cov.nrows() != d1 || cross_cov.ncols() != d2 {
            return Err(Error::DimensionMismatch {
                expected: d1 * d2,
                found: cross_cov.nrows() * cross_cov.ncols(),
            });
        }
        let joint = Self {
            first,
            second,
            cross_cov,
        };
        check_covariance(&joint.block_cov(), d1 + d2)?;
        Ok(joint)
    }

    pub fn first(&self) -> &WrappedGaussian {
        &self.first
    }

    pub fn second(&self) -> &WrappedGaussian {
        &self.second
    }

    pub fn cross_cov(&self) -> &DMatrix<f64> {
        &self.cross_cov
    }

    /// `[[K₁, K₁₂], [K₁₂ᵀ, K₂]]`
    pub fn block_cov(&self) -> DMatrix<f64> {
        let (d1, d2) = (self.first.frame.dim(), self.second.frame.dim());
        let mut k = DMatrix::zeros(d1 + d2, d1 + d2);
        k.view_mut((0, 0), (d1, d1)).copy_from(&self.first.cov);
        k.view_mut((d1, d1), (d2, d2)).copy_from(&self.second.cov);
        k.view_mut((0, d1), (d1, d2)).copy_from(&self.cross_cov);
        k.view_mut((d1, 0), (d2, d1)).copy_from(&self.cross_cov.transpose());
        k
    }

    /// The same distribution viewed as one wrapped Gaussian on the product
    /// manifold (whose frame is the block-diagonal union of the two frames).
    pub fn as_product(&self) -> Result<WrappedGaussian> {
        let manifold = Manifold::product(vec![self.first.manifold.clone(), self.second.manifold.clone()]);
        let coords = DVector::from_iterator(
            manifold.ambient_dim(),
            self.first
                .basepoint
                .coords
                .iter()
                .chain(self.second.basepoint.coords.iter())
                .copied(),
        );
        WrappedGaussian::new(manifold, Point::new(coords), self.block_cov())
    }

    /// Conditional law of `X₁` given `X₂ = observed`, keeping only the
    /// minimal-norm preimage `v = Log_{μ₂}(observed)` (mixture weight 1).
    ///
    /// The returned basepoint is `Exp_{μ₁}(K₁₂ K₂⁻¹ v)` and the covariance
    /// `K₁ − K₁₂ K₂⁻¹ K₂₁`, carried from the frame at `μ₁` to the frame at the
    /// new basepoint through their shared ambient coordinates.
    pub fn condition(&self, observed: &Point) -> Result<WrappedGaussian> {
        let v = self.second.manifold.log(&self.second.basepoint, observed)?;
        let c = self.second.frame.to_intrinsic(&v)?;
        let chol = JitteredCholesky::new(&self.second.cov)?;
        let mean = &self.cross_cov * chol.solve_vec(&c);
        let cond_cov = &self.first.cov - &self.cross_cov * chol.solve(&self.cross_cov.transpose());
        let cond_cov = linalg::symmetrize(&cond_cov);

        let manifold = self.first.manifold.clone();
        let offset = self.first.frame.from_intrinsic(&mean)?;
        let basepoint = manifold.exp(&self.first.basepoint, &offset)?;
        let frame = manifold.tangent_basis(&basepoint)?;
        let t = self.first.frame.transition_to(&frame);
        let cov = linalg::symmetrize(&(&t * cond_cov * t.transpose()));
        Ok(WrappedGaussian {
            manifold,
            basepoint,
            frame,
            cov,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn euclid(mean: &[f64], cov: DMatrix<f64>) -> WrappedGaussian {
        WrappedGaussian::new(Manifold::euclidean(mean.len()), Point::from_slice(mean), cov).unwrap()
    }

    #[test]
    fn degenerate_covariance_concentrates_at_basepoint() {
        let mu = Point::from_slice(&[0.0, 0.6, 0.8]);
        let w = WrappedGaussian::new(Manifold::sphere(2), mu.clone(), DMatrix::identity(2, 2) * 1e-20).unwrap();
        for p in w.sample(3, 200).unwrap() {
            assert!((p.coords - &mu.coords).norm() < 1e-8);
        }
    }

    #[test]
    fn sphere_samples_have_unit_norm() {
        let w = WrappedGaussian::new(
            Manifold::sphere(2),
            Point::from_slice(&[0.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.8]),
        )
        .unwrap();
        for p in w.sample(9, 2000).unwrap() {
            assert!((p.coords.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let w = euclid(&[0.0, 1.0], DMatrix::identity(2, 2));
        assert_eq!(w.sample(5, 10).unwrap(), w.sample(5, 10).unwrap());
        assert_ne!(w.sample(5, 10).unwrap(), w.sample(6, 10).unwrap());
    }

    #[test]
    fn euclidean_sample_covariance() {
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let w = euclid(&[0.0, 0.0], k.clone());
        let n = 100_000;
        let samples = w.sample(42, n).unwrap();
        let mut s = DMatrix::zeros(2, 2);
        for p in &samples {
            s += &p.coords * p.coords.transpose();
        }
        s /= n as f64;
        assert!((s[(0, 0)] - 1.0).abs() < 0.05);
        assert!((s[(1, 1)] - 4.0).abs() < 0.05 * 4.0);
        assert!(s[(0, 1)].abs() < 0.05 * 2.0);
    }

    #[test]
    fn euclidean_density_is_multivariate_normal() {
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]);
        let w = euclid(&[1.0, -1.0], k.clone());
        let x = DVector::from_vec(vec![0.3, 0.2]);
        let diff = &x - DVector::from_vec(vec![1.0, -1.0]);
        let inv = k.clone().try_inverse().unwrap();
        let expect = -LN_2PI - 0.5 * k.determinant().ln() - 0.5 * (diff.transpose() * inv * &diff)[0];
        let got = w.log_density_approx(&Point::new(x)).unwrap();
        assert_eq!(got.jitter, 0.0);
        assert!((got.value - expect).abs() < 1e-12);
    }

    #[test]
    fn density_at_basepoint() {
        let k = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]);
        let mu = Point::from_slice(&[0.0, 0.0, 1.0]);
        let w = WrappedGaussian::new(Manifold::sphere(2), mu.clone(), k.clone()).unwrap();
        let got = w.log_density_approx(&mu).unwrap().value;
        let expect = -LN_2PI - 0.5 * k.determinant().ln();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn singular_covariance_is_jittered_and_flagged() {
        let w = euclid(&[0.0, 0.0], DMatrix::from_element(2, 2, 1.0));
        let d = w.log_density_approx(&Point::from_slice(&[0.1, 0.1])).unwrap();
        assert!(d.jitter > 0.0);
        assert!(d.value.is_finite());
    }

    #[test]
    fn cut_locus_density_errors() {
        let w = WrappedGaussian::new(Manifold::sphere(1), Point::from_slice(&[1.0, 0.0]), DMatrix::identity(1, 1)).unwrap();
        assert!(matches!(
            w.log_density_approx(&Point::from_slice(&[-1.0, 0.0])),
            Err(Error::CutLocus)
        ));
    }

    #[test]
    fn rejects_invalid_covariances() {
        let m = Manifold::euclidean(2);
        let p = Point::from_slice(&[0.0, 0.0]);
        assert!(WrappedGaussian::new(m.clone(), p.clone(), DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        assert!(WrappedGaussian::new(m.clone(), p.clone(), DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]))).is_err());
        assert!(WrappedGaussian::new(m, p, DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn scalar_conditioning() {
        let a = euclid(&[0.0], DMatrix::from_element(1, 1, 2.0));
        let b = euclid(&[0.0], DMatrix::from_element(1, 1, 2.0));
        let j = JointWrappedGaussian::new(a, b, DMatrix::from_element(1, 1, 1.0)).unwrap();
        let c = j.condition(&Point::from_slice(&[1.0])).unwrap();
        assert!((c.basepoint().coords[0] - 0.5).abs() < 1e-15);
        assert!((c.cov()[(0, 0)] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn independent_conditioning_returns_marginal() {
        let k1 = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.2]);
        let a = WrappedGaussian::new(Manifold::sphere(2), Point::from_slice(&[0.0, 0.6, 0.8]), k1.clone()).unwrap();
        let b = WrappedGaussian::new(Manifold::spd(2), Point::from_slice(&[1.0, 0.0, 2.0]), DMatrix::identity(3, 3)).unwrap();
        let j = JointWrappedGaussian::new(a.clone(), b, DMatrix::zeros(2, 3)).unwrap();
        let c = j.condition(&Point::from_slice(&[2.0, 0.1, 1.0])).unwrap();
        assert_eq!(c.basepoint(), a.basepoint());
        assert!((c.cov() - k1).amax() < 1e-15);
    }

    #[test]
    fn joint_must_be_psd() {
        let a = euclid(&[0.0], DMatrix::from_element(1, 1, 1.0));
        let b = euclid(&[0.0], DMatrix::from_element(1, 1, 1.0));
        assert!(JointWrappedGaussian::new(a, b, DMatrix::from_element(1, 1, 2.0)).is_err());
    }

    /// log Σ_{|k|≤10} N(θ + 2πk | 0, σ²)
    fn wrapped_normal_series(theta: f64, sigma: f64) -> f64 {
        let s: f64 = (-10..=10)
            .map(|k| {
                let x = theta + 2.0 * PI * k as f64;
                (-0.5 * x * x / (sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
            })
            .sum();
        s.ln()
    }

    #[test]
    fn circle_density_bounded_by_wrapped_series() {
        let mu = Point::from_slice(&[1.0, 0.0]);
        for &sigma in &[0.1, 0.3, 0.5, 1.0, 2.0] {
            let w = WrappedGaussian::new(Manifold::sphere(1), mu.clone(), DMatrix::from_element(1, 1, sigma * sigma)).unwrap();
            for i in 0..=60 {
                let theta = -3.1 + 6.2 * i as f64 / 60.0;
                let p = Point::from_slice(&[theta.cos(), theta.sin()]);
                let approx = w.log_density_approx(&p).unwrap().value;
                assert!(approx <= wrapped_normal_series(theta, sigma) + 1e-12);
            }
        }
    }
}
