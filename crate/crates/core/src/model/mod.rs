//! Wrapped GPLVM: a GP latent variable model fitted to the tangent-space
//! coordinates of manifold data at a constant basepoint (the Fréchet mean of
//! the training set).
//!
//! With tangent data `Y` (N×d, rows `E⁻¹ Log_m(pᵢ)`) and Gram matrix `K` of the
//! latents, the training objective is
//!
//! ```text
//! −(dN/2) ln 2π − (d/2) ln|K| − ½ Tr(K⁻¹ Y Yᵀ)
//! ```
//!
//! which every coordinate shares through a single kernel. Because the
//! basepoint does not depend on the latents, its gradient involves only
//! `∂K/∂X` and `∂K/∂θ`.

mod baseline;
mod checkpoint;
mod optim;
mod posterior;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec, NUM_HYPER};
use crate::linalg::{self, JitteredCholesky};
use crate::manifolds::{Frame, Manifold, Point, FRECHET_MAX_ITER, FRECHET_TOL};

pub use baseline::{baseline_gplvm, Model, ModelKind, Prediction};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use optim::{FitSummary, OptimizerConfig};
pub use posterior::{EncodeConfig, Encoding, Posterior, PosteriorPrediction};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Clone, Debug)]
pub struct ModelState {
    pub manifold: Manifold,
    pub data: Vec<Point>,
    pub basepoint: Point,
    pub frame: Frame,
    /// N×d, row i = intrinsic coordinates of `Log_m(pᵢ)`.
    pub tangent_data: DMatrix<f64>,
    /// N×q
    pub latents: DMatrix<f64>,
    pub kernel: KernelSpec,
    pub fit_trace: Vec<(usize, f64)>,
}

/// Objective gradients: `∂/∂X` (N×q) and `∂/∂[ln σ², ln ℓ², ln σₙ²]`.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub latents: DMatrix<f64>,
    pub hyper: [f64; NUM_HYPER],
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.hyper
            .iter()
            .map(|v| v.abs())
            .fold(self.latents.amax(), f64::max)
    }
}

/// Basepoint, its frame and the tangent data matrix for a dataset.
pub fn tangent_coordinates(manifold: &Manifold, data: &[Point]) -> Result<(Point, Frame, DMatrix<f64>)> {
    let basepoint = manifold.frechet_mean(data, FRECHET_TOL, FRECHET_MAX_ITER)?;
    let frame = manifold.tangent_basis(&basepoint)?;
    let mut y = DMatrix::zeros(data.len(), frame.dim());
    for (i, p) in data.iter().enumerate() {
        let c = frame.to_intrinsic(&manifold.log(&basepoint, p)?)?;
        y.set_row(i, &c.transpose());
    }
    Ok((basepoint, frame, y))
}

/// Scores of `y` on its top principal axes, each column scaled to unit
/// sample variance. Axis signs are fixed so the largest-magnitude loading
/// is positive.
pub(crate) fn standardized_pca_scores(y: &DMatrix<f64>, q: usize) -> DMatrix<f64> {
    let n = y.nrows();
    let mean = y.row_mean();
    let mut centered = y.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.tr_mul(&centered) / (n.max(2) - 1) as f64;
    let (_, vectors) = linalg::sorted_symmetric_eigen(&cov);
    let mut scores = DMatrix::zeros(n, q);
    for a in 0..q {
        let mut axis = vectors.column(a).into_owned();
        let lead = axis.iter().copied().fold(0.0, |m: f64, v| if v.abs() > m.abs() { v } else { m });
        if lead < 0.0 {
            axis = -axis;
        }
        let s = &centered * axis;
        let sd = (s.norm_squared() / (n.max(2) - 1) as f64).sqrt();
        if sd > 1e-12 {
            scores.set_column(a, &(s / sd));
        }
    }
    scores
}

/// Principal geodesic analysis in the tangent space at the Fréchet mean:
/// returns the mean and standardized scores on the top `q` axes.
pub fn init_latents_pga(manifold: &Manifold, data: &[Point], q: usize) -> Result<(Point, DMatrix<f64>)> {
    check_dims(manifold, data.len(), q)?;
    let (basepoint, _, y) = tangent_coordinates(manifold, data)?;
    Ok((basepoint, standardized_pca_scores(&y, q)))
}

/// Angular initialization for circular latent spaces: the angle of each
/// point in the plane of the two leading standardized principal scores,
/// wrapped to `[0, 2π)`.
pub fn init_latents_angular(manifold: &Manifold, data: &[Point]) -> Result<(Point, DMatrix<f64>)> {
    check_dims(manifold, data.len(), 1)?;
    if manifold.intrinsic_dim() < 2 {
        return Err(Error::InvalidArgument("angular initialization needs d >= 2".into()));
    }
    let (basepoint, _, y) = tangent_coordinates(manifold, data)?;
    let s = standardized_pca_scores(&y, 2);
    let angles = DMatrix::from_fn(data.len(), 1, |i, _| s[(i, 1)].atan2(s[(i, 0)]).rem_euclid(TWO_PI));
    Ok((basepoint, angles))
}

fn check_dims(manifold: &Manifold, n: usize, q: usize) -> Result<()> {
    if q == 0 || n <= q {
        return Err(Error::InvalidArgument(format!(
            "need N > q >= 1, got N = {n}, q = {q}"
        )));
    }
    if q >= manifold.intrinsic_dim() {
        return Err(Error::InvalidArgument(format!(
            "latent dimension {q} must be below the data dimension {}",
            manifold.intrinsic_dim()
        )));
    }
    Ok(())
}

/// Objective and (optionally) gradients at one parameter setting.
pub(crate) struct Evaluation {
    pub objective: f64,
    pub gradients: Option<Gradients>,
}

pub(crate) fn evaluate(
    kernel: &KernelSpec,
    latents: &DMatrix<f64>,
    y: &DMatrix<f64>,
    with_gradients: bool,
) -> Result<Evaluation> {
    let n = y.nrows() as f64;
    let d = y.ncols() as f64;
    let k = kernel.gram(latents);
    let chol = JitteredCholesky::new(&k)?;
    let alpha = chol.solve(y);
    let trace = y.dot(&alpha);
    let objective = -0.5 * d * n * LN_2PI - 0.5 * d * chol.ln_det() - 0.5 * trace;
    if !with_gradients {
        return Ok(Evaluation {
            objective,
            gradients: None,
        });
    }
    // ∂objective/∂K = ½ (α αᵀ − d K⁻¹)
    let w = (&alpha * alpha.transpose() - chol.inverse() * d) * 0.5;
    let hyper_mats = kernel.grad_hyper(latents);
    let mut hyper = [0.0; NUM_HYPER];
    for (h, m) in hyper.iter_mut().zip(hyper_mats.iter()) {
        *h = w.dot(m);
    }
    let rows = crate::kernels::latent_rows(latents);
    let q = latents.ncols();
    let mut grad_x = DMatrix::zeros(rows.len(), q);
    for i in 0..rows.len() {
        for j in 0..rows.len() {
            if i == j {
                continue;
            }
            let (_, g) = kernel.eval_grad_x(&rows[i], &rows[j]);
            for a in 0..q {
                grad_x[(i, a)] += 2.0 * w[(i, j)] * g[a];
            }
        }
    }
    Ok(Evaluation {
        objective,
        gradients: Some(Gradients {
            latents: grad_x,
            hyper,
        }),
    })
}

impl ModelState {
    /// Builds a state with PGA-initialized latents (angular initialization for
    /// the periodic kernel).
    pub fn new(manifold: Manifold, data: Vec<Point>, latent_dim: usize, kernel: KernelSpec) -> Result<Self> {
        kernel.check_latent_dim(latent_dim)?;
        let (_, latents) = match kernel.family {
            KernelFamily::Periodic => init_latents_angular(&manifold, &data)?,
            KernelFamily::Rbf => init_latents_pga(&manifold, &data, latent_dim)?,
        };
        Self::with_latents(manifold, data, latents, kernel)
    }

    /// Builds a state from externally supplied initial latents.
    pub fn with_latents(manifold: Manifold, data: Vec<Point>, latents: DMatrix<f64>, kernel: KernelSpec) -> Result<Self> {
        if latents.nrows() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                found: latents.nrows(),
            });
        }
        check_dims(&manifold, data.len(), latents.ncols())?;
        kernel.check_latent_dim(latents.ncols())?;
        for p in &data {
            manifold.validate(p)?;
        }
        let (basepoint, frame, tangent_data) = tangent_coordinates(&manifold, &data)?;
        Ok(Self {
            manifold,
            data,
            basepoint,
            frame,
            tangent_data,
            latents,
            kernel,
            fit_trace: Vec::new(),
        })
    }

    /// Reassembles a state from stored parts; data points are regenerated as
    /// `Exp_m(E yᵢ)`.
    pub fn from_parts(
        manifold: Manifold,
        basepoint: Point,
        tangent_data: DMatrix<f64>,
        latents: DMatrix<f64>,
        kernel: KernelSpec,
        fit_trace: Vec<(usize, f64)>,
    ) -> Result<Self> {
        manifold.validate(&basepoint)?;
        let frame = manifold.tangent_basis(&basepoint)?;
        if tangent_data.ncols() != frame.dim() {
            return Err(Error::DimensionMismatch {
                expected: frame.dim(),
                found: tangent_data.ncols(),
            });
        }
        if latents.nrows() != tangent_data.nrows() {
            return Err(Error::DimensionMismatch {
                expected: tangent_data.nrows(),
                found: latents.nrows(),
            });
        }
        kernel.check_latent_dim(latents.ncols())?;
        let data = tangent_data
            .row_iter()
            .map(|row| {
                let v = frame.from_intrinsic(&row.transpose())?;
                manifold.exp(&basepoint, &v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            manifold,
            data,
            basepoint,
            frame,
            tangent_data,
            latents,
            kernel,
            fit_trace,
        })
    }

    pub fn num_points(&self) -> usize {
        self.tangent_data.nrows()
    }

    pub fn data_dim(&self) -> usize {
        self.tangent_data.ncols()
    }

    pub fn latent_dim(&self) -> usize {
        self.latents.ncols()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.kernel.gram(&self.latents)
    }

    pub fn objective(&self) -> Result<f64> {
        Ok(evaluate(&self.kernel, &self.latents, &self.tangent_data, false)?.objective)
    }

    pub fn gradients(&self) -> Result<Gradients> {
        Ok(evaluate(&self.kernel, &self.latents, &self.tangent_data, true)?
            .gradients
            .expect("gradients requested"))
    }

    /// Intrinsic tangent coordinates of an arbitrary point at the basepoint.
    pub fn tangent_coords_of(&self, p: &Point) -> Result<DVector<f64>> {
        self.frame.to_intrinsic(&self.manifold.log(&self.basepoint, p)?)
    }

    /// Pushes intrinsic tangent coordinates at the basepoint onto the manifold.
    pub fn point_from_tangent(&self, c: &DVector<f64>) -> Result<Point> {
        self.manifold.exp(&self.basepoint, &self.frame.from_intrinsic(c)?)
    }

    pub(crate) fn wraps_latents(&self) -> bool {
        self.kernel.family == KernelFamily::Periodic
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::Tangent;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn euclid_state(y: &[f64], n: usize, d: usize, x: &[f64], kernel: KernelSpec) -> ModelState {
        let data = (0..n).map(|i| Point::from_slice(&y[i * d..(i + 1) * d])).collect();
        let q = x.len() / n;
        ModelState::with_latents(Manifold::euclidean(d), data, DMatrix::from_row_slice(n, q, x), kernel).unwrap()
    }

    #[test]
    fn single_point_objective_is_standard_normal() {
        // K = [1]: σ² + σₙ² = 1
        let k = KernelSpec::new(KernelFamily::Rbf, 0.5, 1.0, 0.5);
        let v = evaluate(&k, &DMatrix::zeros(1, 1), &DMatrix::zeros(1, 1), false)
            .unwrap()
            .objective;
        assert!((v + 0.5 * LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn zero_data_leaves_log_determinant_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut s = euclid_state(&y, 4, 3, &x, KernelSpec::rbf());
        s.tangent_data *= 0.0;
        let k = s.gram();
        let expect = -0.5 * 3.0 * 4.0 * LN_2PI - 1.5 * k.determinant().ln();
        assert!((s.objective().unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn tangent_data_regenerates_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for m in [Manifold::sphere(2), Manifold::spd(2), Manifold::kendall(5)] {
            let base = m.random_point(&mut rng);
            let data: Vec<Point> = (0..12)
                .map(|_| m.exp(&base, &m.random_tangent(&base, 0.3, &mut rng).unwrap()).unwrap())
                .collect();
            let s = ModelState::new(m.clone(), data.clone(), 1, KernelSpec::rbf()).unwrap();
            for (i, p) in data.iter().enumerate() {
                let q = s.point_from_tangent(&s.tangent_data.row(i).transpose()).unwrap();
                assert!(m.distance(p, &q).unwrap() < 1e-8);
            }
        }
    }

    #[test]
    fn identical_data_gives_zero_latents() {
        let p = Point::from_slice(&[0.0, 0.6, 0.8]);
        let (_, x) = init_latents_pga(&Manifold::sphere(2), &vec![p; 6], 1).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pga_concentrates_geodesic_data() {
        let m = Manifold::spd(2);
        let base = Point::from_slice(&[1.5, 0.2, 0.7]);
        let dir = Tangent::from_slice(&[0.3, -0.5, 0.8]);
        let data: Vec<Point> = (0..15)
            .map(|i| m.exp(&base, &Tangent::new(&dir.coords * (i as f64 / 7.0 - 1.0))).unwrap())
            .collect();
        let (_, _, y) = tangent_coordinates(&m, &data).unwrap();
        let centered = {
            let mean = y.row_mean();
            let mut c = y.clone();
            for mut r in c.row_iter_mut() {
                r -= &mean;
            }
            c
        };
        let (vals, _) = linalg::sorted_symmetric_eigen(&centered.tr_mul(&centered));
        assert!(vals[0] / vals.sum() > 0.999);
    }

    #[test]
    fn dimension_checks() {
        let data = vec![Point::from_slice(&[0.0, 0.0, 1.0]); 3];
        assert!(init_latents_pga(&Manifold::sphere(2), &data, 2).is_err());
        assert!(init_latents_pga(&Manifold::sphere(2), &data[..1], 1).is_err());
        let periodic = KernelSpec::periodic();
        assert!(ModelState::new(Manifold::sphere(3), vec![Point::from_slice(&[0.0, 0.0, 0.0, 1.0]); 5], 2, periodic).is_err());
    }
}
