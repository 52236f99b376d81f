//! Predictive distribution of a fitted model and the encoding projection.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ModelState, LN_2PI, TWO_PI};
use crate::error::{Error, Result};
use crate::kernels::latent_rows;
use crate::linalg::JitteredCholesky;
use crate::manifolds::Point;
use crate::wgd::WrappedGaussian;

/// GP posterior of a fitted state with the Gram factorization cached.
#[derive(Clone, Debug)]
pub struct Posterior<'a> {
    state: &'a ModelState,
    chol: JitteredCholesky,
    /// K⁻¹ Y, N×d
    alpha: DMatrix<f64>,
    rows: Vec<Vec<f64>>,
}

/// Tangent-space predictive at one latent: mean `μ*(x) ∈ ℝᵈ` and shared
/// variance `v*(x)` for every coordinate, pushed forward by `Exp_m`.
#[derive(Clone, Debug)]
pub struct PosteriorPrediction<'a> {
    state: &'a ModelState,
    pub mean: DVector<f64>,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodeConfig {
    /// Random starts in addition to the best training latent.
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            restarts: 9,
            seed: 0,
            max_iter: 500,
            grad_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoding {
    pub latent: Vec<f64>,
    /// Predictive log-density of the encoded point at `latent`.
    pub log_density: f64,
}

impl ModelState {
    pub fn posterior(&self) -> Result<Posterior<'_>> {
        let chol = JitteredCholesky::new(&self.gram())?;
        let alpha = chol.solve(&self.tangent_data);
        Ok(Posterior {
            state: self,
            chol,
            alpha,
            rows: latent_rows(&self.latents),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<PosteriorPrediction<'_>> {
        let post = self.posterior()?;
        let pred = post.predict(x)?;
        Ok(PosteriorPrediction {
            state: self,
            mean: pred.mean,
            variance: pred.variance,
        })
    }
}

impl<'a> Posterior<'a> {
    pub fn state(&self) -> &'a ModelState {
        self.state
    }

    fn check_latent(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.state.latent_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `μ* = Yᵀ K⁻¹ k*`, `v* = k(x, x) + σₙ² − k*ᵀ K⁻¹ k*`.
    pub fn predict(&self, x: &[f64]) -> Result<PosteriorPrediction<'a>> {
        self.check_latent(x)?;
        let k = &self.state.kernel;
        let kstar = DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| k.eval_unchecked(x, r)));
        let mean = self.alpha.tr_mul(&kstar);
        let beta = self.chol.solve_vec(&kstar);
        let variance = (k.eval_unchecked(x, x) + k.noise_var() - kstar.dot(&beta)).max(0.0);
        Ok(PosteriorPrediction {
            state: self.state,
            mean,
            variance,
        })
    }

    /// Predictive log-density of tangent coordinates `y` at latent `x`, and
    /// its gradient with respect to `x`.
    pub fn encode_objective(&self, y: &DVector<f64>, x: &[f64]) -> (f64, Vec<f64>) {
        let k = &self.state.kernel;
        let q = x.len();
        let d = y.len() as f64;
        let n = self.rows.len();
        let mut kstar = DVector::zeros(n);
        let mut dk = DMatrix::zeros(n, q);
        for (j, r) in self.rows.iter().enumerate() {
            let (v, g) = k.eval_grad_x(x, r);
            kstar[j] = v;
            for a in 0..q {
                dk[(j, a)] = g[a];
            }
        }
        let mean = self.alpha.tr_mul(&kstar);
        let beta = self.chol.solve_vec(&kstar);
        let var = (k.eval_unchecked(x, x) + k.noise_var() - kstar.dot(&beta)).max(1e-300);
        let resid = y - &mean;
        let r2 = resid.norm_squared();
        let value = -0.5 * d * (LN_2PI + var.ln()) - 0.5 * r2 / var;
        let dmean = self.alpha.tr_mul(&dk); // d×q
        let dvar = dk.tr_mul(&beta) * -2.0; // q
        let grad = (0..q)
            .map(|a| {
                -0.5 * d * dvar[a] / var + resid.dot(&dmean.column(a)) / var + 0.5 * r2 * dvar[a] / (var * var)
            })
            .collect();
        (value, grad)
    }

    /// Latent maximizing the predictive density of `p`. Starts from the best
    /// training latent and `restarts` uniform draws over the bounding box of
    /// the training latents, then runs backtracking gradient ascent from each.
    pub fn encode(&self, p: &Point, cfg: &EncodeConfig) -> Result<Encoding> {
        let y = self.state.tangent_coords_of(p)?;
        self.encode_tangent(&y, cfg)
    }

    pub fn encode_tangent(&self, y: &DVector<f64>, cfg: &EncodeConfig) -> Result<Encoding> {
        let q = self.state.latent_dim();
        let wrap = self.state.wraps_latents();
        let mut starts: Vec<Vec<f64>> = Vec::with_capacity(cfg.restarts + 1);
        let best_train = self
            .rows
            .iter()
            .map(|r| (self.encode_objective(y, r).0, r))
            .filter(|(v, _)| v.is_finite())
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, r)| r.clone());
        starts.extend(best_train);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (lo, hi): (Vec<f64>, Vec<f64>) = if wrap {
            (vec![0.0; q], vec![TWO_PI; q])
        } else {
            (0..q)
                .map(|a| {
                    let col = self.state.latents.column(a);
                    (col.min(), col.max())
                })
                .unzip()
        };
        for _ in 0..cfg.restarts {
            starts.push((0..q).map(|a| lo[a] + (hi[a] - lo[a]) * rng.random::<f64>()).collect());
        }

        let mut best: Option<Encoding> = None;
        for start in starts {
            let (x, value) = self.ascend(y, start, cfg);
            if !value.is_finite() {
                continue;
            }
            if best.as_ref().is_none_or(|b| value > b.log_density) {
                let latent = if wrap { x.iter().map(|v| v.rem_euclid(TWO_PI)).collect() } else { x };
                best = Some(Encoding {
                    latent,
                    log_density: value,
                });
            }
        }
        best.ok_or_else(|| Error::InvalidArgument("encoding failed: every start was non-finite".into()))
    }

    fn ascend(&self, y: &DVector<f64>, mut x: Vec<f64>, cfg: &EncodeConfig) -> (Vec<f64>, f64) {
        let (mut value, mut grad) = self.encode_objective(y, &x);
        let mut step = 0.1;
        for _ in 0..cfg.max_iter {
            let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
            if !value.is_finite() || gnorm2.sqrt() < cfg.grad_tol {
                break;
            }
            let mut accepted = false;
            while step > 1e-16 {
                let cand: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
                let (cv, cg) = self.encode_objective(y, &cand);
                if cv.is_finite() && cv >= value + 1e-4 * step * gnorm2 {
                    x = cand;
                    value = cv;
                    grad = cg;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (x, value)
    }
}

impl<'a> PosteriorPrediction<'a> {
    /// `Exp_m(E μ*)`
    pub fn mean_point(&self) -> Result<Point> {
        self.state.point_from_tangent(&self.mean)
    }

    /// Draws `Exp_m(E (μ* + √v* ε))` with `ε ~ N(0, I_d)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<Point>> {
        let sd = self.variance.sqrt();
        (0..count)
            .map(|_| {
                let eps = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                self.state.point_from_tangent(&(&self.mean + eps * sd))
            })
            .collect()
    }

    /// Gaussian log-density of a point's tangent coordinates under `N(μ*, v* I)`.
    pub fn log_density(&self, p: &Point) -> Result<f64> {
        let y = self.state.tangent_coords_of(p)?;
        let d = y.len() as f64;
        let var = self.variance.max(1e-300);
        Ok(-0.5 * d * (LN_2PI + var.ln()) - 0.5 * (y - &self.mean).norm_squared() / var)
    }

    /// The prediction as a wrapped Gaussian based at the mean prediction, with
    /// `v* I` carried to the new frame the same way conditioning does.
    pub fn to_wrapped(&self) -> Result<WrappedGaussian> {
        let base = self.mean_point()?;
        let m = &self.state.manifold;
        let frame = m.tangent_basis(&base)?;
        let t = self.state.frame.transition_to(&frame);
        let cov = &t * t.transpose() * self.variance;
        WrappedGaussian::new(m.clone(), base, crate::linalg::symmetrize(&cov))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelFamily, KernelSpec};
    use crate::manifolds::Manifold;
    use rand::Rng;

    fn sphere_state(noise: f64, seed: u64) -> ModelState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Manifold::sphere(2);
        let data: Vec<Point> = (0..12)
            .map(|i| {
                let t = i as f64 / 12.0 * 1.5 - 0.75;
                let v = [t, 0.3 * t * t + 0.02 * rng.random::<f64>(), 1.0];
                m.project(&DVector::from_column_slice(&v)).unwrap()
            })
            .collect();
        let k = KernelSpec::new(KernelFamily::Rbf, 1.0, 1.0, noise);
        ModelState::new(m, data, 1, k).unwrap()
    }

    #[test]
    fn far_latent_reverts_to_prior() {
        let s = sphere_state(1e-2, 1);
        let pred = s.predict(&[1e3]).unwrap();
        assert!(pred.mean.amax() < 1e-10);
        assert!((pred.variance - (s.kernel.signal_var() + s.kernel.noise_var())).abs() < 1e-10);
    }

    #[test]
    fn training_latent_interpolates() {
        let s = sphere_state(1e-12, 2);
        let post = s.posterior().unwrap();
        for i in 0..s.num_points() {
            let x: Vec<f64> = s.latents.row(i).iter().copied().collect();
            let mean = post.predict(&x).unwrap().mean_point().unwrap();
            assert!(s.manifold.distance(&mean, &s.data[i]).unwrap() < 1e-4);
        }
    }

    #[test]
    fn samples_stay_on_the_sphere() {
        let s = sphere_state(1e-2, 3);
        let pred = s.predict(&[0.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in pred.sample(&mut rng, 500).unwrap() {
            assert!((p.coords.norm() - 1.0).abs() < 1e-12);
        }
        let wrapped = pred.to_wrapped().unwrap();
        assert!(wrapped.cov().trace() <= 2.0 * pred.variance + 1e-12);
    }

    #[test]
    fn encode_dominates_known_candidate() {
        let s = sphere_state(1e-6, 4);
        let post = s.posterior().unwrap();
        for i in [0, 5, 11] {
            let x: Vec<f64> = s.latents.row(i).iter().copied().collect();
            let p = post.predict(&x).unwrap().mean_point().unwrap();
            let y = s.tangent_coords_of(&p).unwrap();
            let at_known = post.encode_objective(&y, &x).0;
            let enc = post.encode(&p, &EncodeConfig::default()).unwrap();
            assert!(enc.log_density >= at_known - 1e-12);
        }
    }

    #[test]
    fn encode_gradient_matches_differences() {
        let s = sphere_state(1e-2, 5);
        let post = s.posterior().unwrap();
        let y = DVector::from_column_slice(&[0.1, -0.05]);
        for x in [-1.2, -0.3, 0.4, 1.7] {
            let (_, g) = post.encode_objective(&y, &[x]);
            let h = 1e-5;
            let fd = (post.encode_objective(&y, &[x + h]).0 - post.encode_objective(&y, &[x - h]).0) / (2.0 * h);
            assert!((g[0] - fd).abs() <= 1e-5 * fd.abs().max(1.0), "{} vs {fd}", g[0]);
        }
    }

    #[test]
    fn constant_mean_encode_matches_grid_search() {
        // zero tangent data makes the predictive mean vanish everywhere
        let latents = DMatrix::from_column_slice(5, 1, &[-2.0, -1.1, 0.0, 0.4, 2.5]);
        let data = vec![Point::from_slice(&[0.0, 0.0]); 5];
        let k = KernelSpec::new(KernelFamily::Rbf, 1.0, 0.5, 1e-2);
        let s = ModelState::with_latents(Manifold::euclidean(2), data, latents, k).unwrap();
        let post = s.posterior().unwrap();
        let y = DVector::from_column_slice(&[0.45, -0.5]);
        let grid = 200_000;
        let (lo, hi) = (-8.0, 8.0);
        let kinv = JitteredCholesky::new(&s.gram()).unwrap().inverse();
        let (gx, gv): (f64, f64) = (0..=grid)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / grid as f64;
                let kstar = DVector::from_iterator(5, s.latents.iter().map(|xi| s.kernel.eval(&[x], &[*xi]).unwrap()));
                let v = s.kernel.eval(&[x], &[x]).unwrap() + s.kernel.noise_var() - kstar.dot(&(&kinv * &kstar));
                (x, -(LN_2PI + v.ln()) - y.norm_squared() / (2.0 * v))
            })
            .max_by(|a: &(f64, f64), b: &(f64, f64)| a.1.total_cmp(&b.1))
            .unwrap();
        let enc = post
            .encode_tangent(&y, &EncodeConfig { restarts: 20, ..Default::default() })
            .unwrap();
        assert!(enc.log_density >= gv - 1e-9);
        let x = enc.latent[0];
        let at_x = post.encode_objective(&y, &[x]).0;
        assert!((at_x - enc.log_density).abs() < 1e-12);
        // the optimum is unique on this configuration
        assert!((x - gx).abs() < 2.0 * (hi - lo) / grid as f64 + 1e-4, "{x} vs {gx}");
    }

    #[test]
    fn periodic_encodings_are_wrapped() {
        let m = Manifold::sphere(2);
        let data: Vec<Point> = (0..16)
            .map(|i| {
                let t = i as f64 / 16.0 * TWO_PI;
                m.project(&DVector::from_column_slice(&[0.5 * t.cos(), 0.5 * t.sin(), 1.0])).unwrap()
            })
            .collect();
        let s = ModelState::new(m, data.clone(), 1, KernelSpec::periodic()).unwrap();
        let post = s.posterior().unwrap();
        for p in &data {
            let e = post.encode(p, &EncodeConfig::default()).unwrap();
            assert!((0.0..TWO_PI).contains(&e.latent[0]));
        }
    }
}
