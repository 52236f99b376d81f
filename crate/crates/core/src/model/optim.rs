use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{evaluate, ModelState, TWO_PI};
use crate::error::{Error, Result};
use crate::kernels::NUM_HYPER;

/// Adaptive-moment gradient ascent settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    /// Stop once the gradient ∞-norm falls below this.
    pub grad_tol: f64,
    pub optimize_latents: bool,
    pub optimize_hyper: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iter: 2000,
            grad_tol: 1e-6,
            optimize_latents: true,
            optimize_hyper: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitSummary {
    pub iterations: usize,
    pub converged: bool,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub final_grad_norm: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One ascent step along `grad`.
    fn step(&mut self, cfg: &OptimizerConfig, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] += cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

/// Parameter vector layout: latents (row-major) followed by the log-hyperparameters.
fn pack(state: &ModelState) -> Vec<f64> {
    let mut p: Vec<f64> = state.latents.transpose().iter().copied().collect();
    p.extend_from_slice(&state.kernel.hyper());
    p
}

fn unpack(state: &mut ModelState, params: &[f64]) {
    let (n, q) = state.latents.shape();
    state.latents = DMatrix::from_row_slice(n, q, &params[..n * q]);
    let mut h = [0.0; NUM_HYPER];
    h.copy_from_slice(&params[n * q..]);
    state.kernel.set_hyper(h);
}

impl ModelState {
    /// Maximizes the objective jointly over latents and log-hyperparameters.
    ///
    /// Every evaluated objective is appended to `fit_trace` (iteration 0 is the
    /// starting point). On return the state holds the converged parameters, or
    /// the best parameters seen if the iteration budget ran out, so the final
    /// objective is never below the initial one. A non-finite objective or a
    /// failed factorization aborts with the trace and restores the best
    /// parameters seen so far.
    pub fn fit(&mut self, cfg: &OptimizerConfig) -> Result<FitSummary> {
        let initial = self.objective()?;
        if cfg.max_iter == 0 {
            return Ok(FitSummary {
                iterations: 0,
                converged: false,
                initial_objective: initial,
                final_objective: initial,
                final_grad_norm: self.gradients()?.max_abs(),
            });
        }
        let (n, q) = self.latents.shape();
        let latent_len = n * q;
        let mut params = pack(self);
        let mut adam = Adam::new(params.len());
        let mut best = (f64::NEG_INFINITY, params.clone());
        let mut converged = false;
        let mut grad_norm = f64::INFINITY;
        let mut iterations = 0;
        let mut current = f64::NEG_INFINITY;
        let mut trace = std::mem::take(&mut self.fit_trace);
        let offset = trace.last().map(|(i, _)| i + 1).unwrap_or(0);

        for it in 0..=cfg.max_iter {
            let eval = match evaluate(&self.kernel, &self.latents, &self.tangent_data, true) {
                Ok(e) if e.objective.is_finite() => e,
                Ok(e) => {
                    trace.push((offset + it, e.objective));
                    return Err(self.abort(best.1, offset + it, trace));
                }
                Err(_) => return Err(self.abort(best.1, offset + it, trace)),
            };
            current = eval.objective;
            trace.push((offset + it, current));
            if current > best.0 {
                best = (current, params.clone());
            }
            let g = eval.gradients.expect("gradients requested");
            let mut flat: Vec<f64> = if cfg.optimize_latents {
                g.latents.transpose().iter().copied().collect()
            } else {
                vec![0.0; latent_len]
            };
            if cfg.optimize_hyper {
                flat.extend_from_slice(&g.hyper);
            } else {
                flat.extend_from_slice(&[0.0; NUM_HYPER]);
            }
            grad_norm = flat.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
            if grad_norm < cfg.grad_tol {
                converged = true;
                break;
            }
            if it == cfg.max_iter {
                break;
            }
            adam.step(cfg, &mut params, &flat);
            if self.wraps_latents() {
                for v in params[..latent_len].iter_mut() {
                    *v = v.rem_euclid(TWO_PI);
                }
            }
            unpack(self, &params);
            iterations = it + 1;
        }

        if !(converged && current >= initial) {
            unpack(self, &best.1);
            current = best.0;
            grad_norm = self.gradients()?.max_abs();
        }
        self.fit_trace = trace;
        Ok(FitSummary {
            iterations,
            converged,
            initial_objective: initial,
            final_objective: current,
            final_grad_norm: grad_norm,
        })
    }

    fn abort(&mut self, best: Vec<f64>, iteration: usize, trace: Vec<(usize, f64)>) -> Error {
        unpack(self, &best);
        self.fit_trace = trace.clone();
        Error::NonFiniteObjective { iteration, trace }
    }
}
