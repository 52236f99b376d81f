//! Kendall shape space of planar landmark configurations.
//!
//! Shapes are stored as interleaved coordinates `x1, y1, …, xN, yN` of a
//! centered, unit-norm pre-shape. Rotations are quotiented out by aligning the
//! second argument of every two-point operation to the first; reflections are
//! not identified.

use nalgebra::DVector;

use super::sphere;
use crate::error::{Error, Result};

/// Below this modulus of the complex inner product the optimal rotation is
/// undefined.
const ALIGNMENT_DEGENERACY: f64 = 1e-10;

/// Complex inner product `Σ conj(p_k) q_k` returned as `(re, im)`.
pub(crate) fn complex_inner(p: &DVector<f64>, q: &DVector<f64>) -> (f64, f64) {
    let mut re = 0.0;
    let mut im = 0.0;
    for k in 0..p.len() / 2 {
        let (px, py) = (p[2 * k], p[2 * k + 1]);
        let (qx, qy) = (q[2 * k], q[2 * k + 1]);
        re += px * qx + py * qy;
        im += px * qy - py * qx;
    }
    (re, im)
}

pub fn rotate(x: &DVector<f64>, angle: f64) -> DVector<f64> {
    let (s, c) = angle.sin_cos();
    let mut out = x.clone();
    for k in 0..x.len() / 2 {
        let (a, b) = (x[2 * k], x[2 * k + 1]);
        out[2 * k] = c * a - s * b;
        out[2 * k + 1] = s * a + c * b;
    }
    out
}

/// Rotates `q` so that it minimizes the Procrustes distance to `p`.
pub(crate) fn align(p: &DVector<f64>, q: &DVector<f64>) -> Result<DVector<f64>> {
    let (re, im) = complex_inner(p, q);
    if re.hypot(im) < ALIGNMENT_DEGENERACY {
        return Err(Error::CutLocus);
    }
    Ok(rotate(q, -im.atan2(re)))
}

fn centroid(x: &DVector<f64>) -> (f64, f64) {
    let n = (x.len() / 2) as f64;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for k in 0..x.len() / 2 {
        cx += x[2 * k];
        cy += x[2 * k + 1];
    }
    (cx / n, cy / n)
}

pub(crate) fn center(x: &DVector<f64>) -> DVector<f64> {
    let (cx, cy) = centroid(x);
    let mut out = x.clone();
    for k in 0..x.len() / 2 {
        out[2 * k] -= cx;
        out[2 * k + 1] -= cy;
    }
    out
}

/// Orthogonal projection onto the horizontal subspace at `p`: centroid-free,
/// orthogonal to `p` and to the rotation generator `i·p`.
pub(crate) fn horizontal_projection(p: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let centered = center(v);
    let rot = rotate(p, std::f64::consts::FRAC_PI_2);
    let rot_norm2 = rot.norm_squared();
    let mut out = &centered - p * p.dot(&centered);
    if rot_norm2 > 0.0 {
        out -= &rot * (rot.dot(&centered) / rot_norm2);
    }
    out
}

pub(crate) fn exp(p: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let q = sphere::exp(p, v);
    let c = center(&q);
    let n = c.norm();
    c / n
}

pub(crate) fn log(p: &DVector<f64>, q: &DVector<f64>) -> Result<DVector<f64>> {
    let aligned = align(p, q)?;
    let v = sphere::log(p, &aligned)?;
    Ok(horizontal_projection(p, &v))
}

/// Procrustes geodesic distance `arccos |⟨p, q⟩_ℂ|`.
pub(crate) fn distance(p: &DVector<f64>, q: &DVector<f64>) -> f64 {
    match align(p, q) {
        Ok(aligned) => sphere::distance(p, &aligned),
        // orthogonal in every rotation
        Err(_) => std::f64::consts::FRAC_PI_2,
    }
}

pub(crate) fn project(x: &DVector<f64>) -> Result<DVector<f64>> {
    let c = center(x);
    let n = c.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroProjection);
    }
    Ok(c / n)
}

pub(crate) fn violation(x: &DVector<f64>) -> f64 {
    let (cx, cy) = centroid(x);
    (x.norm() - 1.0).abs().max(cx.abs()).max(cy.abs())
}
