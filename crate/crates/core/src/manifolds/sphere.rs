//! Unit sphere in ambient coordinates.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Angles below this use second-order Taylor forms.
pub(crate) const SMALL_ANGLE: f64 = 1e-7;
/// Distance from π below which a pair is treated as antipodal.
pub(crate) const CUT_LOCUS_GAP: f64 = 1e-8;

pub(crate) fn exp(p: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let norm = v.norm();
    let q = if norm < SMALL_ANGLE {
        p * (1.0 - 0.5 * norm * norm) + v * (1.0 - norm * norm / 6.0)
    } else {
        p * norm.cos() + v * (norm.sin() / norm)
    };
    let n = q.norm();
    q / n
}

/// Returns the geodesic angle together with the unit-speed direction (or the
/// raw orthogonal residual in the small-angle regime).
pub(crate) fn log(p: &DVector<f64>, q: &DVector<f64>) -> Result<DVector<f64>> {
    let c = p.dot(q).clamp(-1.0, 1.0);
    let w = q - p * c;
    let s = w.norm();
    let theta = s.atan2(c);
    if std::f64::consts::PI - theta < CUT_LOCUS_GAP {
        return Err(Error::CutLocus);
    }
    if theta < SMALL_ANGLE {
        // θ / sin θ ≈ 1 + θ²/6
        return Ok(w * (1.0 + theta * theta / 6.0));
    }
    Ok(w * (theta / s))
}

pub(crate) fn distance(p: &DVector<f64>, q: &DVector<f64>) -> f64 {
    let c = p.dot(q).clamp(-1.0, 1.0);
    let s = (q - p * c).norm();
    s.atan2(c)
}

pub(crate) fn tangent_projection(p: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    v - p * p.dot(v)
}

pub(crate) fn project(x: &DVector<f64>) -> Result<DVector<f64>> {
    let n = x.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroProjection);
    }
    Ok(x / n)
}

pub(crate) fn violation(x: &DVector<f64>) -> f64 {
    (x.norm() - 1.0).abs()
}
