//! Synthetic stand-ins for the experiment datasets. Every generated point
//! carries its ground-truth latent value under the `latent` label.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use wgplvm::data::{procrustes_align, Dataset};
use wgplvm::manifolds::spd;
use wgplvm::{Manifold, Point, Result, Tangent};

pub const LATENT_LABEL: &str = "latent";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Noisy small circle on S² around the north pole.
    SphereCircle,
    /// Noisy segment of a Log-Euclidean geodesic through the identity.
    SpdGeodesic,
    /// Polygons deformed smoothly by one parameter.
    KendallFamily,
}

impl SynthKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SynthKind::SphereCircle => "sphere_circle",
            SynthKind::SpdGeodesic => "spd_geodesic",
            SynthKind::KendallFamily => "kendall_family",
        }
    }
}

impl std::str::FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sphere_circle" => Ok(SynthKind::SphereCircle),
            "spd_geodesic" => Ok(SynthKind::SpdGeodesic),
            "kendall_family" => Ok(SynthKind::KendallFamily),
            other => Err(format!(
                "unknown generator '{other}' (expected sphere_circle, spd_geodesic or kendall_family)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub size: usize,
    pub noise: f64,
    pub radius: f64,
    pub landmarks: usize,
    pub spd_dim: usize,
    /// Half-length of the generated SPD geodesic segment.
    pub span: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            size: 100,
            noise: 0.05,
            radius: 1.0,
            landmarks: 8,
            spd_dim: 3,
            span: 1.5,
        }
    }
}

impl SynthParams {
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.size < 3 {
            return Err("size must be at least 3".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err("noise must be a finite non-negative number".into());
        }
        if !(self.radius > 0.0 && self.radius <= FRAC_PI_2) {
            return Err("radius must lie in (0, pi/2]".into());
        }
        if self.landmarks < 3 {
            return Err("landmarks must be at least 3".into());
        }
        if !(self.span > 0.0 && self.span.is_finite()) {
            return Err("span must be positive".into());
        }
        if self.spd_dim < 2 {
            return Err("spd_dim must be at least 2".into());
        }
        Ok(())
    }
}

fn sorted_uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut t: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    t.sort_by(f64::total_cmp);
    t
}

fn with_latents(d: Dataset, t: &[f64]) -> Result<Dataset> {
    d.with_label(LATENT_LABEL, t.iter().map(|v| format!("{v}")).collect())
}

pub fn generate(kind: SynthKind, params: &SynthParams, seed: u64) -> Result<Dataset> {
    params.check().map_err(wgplvm::Error::InvalidArgument)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SynthKind::SphereCircle => sphere_circle(params, &mut rng),
        SynthKind::SpdGeodesic => spd_geodesic(params, &mut rng),
        SynthKind::KendallFamily => kendall_family(params, &mut rng),
    }
}

/// Points at geodesic distance `radius` from the north pole at uniformly
/// drawn angles, each moved by isotropic tangent noise.
fn sphere_circle(params: &SynthParams, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let m = Manifold::sphere(2);
    let angles = sorted_uniform(rng, params.size, 0.0, TAU);
    let (s, c) = params.radius.sin_cos();
    let mut points = Vec::with_capacity(params.size);
    for t in &angles {
        let p = Point::from_slice(&[s * t.cos(), s * t.sin(), c]);
        let p = if params.noise > 0.0 {
            let v = m.random_tangent(&p, params.noise, rng)?;
            m.exp(&p, &v)?
        } else {
            p
        };
        points.push(p);
    }
    with_latents(Dataset::new(m, points, "synthetic sphere_circle")?, &angles)
}

fn random_rotation(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// `exp(t·D + noise)` for `t` uniform in [−span, span], where `D` has eigenvalues
/// spread evenly over [−0.8, 1] in a random basis.
fn spd_geodesic(params: &SynthParams, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let n = params.spd_dim;
    let m = Manifold::spd(n);
    let r = random_rotation(rng, n);
    let profile = DVector::from_fn(n, |k, _| 1.0 - 1.8 * k as f64 / (n - 1) as f64);
    let direction = spd::flatten(&(&r * DMatrix::from_diagonal(&profile) * r.transpose()));
    let identity = Point::new(spd::flatten(&DMatrix::identity(n, n)));
    let ts = sorted_uniform(rng, params.size, -params.span, params.span);
    let len = spd::coordinate_len(n);
    let mut points = Vec::with_capacity(params.size);
    for t in &ts {
        let noise = DVector::from_fn(len, |_, _| params.noise * rng.sample::<f64, _>(StandardNormal));
        points.push(m.exp(&identity, &Tangent::new(&direction * *t + noise))?);
    }
    with_latents(Dataset::new(m, points, "synthetic spd_geodesic")?, &ts)
}

/// Regular polygons whose radial profile blends a two-fold and a three-fold
/// harmonic with weight `s ∈ [0, 1]`, plus landmark noise; all shapes are
/// aligned to the first one.
fn kendall_family(params: &SynthParams, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let k = params.landmarks;
    let m = Manifold::kendall(k);
    let ss = sorted_uniform(rng, params.size, 0.0, 1.0);
    let mut shapes = Vec::with_capacity(params.size);
    for s in &ss {
        let raw = DVector::from_fn(2 * k, |i, _| {
            let phi = TAU * (i / 2) as f64 / k as f64;
            let rho = 1.0 + 0.3 * s * (2.0 * phi).cos() + 0.2 * (1.0 - s) * (3.0 * phi).sin();
            let base = if i % 2 == 0 { rho * phi.cos() } else { rho * phi.sin() };
            base + params.noise * rng.sample::<f64, _>(StandardNormal)
        });
        shapes.push(m.project(&raw)?);
    }
    let reference = shapes[0].coords.clone();
    let points = shapes
        .into_iter()
        .map(|p| Point::new(procrustes_align(&reference, &p.coords)))
        .collect();
    with_latents(Dataset::new(m, points, "synthetic kendall_family")?, &ss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use wgplvm::model::{init_latents_pga, tangent_coordinates};

    #[test]
    fn noise_free_circle_has_constant_radius() {
        let p = SynthParams {
            noise: 0.0,
            radius: 0.7,
            ..Default::default()
        };
        let d = generate(SynthKind::SphereCircle, &p, 1).unwrap();
        let north = Point::from_slice(&[0.0, 0.0, 1.0]);
        for q in &d.points {
            assert!((d.manifold.distance(&north, q).unwrap() - 0.7).abs() < 1e-12);
        }
        assert_eq!(d.labels[LATENT_LABEL].len(), 100);
    }

    #[test]
    fn noise_free_spd_data_lie_on_one_geodesic() {
        let p = SynthParams {
            noise: 0.0,
            size: 40,
            ..Default::default()
        };
        let d = generate(SynthKind::SpdGeodesic, &p, 2).unwrap();
        let (_, _, y) = tangent_coordinates(&d.manifold, &d.points).unwrap();
        let cov = y.transpose() * &y;
        let eig = wgplvm::linalg::sorted_symmetric_eigen(&cov).0;
        assert!(eig[0] / eig.sum() > 0.999);
        assert!(init_latents_pga(&d.manifold, &d.points, 1).is_ok());
    }

    #[test]
    fn generators_are_deterministic() {
        for kind in [SynthKind::SphereCircle, SynthKind::SpdGeodesic, SynthKind::KendallFamily] {
            let a = generate(kind, &SynthParams::default(), 5).unwrap();
            let b = generate(kind, &SynthParams::default(), 5).unwrap();
            let c = generate(kind, &SynthParams::default(), 6).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let p = SynthParams {
            size: 2,
            ..Default::default()
        };
        assert!(generate(SynthKind::SphereCircle, &p, 0).is_err());
    }
}
