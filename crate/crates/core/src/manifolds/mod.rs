//! Riemannian manifolds used as data spaces.
//!
//! Every manifold stores points and tangent vectors in a fixed ambient
//! coordinate representation (see [`Manifold::ambient_dim`]). In all supported
//! cases the Riemannian metric, expressed in those coordinates, is the flat
//! Euclidean inner product restricted to the tangent subspace, so an
//! orthonormal [`Frame`] is orthonormal in the ordinary sense.
//!
//! | kind | ambient coordinates | intrinsic dim |
//! |------|--------------------|---------------|
//! | `Euclidean(n)` | the vector itself | n |
//! | `Sphere(n)` | unit vector in ℝⁿ⁺¹ | n |
//! | `Kendall2D(N)` | centered unit pre-shape, `x1,y1,…` | 2N − 4 |
//! | `SpdLogEuclidean(n)` | √2-scaled upper triangle | n(n+1)/2 |
//! | `Product` | concatenation | sum |

mod kendall;
mod sphere;
pub mod spd;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kendall::rotate as rotate_shape;

/// Tolerance of the point-validity checks.
pub const VALIDITY_TOL: f64 = 1e-9;

pub const FRECHET_TOL: f64 = 1e-10;
pub const FRECHET_MAX_ITER: usize = 1000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Manifold {
    Euclidean { dim: usize },
    Sphere { dim: usize },
    Kendall2D { landmarks: usize },
    SpdLogEuclidean { n: usize },
    Product { factors: Vec<Manifold> },
}

/// A point on a manifold in ambient coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub coords: DVector<f64>,
}

/// A tangent vector in ambient coordinates. The basepoint is carried
/// separately by the caller.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    pub coords: DVector<f64>,
}

impl Point {
    pub fn new(coords: DVector<f64>) -> Self {
        Self { coords }
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(coords))
    }
}

impl Tangent {
    pub fn new(coords: DVector<f64>) -> Self {
        Self { coords }
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(coords))
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(DVector::zeros(len))
    }

    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }
}

impl Manifold {
    pub fn euclidean(dim: usize) -> Self {
        Manifold::Euclidean { dim }
    }

    pub fn sphere(dim: usize) -> Self {
        Manifold::Sphere { dim }
    }

    pub fn kendall(landmarks: usize) -> Self {
        Manifold::Kendall2D { landmarks }
    }

    pub fn spd(n: usize) -> Self {
        Manifold::SpdLogEuclidean { n }
    }

    pub fn product(factors: Vec<Manifold>) -> Self {
        Manifold::Product { factors }
    }

    /// Length of the canonical coordinate vector.
    pub fn ambient_dim(&self) -> usize {
        match self {
            Manifold::Euclidean { dim } => *dim,
            Manifold::Sphere { dim } => dim + 1,
            Manifold::Kendall2D { landmarks } => 2 * landmarks,
            Manifold::SpdLogEuclidean { n } => spd::coordinate_len(*n),
            Manifold::Product { factors } => factors.iter().map(Manifold::ambient_dim).sum(),
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            Manifold::Euclidean { dim } => *dim,
            Manifold::Sphere { dim } => *dim,
            Manifold::Kendall2D { landmarks } => (2 * landmarks).saturating_sub(4),
            Manifold::SpdLogEuclidean { n } => spd::coordinate_len(*n),
            Manifold::Product { factors } => factors.iter().map(Manifold::intrinsic_dim).sum(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Manifold::Euclidean { dim } => format!("Euclidean({dim})"),
            Manifold::Sphere { dim } => format!("Sphere({dim})"),
            Manifold::Kendall2D { landmarks } => format!("Kendall2D({landmarks})"),
            Manifold::SpdLogEuclidean { n } => format!("SPD({n})"),
            Manifold::Product { factors } => factors
                .iter()
                .map(Manifold::name)
                .collect::<Vec<_>>()
                .join(" x "),
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        let expected = self.ambient_dim();
        if len != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: len,
            });
        }
        Ok(())
    }

    /// Splits a coordinate vector of a product into its factor blocks.
    fn split<'a>(factors: &'a [Manifold], x: &DVector<f64>) -> Vec<(&'a Manifold, DVector<f64>)> {
        let mut offset = 0;
        factors
            .iter()
            .map(|f| {
                let len = f.ambient_dim();
                let block = x.rows(offset, len).into_owned();
                offset += len;
                (f, block)
            })
            .collect()
    }

    fn concat(blocks: Vec<DVector<f64>>) -> DVector<f64> {
        let len = blocks.iter().map(|b| b.len()).sum();
        DVector::from_iterator(len, blocks.into_iter().flat_map(|b| b.data.as_vec().clone()))
    }

    /// Size of the worst violated point invariant; zero for a valid point.
    pub fn violation(&self, coords: &DVector<f64>) -> Result<f64> {
        self.check_len(coords.len())?;
        if coords.iter().any(|v| !v.is_finite()) {
            return Ok(f64::INFINITY);
        }
        Ok(match self {
            Manifold::Euclidean { .. } => 0.0,
            Manifold::Sphere { .. } => sphere::violation(coords),
            Manifold::Kendall2D { .. } => kendall::violation(coords),
            Manifold::SpdLogEuclidean { n } => spd::violation(coords, *n),
            Manifold::Product { factors } => {
                let mut worst: f64 = 0.0;
                for (f, block) in Self::split(factors, coords) {
                    worst = worst.max(f.violation(&block)?);
                }
                worst
            }
        })
    }

    /// Checks the invariants of a point: unit norm on spheres, centered unit
    /// pre-shape for Kendall, positive definiteness for SPD.
    pub fn validate(&self, p: &Point) -> Result<()> {
        let v = self.violation(&p.coords)?;
        let ok = match self {
            Manifold::SpdLogEuclidean { .. } => v == 0.0,
            Manifold::Product { factors } => {
                for (f, block) in Self::split(factors, &p.coords) {
                    f.validate(&Point::new(block))?;
                }
                true
            }
            _ => v <= VALIDITY_TOL,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidPoint(format!(
                "point violates {} invariants by {v:e}",
                self.name()
            )))
        }
    }

    pub fn exp(&self, p: &Point, v: &Tangent) -> Result<Point> {
        self.check_len(p.coords.len())?;
        self.check_len(v.coords.len())?;
        if !matches!(self, Manifold::SpdLogEuclidean { .. } | Manifold::Product { .. }) {
            self.validate(p)?;
        }
        let out = match self {
            Manifold::Euclidean { .. } => &p.coords + &v.coords,
            Manifold::Sphere { .. } => sphere::exp(&p.coords, &v.coords),
            Manifold::Kendall2D { .. } => kendall::exp(&p.coords, &v.coords),
            Manifold::SpdLogEuclidean { n } => spd::exp(&p.coords, &v.coords, *n)?,
            Manifold::Product { factors } => {
                let vs = Self::split(factors, &v.coords);
                let blocks = Self::split(factors, &p.coords)
                    .into_iter()
                    .zip(vs)
                    .map(|((f, pb), (_, vb))| f.exp(&Point::new(pb), &Tangent::new(vb)).map(|q| q.coords))
                    .collect::<Result<Vec<_>>>()?;
                Self::concat(blocks)
            }
        };
        Ok(Point::new(out))
    }

    /// Minimal-norm preimage of `q` under `Exp_p`. Fails with
    /// [`Error::CutLocus`] when that preimage is not unique.
    pub fn log(&self, p: &Point, q: &Point) -> Result<Tangent> {
        self.check_len(p.coords.len())?;
        self.check_len(q.coords.len())?;
        if !matches!(self, Manifold::SpdLogEuclidean { .. } | Manifold::Product { .. }) {
            self.validate(p)?;
            self.validate(q)?;
        }
        let out = match self {
            Manifold::Euclidean { .. } => &q.coords - &p.coords,
            Manifold::Sphere { .. } => sphere::log(&p.coords, &q.coords)?,
            Manifold::Kendall2D { .. } => kendall::log(&p.coords, &q.coords)?,
            Manifold::SpdLogEuclidean { n } => spd::log(&p.coords, &q.coords, *n)?,
            Manifold::Product { factors } => {
                let qs = Self::split(factors, &q.coords);
                let blocks = Self::split(factors, &p.coords)
                    .into_iter()
                    .zip(qs)
                    .map(|((f, pb), (_, qb))| f.log(&Point::new(pb), &Point::new(qb)).map(|v| v.coords))
                    .collect::<Result<Vec<_>>>()?;
                Self::concat(blocks)
            }
        };
        Ok(Tangent::new(out))
    }

    /// Geodesic distance. Antipodal sphere pairs return π and
    /// rotation-degenerate Kendall pairs return π/2.
    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64> {
        self.check_len(p.coords.len())?;
        self.check_len(q.coords.len())?;
        match self {
            Manifold::Euclidean { .. } => Ok((&p.coords - &q.coords).norm()),
            Manifold::Sphere { .. } => {
                self.validate(p)?;
                self.validate(q)?;
                Ok(sphere::distance(&p.coords, &q.coords))
            }
            Manifold::Kendall2D { .. } => {
                self.validate(p)?;
                self.validate(q)?;
                Ok(kendall::distance(&p.coords, &q.coords))
            }
            Manifold::SpdLogEuclidean { .. } => Ok(self.log(p, q)?.norm()),
            Manifold::Product { factors } => {
                let qs = Self::split(factors, &q.coords);
                let mut sq = 0.0;
                for ((f, pb), (_, qb)) in Self::split(factors, &p.coords).into_iter().zip(qs) {
                    let d = f.distance(&Point::new(pb), &Point::new(qb))?;
                    sq += d * d;
                }
                Ok(sq.sqrt())
            }
        }
    }

    /// Orthogonal projection of an ambient vector onto the tangent space at `p`.
    pub fn to_tangent(&self, p: &Point, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Manifold::Euclidean { .. } | Manifold::SpdLogEuclidean { .. } => v.clone(),
            Manifold::Sphere { .. } => sphere::tangent_projection(&p.coords, v),
            Manifold::Kendall2D { .. } => kendall::horizontal_projection(&p.coords, v),
            Manifold::Product { factors } => {
                let vs = Self::split(factors, v);
                let blocks = Self::split(factors, &p.coords)
                    .into_iter()
                    .zip(vs)
                    .map(|((f, pb), (_, vb))| f.to_tangent(&Point::new(pb), &vb))
                    .collect();
                Self::concat(blocks)
            }
        }
    }

    /// Deterministic orthonormal frame of the tangent space at `p`, built by
    /// orthonormalizing the tangent projections of the ambient axes in order.
    pub fn tangent_basis(&self, p: &Point) -> Result<Frame> {
        self.check_len(p.coords.len())?;
        let ambient = self.ambient_dim();
        let target = self.intrinsic_dim();
        let basis = match self {
            Manifold::Euclidean { .. } | Manifold::SpdLogEuclidean { .. } => {
                DMatrix::identity(ambient, ambient)
            }
            Manifold::Product { factors } => {
                let mut basis = DMatrix::zeros(ambient, target);
                let (mut row, mut col) = (0, 0);
                for (f, block) in Self::split(factors, &p.coords) {
                    let sub = f.tangent_basis(&Point::new(block))?;
                    basis
                        .view_mut((row, col), (sub.basis.nrows(), sub.basis.ncols()))
                        .copy_from(&sub.basis);
                    row += sub.basis.nrows();
                    col += sub.basis.ncols();
                }
                basis
            }
            _ => {
                self.validate(p)?;
                let mut vectors: Vec<DVector<f64>> = Vec::with_capacity(target);
                for axis in 0..ambient {
                    if vectors.len() == target {
                        break;
                    }
                    let mut e = DVector::zeros(ambient);
                    e[axis] = 1.0;
                    let mut u = self.to_tangent(p, &e);
                    // two passes of modified Gram-Schmidt
                    for _ in 0..2 {
                        for b in &vectors {
                            let c = b.dot(&u);
                            u -= b * c;
                        }
                        u = self.to_tangent(p, &u);
                    }
                    let n = u.norm();
                    if n > 1e-6 {
                        vectors.push(u / n);
                    }
                }
                if vectors.len() != target {
                    return Err(Error::InvalidPoint(format!(
                        "tangent frame has rank {} instead of {target}",
                        vectors.len()
                    )));
                }
                DMatrix::from_columns(&vectors)
            }
        };
        Ok(Frame { basis })
    }

    /// Nearest point on the manifold for an arbitrary ambient vector.
    pub fn project(&self, coords: &DVector<f64>) -> Result<Point> {
        self.check_len(coords.len())?;
        let out = match self {
            Manifold::Euclidean { .. } => coords.clone(),
            Manifold::Sphere { .. } => sphere::project(coords)?,
            Manifold::Kendall2D { .. } => kendall::project(coords)?,
            Manifold::SpdLogEuclidean { n } => spd::project(coords, *n),
            Manifold::Product { factors } => {
                let blocks = Self::split(factors, coords)
                    .into_iter()
                    .map(|(f, b)| f.project(&b).map(|p| p.coords))
                    .collect::<Result<Vec<_>>>()?;
                Self::concat(blocks)
            }
        };
        Ok(Point::new(out))
    }

    /// Fréchet mean by the fixed-point iteration
    /// `μ ← Exp_μ(mean_i Log_μ(p_i))`, started at the first point.
    pub fn frechet_mean(&self, points: &[Point], tol: f64, max_iter: usize) -> Result<Point> {
        let first = points
            .first()
            .ok_or_else(|| Error::InvalidArgument("Frechet mean of an empty set".into()))?;
        for p in points {
            self.check_len(p.coords.len())?;
        }
        let inv_n = 1.0 / points.len() as f64;
        if let Manifold::Euclidean { .. } = self {
            let sum = points
                .iter()
                .fold(DVector::zeros(self.ambient_dim()), |acc, p| acc + &p.coords);
            return Ok(Point::new(sum * inv_n));
        }
        let mut mean = first.clone();
        let mut step_norm = f64::INFINITY;
        for _ in 0..max_iter {
            let mut step = DVector::zeros(self.ambient_dim());
            for p in points {
                step += self.log(&mean, p)?.coords;
            }
            step *= inv_n;
            step_norm = step.norm();
            mean = self.exp(&mean, &Tangent::new(step))?;
            if step_norm < tol {
                return Ok(mean);
            }
        }
        Err(Error::FrechetNotConverged {
            iterations: max_iter,
            step_norm,
            last: mean.coords.as_slice().to_vec(),
        })
    }

    /// Draws a point from a simple reference distribution: normalized
    /// Gaussians on spheres and pre-shapes, `exp` of a Gaussian symmetric
    /// matrix on SPD, standard normal on Euclidean space.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let mut gauss = |len: usize| DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal));
        match self {
            Manifold::Euclidean { dim } => Point::new(gauss(*dim)),
            Manifold::Sphere { dim } => loop {
                if let Ok(p) = sphere::project(&gauss(dim + 1)) {
                    return Point::new(p);
                }
            },
            Manifold::Kendall2D { landmarks } => loop {
                if let Ok(p) = kendall::project(&gauss(2 * landmarks)) {
                    return Point::new(p);
                }
            },
            Manifold::SpdLogEuclidean { n } => {
                let s = gauss(spd::coordinate_len(*n)) * 0.5;
                Point::new(spd::exp_coords(&s, *n))
            }
            Manifold::Product { factors } => {
                let blocks = factors.iter().map(|f| f.random_point(rng).coords).collect();
                Point::new(Self::concat(blocks))
            }
        }
    }

    /// Random tangent vector at `p` with i.i.d. `N(0, scale²)` intrinsic coordinates.
    pub fn random_tangent<R: Rng + ?Sized>(&self, p: &Point, scale: f64, rng: &mut R) -> Result<Tangent> {
        let frame = self.tangent_basis(p)?;
        let c = DVector::from_fn(frame.dim(), |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        frame.from_intrinsic(&c)
    }
}

/// Orthonormal basis of one tangent space, stored column-wise in ambient
/// coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub basis: DMatrix<f64>,
}

impl Frame {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn to_intrinsic(&self, v: &Tangent) -> Result<DVector<f64>> {
        if v.coords.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                found: v.coords.len(),
            });
        }
        Ok(self.basis.tr_mul(&v.coords))
    }

    pub fn from_intrinsic(&self, c: &DVector<f64>) -> Result<Tangent> {
        if c.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: c.len(),
            });
        }
        Ok(Tangent::new(&self.basis * c))
    }

    /// Matrix taking intrinsic coordinates in `self` to intrinsic coordinates
    /// in `other` through the shared ambient representation.
    pub fn transition_to(&self, other: &Frame) -> DMatrix<f64> {
        other.basis.tr_mul(&self.basis)
    }
}
