//! Dataset loading and preprocessing.
//!
//! All loaders read comma-separated files with `.` decimals. Lines starting
//! with `#` are ignored. Points are validated on load and never silently
//! repaired; errors carry the file path and line number.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifolds::{rotate_shape, spd, Manifold, Point};

/// Accepted deviation of a direction's norm from one.
pub const DIRECTION_NORM_TOL: f64 = 1e-6;
/// Minimum eigenvalue accepted for ingested SPD matrices.
pub const SPD_MIN_EIGEN: f64 = 1e-12;
/// Relative diagonal jitter added to rolling covariances.
pub const COVARIANCE_JITTER: f64 = 1e-8;

pub const LABEL_TIMESTAMP: &str = "timestamp";
pub const LABEL_SPECIES: &str = "species";
pub const LABEL_GENERIC: &str = "label";

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifold: Manifold,
    pub points: Vec<Point>,
    /// Per-point metadata columns keyed by name; each has one entry per point.
    pub labels: BTreeMap<String, Vec<String>>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(manifold: Manifold, points: Vec<Point>, provenance: impl Into<String>) -> Result<Self> {
        for p in &points {
            manifold.validate(p)?;
        }
        Ok(Self {
            manifold,
            points,
            labels: BTreeMap::new(),
            provenance: provenance.into(),
        })
    }

    pub fn with_label(mut self, key: &str, values: Vec<String>) -> Result<Self> {
        if values.len() != self.points.len() {
            return Err(Error::InvalidArgument(format!(
                "label '{key}' has {} entries for {} points",
                values.len(),
                self.points.len()
            )));
        }
        self.labels.insert(key.to_string(), values);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            manifold: self.manifold.clone(),
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
            labels: self
                .labels
                .iter()
                .map(|(k, v)| (k.clone(), indices.iter().map(|&i| v[i].clone()).collect()))
                .collect(),
            provenance: self.provenance.clone(),
        }
    }
}

struct Row {
    line: u64,
    values: Vec<f64>,
    label: Option<String>,
}

#[derive(Clone, Copy)]
enum Layout {
    /// Any number of values, no label.
    Free,
    /// Exactly this many values, optionally followed by a label.
    Fixed(usize),
    /// An even number of values fixed by the first row; an odd field count
    /// means a trailing label.
    Pairs,
}

fn read_rows(path: &Path, layout: Layout) -> Result<Vec<Row>> {
    let shown = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::data(&shown, 0, e.to_string()))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::data(&shown, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let fields: Vec<&str> = record.iter().collect();
        let width = match layout {
            Layout::Free => None,
            Layout::Fixed(w) => Some(w),
            Layout::Pairs => {
                let w = rows.first().map(|r: &Row| r.values.len()).unwrap_or(fields.len() / 2 * 2);
                Some(w)
            }
        };
        let (numeric, label) = match width {
            Some(w) if fields.len() == w + 1 => (&fields[..w], Some(fields[w].to_string())),
            Some(w) if fields.len() != w => {
                return Err(Error::data(
                    &shown,
                    line,
                    format!("expected {w} values (plus optional label), found {}", fields.len()),
                ))
            }
            _ => (&fields[..], None),
        };
        let values = numeric
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::data(&shown, line, format!("not a finite number: '{f}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(Row { line, values, label });
    }
    Ok(rows)
}

fn attach_labels(mut ds: Dataset, key: &str, rows: &[Row]) -> Result<Dataset> {
    if rows.iter().any(|r| r.label.is_some()) {
        let labels = rows.iter().map(|r| r.label.clone().unwrap_or_default()).collect();
        ds = ds.with_label(key, labels)?;
    }
    Ok(ds)
}

/// Directions on S² as `x,y,z[,label]` rows, in time order.
pub fn load_directions(path: &Path) -> Result<Dataset> {
    let shown = path.display().to_string();
    let rows = read_rows(path, Layout::Fixed(3))?;
    let mut points = Vec::with_capacity(rows.len());
    for row in &rows {
        let v = DVector::from_column_slice(&row.values);
        let n = v.norm();
        if (n - 1.0).abs() > DIRECTION_NORM_TOL {
            return Err(Error::data(&shown, row.line, format!("not a direction: norm {n}")));
        }
        points.push(Point::new(v / n));
    }
    let n = points.len();
    let ds = Dataset::new(Manifold::sphere(2), points, format!("directions from {shown}"))?
        .with_label(LABEL_TIMESTAMP, (0..n).map(|i| i.to_string()).collect())?;
    attach_labels(ds, LABEL_GENERIC, &rows)
}

/// Planar landmark shapes `x1,y1,…,xN,yN[,species]`. Each shape is centered,
/// scaled to unit norm and rotated onto the shape at `reference_index`.
pub fn load_landmarks(path: &Path, reference_index: usize) -> Result<Dataset> {
    let shown = path.display().to_string();
    let rows = read_rows(path, Layout::Pairs)?;
    let first = rows
        .first()
        .ok_or_else(|| Error::data(&shown, 0, "no shapes"))?;
    let landmarks = first.values.len() / 2;
    if landmarks < 3 {
        return Err(Error::data(&shown, first.line, "need at least 3 landmarks"));
    }
    let manifold = Manifold::kendall(landmarks);
    let mut shapes = Vec::with_capacity(rows.len());
    for row in &rows {
        let v = DVector::from_column_slice(&row.values);
        let p = manifold
            .project(&v)
            .map_err(|_| Error::data(&shown, row.line, "degenerate shape: all landmarks coincide"))?;
        shapes.push(p);
    }
    let reference = shapes
        .get(reference_index)
        .cloned()
        .ok_or_else(|| Error::InvalidArgument(format!("reference index {reference_index} out of range")))?;
    let points = shapes
        .into_iter()
        .map(|p| Point::new(procrustes_align(&reference.coords, &p.coords)))
        .collect();
    let ds = Dataset::new(manifold, points, format!("landmarks from {shown}"))?;
    attach_labels(ds, LABEL_SPECIES, &rows)
}

/// Rotation of `shape` minimizing its distance to `reference` (both centered).
pub fn procrustes_align(reference: &DVector<f64>, shape: &DVector<f64>) -> DVector<f64> {
    let mut re = 0.0;
    let mut im = 0.0;
    for k in 0..reference.len() / 2 {
        let (px, py) = (reference[2 * k], reference[2 * k + 1]);
        let (qx, qy) = (shape[2 * k], shape[2 * k + 1]);
        re += px * qx + py * qy;
        im += px * qy - py * qx;
    }
    if re == 0.0 && im == 0.0 {
        return shape.clone();
    }
    rotate_shape(shape, -im.atan2(re))
}

/// SPD matrices as unscaled upper triangles `a11,a12,…,a1n,a22,…,ann[,label]`.
pub fn load_spd(path: &Path, n: usize) -> Result<Dataset> {
    let shown = path.display().to_string();
    let width = spd::coordinate_len(n);
    let rows = read_rows(path, Layout::Fixed(width))?;
    let mut points = Vec::with_capacity(rows.len());
    for row in &rows {
        let coords = spd::from_unscaled_upper(&row.values, n);
        let min = spd::eigenvalues(&coords, n).min();
        if min <= SPD_MIN_EIGEN {
            return Err(Error::data(
                &shown,
                row.line,
                format!("matrix is not positive definite (min eigenvalue {min:e})"),
            ));
        }
        points.push(Point::new(coords));
    }
    let ds = Dataset::new(Manifold::spd(n), points, format!("SPD({n}) from {shown}"))?;
    attach_labels(ds, LABEL_GENERIC, &rows)
}

/// Price table, one row per time step and one column per asset.
pub fn load_prices(path: &Path) -> Result<DMatrix<f64>> {
    let shown = path.display().to_string();
    let rows = read_rows(path, Layout::Free)?;
    let width = rows.first().map(|r| r.values.len()).unwrap_or(0);
    if let Some(bad) = rows.iter().find(|r| r.values.len() != width) {
        return Err(Error::data(&shown, bad.line, format!("expected {width} prices, found {}", bad.values.len())));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), width, rows.iter().flat_map(|r| r.values.iter().copied())))
}

/// Log-returns `ln(p_{t+1} / p_t)`; one row shorter than the input.
pub fn log_returns(prices: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if prices.iter().any(|p| *p <= 0.0) {
        return Err(Error::InvalidArgument("log-returns need positive prices".into()));
    }
    let t = prices.nrows();
    Ok(DMatrix::from_fn(t.saturating_sub(1), prices.ncols(), |i, j| {
        (prices[(i + 1, j)] / prices[(i, j)]).ln()
    }))
}

/// Number of windows produced by [`rolling_covariances`].
pub fn window_count(len: usize, window: usize, stride: usize) -> usize {
    if len < window || stride == 0 {
        0
    } else {
        (len - window) / stride + 1
    }
}

/// Unbiased sample covariances of rows `[t − window, t)` for
/// `t = window, window + stride, …`, each with `1e-8 · mean(diag) · I` added.
pub fn rolling_covariances(prices: &DMatrix<f64>, window: usize, stride: usize) -> Result<Dataset> {
    let (t_len, assets) = prices.shape();
    if assets < 2 {
        return Err(Error::InvalidArgument("need at least two assets".into()));
    }
    if window < 2 || stride == 0 {
        return Err(Error::InvalidArgument("window must be >= 2 and stride >= 1".into()));
    }
    if t_len < window {
        return Err(Error::InvalidArgument(format!(
            "series of length {t_len} is shorter than the window {window}"
        )));
    }
    let count = window_count(t_len, window, stride);
    let mut points = Vec::with_capacity(count);
    let mut stamps = Vec::with_capacity(count);
    for w in 0..count {
        let end = window + w * stride;
        let block = prices.rows(end - window, window);
        let mean = block.row_mean();
        let mut centered = block.into_owned();
        for mut r in centered.row_iter_mut() {
            r -= &mean;
        }
        let mut cov = centered.tr_mul(&centered) / (window - 1) as f64;
        let mean_diag = cov.diagonal().mean();
        if mean_diag <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "window ending at row {} has zero covariance",
                end - 1
            )));
        }
        cov += DMatrix::identity(assets, assets) * (COVARIANCE_JITTER * mean_diag);
        let coords = spd::flatten(&cov);
        let min = spd::eigenvalues(&coords, assets).min();
        if min <= SPD_MIN_EIGEN {
            return Err(Error::InvalidArgument(format!(
                "window ending at row {} is not positive definite (min eigenvalue {min:e})",
                end - 1
            )));
        }
        points.push(Point::new(coords));
        stamps.push((end - 1).to_string());
    }
    Dataset::new(Manifold::spd(assets), points, "rolling covariances")?.with_label(LABEL_TIMESTAMP, stamps)
}

/// `√(3/2) · ‖λ − λ̄‖ / ‖λ‖` for the eigenvalues of a 3×3 SPD point.
pub fn fractional_anisotropy(p: &Point) -> Result<f64> {
    if p.coords.len() != spd::coordinate_len(3) {
        return Err(Error::DimensionMismatch {
            expected: spd::coordinate_len(3),
            found: p.coords.len(),
        });
    }
    let l = spd::eigenvalues(&p.coords, 3);
    Ok(fa_from_eigenvalues(l.as_slice()))
}

pub fn fa_from_eigenvalues(l: &[f64]) -> f64 {
    let mean = l.iter().sum::<f64>() / l.len() as f64;
    let dev: f64 = l.iter().map(|v| (v - mean) * (v - mean)).sum();
    let norm: f64 = l.iter().map(|v| v * v).sum();
    (1.5f64).sqrt() * dev.sqrt() / norm.sqrt()
}

/// Seeded shuffle, then the first `round(fraction · N)` points go to training.
pub fn split(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = d.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidArgument(format!(
            "split of {n} points at {train_fraction} leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((d.select(&idx[..n_train]), d.select(&idx[n_train..])))
}

fn write_rows(path: &Path, header: &str, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn with_label(mut values: Vec<String>, labels: Option<&Vec<String>>, i: usize) -> Vec<String> {
    if let Some(l) = labels {
        values.push(l[i].clone());
    }
    values
}

/// Writes points in the format read by [`load_directions`], [`load_landmarks`]
/// or [`load_spd`], with the `label_key` column (if present) appended.
pub fn write_dataset(path: &Path, d: &Dataset, label_key: Option<&str>) -> Result<()> {
    let labels = label_key.and_then(|k| d.labels.get(k));
    let suffix = match (label_key, labels) {
        (Some(k), Some(_)) => format!(",{k}"),
        _ => String::new(),
    };
    match &d.manifold {
        Manifold::Sphere { dim: 2 } => write_rows(
            path,
            &format!("# x,y,z{suffix}"),
            d.points.iter().enumerate().map(|(i, p)| {
                with_label(p.coords.iter().map(|v| v.to_string()).collect(), labels, i)
            }),
        ),
        Manifold::Kendall2D { landmarks } => write_rows(
            path,
            &format!("# {} landmarks as x1,y1,...{suffix}", landmarks),
            d.points.iter().enumerate().map(|(i, p)| {
                with_label(p.coords.iter().map(|v| v.to_string()).collect(), labels, i)
            }),
        ),
        Manifold::SpdLogEuclidean { n } => write_rows(
            path,
            &format!("# SPD({n}) upper triangle, row-major{suffix}"),
            d.points.iter().enumerate().map(|(i, p)| {
                with_label(
                    spd::to_unscaled_upper(&p.coords, *n).iter().map(|v| v.to_string()).collect(),
                    labels,
                    i,
                )
            }),
        ),
        other => Err(Error::InvalidArgument(format!("no file format for {}", other.name()))),
    }
}

/// Raw landmark rows (no normalization), for generators that want the
/// loader to do the alignment.
pub fn write_raw_landmarks(path: &Path, shapes: &[DVector<f64>], labels: Option<&Vec<String>>) -> Result<()> {
    let n = shapes.first().map(|s| s.len() / 2).unwrap_or(0);
    let suffix = if labels.is_some() { ",label" } else { "" };
    write_rows(
        path,
        &format!("# {n} landmarks as x1,y1,...{suffix}"),
        shapes
            .iter()
            .enumerate()
            .map(|(i, s)| with_label(s.iter().map(|v| v.to_string()).collect(), labels, i)),
    )
}
