//! Reconstruction and calibration protocols over repeated train/test splits.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use wgplvm::data::{self, Dataset};
use wgplvm::model::{EncodeConfig, FitSummary, Model, ModelKind, Posterior};
use wgplvm::{Error, Point};

use crate::config::{DatasetConfig, DatasetSource, RunConfig};
use crate::synth;
use crate::CliError;

/// Reconstructions further than this from the data manifold count as violations.
pub const VIOLATION_TOL: f64 = 1e-6;

pub fn load_dataset(cfg: &DatasetConfig) -> Result<Dataset, CliError> {
    let path = || cfg.path.as_deref().ok_or_else(|| CliError::Config("dataset.path is required".into()));
    let d = match cfg.source {
        DatasetSource::Synthetic => synth::generate(cfg.generator, &cfg.synth_params(), cfg.seed)?,
        DatasetSource::Directions => data::load_directions(path()?)?,
        DatasetSource::Landmarks => data::load_landmarks(path()?, cfg.reference_index)?,
        DatasetSource::Spd => data::load_spd(path()?, cfg.spd_dim)?,
        DatasetSource::Prices => {
            let mut prices = data::load_prices(path()?)?;
            if cfg.log_returns {
                prices = data::log_returns(&prices)?;
            }
            data::rolling_covariances(&prices, cfg.window, cfg.stride)?
        }
    };
    Ok(d)
}

/// Seed of repetition `r` derived from the run seed.
pub fn repetition_seed(root: u64, r: usize) -> u64 {
    root.wrapping_add((r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn build_model(cfg: &RunConfig, kind: ModelKind, train: &Dataset) -> Result<Model, CliError> {
    let mut model = Model::new(kind, train.manifold.clone(), &train.points, cfg.model.latent_dim, cfg.kernel.spec())?;
    model.labels = train.labels.clone();
    Ok(model)
}

pub fn fit_model(cfg: &RunConfig, kind: ModelKind, train: &Dataset) -> Result<(Model, FitSummary), CliError> {
    let mut model = build_model(cfg, kind, train)?;
    let summary = model.fit(&cfg.optimizer)?;
    Ok((model, summary))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std_error: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let std_error = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reconstruction {
    pub n_test: usize,
    /// Test points skipped because they sit on the cut locus of the basepoint.
    pub excluded: usize,
    pub rmse_intrinsic: f64,
    pub rmse_euclidean: f64,
    /// Fraction of reported reconstructions off the data manifold.
    pub violation_rate: f64,
}

fn latent_of(model: &Model, post: &Posterior<'_>, p: &Point, cfg: &EncodeConfig) -> Result<Option<Vec<f64>>, CliError> {
    match model.encode(post, p, cfg) {
        Ok(e) => Ok(Some(e.latent)),
        Err(Error::CutLocus) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Encodes every test point, reconstructs it from the mean prediction and
/// measures the error intrinsically (after projection for the plain baseline)
/// and in ambient coordinates (of the reported point).
pub fn reconstruct(model: &Model, test: &[Point], cfg: &EncodeConfig) -> Result<Reconstruction, CliError> {
    let post = model.posterior()?;
    let target = &model.target;
    let (mut se_int, mut se_euc, mut violations, mut used) = (0.0, 0.0, 0usize, 0usize);
    for p in test {
        let Some(x) = latent_of(model, &post, p, cfg)? else { continue };
        let pred = model.mean_prediction(&post, &x)?;
        let reported = model.reported(&pred);
        se_int += target.distance(p, &pred.on_manifold)?.powi(2);
        se_euc += (&p.coords - &reported).norm_squared();
        if target.violation(&reported)? > VIOLATION_TOL {
            violations += 1;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidArgument("every test point lies on the cut locus".into()).into());
    }
    let n = used as f64;
    Ok(Reconstruction {
        n_test: test.len(),
        excluded: test.len() - used,
        rmse_intrinsic: (se_int / n).sqrt(),
        rmse_euclidean: (se_euc / n).sqrt(),
        violation_rate: violations as f64 / n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EncodeRepetition {
    pub repetition: usize,
    pub seed: u64,
    pub n_train: usize,
    pub final_objective: f64,
    #[serde(flatten)]
    pub reconstruction: Reconstruction,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EncodeReport {
    pub model: ModelKind,
    pub dataset: String,
    pub repetitions: Vec<EncodeRepetition>,
    pub rmse_intrinsic: Summary,
    pub rmse_euclidean: Summary,
    pub violation_rate: Summary,
}

impl EncodeReport {
    pub fn new(model: ModelKind, dataset: String, repetitions: Vec<EncodeRepetition>) -> Self {
        let col = |f: fn(&Reconstruction) -> f64| {
            Summary::of(&repetitions.iter().map(|r| f(&r.reconstruction)).collect::<Vec<_>>())
        };
        Self {
            model,
            dataset,
            rmse_intrinsic: col(|r| r.rmse_intrinsic),
            rmse_euclidean: col(|r| r.rmse_euclidean),
            violation_rate: col(|r| r.violation_rate),
            repetitions,
        }
    }
}

/// Wall-clock seconds per repetition, kept apart from the deterministic reports.
pub type Timings = Vec<f64>;

fn encode_config(cfg: &RunConfig, seed: u64) -> EncodeConfig {
    EncodeConfig {
        seed,
        ..cfg.encode.clone()
    }
}

pub fn encode_repetition(cfg: &RunConfig, ds: &Dataset, kind: ModelKind, r: usize) -> Result<EncodeRepetition, CliError> {
    let seed = repetition_seed(cfg.run.seed, r);
    let (train, test) = data::split(ds, cfg.split.train_fraction, seed)?;
    let (model, summary) = fit_model(cfg, kind, &train)?;
    let reconstruction = reconstruct(&model, &test.points, &encode_config(cfg, seed))?;
    Ok(EncodeRepetition {
        repetition: r,
        seed,
        n_train: train.len(),
        final_objective: summary.final_objective,
        reconstruction,
    })
}

/// Table-1 protocol: `run.repetitions` independent split → fit → reconstruct
/// rounds, run in parallel.
pub fn run_encode(cfg: &RunConfig, ds: &Dataset, kind: ModelKind) -> Result<(EncodeReport, Timings), CliError> {
    let results: Vec<(EncodeRepetition, f64)> = (0..cfg.run.repetitions)
        .into_par_iter()
        .map(|r| {
            let start = Instant::now();
            encode_repetition(cfg, ds, kind, r).map(|rep| (rep, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<_, _>>()?;
    let (reps, times) = results.into_iter().unzip();
    Ok((EncodeReport::new(kind, ds.provenance.clone(), reps), times))
}

/// Fraction of predictive samples closer to the mean prediction than the
/// test point, under the intrinsic metric and in ambient coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fraction {
    pub intrinsic: f64,
    pub euclidean: f64,
}

pub fn calibration_fractions<R: Rng + ?Sized>(
    model: &Model,
    test: &[Point],
    cfg: &EncodeConfig,
    num_samples: usize,
    rng: &mut R,
) -> Result<(Vec<Fraction>, usize), CliError> {
    let post = model.posterior()?;
    let target = &model.target;
    let mut out = Vec::with_capacity(test.len());
    let mut excluded = 0;
    for p in test {
        let Some(x) = latent_of(model, &post, p, cfg)? else {
            excluded += 1;
            continue;
        };
        let mean = model.mean_prediction(&post, &x)?;
        let samples = model.sample_predictive(&post, &x, rng, num_samples)?;
        out.push(fraction_closer(model, target, p, &mean, &samples)?);
    }
    Ok((out, excluded))
}

fn fraction_closer(
    model: &Model,
    target: &wgplvm::Manifold,
    p: &Point,
    mean: &wgplvm::model::Prediction,
    samples: &[wgplvm::model::Prediction],
) -> Result<Fraction, CliError> {
    let d_int = target.distance(p, &mean.on_manifold)?;
    let mean_rep = model.reported(mean);
    let d_euc = (&p.coords - &mean_rep).norm();
    let (mut closer_int, mut closer_euc) = (0usize, 0usize);
    for s in samples {
        if target.distance(&s.on_manifold, &mean.on_manifold)? < d_int {
            closer_int += 1;
        }
        if (model.reported(s) - &mean_rep).norm() < d_euc {
            closer_euc += 1;
        }
    }
    let n = samples.len() as f64;
    Ok(Fraction {
        intrinsic: closer_int as f64 / n,
        euclidean: closer_euc as f64 / n,
    })
}

/// Calibration with test points drawn from the model's own predictive at
/// training latents chosen uniformly at random.
pub fn self_calibration(model: &Model, draws: usize, num_samples: usize, seed: u64) -> Result<Vec<Fraction>, CliError> {
    let post = model.posterior()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latents = &model.state.latents;
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let i = rng.random_range(0..latents.nrows());
        let x: Vec<f64> = latents.row(i).iter().copied().collect();
        let mean = model.mean_prediction(&post, &x)?;
        let test = model.sample_predictive(&post, &x, &mut rng, 1)?.remove(0);
        let samples = model.sample_predictive(&post, &x, &mut rng, num_samples)?;
        out.push(fraction_closer(model, &model.target, &test.on_manifold, &mean, &samples)?);
    }
    Ok(out)
}

/// `sup_t |F(t) − t|` for the empirical distribution function `F` of values in [0, 1].
pub fn sup_distance(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, f)| (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs()))
        .fold(0.0, f64::max)
}

/// Histogram densities over `bins` equal bins of [0, 1]; 1 falls in the last bin.
pub fn histogram(values: &[f64], bins: usize) -> Vec<f64> {
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = ((v * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let scale = bins as f64 / values.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 * scale).collect()
}

/// Empirical distribution function evaluated at `t`.
pub fn ecdf(values: &[f64], t: f64) -> f64 {
    values.iter().filter(|v| **v <= t).count() as f64 / values.len().max(1) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UqRepetition {
    pub repetition: usize,
    pub seed: u64,
    pub n_test: usize,
    pub excluded: usize,
    pub sup_distance_intrinsic: f64,
    pub sup_distance_euclidean: f64,
    #[serde(skip)]
    pub fractions: Vec<Fraction>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UqReport {
    pub model: ModelKind,
    pub dataset: String,
    pub num_samples: usize,
    pub repetitions: Vec<UqRepetition>,
    pub sup_distance_intrinsic: Summary,
    pub sup_distance_euclidean: Summary,
    /// Histogram densities of the pooled fractions.
    pub histogram_intrinsic: Vec<f64>,
    pub histogram_euclidean: Vec<f64>,
}

impl UqReport {
    pub fn new(model: ModelKind, dataset: String, num_samples: usize, bins: usize, repetitions: Vec<UqRepetition>) -> Self {
        let pooled: Vec<Fraction> = repetitions.iter().flat_map(|r| r.fractions.iter().copied()).collect();
        let int: Vec<f64> = pooled.iter().map(|f| f.intrinsic).collect();
        let euc: Vec<f64> = pooled.iter().map(|f| f.euclidean).collect();
        Self {
            model,
            dataset,
            num_samples,
            sup_distance_intrinsic: Summary::of(&repetitions.iter().map(|r| r.sup_distance_intrinsic).collect::<Vec<_>>()),
            sup_distance_euclidean: Summary::of(&repetitions.iter().map(|r| r.sup_distance_euclidean).collect::<Vec<_>>()),
            histogram_intrinsic: histogram(&int, bins),
            histogram_euclidean: histogram(&euc, bins),
            repetitions,
        }
    }

    pub fn pooled(&self) -> Vec<Fraction> {
        self.repetitions.iter().flat_map(|r| r.fractions.iter().copied()).collect()
    }
}

pub fn uq_from_fractions(repetition: usize, seed: u64, n_test: usize, excluded: usize, fractions: Vec<Fraction>) -> UqRepetition {
    let int: Vec<f64> = fractions.iter().map(|f| f.intrinsic).collect();
    let euc: Vec<f64> = fractions.iter().map(|f| f.euclidean).collect();
    UqRepetition {
        repetition,
        seed,
        n_test,
        excluded,
        sup_distance_intrinsic: sup_distance(&int),
        sup_distance_euclidean: sup_distance(&euc),
        fractions,
    }
}

pub fn uq_repetition(cfg: &RunConfig, ds: &Dataset, kind: ModelKind, r: usize) -> Result<UqRepetition, CliError> {
    let seed = repetition_seed(cfg.run.seed, r);
    let (train, test) = data::split(ds, cfg.split.train_fraction, seed)?;
    let (model, _) = fit_model(cfg, kind, &train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_A5A5_A5A5_A5A5);
    let (fractions, excluded) =
        calibration_fractions(&model, &test.points, &encode_config(cfg, seed), cfg.uq.num_samples, &mut rng)?;
    Ok(uq_from_fractions(r, seed, test.len(), excluded, fractions))
}

/// Calibration protocol: split → fit → per test point encode, sample and
/// rank, repeated `run.repetitions` times in parallel.
pub fn run_uq(cfg: &RunConfig, ds: &Dataset, kind: ModelKind) -> Result<(UqReport, Timings), CliError> {
    let results: Vec<(UqRepetition, f64)> = (0..cfg.run.repetitions)
        .into_par_iter()
        .map(|r| {
            let start = Instant::now();
            uq_repetition(cfg, ds, kind, r).map(|rep| (rep, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<_, _>>()?;
    let (reps, times) = results.into_iter().unzip();
    Ok((UqReport::new(kind, ds.provenance.clone(), cfg.uq.num_samples, cfg.uq.bins, reps), times))
}
