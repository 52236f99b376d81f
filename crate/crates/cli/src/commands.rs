//! The subcommands. Each writes its files under `run.output` (or the given
//! path) and returns the report it wrote.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wgplvm::data::{self, Dataset};
use wgplvm::model::{Checkpoint, Model, ModelKind};
use wgplvm::Manifold;

use crate::config::RunConfig;
use crate::experiment::{self, EncodeReport, EncodeRepetition, Fraction, UqReport};
use crate::output::{ensure_dir, num, write_csv, write_json};
use crate::synth::{self, SynthKind, SynthParams, LATENT_LABEL};
use crate::CliError;

/// Label key that computes fractional anisotropy of SPD(3) data on demand.
pub const FA_LABEL: &str = "fa";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitReport {
    pub model: ModelKind,
    pub dataset: String,
    pub num_points: usize,
    pub iterations: usize,
    pub converged: bool,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub final_grad_norm: f64,
}

#[derive(Serialize)]
struct Timings<'a> {
    command: &'a str,
    total_seconds: f64,
    repetition_seconds: Vec<f64>,
}

fn write_timings(out: &Path, command: &str, start: Instant, reps: Vec<f64>) -> Result<(), CliError> {
    write_json(
        &out.join("timings.json"),
        &Timings {
            command,
            total_seconds: start.elapsed().as_secs_f64(),
            repetition_seconds: reps,
        },
    )?;
    Ok(())
}

fn prepare(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = cfg.run.output.clone();
    ensure_dir(&out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()).map_err(|e| CliError::Io {
        path: out.join("config.toml").display().to_string(),
        source: e,
    })?;
    Ok(out)
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    Ok(Checkpoint::load(path)?.into_model()?)
}

fn matching_dataset(cfg: &RunConfig, model: &Model) -> Result<Dataset, CliError> {
    let ds = experiment::load_dataset(&cfg.dataset)?;
    if ds.manifold != model.target {
        return Err(CliError::Config(format!(
            "dataset lives on {} but the checkpoint was fitted on {}",
            ds.manifold.name(),
            model.target.name()
        )));
    }
    Ok(ds)
}

/// Trains `model.kind` on the whole dataset; writes `checkpoint.json`,
/// `trace.csv` and `fit.json`.
pub fn fit(cfg: &RunConfig) -> Result<FitReport, CliError> {
    let start = Instant::now();
    let out = prepare(cfg)?;
    let ds = experiment::load_dataset(&cfg.dataset)?;
    let (model, summary) = experiment::fit_model(cfg, cfg.model.kind, &ds)?;
    Checkpoint::from_model(&model).save(&out.join("checkpoint.json"))?;
    write_csv(
        &out.join("trace.csv"),
        &["iteration", "objective"],
        model.state.fit_trace.iter().map(|(i, v)| vec![i.to_string(), num(*v)]),
    )?;
    let report = FitReport {
        model: model.kind,
        dataset: ds.provenance.clone(),
        num_points: ds.len(),
        iterations: summary.iterations,
        converged: summary.converged,
        initial_objective: summary.initial_objective,
        final_objective: summary.final_objective,
        final_grad_norm: summary.final_grad_norm,
    };
    write_json(&out.join("fit.json"), &report)?;
    write_timings(&out, "fit", start, Vec::new())?;
    Ok(report)
}

/// Reconstruction RMSE. With a checkpoint, the fitted model encodes every
/// point of the configured dataset once; otherwise `run.repetitions` rounds
/// of split → fit → reconstruct are run for `model.kind`.
pub fn encode(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<EncodeReport, CliError> {
    let start = Instant::now();
    let out = prepare(cfg)?;
    let (report, times) = match checkpoint {
        Some(path) => {
            let model = load_model(path)?;
            let ds = matching_dataset(cfg, &model)?;
            let enc = wgplvm::model::EncodeConfig {
                seed: cfg.run.seed,
                ..cfg.encode.clone()
            };
            let reconstruction = experiment::reconstruct(&model, &ds.points, &enc)?;
            let rep = EncodeRepetition {
                repetition: 0,
                seed: cfg.run.seed,
                n_train: model.state.num_points(),
                final_objective: model.state.objective()?,
                reconstruction,
            };
            let report = EncodeReport::new(model.kind, ds.provenance.clone(), vec![rep]);
            (report, vec![start.elapsed().as_secs_f64()])
        }
        None => {
            let ds = experiment::load_dataset(&cfg.dataset)?;
            experiment::run_encode(cfg, &ds, cfg.model.kind)?
        }
    };
    write_csv(
        &out.join("encode.csv"),
        &[
            "repetition",
            "seed",
            "n_train",
            "n_test",
            "excluded",
            "rmse_intrinsic",
            "rmse_euclidean",
            "violation_rate",
            "final_objective",
        ],
        report.repetitions.iter().map(|r| {
            let c = &r.reconstruction;
            vec![
                r.repetition.to_string(),
                r.seed.to_string(),
                r.n_train.to_string(),
                c.n_test.to_string(),
                c.excluded.to_string(),
                num(c.rmse_intrinsic),
                num(c.rmse_euclidean),
                num(c.violation_rate),
                num(r.final_objective),
            ]
        }),
    )?;
    write_json(&out.join("report.json"), &report)?;
    write_timings(&out, "encode", start, times)?;
    Ok(report)
}

/// Points of the cumulative calibration curve written to `calibration_curve.csv`.
pub const CURVE_POINTS: usize = 101;

/// Calibration of the predictive distribution; same checkpoint semantics as [`encode`].
pub fn uq(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<UqReport, CliError> {
    let start = Instant::now();
    let out = prepare(cfg)?;
    let (report, times) = match checkpoint {
        Some(path) => {
            let model = load_model(path)?;
            let ds = matching_dataset(cfg, &model)?;
            let enc = wgplvm::model::EncodeConfig {
                seed: cfg.run.seed,
                ..cfg.encode.clone()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
            let (fractions, excluded) =
                experiment::calibration_fractions(&model, &ds.points, &enc, cfg.uq.num_samples, &mut rng)?;
            let rep = experiment::uq_from_fractions(0, cfg.run.seed, ds.len(), excluded, fractions);
            let report = UqReport::new(model.kind, ds.provenance.clone(), cfg.uq.num_samples, cfg.uq.bins, vec![rep]);
            (report, vec![start.elapsed().as_secs_f64()])
        }
        None => {
            let ds = experiment::load_dataset(&cfg.dataset)?;
            experiment::run_uq(cfg, &ds, cfg.model.kind)?
        }
    };
    write_uq_files(&out, &report, cfg.uq.bins)?;
    write_json(&out.join("report.json"), &report)?;
    write_timings(&out, "uq", start, times)?;
    Ok(report)
}

fn write_uq_files(out: &Path, report: &UqReport, bins: usize) -> Result<(), CliError> {
    write_csv(
        &out.join("fractions.csv"),
        &["repetition", "test_index", "fraction_intrinsic", "fraction_euclidean"],
        report.repetitions.iter().flat_map(|r| {
            r.fractions
                .iter()
                .enumerate()
                .map(move |(i, f)| vec![r.repetition.to_string(), i.to_string(), num(f.intrinsic), num(f.euclidean)])
        }),
    )?;
    let width = 1.0 / bins as f64;
    write_csv(
        &out.join("calibration_histogram.csv"),
        &["bin_start", "bin_end", "density_intrinsic", "density_euclidean"],
        (0..bins).map(|b| {
            vec![
                num(b as f64 * width),
                num((b + 1) as f64 * width),
                num(report.histogram_intrinsic[b]),
                num(report.histogram_euclidean[b]),
            ]
        }),
    )?;
    let pooled: Vec<Fraction> = report.pooled();
    let int: Vec<f64> = pooled.iter().map(|f| f.intrinsic).collect();
    let euc: Vec<f64> = pooled.iter().map(|f| f.euclidean).collect();
    write_csv(
        &out.join("calibration_curve.csv"),
        &["fraction", "cumulative_intrinsic", "cumulative_euclidean"],
        (0..CURVE_POINTS).map(|k| {
            let t = k as f64 / (CURVE_POINTS - 1) as f64;
            vec![num(t), num(experiment::ecdf(&int, t)), num(experiment::ecdf(&euc, t))]
        }),
    )?;
    Ok(())
}

/// Latent coordinates of the training points with one label column.
pub fn latent(checkpoint: &Path, label: &str, out: &Path) -> Result<usize, CliError> {
    let model = load_model(checkpoint)?;
    let labels: Vec<String> = if label == FA_LABEL {
        if model.target != Manifold::spd(3) {
            return Err(CliError::Config(format!(
                "the '{FA_LABEL}' label needs SPD(3) data, not {}",
                model.target.name()
            )));
        }
        model
            .state
            .data
            .iter()
            .map(|p| data::fractional_anisotropy(p).map(num))
            .collect::<Result<_, _>>()?
    } else {
        model
            .labels
            .get(label)
            .cloned()
            .ok_or_else(|| {
                let known: Vec<&str> = model.labels.keys().map(String::as_str).collect();
                CliError::Config(format!("unknown label key '{label}' (available: {})", known.join(", ")))
            })?
    };
    let q = model.state.latent_dim();
    let mut columns: Vec<String> = (1..=q).map(|a| format!("x{a}")).collect();
    columns.push(label.to_string());
    let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let rows: Vec<Vec<String>> = model
        .state
        .latents
        .row_iter()
        .zip(&labels)
        .map(|(row, l)| {
            let mut r: Vec<String> = row.iter().map(|v| num(*v)).collect();
            r.push(l.clone());
            r
        })
        .collect();
    let n = rows.len();
    write_csv(out, &columns, rows)?;
    Ok(n)
}

/// Writes a synthetic dataset in its loader format with a `latent` column.
pub fn synth(kind: SynthKind, params: &SynthParams, seed: u64, out: &Path) -> Result<Dataset, CliError> {
    let d = synth::generate(kind, params, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    data::write_dataset(out, &d, Some(LATENT_LABEL))?;
    Ok(d)
}
