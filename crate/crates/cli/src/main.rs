use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wgplvm::model::ModelKind;
use wgplvm_cli::commands;
use wgplvm_cli::config::RunConfig;
use wgplvm_cli::synth::SynthKind;
use wgplvm_cli::CliError;

#[derive(Parser)]
#[command(name = "wgplvm", version, about = "Wrapped Gaussian process latent variable models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration; defaults apply to every missing field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides run.output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides model.kind.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Overrides run.repetitions.
    #[arg(long)]
    repetitions: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.run.output = o.clone();
        }
        if let Some(m) = self.model {
            cfg.model.kind = m;
        }
        if let Some(r) = self.repetitions {
            cfg.run.repetitions = r;
        }
        cfg.check()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write its checkpoint and objective trace.
    Fit {
        #[command(flatten)]
        common: Common,
    },
    /// Reconstruction RMSE over repeated train/test splits, or of a checkpoint.
    Encode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Calibration of predictive samples over repeated splits, or of a checkpoint.
    Uq {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Export the latent coordinates of a checkpoint with one label column.
    Latent {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Label key stored with the data, or "fa" for SPD(3) anisotropy.
        #[arg(long, default_value = "timestamp")]
        label: String,
        /// Output CSV file.
        #[arg(long, default_value = "latents.csv")]
        out: PathBuf,
    },
    /// Write a synthetic dataset in its loader format.
    Synth {
        /// sphere_circle, spd_geodesic or kendall_family; overrides dataset.generator.
        #[arg(long)]
        kind: Option<SynthKind>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides dataset.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV file.
        #[arg(long, default_value = "synthetic.csv")]
        out: PathBuf,
    },
}

fn json<T: serde::Serialize>(report: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(report).expect("report serializes"))
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Fit { common } => json(&commands::fit(&common.resolve()?)?),
        Command::Encode { common, checkpoint } => json(&commands::encode(&common.resolve()?, checkpoint.as_deref())?),
        Command::Uq { common, checkpoint } => json(&commands::uq(&common.resolve()?, checkpoint.as_deref())?),
        Command::Latent { checkpoint, label, out } => {
            let n = commands::latent(&checkpoint, &label, &out)?;
            Ok(format!("wrote {n} rows to {}", out.display()))
        }
        Command::Synth { kind, config, seed, out } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            let kind = kind.unwrap_or(cfg.dataset.generator);
            let d = commands::synth(kind, &cfg.dataset.synth_params(), seed.unwrap_or(cfg.dataset.seed), &out)?;
            Ok(format!("wrote {} points to {}", d.len(), out.display()))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = e.record();
            eprintln!("{}", serde_json::to_string(&record).expect("record serializes"));
            ExitCode::from(record.exit_code as u8)
        }
    }
}
