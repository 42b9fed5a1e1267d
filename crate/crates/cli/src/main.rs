use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use pie_core::cert::{dmax, DMAX_TOL};
use pie_core::mitigation::{fit, ExtrapolationDataset, FitOptions, Model};
use pie_lab::channel_file::ChannelFile;
use pie_lab::experiments::clamp_warning;
use pie_lab::{run_with_workers, ExperimentConfig, SEED_ENV};

#[derive(Parser)]
#[command(
    name = "pie-lab",
    version,
    about = "Noisy circuit simulation and zero-noise extrapolation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a `lambda,value,std` dataset and print the result as JSON.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "pie")]
        model: String,
        #[arg(long)]
        unweighted: bool,
    },
    /// Max-relative entropy between two channels.
    Dmax {
        #[arg(long)]
        ideal: PathBuf,
        #[arg(long)]
        noisy: PathBuf,
        #[arg(long, default_value_t = DMAX_TOL)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            workers,
            out,
        } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Ok(s) = std::env::var(SEED_ENV) {
                cfg.seed = s
                    .trim()
                    .parse()
                    .with_context(|| format!("{SEED_ENV}={s} is not a u64"))?;
            }
            let out = out.unwrap_or_else(|| cfg.output_dir());
            for f in run_with_workers(&cfg, &out, workers)? {
                println!("{}", f.display());
            }
        }
        Command::Fit {
            input,
            model,
            unweighted,
        } => {
            let model: Model = model.parse()?;
            let file =
                File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let data = ExtrapolationDataset::read_csv(file)
                .with_context(|| format!("{}", input.display()))?;
            if model == Model::Pie {
                clamp_warning(&input.display().to_string(), &data);
            }
            let r = fit(
                &data,
                model,
                FitOptions {
                    weighted: !unweighted,
                },
            )?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Dmax { ideal, noisy, tol } => {
            let d = dmax(
                &ChannelFile::load(&ideal)?,
                &ChannelFile::load(&noisy)?,
                tol,
            )?;
            println!("{}", serde_json::to_string_pretty(&d)?);
        }
    }
    Ok(())
}
