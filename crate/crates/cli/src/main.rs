use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use spikeosc_cli::commands::{analyze, report, selftest, simulate, train};
use spikeosc_cli::config::ExperimentConfig;
use spikeosc_cli::dataset::NoiseKind;

#[derive(Parser)]
#[command(
    name = "spikeosc",
    about = "Spiking-network training, simulation and oscillation analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the configured task and save checkpoints plus an epoch log.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Pass inputs through a checkpointed network and export spike rasters.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input source: the task's test split unless noise is requested.
        #[arg(long, value_name = "uniform|babble-like|stationary")]
        noise: Option<String>,
        #[arg(long, default_value_t = 4.0)]
        noise_seconds: f64,
        #[arg(long, default_value_t = 8)]
        noise_count: usize,
        /// WAV files to use instead of synthetic inputs.
        #[arg(long, num_args = 1..)]
        wav: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also dump the extracted Mel features as CSV into this directory.
        #[arg(long)]
        dump_features: Option<PathBuf>,
    },
    /// Scan a spike export for phase-amplitude couplings.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        export: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the configured surrogate count.
        #[arg(long)]
        surrogates: Option<usize>,
    },
    /// Emit plot-ready CSV/JSON bundles from simulation and analysis artifacts.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        export: PathBuf,
        #[arg(long)]
        analysis: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the built-in oracle sanity checks.
    Selftest,
}

fn main() -> ExitCode {
    match run() {
        Ok(ok) => {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let outcome = train::run_train(&cfg)?;
            println!(
                "trained {} epochs; best validation metric {:.4}",
                cfg.epochs, outcome.best_val_metric
            );
            println!("checkpoints: {}", outcome.best_checkpoint.display());
            println!("log: {}", outcome.log_path.display());
            Ok(true)
        }
        Command::Simulate {
            config,
            checkpoint,
            noise,
            noise_seconds,
            noise_count,
            wav,
            out,
            dump_features,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let model = simulate::load_model(&cfg, &checkpoint)?;
            let source = if let Some(kind) = noise {
                simulate::SimSource::Noise {
                    kind: NoiseKind::parse(&kind)?,
                    seconds: noise_seconds,
                    count: noise_count,
                }
            } else if !wav.is_empty() {
                simulate::SimSource::WavFiles(wav)
            } else {
                simulate::SimSource::TestSet
            };
            let export_path = out.unwrap_or_else(|| cfg.out_dir.join("spikes.spkx"));
            let rates_path = export_path.with_extension("rates.json");
            let export = simulate::run_simulate_with_features(
                &cfg,
                &model,
                &source,
                &export_path,
                &rates_path,
                dump_features.as_deref(),
            )?;
            println!(
                "simulated {} utterances, {} total spikes -> {}",
                export.utterances.len(),
                export.total_spikes(),
                export_path.display()
            );
            Ok(true)
        }
        Command::Analyze {
            config,
            export,
            out_dir,
            surrogates,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let export = analyze::load_export(&export)?;
            if export.config_hash != cfg.hash() {
                anyhow::bail!(
                    "config hash mismatch: export was produced with {:#018x}, config hashes to {:#018x}",
                    export.config_hash,
                    cfg.hash()
                );
            }
            let out_dir = out_dir.unwrap_or_else(|| cfg.out_dir.join("analysis"));
            let n_surrogates = surrogates.unwrap_or(cfg.n_surrogates);
            let output = analyze::run_analyze(&export, &out_dir, &cfg.bands, n_surrogates, cfg.seed)?;
            println!(
                "{} coupling records ({} significant), {} skips -> {}",
                output.summary.n_records,
                output.summary.significant_total,
                output.summary.n_skips,
                out_dir.display()
            );
            Ok(true)
        }
        Command::Report {
            config,
            export,
            analysis,
            out_dir,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let export = analyze::load_export(&export)?;
            if export.config_hash != cfg.hash() {
                anyhow::bail!(
                    "config hash mismatch: export was produced with {:#018x}, config hashes to {:#018x}",
                    export.config_hash,
                    cfg.hash()
                );
            }
            let out_dir = out_dir.unwrap_or_else(|| cfg.out_dir.join("report"));
            report::run_report(&export, &analysis, &out_dir)?;
            println!("report bundle written to {}", out_dir.display());
            Ok(true)
        }
        Command::Selftest => Ok(selftest::run_selftest()),
    }
}
