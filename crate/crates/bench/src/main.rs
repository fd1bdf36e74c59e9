use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use afm_bench::aggregate::{aggregate, overall_csv, summary_csv};
use afm_bench::config::{load_config, DynamicsVariant, Scale, SuiteConfig};
use afm_bench::curves::{export_loss_curves, DEFAULT_WINDOW};
use afm_bench::records::read_records;
use afm_bench::suite::{run_suite, RECORDS_FILE};
use afm_bench::train::{train_dynamics, train_flow, DynamicsJob};
use afm_core::dynamics::EnsembleModel;
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "afm",
    version,
    about = "Continual dynamics-learning benchmark with action flow matching"
)]
struct Cli {
    /// Suite configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed for training; restricts `run` to this seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (training) or directory (run, aggregate, curves).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Episodes run in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Use the full-size model, planner and training settings.
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Variant {
    Standard,
    Streamx,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the initial dynamics ensemble on nominal simulator data.
    TrainDynamics {
        /// Relative actuation noise applied to training actions.
        #[arg(long, num_args = 0..=1, default_missing_value = "0.1")]
        domain_randomization: Option<f64>,
        #[arg(long, value_enum, default_value_t = Variant::Standard)]
        variant: Variant,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train the action flow model against a dynamics snapshot.
    TrainAfm {
        /// Dynamics snapshot; defaults to the config's `dynamics` artifact.
        #[arg(long)]
        dynamics: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Run every cell of a suite.
    Run,
    /// Recompute the summary tables from stored records.
    Aggregate {
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Export smoothed per-step loss curves from stored records.
    Curves {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let scale = Scale::from_flag(cli.paper_scale);
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::TrainDynamics {
            domain_randomization,
            variant,
            samples,
        } => {
            let job = DynamicsJob {
                scale,
                variant: match variant {
                    Variant::Standard => DynamicsVariant::Standard,
                    Variant::Streamx => DynamicsVariant::StreamX,
                },
                domain_randomization: domain_randomization.unwrap_or(0.0),
                seed,
                samples,
            };
            let out = cli.out.unwrap_or_else(|| PathBuf::from("dynamics.json"));
            let t = Instant::now();
            let (model, report) = train_dynamics(&job)?;
            for (i, losses) in report.epoch_losses.iter().enumerate() {
                eprintln!(
                    "member {i}: {} epochs, final loss {:.5}",
                    losses.len(),
                    losses.last().copied().unwrap_or(f64::NAN)
                );
            }
            write_file(&out, &model.to_json()?)?;
            eprintln!("wrote {} in {:.1?}", out.display(), t.elapsed());
        }
        Command::TrainAfm {
            dynamics,
            iterations,
        } => {
            let path = match (dynamics, &cli.config) {
                (Some(p), _) => p,
                (None, Some(c)) => load_config(c)?
                    .artifacts
                    .dynamics
                    .context("config has no `dynamics` artifact")?,
                (None, None) => bail!("train-afm needs a dynamics snapshot (--dynamics or a config with artifacts.dynamics)"),
            };
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            let f0 = EnsembleModel::from_json(&text)
                .with_context(|| format!("loading {}", path.display()))?;
            let out = cli.out.unwrap_or_else(|| PathBuf::from("afm.json"));
            let t = Instant::now();
            let (model, report) = train_flow(&f0, scale, seed, iterations)?;
            let tail = &report.losses[report.losses.len().saturating_sub(100)..];
            eprintln!(
                "{} iterations, mean loss over the last {}: {:.5}",
                report.losses.len(),
                tail.len(),
                tail.iter().sum::<f64>() / tail.len() as f64
            );
            write_file(&out, &model.to_json()?)?;
            eprintln!("wrote {} in {:.1?}", out.display(), t.elapsed());
        }
        Command::Run => {
            let path = cli.config.context("run needs --config")?;
            let mut cfg: SuiteConfig = load_config(&path)?;
            if cli.paper_scale {
                cfg.scale = Scale::Paper;
            }
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            let out = cli
                .out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("results"));
            let t = Instant::now();
            let results = run_suite(&cfg, cli.jobs, Some(&out), |r, done, total| {
                let status = match &r.error {
                    Some(e) => format!("FAILED: {e}"),
                    None => format!("success {:.2} in {} steps", r.success_rate, r.steps),
                };
                eprintln!(
                    "[{done}/{total}] {} {} ({}, {}) seed {}: {status}",
                    r.method, r.map, r.scenario.v_gain, r.scenario.omega_gain, r.seed
                );
            })?;
            write_summaries(&results.records, &out)?;
            eprintln!(
                "{} cells in {:.1?}, results in {}",
                results.records.len(),
                t.elapsed(),
                out.display()
            );
            if results.failed() > 0 {
                eprintln!("{} cells failed", results.failed());
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Aggregate { records } => {
            let out = cli.out.unwrap_or_else(|| PathBuf::from("results"));
            let path = records.unwrap_or_else(|| out.join(RECORDS_FILE));
            let records = read_records(&path)?;
            write_summaries(&records, &out)?;
        }
        Command::Curves { records, window } => {
            let out = cli.out.unwrap_or_else(|| PathBuf::from("results"));
            let path = records.unwrap_or_else(|| out.join(RECORDS_FILE));
            let records = read_records(&path)?;
            let files = export_loss_curves(&records, window, &out.join("curves"))?;
            eprintln!(
                "wrote {} curve files to {}",
                files.len(),
                out.join("curves").display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_summaries(records: &[afm_bench::EpisodeRecord], out: &Path) -> Result<()> {
    let summary = aggregate(records)?;
    write_file(&out.join("summary.csv"), &summary_csv(&summary))?;
    write_file(&out.join("overall.csv"), &overall_csv(&summary))?;
    for row in &summary.overall {
        println!(
            "{:<10} cells {:>4}  success {:.3}  steps {:.1}",
            row.method.to_string(),
            row.cells,
            row.success_mean,
            row.steps_mean
        );
    }
    if summary.failed > 0 {
        eprintln!("{} failed cells left out of the summary", summary.failed);
    }
    Ok(())
}
