//! Command-line front end: config parsing, experiment orchestration and
//! output files.

pub mod config;
pub mod plot;
pub mod run;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Parser;

pub use config::{parse_config, ConfigError, DatasetKind, ExperimentConfig, PartitionKind};
pub use plot::{emit_plot_data, summarize};
pub use run::{run_experiment, RunOptions};

use crate::federation::Algorithm;
use crate::metrics::render_csv;

/// Environment variable capping worker threads (0 = automatic).
pub const THREADS_ENV: &str = "SHEFL_THREADS";

#[derive(Debug, Clone, Parser)]
#[command(
    name = "shefl",
    version,
    about = "Sparse heterogeneous ensemble federated learning simulator"
)]
pub struct Cli {
    /// Experiment config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (must be empty or new unless --force).
    #[arg(long)]
    pub out: PathBuf,
    /// Directory holding the IDX files for mnist/fmnist.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Comma-separated algorithms, overriding the config.
    #[arg(long)]
    pub algo: Option<String>,
    /// Comma-separated seeds, overriding the config.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Write binary upload traces per run.
    #[arg(long)]
    pub trace: bool,
    /// Write per-algo accuracy-vs-round files.
    #[arg(long)]
    pub plot_data: bool,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
    /// Record wall-clock milliseconds (makes metrics.csv non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

/// Applies command-line overrides to a parsed config and revalidates.
pub fn apply_overrides(mut cfg: ExperimentConfig, cli: &Cli) -> Result<ExperimentConfig> {
    if let Some(list) = &cli.algo {
        cfg.algos = list
            .split(',')
            .map(|s| s.parse::<Algorithm>())
            .collect::<Result<_, _>>()
            .context("--algo")?;
    }
    if let Some(list) = &cli.seeds {
        cfg.seeds = list
            .split(',')
            .map(|s| s.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .context("--seeds")?;
    }
    if let Some(dir) = &cli.data_dir {
        cfg.data_dir = Some(dir.clone());
    }
    cfg.federation.record_timing = cli.timing;
    cfg.validate()?;
    Ok(cfg)
}

pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{THREADS_ENV}={v} is not a thread count")),
        Err(_) => Ok(0),
    }
}

fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            bail!("{} exists and is not a directory", dir.display());
        }
        let occupied = fs::read_dir(dir)?.next().is_some();
        if occupied && !force {
            bail!("{} is not empty; pass --force to write into it", dir.display());
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

/// Parses the config, runs every `(algo, seed)` pair and writes
/// `metrics.csv`, `summary.csv` and optional plot and trace files.
pub fn run(cli: &Cli) -> Result<()> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        None => String::new(),
    };
    let cfg = parse_config(&text).with_context(|| match &cli.config {
        Some(path) => format!("config {}", path.display()),
        None => "default config".to_owned(),
    })?;
    let cfg = apply_overrides(cfg, cli)?;
    prepare_out_dir(&cli.out, cli.force)?;

    let opts = RunOptions {
        threads: threads_from_env()?,
        trace_dir: cli.trace.then(|| cli.out.clone()),
        data_dir: cfg.data_dir.clone(),
    };
    let rows = run_experiment(&cfg, &opts)?;
    let metrics = render_csv(&rows);
    write(cli.out.join("metrics.csv"), &metrics)?;
    let summary = summarize(&rows, cfg.threshold)?;
    write(cli.out.join("summary.csv"), &plot::render_summary(&summary))?;
    if cli.plot_data {
        for (algo, points) in emit_plot_data(&metrics)? {
            write(
                cli.out.join(plot::plot_file_name(&algo)?),
                &plot::render_plot_file(&points),
            )?;
        }
    }
    for s in &summary {
        let conv = s.conv_mean.map_or_else(|| "nc".to_owned(), |c| format!("{c:.1}"));
        println!(
            "{:<8} final {:.4} ± {:.4}  best {:.4}  conv {} ({} nc of {})",
            s.algo, s.final_mean, s.final_std, s.best_mean, conv, s.nc_count, s.runs
        );
    }
    Ok(())
}
