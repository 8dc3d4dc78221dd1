//! `overlaps`: runs overlap experiments and writes CSV tables, plot data,
//! `summary.json` and `manifest.json` into an output directory.
//!
//! Exit codes: 0 all assertions pass, 1 an assertion failed, 2 bad
//! configuration, 3 numerical backend failure.

mod config;
mod experiments;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use config::{ConfigError, ExperimentConfig, RawConfig, KEYS};
use experiments::{worker_ranges, RunError, FORMULAS};
use output::{write_json, write_report, Report};

const EXIT_ASSERTION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BACKEND: u8 = 3;

#[derive(Parser)]
#[command(name = "overlaps", version, about = "Eigenvector overlap experiments for non-Hermitian random matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file and/or flags.
    Run(RunArgs),
    /// Check closed forms against the quadrature oracles.
    Verify(CommonArgs),
    /// Tabulate one closed-form function on a grid.
    Formulas(FormulaArgs),
    /// List configuration keys and formula names.
    Keys,
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Root seed; drawn from OS entropy and recorded when absent.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct FormulaArgs {
    /// Function name (see `overlaps keys`).
    formula: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    x_min: Option<f64>,
    #[arg(long)]
    x_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

fn apply_overrides(raw: &mut RawConfig, pairs: &[(&str, Option<String>)], set: &[String]) -> Result<(), ConfigError> {
    for (k, v) in pairs {
        if let Some(v) = v {
            raw.set(k, v.clone())?;
        }
    }
    for s in set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid { key: s.clone(), message: "expected --set key=value".into() })?;
        raw.set(k.trim(), v.trim())?;
    }
    Ok(())
}

fn build_config(cmd: &Command) -> Result<ExperimentConfig, ConfigError> {
    let mut raw = RawConfig::default();
    match cmd {
        Command::Run(a) => {
            if let Some(path) = &a.config {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
                raw = RawConfig::parse(&text)?;
            }
            apply_overrides(
                &mut raw,
                &[
                    ("experiment", a.experiment.clone()),
                    ("n", a.n.map(|v| v.to_string())),
                    ("trials", a.trials.map(|v| v.to_string())),
                    ("seed", a.seed.map(|v| v.to_string())),
                    ("workers", a.workers.map(|v| v.to_string())),
                    ("out", a.common.out.as_ref().map(|p| p.display().to_string())),
                ],
                &a.common.set,
            )?;
        }
        Command::Verify(c) => {
            apply_overrides(
                &mut raw,
                &[("experiment", Some("verify".into())), ("out", c.out.as_ref().map(|p| p.display().to_string()))],
                &c.set,
            )?;
        }
        Command::Formulas(f) => {
            apply_overrides(
                &mut raw,
                &[
                    ("experiment", Some("formulas".into())),
                    ("formula", Some(f.formula.clone())),
                    ("n", f.n.map(|v| v.to_string())),
                    ("x_min", f.x_min.map(|v| v.to_string())),
                    ("x_max", f.x_max.map(|v| v.to_string())),
                    ("points", f.points.map(|v| v.to_string())),
                    ("out", f.common.out.as_ref().map(|p| p.display().to_string())),
                ],
                &f.common.set,
            )?;
        }
        Command::Keys => unreachable!("handled before config"),
    }
    raw.into_config()
}

fn print_keys() {
    println!("configuration keys:");
    for (k, d) in KEYS {
        println!("  {k:<15} {d}");
    }
    println!("formulas:");
    for f in FORMULAS {
        println!("  {f}");
    }
}

/// Writes whatever the run produced plus `summary.json` and `manifest.json`.
fn finish(
    dir: &Path,
    cfg: &ExperimentConfig,
    seed: u64,
    seed_source: &str,
    started: Instant,
    ranges: &[experiments::WorkerRange],
    outcome: &Result<Report, RunError>,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let (status, files, assertions, values, rejections, error) = match outcome {
        Ok(r) => {
            let files = write_report(dir, r)?;
            let status = if r.passed() { "pass" } else { "fail" };
            (status, files, serde_json::to_value(&r.assertions)?, Value::Object(r.values.clone()), serde_json::to_value(&r.rejections)?, Value::Null)
        }
        Err(e) => ("backend_failure", Vec::new(), json!([]), json!({}), json!({}), json!(e.to_string())),
    };
    write_json(
        &dir.join("summary.json"),
        &json!({
            "experiment": cfg.experiment.name(),
            "status": status,
            "error": error,
            "assertions": assertions,
            "values": values,
            "rejections": rejections,
        }),
    )?;
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "seed_source": seed_source,
            "wall_time_seconds": started.elapsed().as_secs_f64(),
            "workers": cfg.workers,
            "worker_ranges": ranges,
            "rejections": rejections,
            "files": files,
            "config": cfg,
        }),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if matches!(cli.command, Command::Keys) {
        print_keys();
        return ExitCode::SUCCESS;
    }
    let cfg = match build_config(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let (seed, seed_source) = match cfg.seed {
        Some(s) => (s, "config"),
        None if !cfg.experiment.is_randomized() => (0, "unused"),
        None => (rand::random::<u64>(), "entropy"),
    };
    if seed_source == "entropy" {
        eprintln!("seed {seed} (from entropy; pass --seed {seed} to reproduce)");
    }
    let ranges = worker_ranges(cfg.trials, cfg.workers);
    let started = Instant::now();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start {} workers: {e}", cfg.workers);
            return ExitCode::from(EXIT_BACKEND);
        }
    };
    let outcome = pool.install(|| experiments::run(&cfg, seed, &ranges));
    if let Err(e) = finish(&cfg.out, &cfg, seed, seed_source, started, &ranges, &outcome) {
        eprintln!("cannot write output to {}: {e}", cfg.out.display());
        return ExitCode::from(EXIT_BACKEND);
    }
    match outcome {
        Err(e) => {
            eprintln!("{}: {e}", cfg.experiment.name());
            ExitCode::from(EXIT_BACKEND)
        }
        Ok(r) => {
            for a in &r.assertions {
                println!("{} {}: {}", if a.pass { "PASS" } else { "FAIL" }, a.name, a.detail);
            }
            for (reason, count) in &r.rejections {
                println!("rejected {count} ({reason})");
            }
            println!("output in {}", cfg.out.display());
            if r.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ASSERTION)
            }
        }
    }
}
