// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::json;

use commands::RunError;
use config::{Command, ScenarioConfig};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

/// Runs a filtering scenario described by a JSON config file.
#[derive(Debug, Parser)]
#[command(name = "filterlab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Scenario file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("filterlab: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();

    let mut cfg = match ScenarioConfig::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if cfg.command != cli.command {
        return fail(EXIT_CONFIG, format!("config is for `{}`, not `{}`", cfg.command, cli.command));
    }
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(EXIT_CONFIG, format!("cannot start {n} threads: {e}"));
        }
    }

    let mut outcome = match commands::run(&cfg) {
        Ok(o) => o,
        Err(RunError::Config(msg)) => return fail(EXIT_CONFIG, format!("invalid config: {msg}")),
        Err(RunError::Core(e)) if e.is_numeric_failure() => return fail(EXIT_NUMERIC, format!("numeric failure: {e}")),
        Err(RunError::Core(e)) => return fail(EXIT_CONFIG, format!("invalid config: {e}")),
    };

    let passed = outcome.checks.iter().all(|c| c.passed);
    let files: Vec<String> = outcome.artifacts.names().map(String::from).chain(["summary.json".into()]).collect();
    let summary = json!({
        "config": cfg,
        "seed": cfg.master_seed,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "checks": outcome.checks,
        "passed": passed,
        "results": outcome.results,
        "files": files,
    });
    outcome.artifacts.add_json("summary.json", &summary);
    if let Err(e) = outcome.artifacts.commit(&cfg.output_dir) {
        return fail(EXIT_NUMERIC, format!("writing {}: {e}", cfg.output_dir.display()));
    }

    if let Some(report) = &outcome.report {
        println!("{}", serde_json::to_string_pretty(report).expect("json"));
    }
    for c in &outcome.checks {
        println!("check {}: {} ({:e} vs {:e})", c.name, if c.passed { "pass" } else { "FAIL" }, c.value, c.threshold);
    }
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}
