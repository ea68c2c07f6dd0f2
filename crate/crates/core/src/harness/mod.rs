//! Configuration, experiment execution and CSV output.

pub mod cli;
pub mod config;
pub mod trace;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optimizers::run;

pub use config::{BuiltProblem, NeumannTerms, ProblemKind, RunConfig};
pub use trace::{RunTrace, TraceMeta, TraceRecord, CSV_HEADER};

/// Header of the sweep summary file.
pub const SUMMARY_HEADER: &str = "value,seed,final_avg_grad_norm,best_grad_phi_norm";

/// Validates, builds and runs one configuration. The trace is written to
/// `output_path` when it is non-empty.
pub fn run_experiment(config: &RunConfig) -> Result<RunTrace> {
    config.validate()?;
    let problem = config.build_problem()?;
    let settings = config.settings(&problem)?;
    let mut trace = run(problem.as_ref(), &settings)?;
    trace.meta.config_echo = config.to_text();
    if !config.output_path.is_empty() {
        let path = Path::new(&config.output_path);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        trace.save_csv(path)?;
    }
    Ok(trace)
}

/// One row of the sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub seed: u64,
    pub final_avg_grad_norm: Option<f64>,
    pub best_grad_phi_norm: Option<f64>,
    pub path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// In (value, seed) order.
    pub rows: Vec<SweepRow>,
    pub summary_path: PathBuf,
}

fn file_stem(value: &str) -> String {
    value
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

/// Worker count for sweeps: `HIEROPT_THREADS` if set to a positive integer,
/// otherwise the machine's parallelism.
pub fn sweep_threads() -> usize {
    std::env::var("HIEROPT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `base` once per (value of `param`, seed) and writes one CSV per run
/// plus `summary.csv` into `out_dir`.
pub fn run_sweep(base: &RunConfig, param: &str, values: &[String], seeds: &[u64], out_dir: &Path) -> Result<SweepOutcome> {
    run_sweep_with_threads(base, param, values, seeds, out_dir, sweep_threads())
}

pub fn run_sweep_with_threads(
    base: &RunConfig,
    param: &str,
    values: &[String],
    seeds: &[u64],
    out_dir: &Path,
    threads: usize,
) -> Result<SweepOutcome> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let mut jobs = Vec::with_capacity(values.len() * seeds.len());
    for value in values {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.set(param, value)?;
            cfg.seed = seed;
            let path = out_dir.join(format!("{}={}_seed={seed}.csv", file_stem(param), file_stem(value)));
            cfg.output_path = path.to_string_lossy().into_owned();
            cfg.validate()?;
            jobs.push((value.clone(), seed, cfg, path));
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let rows: Vec<Result<SweepRow>> = pool.install(|| {
        jobs.into_par_iter()
            .map(|(value, seed, cfg, path)| {
                let trace = run_experiment(&cfg)?;
                Ok(SweepRow {
                    value,
                    seed,
                    final_avg_grad_norm: trace.final_avg_grad_norm(),
                    best_grad_phi_norm: trace.best_grad_phi_norm(),
                    path,
                })
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let summary_path = out_dir.join("summary.csv");
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&summary_path)?;
    w.write_record(SUMMARY_HEADER.split(','))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &rows {
        w.write_record([
            r.value.clone(),
            r.seed.to_string(),
            opt(r.final_avg_grad_norm),
            opt(r.best_grad_phi_norm),
        ])?;
    }
    w.flush()?;
    Ok(SweepOutcome { rows, summary_path })
}
