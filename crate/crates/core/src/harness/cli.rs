//! Command-line entry point: `run`, `sweep` and `verify`.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage or configuration error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::verify::{run_named_check, CHECK_NAMES};

use super::{run_experiment, run_sweep, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "hieropt", version, about = "Noise-adaptive minimax and bilevel optimizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Configuration file (key = value per line).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one configuration and write its trace.
    Run(ConfigArgs),
    /// Run a configuration over a list of values of one key.
    Sweep {
        #[command(flatten)]
        common: ConfigArgs,
        /// Key to vary (any config key, or `sigma`).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// Run numerical checks of the analysis.
    Verify {
        /// Check name or `all`.
        #[arg(long, default_value = "all")]
        check: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for pair in &args.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{pair}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn cmd_run(args: &ConfigArgs) -> Result<i32> {
    let base = load_config(args)?;
    let seeds = if args.seeds.is_empty() {
        vec![base.seed]
    } else {
        args.seeds.clone()
    };
    for &seed in &seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        if let Some(dir) = &args.out {
            let name = if seeds.len() == 1 {
                "trace.csv".to_owned()
            } else {
                format!("trace_seed={seed}.csv")
            };
            cfg.output_path = dir.join(name).to_string_lossy().into_owned();
        }
        let trace = run_experiment(&cfg)?;
        if cfg.output_path.is_empty() {
            let mut out = std::io::stdout().lock();
            trace.write_csv(&mut out)?;
            out.flush()?;
        } else {
            eprintln!("wrote {}", cfg.output_path);
        }
    }
    Ok(0)
}

fn cmd_sweep(args: &ConfigArgs, param: &str, values: &[String]) -> Result<i32> {
    let base = load_config(args)?;
    let out = args
        .out
        .clone()
        .ok_or_else(|| Error::Config("sweep needs --out <dir>".into()))?;
    let seeds = if args.seeds.is_empty() {
        vec![base.seed]
    } else {
        args.seeds.clone()
    };
    let outcome = run_sweep(&base, param, values, &seeds, &out)?;
    eprintln!("wrote {} traces and {}", outcome.rows.len(), outcome.summary_path.display());
    Ok(0)
}

fn cmd_verify(check: &str, seed: u64) -> Result<i32> {
    let names: Vec<&str> = if check == "all" {
        CHECK_NAMES.to_vec()
    } else {
        vec![check]
    };
    let mut failed = false;
    for name in names {
        let report = run_named_check(name, seed)?;
        println!("{report}");
        failed |= !report.passed;
    }
    Ok(i32::from(failed))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep { common, param, values } => cmd_sweep(common, param, values),
        Command::Verify { check, seed } => cmd_verify(check, *seed),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
