//! `attackkf`: simulate attacked tracking data, estimate states from recorded
//! measurements and benchmark the estimators.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure. Errors are printed to stderr as a JSON object.

mod commands;
mod config;
mod error;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Estimator;
use crate::config::Resolved;
use crate::error::{CliError, Kind};

#[derive(Debug, Parser)]
#[command(
    name = "attackkf",
    version,
    about = "Attack-aware Kalman filtering and smoothing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write ground truth, attacked measurements and the attack log of one run.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Seed of the run; defaults to `execution.base_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Filter and smooth a recorded measurement file.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Measurement CSV (`step,y1,y2`); defaults to `execution.measurements`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "proposed")]
        estimator: Estimator,
        /// Also write every covariance matrix to covariances.json.
        #[arg(long)]
        full_cov: bool,
    },
    /// Monte Carlo RMSE comparison of the estimators.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        /// Comma-separated subset of proposed_kf, proposed_rtss, standard_kf, standard_rtss.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
    },
    /// Check a configuration and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `execution.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<Resolved, CliError> {
        let mut cfg = commands::load_config(&self.config)?.map_err(CliError::invalid_config)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let written = match cli.command {
        Command::Validate { config } => {
            let valid = commands::validate(&config)?;
            return Ok(if valid {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            });
        }
        Command::Simulate { common, seed } => {
            let cfg = common.resolve()?;
            commands::simulate(&cfg, seed.unwrap_or(cfg.base_seed))?
        }
        Command::Estimate {
            common,
            input,
            estimator,
            full_cov,
        } => {
            let mut cfg = common.resolve()?;
            cfg.full_cov |= full_cov;
            let input = input.or_else(|| cfg.measurements.clone()).ok_or_else(|| {
                CliError::config("no measurement file: pass --input or set execution.measurements")
            })?;
            commands::estimate(&cfg, &input, estimator)?
        }
        Command::Benchmark {
            common,
            seed,
            runs,
            methods,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(seed) = seed {
                cfg.base_seed = seed;
            }
            if let Some(runs) = runs {
                if runs == 0 {
                    return Err(CliError::config("--runs must be at least 1"));
                }
                cfg.runs = runs;
            }
            if let Some(names) = methods {
                let mut issues = Vec::new();
                cfg.methods = config::parse_methods(names.iter().map(String::as_str), &mut issues);
                if !issues.is_empty() {
                    return Err(CliError::invalid_config(issues));
                }
            }
            commands::benchmark(&cfg)?
        }
    };
    for path in written {
        println!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::new(Kind::Usage, e.to_string().trim_end());
            eprintln!("{}", err.to_json());
            return err.kind.exit_code();
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.kind.exit_code()
        }
    }
}
