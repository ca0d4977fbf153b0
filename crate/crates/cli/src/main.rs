mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reactive_vol::benchmarks::GarchParams;
use reactive_vol::event_study::{Estimator, DEFAULT_DELTA, DEFAULT_THRESHOLD_MULT};
use reactive_vol::simulation::{SimConfig, DEFAULT_FIT_MAX_LAG};
use reactive_vol::DEFAULT_WARMUP;
use serde_json::json;

use commands::*;
use config::{configure_threads, resolve_params, FileConfig, RunConfig};
use error::CliError;
use output::ArtifactWriter;

const DEFAULT_TAU_MAX: usize = 40;
const DEFAULT_MATURITIES: [f64; 6] = [1.0, 5.0, 21.0, 63.0, 126.0, 252.0];

#[derive(Parser)]
#[command(name = "reactive-vol", version, about = "Reactive volatility estimation, simulation and event studies")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file of `key = value` settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    lambda_s: Option<f64>,
    #[arg(long, global = true)]
    lambda_f: Option<f64>,
    #[arg(long, global = true)]
    lambda_sigma: Option<f64>,
    #[arg(long, global = true)]
    phi: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    ell: Option<f64>,
    /// Returns used to seed the variance before outputs stop being provisional.
    #[arg(long, global = true)]
    warmup: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Reactive,
    Standard,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Reactive => Estimator::Reactive,
            EstimatorArg::Standard => Estimator::Standard,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Reactive, EMA and GARCH(1,1) volatility for one price series.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        /// Index series; when given, `--input` is treated as a stock.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Fixed GARCH parameters instead of a fit.
        #[arg(long, value_name = "OMEGA,ALPHA,BETA", value_delimiter = ',')]
        garch_params: Option<Vec<f64>>,
    },
    /// Simulate an index path with constant renormalized volatility.
    Simulate {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        sigma_tilde: Option<f64>,
    },
    /// Return-volatility correlation function and its exponential fit.
    Correlate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        tau_max: Option<usize>,
        /// Largest lag used in the fit.
        #[arg(long)]
        fit_max: Option<usize>,
    },
    /// Volatility term structure at the last date of an index series.
    Term {
        #[arg(long)]
        input: PathBuf,
        /// Maturities in trading days.
        #[arg(long, value_delimiter = ',')]
        maturities: Option<Vec<f64>>,
    },
    /// Regression of daily increments of `--y` on those of `--x`.
    Compare {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
    },
    /// Extreme-event study over a directory of stock price files.
    Events {
        /// Directory of `date,close` stock files.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long, value_enum)]
        estimator: Option<EstimatorArg>,
        #[arg(long)]
        delta: Option<usize>,
        #[arg(long)]
        threshold_mult: Option<f64>,
        #[arg(long)]
        tail_threshold: Option<f64>,
        /// Random windows drawn per stock for the baseline profile.
        #[arg(long)]
        baseline_samples: Option<usize>,
        #[arg(long)]
        warning_multiplier: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    configure_threads()?;
    let c = &cli.common;
    let file = match &c.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let params = resolve_params([c.lambda_s, c.lambda_f, c.lambda_sigma, c.phi, c.ell], &file)?;
    let seed = c.seed.or(file.seed).unwrap_or(0);
    let warmup = c.warmup.or(file.warmup).unwrap_or(DEFAULT_WARMUP);
    let mut out = ArtifactWriter::new(&c.out)?;
    let base = RunConfig::new("", seed, warmup, params, ());

    let summary = match cli.command {
        Command::Estimate { input, index, garch_params } => {
            let garch_params = match garch_params.as_deref() {
                None => None,
                Some(&[omega, alpha, beta]) => Some(GarchParams { omega, alpha, beta }),
                Some(v) => {
                    return Err(CliError::Config(format!("--garch-params needs 3 values, got {}", v.len())))
                }
            };
            let options = EstimateOptions {
                input: path_string(&input),
                index: index.as_deref().map(path_string),
                garch_params,
            };
            estimate(&base.with("estimate", options), &input, index.as_deref(), &mut out)?
        }
        Command::Simulate { steps, burn_in, sigma_tilde } => {
            let d = SimConfig::default();
            let options = SimulateOptions {
                steps: steps.or(file.steps).unwrap_or(d.n_steps),
                burn_in: burn_in.or(file.burn_in).unwrap_or(d.burn_in),
                sigma_tilde: sigma_tilde.or(file.sigma_tilde).unwrap_or(d.sigma_tilde_const),
            };
            simulate(&base.with("simulate", options), &mut out)?
        }
        Command::Correlate { input, tau_max, fit_max } => {
            let options = CorrelateOptions {
                input: path_string(&input),
                tau_max: tau_max.or(file.tau_max).unwrap_or(DEFAULT_TAU_MAX),
                fit_max: fit_max.or(file.fit_max).unwrap_or(DEFAULT_FIT_MAX_LAG),
            };
            correlate(&base.with("correlate", options), &input, &mut out)?
        }
        Command::Term { input, maturities } => {
            let maturities = maturities
                .or(file.maturities)
                .unwrap_or_else(|| DEFAULT_MATURITIES.to_vec());
            let options = TermOptions { input: path_string(&input), maturities };
            term(&base.with("term", options), &input, &mut out)?
        }
        Command::Compare { x, y } => {
            let options = CompareOptions { x: path_string(&x), y: path_string(&y) };
            compare(&base.with("compare", options), &x, &y, &mut out)?
        }
        Command::Events {
            input,
            index,
            estimator,
            delta,
            threshold_mult,
            tail_threshold,
            baseline_samples,
            warning_multiplier,
        } => {
            let delta = delta.or(file.delta).unwrap_or(DEFAULT_DELTA);
            let threshold_mult = threshold_mult.or(file.threshold_mult).unwrap_or(DEFAULT_THRESHOLD_MULT);
            let options = EventsOptions {
                input: path_string(&input),
                index: path_string(&index),
                estimator: estimator.map(Estimator::from).or(file.estimator).unwrap_or_default(),
                delta,
                threshold_mult,
                tail_threshold: tail_threshold.or(file.tail_threshold).unwrap_or(threshold_mult),
                baseline_samples: baseline_samples.or(file.baseline_samples).unwrap_or(200),
                warning_multiplier: warning_multiplier.or(file.warning_multiplier).unwrap_or(2.0),
                warning_lookback: delta,
            };
            events(&base.with("events", options), &input, &index, &mut out)?
        }
    };
    Ok(json!({ "status": "ok", "artifacts": out.written(), "summary": summary }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error: {e}");
            println!("{}", json!({ "status": "error", "exit_code": code, "message": e.to_string() }));
            ExitCode::from(code)
        }
    }
}
