use std::fs;
use std::path::Path;

use reactive_vol::event_study::Estimator;
use reactive_vol::EstimatorParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Settings accepted from a TOML config file. Every key is optional and
/// command-line flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lambda_s: Option<f64>,
    pub lambda_f: Option<f64>,
    pub lambda_sigma: Option<f64>,
    pub phi: Option<f64>,
    pub ell: Option<f64>,
    pub warmup: Option<usize>,
    pub seed: Option<u64>,
    pub delta: Option<usize>,
    pub threshold_mult: Option<f64>,
    pub tau_max: Option<usize>,
    pub fit_max: Option<usize>,
    pub maturities: Option<Vec<f64>>,
    pub steps: Option<usize>,
    pub burn_in: Option<usize>,
    pub sigma_tilde: Option<f64>,
    pub estimator: Option<Estimator>,
    pub baseline_samples: Option<usize>,
    pub warning_multiplier: Option<f64>,
    pub tail_threshold: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings, echoed into every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig<T> {
    pub command: &'static str,
    pub seed: u64,
    pub warmup: usize,
    pub params: EstimatorParams,
    #[serde(flatten)]
    pub options: T,
}

impl<T> RunConfig<T> {
    pub fn new(command: &'static str, seed: u64, warmup: usize, params: EstimatorParams, options: T) -> Self {
        Self { command, seed, warmup, params, options }
    }

    pub fn with<U>(&self, command: &'static str, options: U) -> RunConfig<U> {
        RunConfig::new(command, self.seed, self.warmup, self.params, options)
    }
}

pub fn resolve_params(
    flags: [Option<f64>; 5],
    file: &FileConfig,
) -> Result<EstimatorParams, CliError> {
    let d = EstimatorParams::default();
    let [lambda_s, lambda_f, lambda_sigma, phi, ell] = flags;
    let params = EstimatorParams {
        lambda_s: lambda_s.or(file.lambda_s).unwrap_or(d.lambda_s),
        lambda_f: lambda_f.or(file.lambda_f).unwrap_or(d.lambda_f),
        lambda_sigma: lambda_sigma.or(file.lambda_sigma).unwrap_or(d.lambda_sigma),
        phi: phi.or(file.phi).unwrap_or(d.phi),
        ell: ell.or(file.ell).unwrap_or(d.ell),
    };
    params.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(params)
}

/// Caps the worker pool at `REACTIVE_VOL_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("REACTIVE_VOL_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("REACTIVE_VOL_THREADS={value:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}
