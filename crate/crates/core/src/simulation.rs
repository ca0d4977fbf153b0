//! Monte Carlo paths of the reactive dynamics and the return-volatility
//! correlation function measured on them.
//!
//! Paths follow `I(t+1) = I(t) (1 + sigma_I(t) eps_t)` with
//! `sigma_I(t) = sigma_tilde * L(t) / I(t)` and a constant `sigma_tilde`.
//!
//! # Random numbers
//!
//! Each path draws from `ChaCha8Rng::seed_from_u64(seed)` on stream
//! `stream` (`set_stream`), so paths sharing a seed but differing in stream
//! are independent, and a given `(seed, stream)` pair reproduces the same
//! path on every platform. Innovations are `rand_distr::StandardNormal`.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::fit_exp_decay;
use crate::reactive::{EstimatorParams, ReactiveState};
use crate::timeseries::{business_days, PriceSeries};

/// First recorded date of simulated paths.
pub fn simulation_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

/// Builds the generator for one path.
pub fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Recorded prices.
    pub n_steps: usize,
    pub sigma_tilde_const: f64,
    pub params: EstimatorParams,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    /// Steps simulated and discarded before recording.
    pub burn_in: usize,
    pub initial_price: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_steps: 10_000,
            sigma_tilde_const: 0.01,
            params: EstimatorParams::default(),
            seed: 0,
            stream: 0,
            burn_in: 100,
            initial_price: 100.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_steps < 2 || self.n_steps <= self.burn_in {
            return Err(Error::param(
                "n_steps",
                format!("{} must exceed burn_in ({}) and 1", self.n_steps, self.burn_in),
            ));
        }
        if !(self.sigma_tilde_const >= 0.0 && self.sigma_tilde_const.is_finite()) {
            return Err(Error::param("sigma_tilde_const", "must be >= 0"));
        }
        if !(self.initial_price > 0.0) {
            return Err(Error::param("initial_price", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub series: PriceSeries,
    /// Combined level `L(t)` at each recorded date.
    pub levels: Vec<f64>,
    /// Innovations redrawn because they would have made the price non-positive.
    pub resampled: usize,
}

impl SimulatedPath {
    /// Arithmetic returns `dI(t+1) / I(t)`.
    pub fn raw_returns(&self) -> Vec<f64> {
        self.series
            .prices()
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0])
            .collect()
    }

    /// Renormalized returns `dI(t+1) / L(t)`, using the pre-move level.
    pub fn renormalized_returns(&self) -> Vec<f64> {
        self.series
            .prices()
            .windows(2)
            .zip(&self.levels)
            .map(|(w, level)| (w[1] - w[0]) / level)
            .collect()
    }
}

pub fn simulate_path(config: &SimConfig) -> Result<SimulatedPath> {
    config.validate()?;
    let mut rng = path_rng(config.seed, config.stream);
    Ok(simulate_with(config, &config.params, || StandardNormal.sample(&mut rng)))
}

pub fn simulate_index(config: &SimConfig) -> Result<PriceSeries> {
    Ok(simulate_path(config)?.series)
}

/// Core loop, parameterised by the innovation source. Parameters are not
/// validated here so the tests can probe mirrored dynamics.
pub(crate) fn simulate_with(
    config: &SimConfig,
    params: &EstimatorParams,
    mut draw: impl FnMut() -> f64,
) -> SimulatedPath {
    let total = config.burn_in + config.n_steps;
    // The variance slot is unused: sigma_tilde is held constant.
    let mut state = ReactiveState::with_variance(config.initial_price, &EstimatorParams::default(), 0.0)
        .expect("valid initial price");
    let mut prices = Vec::with_capacity(config.n_steps);
    let mut levels = Vec::with_capacity(config.n_steps);
    let mut resampled = 0;
    for t in 0..total {
        if t >= config.burn_in {
            prices.push(state.last_price);
            levels.push(state.level);
        }
        if t + 1 == total {
            break;
        }
        let sigma = config.sigma_tilde_const * state.level / state.last_price;
        let factor = loop {
            let f = 1.0 + sigma * draw();
            if f > 0.0 {
                break f;
            }
            resampled += 1;
        };
        state
            .advance_levels(state.last_price * factor, params)
            .expect("positive price");
    }
    let dates = business_days(simulation_start(), prices.len());
    let id = format!("sim-{}-{}", config.seed, config.stream);
    SimulatedPath {
        series: PriceSeries::new(id, dates, prices).expect("simulated series is valid"),
        levels,
        resampled,
    }
}

/// `L(tau) = <dx(t+tau)^2 dx(t)> / <dx(t)^2>^2` for `tau = 1..=tau_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrFunction {
    pub taus: Vec<usize>,
    pub values: Vec<f64>,
    pub n_samples: Vec<usize>,
    /// Standard error of each value, treating products as independent.
    pub std_errors: Vec<f64>,
}

pub fn leverage_correlation(series: &PriceSeries, tau_max: usize) -> Result<CorrFunction> {
    let returns: Vec<f64> = series
        .prices()
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0])
        .collect();
    correlation_of_returns(&returns, tau_max)
}

pub fn correlation_of_returns(returns: &[f64], tau_max: usize) -> Result<CorrFunction> {
    if tau_max == 0 {
        return Err(Error::param("tau_max", "must be >= 1"));
    }
    // series length > tau_max + 2  <=>  returns > tau_max + 1
    if returns.len() < tau_max + 2 {
        return Err(Error::TooShort {
            needed: tau_max + 3,
            got: returns.len() + 1,
        });
    }
    let m2 = returns.iter().map(|x| x * x).sum::<f64>() / returns.len() as f64;
    if !(m2 > 0.0) {
        return Err(Error::Degenerate("returns have zero second moment".into()));
    }
    let denom = m2 * m2;
    let mut corr = CorrFunction {
        taus: Vec::with_capacity(tau_max),
        values: Vec::with_capacity(tau_max),
        n_samples: Vec::with_capacity(tau_max),
        std_errors: Vec::with_capacity(tau_max),
    };
    for tau in 1..=tau_max {
        let n = returns.len() - tau;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for (early, late) in returns.iter().zip(&returns[tau..]) {
            let v = late * late * early;
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        corr.taus.push(tau);
        corr.values.push(mean / denom);
        corr.n_samples.push(n);
        corr.std_errors.push((var / n as f64).sqrt() / denom);
    }
    Ok(corr)
}

/// Fit of `L(tau) ~ -A exp(-tau / T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub amplitude: f64,
    pub time_constant: f64,
    pub residual_norm: f64,
    pub lags_used: usize,
}

/// Lags with fewer samples than this are left out of the fit.
pub const MIN_LAG_SAMPLES: usize = 100;
/// Default last lag of the fit window.
pub const DEFAULT_FIT_MAX_LAG: usize = 20;

/// Least-squares fit over lags `min_lag..=max_lag` (clipped to the lags
/// available with enough samples).
pub fn fit_exponential(corr: &CorrFunction, min_lag: usize, max_lag: usize) -> Result<ExpFit> {
    let (taus, values): (Vec<f64>, Vec<f64>) = corr
        .taus
        .iter()
        .zip(&corr.values)
        .zip(&corr.n_samples)
        .filter(|((tau, _), n)| **tau >= min_lag && **tau <= max_lag && **n >= MIN_LAG_SAMPLES)
        .map(|((tau, v), _)| (*tau as f64, *v))
        .unzip();
    let negatives = values.iter().filter(|v| **v < 0.0).count();
    if negatives < 5 {
        return Err(Error::Degenerate(format!(
            "only {negatives} negative lags in the fit window, no leverage to fit"
        )));
    }
    let fit = fit_exp_decay(&taus, &values)?;
    if !(fit.amplitude < 0.0) {
        return Err(Error::Degenerate(format!(
            "fitted curve is positive (amplitude {})",
            -fit.amplitude
        )));
    }
    Ok(ExpFit {
        amplitude: -fit.amplitude,
        time_constant: fit.time_constant,
        residual_norm: fit.residual_norm,
        lags_used: taus.len(),
    })
}
