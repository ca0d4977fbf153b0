//! Baseline volatility estimators and the increment regression used to
//! compare any two volatility series.

use argmin::core::{
    CostFunction, Error as ArgminError, Executor, State, TerminationReason, TerminationStatus,
};
use argmin::solver::neldermead::NelderMead;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reactive::RenormalizedVariance;
use crate::timeseries::{arithmetic_returns, check_weight, ema, PriceSeries, VolTrace};

/// Minimum number of returns accepted by [`garch_fit`].
pub const MIN_FIT_RETURNS: usize = 250;

/// EMA of squared returns: `(1 - lambda) * prev_var + lambda * ret^2`.
pub fn std_ema_vol_update(prev_var: f64, ret: f64, lambda_sigma: f64) -> Result<f64> {
    check_weight("lambda_sigma", lambda_sigma)?;
    if !(prev_var >= 0.0) {
        return Err(Error::param("prev_var", format!("{prev_var} must be >= 0")));
    }
    Ok(ema(prev_var, ret * ret, lambda_sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GarchParams {
    /// Values fitted on the Eurostoxx 50 and quoted with the V2X comparison.
    pub const EUROSTOXX: GarchParams = GarchParams {
        omega: 0.0000014,
        alpha: 0.1064523,
        beta: 0.8966662,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("omega", self.omega), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("{v} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Validation plus covariance stationarity `alpha + beta < 1`.
    pub fn validate_stationary(&self) -> Result<()> {
        self.validate()?;
        if self.alpha + self.beta >= 1.0 {
            return Err(Error::param(
                "alpha",
                format!("alpha + beta = {} must be < 1", self.alpha + self.beta),
            ));
        }
        Ok(())
    }

    pub fn unconditional_variance(&self) -> Option<f64> {
        let persistence = self.alpha + self.beta;
        (persistence < 1.0).then(|| self.omega / (1.0 - persistence))
    }
}

/// GARCH(1,1) variance recursion `omega + alpha * ret^2 + beta * prev_var`.
/// Non-stationary parameters are accepted here (the quoted Eurostoxx fit has
/// `alpha + beta` slightly above 1); use [`GarchParams::validate_stationary`]
/// where stationarity matters.
pub fn garch_update(prev_var: f64, ret: f64, params: &GarchParams) -> Result<f64> {
    params.validate()?;
    if !(prev_var >= 0.0) {
        return Err(Error::param("prev_var", format!("{prev_var} must be >= 0")));
    }
    Ok(params.omega + params.alpha * ret * ret + params.beta * prev_var)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchFit {
    pub params: GarchParams,
    /// Gaussian log-likelihood, up to the `-n/2 ln(2 pi)` constant.
    pub log_likelihood: f64,
    pub iterations: u64,
    /// False when the simplex hit the iteration cap; the best point so far
    /// is still returned.
    pub converged: bool,
}

struct GarchQuasiLikelihood<'a> {
    /// Returns scaled to unit mean square.
    scaled: &'a [f64],
}

impl GarchQuasiLikelihood<'_> {
    fn negative_log_likelihood(&self, omega: f64, alpha: f64, beta: f64) -> f64 {
        let mut h: f64 = 1.0;
        let mut total = 0.0;
        for r in self.scaled {
            total += h.ln() + r * r / h;
            h = omega + alpha * r * r + beta * h;
        }
        0.5 * total
    }
}

impl CostFunction for GarchQuasiLikelihood<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> Result<f64, ArgminError> {
        let (omega, alpha, beta) = (p[0], p[1], p[2]);
        let violation = (-omega).max(0.0) + (-alpha).max(0.0) + (-beta).max(0.0)
            + (alpha + beta - 0.9999).max(0.0)
            + if omega <= 0.0 { 1e-6 } else { 0.0 };
        if violation > 0.0 {
            return Ok(1e10 * (1.0 + violation));
        }
        Ok(self.negative_log_likelihood(omega, alpha, beta))
    }
}

/// Maximizes the Gaussian quasi-likelihood of a zero-mean GARCH(1,1) with a
/// Nelder-Mead simplex started at `omega = 0.1 var, alpha = 0.1, beta = 0.8`.
/// The fit is run on returns scaled to unit mean square, which leaves
/// `alpha` and `beta` unchanged and scales `omega` by the sample variance.
pub fn garch_fit(returns: &[f64]) -> Result<GarchFit> {
    if returns.len() < MIN_FIT_RETURNS {
        return Err(Error::TooShort {
            needed: MIN_FIT_RETURNS,
            got: returns.len(),
        });
    }
    let var = returns.iter().map(|r| r * r).sum::<f64>() / returns.len() as f64;
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Degenerate("returns have zero variance".into()));
    }
    let scale = var.sqrt();
    let scaled: Vec<f64> = returns.iter().map(|r| r / scale).collect();
    let problem = GarchQuasiLikelihood { scaled: &scaled };

    let start = vec![0.1, 0.1, 0.8];
    let simplex = vec![
        start.clone(),
        vec![0.2, 0.1, 0.8],
        vec![0.1, 0.15, 0.8],
        vec![0.1, 0.1, 0.7],
    ];
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-12)
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    let result = Executor::new(problem, solver)
        .configure(|s| s.max_iters(5000))
        .run()
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    let state = result.state();
    let best = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::Degenerate("optimizer returned no parameters".into()))?;
    let converged = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    );
    let params = GarchParams {
        omega: best[0] * var,
        alpha: best[1],
        beta: best[2],
    };
    // log-likelihood in original units: each term gains -ln(var) / 2
    let log_likelihood = -state.get_best_cost() - 0.5 * returns.len() as f64 * var.ln();
    Ok(GarchFit {
        params,
        log_likelihood,
        iterations: state.get_iter(),
        converged,
    })
}

/// Standard estimator trace: EMA of squared arithmetic returns, seeded from
/// the sample variance of the first `warmup` returns.
pub fn std_ema_trace(series: &PriceSeries, lambda_sigma: f64, warmup: usize) -> Result<VolTrace> {
    check_weight("lambda_sigma", lambda_sigma)?;
    let returns = arithmetic_returns(series)?;
    let mut variance = RenormalizedVariance::new_warming(warmup);
    let mut sigma = vec![0.0];
    let mut provisional = vec![warmup > 0];
    for r in &returns.returns {
        variance.absorb(*r, *r, lambda_sigma);
        sigma.push(variance.sigma_tilde_sq.sqrt());
        provisional.push(variance.warmup_remaining > 0);
    }
    Ok(VolTrace {
        instrument_id: series.instrument_id().to_string(),
        dates: series.dates().to_vec(),
        sigma,
        provisional,
    })
}

/// GARCH(1,1) trace started at the unconditional variance (or the sample
/// mean square when the parameters are not stationary).
pub fn garch_trace(series: &PriceSeries, params: &GarchParams) -> Result<VolTrace> {
    params.validate()?;
    let returns = arithmetic_returns(series)?;
    let mut var = params.unconditional_variance().unwrap_or_else(|| {
        returns.returns.iter().map(|r| r * r).sum::<f64>() / returns.len() as f64
    });
    let mut sigma = vec![var.sqrt()];
    for r in &returns.returns {
        var = params.omega + params.alpha * r * r + params.beta * var;
        sigma.push(var.sqrt());
    }
    Ok(VolTrace {
        instrument_id: series.instrument_id().to_string(),
        dates: series.dates().to_vec(),
        provisional: vec![false; sigma.len()],
        sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub correlation: f64,
    /// Number of increments regressed.
    pub n: usize,
}

/// Ordinary least squares of the one-step increments of `y` on those of `x`.
pub fn increment_regression(x: &[f64], y: &[f64]) -> Result<RegressionReport> {
    if x.len() != y.len() {
        return Err(Error::Misaligned(format!("{} vs {} points", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::TooShort { needed: 3, got: x.len() });
    }
    let dx: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let n = dx.len() as f64;
    let mx = dx.iter().sum::<f64>() / n;
    let my = dy.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in dx.iter().zip(&dy) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("increments have zero variance".into()));
    }
    let slope = sxy / sxx;
    let correlation = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(RegressionReport {
        slope,
        intercept: my - slope * mx,
        r_squared: correlation * correlation,
        correlation,
        n: dx.len(),
    })
}

/// Keeps the dates present in both series, in order.
pub fn align_by_date(
    a_dates: &[NaiveDate],
    a: &[f64],
    b_dates: &[NaiveDate],
    b: &[f64],
) -> (Vec<NaiveDate>, Vec<f64>, Vec<f64>) {
    let (mut i, mut j) = (0, 0);
    let (mut dates, mut xa, mut xb) = (Vec::new(), Vec::new(), Vec::new());
    while i < a_dates.len() && j < b_dates.len() {
        match a_dates[i].cmp(&b_dates[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dates.push(a_dates[i]);
                xa.push(a[i]);
                xb.push(b[j]);
                i += 1;
                j += 1;
            }
        }
    }
    (dates, xa, xb)
}
