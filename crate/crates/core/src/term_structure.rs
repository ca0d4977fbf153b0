//! Two-factor term structure of the reactive volatility.
//!
//! The instantaneous variance is split into a fast component relaxing at
//! `lambda_f`, a slow component relaxing at `lambda_s`, and a residual slow
//! long-term variance. Each relaxing component is weighted by its average
//! survival `(1 - exp(-lambda T)) / (lambda T)` over the horizon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reactive::ReactiveState;

/// Trading steps in one month, the maturity of a one-month implied vol.
pub const ONE_MONTH: f64 = 21.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermVolInputs {
    pub sigma_i: f64,
    pub sigma_is: f64,
    pub sigma_if: f64,
    pub lambda_s: f64,
    pub lambda_f: f64,
    /// Maturity in steps.
    pub maturity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermVol {
    pub sigma: f64,
    /// Set when the variance recipe went negative and was clamped to zero.
    pub clamped: bool,
}

/// Slow and fast long-term volatilities `sigma_I * I / L_s` and
/// `sigma_I * I / L_f`.
pub fn long_term_vols(state: &ReactiveState) -> (f64, f64) {
    let sigma = state.reactive_vol();
    let i = state.last_price;
    (sigma * i / state.slow_level, sigma * i / state.fast_level)
}

/// Average survival of an exponential decay with rate `lambda` over `t`.
#[inline]
pub fn relaxation_weight(lambda: f64, t: f64) -> f64 {
    let x = lambda * t;
    -(-x).exp_m1() / x
}

pub fn sigma_t(inputs: &TermVolInputs) -> Result<TermVol> {
    let TermVolInputs {
        sigma_i,
        sigma_is,
        sigma_if,
        lambda_s,
        lambda_f,
        maturity,
    } = *inputs;
    if !(maturity > 0.0) {
        return Err(Error::param("maturity", format!("{maturity} must be > 0")));
    }
    if !(lambda_s > 0.0 && lambda_f > 0.0) {
        return Err(Error::param("lambda", "relaxation rates must be > 0"));
    }
    if [sigma_i, sigma_is, sigma_if].iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::param("sigma", "volatilities must be >= 0"));
    }
    let (vi, vf, vs) = (sigma_i * sigma_i, sigma_if * sigma_if, sigma_is * sigma_is);
    let var = (vi - vf) * relaxation_weight(lambda_f, maturity)
        + (vf - vs) * relaxation_weight(lambda_s, maturity)
        + vs;
    Ok(if var < 0.0 {
        TermVol {
            sigma: 0.0,
            clamped: true,
        }
    } else {
        TermVol {
            sigma: var.sqrt(),
            clamped: false,
        }
    })
}

/// Term structure read off a reactive state for each maturity.
pub fn term_structure(
    state: &ReactiveState,
    lambda_s: f64,
    lambda_f: f64,
    maturities: &[f64],
) -> Result<Vec<TermVol>> {
    let (sigma_is, sigma_if) = long_term_vols(state);
    let sigma_i = state.reactive_vol();
    maturities
        .iter()
        .map(|&maturity| {
            sigma_t(&TermVolInputs {
                sigma_i,
                sigma_is,
                sigma_if,
                lambda_s,
                lambda_f,
                maturity,
            })
        })
        .collect()
}
