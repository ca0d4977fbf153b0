//! Least-squares fit of `y = a * exp(-x / tau)`.
//!
//! The starting point comes from a straight-line fit of `ln|y|` on the
//! points sharing the dominant sign; Levenberg-Marquardt then minimizes the
//! squared residuals in the original space over `(a, 1 / tau)`. On data that
//! is exactly exponential the start is already the optimum.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Signed amplitude `a`.
    pub amplitude: f64,
    pub time_constant: f64,
    /// Euclidean norm of the residuals in the original space.
    pub residual_norm: f64,
    pub iterations: usize,
}

const MAX_ITERATIONS: usize = 500;

pub fn fit_exp_decay(xs: &[f64], ys: &[f64]) -> Result<DecayFit> {
    if xs.len() != ys.len() {
        return Err(Error::Misaligned(format!("{} x values for {} y values", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: xs.len() });
    }
    let (mut a, mut b) = log_linear_start(xs, ys)?;
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - a * (-b * x).exp();
                r * r
            })
            .sum()
    };

    let mut cost = sse(a, b);
    let mut mu = 1e-3;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // Normal equations of the Gauss-Newton step with Marquardt damping.
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (x, y) in xs.iter().zip(ys) {
            let e = (-b * x).exp();
            let r = y - a * e;
            let da = e;
            let db = -a * x * e;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        while mu < 1e12 {
            let (haa, hbb) = (jaa * (1.0 + mu), jbb * (1.0 + mu));
            let det = haa * hbb - jab * jab;
            if det <= 0.0 || !det.is_finite() {
                mu *= 10.0;
                continue;
            }
            let step_a = (hbb * ga - jab * gb) / det;
            let step_b = (haa * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            let new_cost = sse(na, nb);
            if new_cost.is_finite() && new_cost <= cost {
                let small = step_a.abs() <= 1e-15 * a.abs().max(1e-300)
                    && step_b.abs() <= 1e-15 * b.abs().max(1e-300);
                a = na;
                b = nb;
                cost = new_cost;
                mu = (mu * 0.1).max(1e-12);
                improved = !small;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }

    let span = xs.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x))
        - xs.iter().fold(f64::INFINITY, |m, x| m.min(*x));
    // a curve that decays by less than 0.1% across the data is flat
    if !(b * span > 1e-3) || !a.is_finite() {
        return Err(Error::Degenerate(format!(
            "no exponential decay in data (rate {b}, amplitude {a})"
        )));
    }
    Ok(DecayFit {
        amplitude: a,
        time_constant: 1.0 / b,
        residual_norm: cost.sqrt(),
        iterations,
    })
}

/// Straight-line fit of `ln(sign * y)` on `x` over points of the dominant
/// sign. Returns `(a, rate)`.
fn log_linear_start(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let sign = if ys.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let points: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, y)| sign * **y > 0.0)
        .map(|(x, y)| (*x, (sign * y).ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::Degenerate("fewer than two points of the dominant sign".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let span = points.last().unwrap().0 - points[0].0;
    // A non-decaying start is nudged to a slow decay so LM can proceed.
    let rate = if slope < 0.0 { -slope } else { 1.0 / (10.0 * span.abs().max(1.0)) };
    let amplitude = if slope < 0.0 { sign * intercept.exp() } else { sign * my.exp() };
    Ok((amplitude, rate))
}
