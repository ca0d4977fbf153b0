//! Reactive volatility recursion.
//!
//! The index level `L` combines a filtered slow EMA of the price (retarded
//! effect) with a modulation driven by the gap between the fast EMA and the
//! spot (panic effect). Volatility is the EMA-estimated renormalized
//! volatility rescaled by `L / I`, so it reacts to every price move.
//!
//! Within one step the update order is fixed: EMAs, filtered slow level,
//! combined level, renormalized variance, volatility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{check_weight, ema, PriceSeries, VolTrace};

/// Warm-up length used when none is given: one `1 / lambda_sigma` window.
pub const DEFAULT_WARMUP: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    /// Slow EMA weight (retarded effect).
    pub lambda_s: f64,
    /// Fast EMA weight (panic effect).
    pub lambda_f: f64,
    /// Weight of the renormalized variance EMA.
    pub lambda_sigma: f64,
    /// Filter steepness; 0 disables the filter.
    pub phi: f64,
    /// Leverage amplitude.
    pub ell: f64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            lambda_s: 0.0241,
            lambda_f: 0.1484,
            lambda_sigma: 0.025,
            phi: 1.0 / 0.3,
            ell: 8.0,
        }
    }
}

impl EstimatorParams {
    pub fn validate(&self) -> Result<()> {
        check_weight("lambda_s", self.lambda_s)?;
        check_weight("lambda_f", self.lambda_f)?;
        check_weight("lambda_sigma", self.lambda_sigma)?;
        if !(self.lambda_s < self.lambda_f && self.lambda_f < 1.0) {
            return Err(Error::param(
                "lambda_f",
                format!(
                    "need 0 < lambda_s < lambda_f < 1, got {} and {}",
                    self.lambda_s, self.lambda_f
                ),
            ));
        }
        if !(self.phi >= 0.0 && self.phi.is_finite()) {
            return Err(Error::param("phi", format!("{} must be >= 0", self.phi)));
        }
        if !(self.ell >= 0.0 && self.ell.is_finite()) {
            return Err(Error::param("ell", format!("{} must be >= 0", self.ell)));
        }
        Ok(())
    }
}

/// S-shaped filter `tanh(phi z) / phi`, the identity when `phi == 0`.
#[inline]
pub fn filter(z: f64, phi: f64) -> f64 {
    if phi == 0.0 {
        z
    } else {
        (phi * z).tanh() / phi
    }
}

#[inline]
fn filtered_slow_level(slow: f64, price: f64, phi: f64) -> f64 {
    price * (1.0 + filter((slow - price) / price, phi))
}

/// Renormalized variance together with its warm-up accumulator. During
/// warm-up the variance is the running sample variance of raw returns;
/// afterwards it follows the EMA of squared renormalized returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenormalizedVariance {
    pub sigma_tilde_sq: f64,
    pub warmup_remaining: usize,
    warmup_count: usize,
    warmup_mean: f64,
    warmup_m2: f64,
}

impl RenormalizedVariance {
    pub(crate) fn new_warming(warmup: usize) -> Self {
        Self {
            sigma_tilde_sq: 0.0,
            warmup_remaining: warmup,
            warmup_count: 0,
            warmup_mean: 0.0,
            warmup_m2: 0.0,
        }
    }

    fn seeded(sigma_tilde_sq: f64) -> Self {
        Self {
            sigma_tilde_sq,
            ..Self::new_warming(0)
        }
    }

    pub(crate) fn absorb(&mut self, raw_return: f64, renormalized: f64, lambda_sigma: f64) {
        if self.warmup_remaining > 0 {
            self.warmup_count += 1;
            let delta = raw_return - self.warmup_mean;
            self.warmup_mean += delta / self.warmup_count as f64;
            self.warmup_m2 += delta * (raw_return - self.warmup_mean);
            self.sigma_tilde_sq = if self.warmup_count > 1 {
                self.warmup_m2 / (self.warmup_count - 1) as f64
            } else {
                0.0
            };
            self.warmup_remaining -= 1;
        } else {
            self.sigma_tilde_sq = ema(self.sigma_tilde_sq, renormalized * renormalized, lambda_sigma);
        }
    }
}

/// Recursion state for a stock index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactiveState {
    pub slow_level: f64,
    pub fast_level: f64,
    pub filtered_slow_level: f64,
    pub level: f64,
    pub variance: RenormalizedVariance,
    pub last_price: f64,
    /// Number of updates applied since initialization.
    pub step: u64,
}

impl ReactiveState {
    /// Starts every level at `first_price`. The renormalized variance is
    /// seeded from the sample variance of the next `warmup` raw returns; until
    /// then outputs are provisional.
    pub fn new(first_price: f64, params: &EstimatorParams, warmup: usize) -> Result<Self> {
        params.validate()?;
        check_price(first_price)?;
        Ok(Self {
            slow_level: first_price,
            fast_level: first_price,
            filtered_slow_level: first_price,
            level: first_price,
            variance: RenormalizedVariance::new_warming(warmup),
            last_price: first_price,
            step: 0,
        })
    }

    /// Starts with an explicit renormalized variance and no warm-up.
    pub fn with_variance(first_price: f64, params: &EstimatorParams, sigma_tilde_sq: f64) -> Result<Self> {
        if !(sigma_tilde_sq >= 0.0 && sigma_tilde_sq.is_finite()) {
            return Err(Error::param("sigma_tilde_sq", format!("{sigma_tilde_sq} must be >= 0")));
        }
        let mut state = Self::new(first_price, params, 0)?;
        state.variance = RenormalizedVariance::seeded(sigma_tilde_sq);
        Ok(state)
    }

    pub fn sigma_tilde_sq(&self) -> f64 {
        self.variance.sigma_tilde_sq
    }

    pub fn is_provisional(&self) -> bool {
        self.variance.warmup_remaining > 0
    }

    /// `sigma_I = sigma_tilde * L / I`, per step.
    pub fn reactive_vol(&self) -> f64 {
        self.variance.sigma_tilde_sq.sqrt() * self.level / self.last_price
    }

    /// `1 + F((L_f / I)^ell - 1)`, the panic modulation of the slow level.
    pub fn panic_factor(&self, params: &EstimatorParams) -> f64 {
        1.0 + filter((self.fast_level / self.last_price).powf(params.ell) - 1.0, params.phi)
    }

    /// First-order expansion of the combined level, for cross-checks.
    pub fn taylor_level(&self, params: &EstimatorParams) -> f64 {
        self.filtered_slow_level
            * (1.0 + params.ell * (self.fast_level - self.last_price) / self.fast_level)
    }

    /// Absolute difference between the stored level and the level recomputed
    /// from the filtered slow level, fast level and spot.
    pub fn level_consistency_error(&self, params: &EstimatorParams) -> f64 {
        (self.level - self.filtered_slow_level * self.panic_factor(params)).abs()
    }

    /// Advances the price levels only, leaving the variance untouched.
    /// Returns the pre-move level `L(t)`.
    pub fn advance_levels(&mut self, price: f64, params: &EstimatorParams) -> Result<f64> {
        check_price(price)?;
        let previous_level = self.level;
        self.slow_level = ema(self.slow_level, price, params.lambda_s);
        self.fast_level = ema(self.fast_level, price, params.lambda_f);
        self.last_price = price;
        self.filtered_slow_level = filtered_slow_level(self.slow_level, price, params.phi);
        self.level = self.filtered_slow_level * self.panic_factor(params);
        self.step += 1;
        Ok(previous_level)
    }

    /// One full step of the index recursion. Returns the new per-step
    /// volatility.
    pub fn update(&mut self, price: f64, params: &EstimatorParams) -> Result<f64> {
        let prev_price = self.last_price;
        self.advance_levels(price, params)?;
        let change = price - prev_price;
        self.variance
            .absorb(change / prev_price, change / self.level, params.lambda_sigma);
        Ok(self.reactive_vol())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Free-function form of [`ReactiveState::new`].
pub fn init_state(first_price: f64, params: &EstimatorParams, warmup: usize) -> Result<ReactiveState> {
    ReactiveState::new(first_price, params, warmup)
}

/// Free-function form of [`ReactiveState::update`].
pub fn update_index(state: &mut ReactiveState, price: f64, params: &EstimatorParams) -> Result<f64> {
    state.update(price, params)
}

pub fn taylor_level(state: &ReactiveState, params: &EstimatorParams) -> f64 {
    state.taylor_level(params)
}

/// Single-stock state: the slow branch runs on the stock price while the
/// panic modulation is read from the index state of the same date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockState {
    pub slow_level: f64,
    pub filtered_slow_level: f64,
    pub level: f64,
    pub variance: RenormalizedVariance,
    pub last_price: f64,
    pub step: u64,
    /// Index step this state was last synchronized with.
    pub index_step: u64,
}

impl StockState {
    pub fn new(
        first_price: f64,
        index: &ReactiveState,
        params: &EstimatorParams,
        warmup: usize,
    ) -> Result<Self> {
        params.validate()?;
        check_price(first_price)?;
        Ok(Self {
            slow_level: first_price,
            filtered_slow_level: first_price,
            level: first_price * index.panic_factor(params),
            variance: RenormalizedVariance::new_warming(warmup),
            last_price: first_price,
            step: 0,
            index_step: index.step,
        })
    }

    pub fn with_variance(
        first_price: f64,
        index: &ReactiveState,
        params: &EstimatorParams,
        sigma_tilde_sq: f64,
    ) -> Result<Self> {
        let mut state = Self::new(first_price, index, params, 0)?;
        state.variance = RenormalizedVariance::seeded(sigma_tilde_sq);
        Ok(state)
    }

    pub fn is_provisional(&self) -> bool {
        self.variance.warmup_remaining > 0
    }

    pub fn reactive_vol(&self) -> f64 {
        self.variance.sigma_tilde_sq.sqrt() * self.level / self.last_price
    }

    /// One step of the single-stock recursion. The index must already have
    /// been advanced to the same date.
    pub fn update(&mut self, price: f64, index: &ReactiveState, params: &EstimatorParams) -> Result<f64> {
        check_price(price)?;
        if index.step <= self.index_step {
            return Err(Error::Misaligned(format!(
                "index at step {} has not advanced past the stock's last sync (step {})",
                index.step, self.index_step
            )));
        }
        let prev_price = self.last_price;
        self.slow_level = ema(self.slow_level, price, params.lambda_s);
        self.last_price = price;
        self.filtered_slow_level = filtered_slow_level(self.slow_level, price, params.phi);
        self.level = self.filtered_slow_level * index.panic_factor(params);
        let change = price - prev_price;
        self.variance
            .absorb(change / prev_price, change / self.level, params.lambda_sigma);
        self.step += 1;
        self.index_step = index.step;
        Ok(self.reactive_vol())
    }
}

pub fn update_stock(
    stock: &mut StockState,
    price: f64,
    index: &ReactiveState,
    params: &EstimatorParams,
) -> Result<f64> {
    stock.update(price, index, params)
}

fn check_price(price: f64) -> Result<()> {
    if price > 0.0 && price.is_finite() {
        Ok(())
    } else {
        Err(Error::param("price", format!("{price} must be positive")))
    }
}

/// Index recursion run over a whole series, keeping the state after every
/// date so stocks can be driven from it.
#[derive(Debug, Clone)]
pub struct IndexRun {
    pub trace: VolTrace,
    pub states: Vec<ReactiveState>,
}

impl IndexRun {
    pub fn final_state(&self) -> &ReactiveState {
        self.states.last().expect("index run is never empty")
    }
}

pub fn run_index(series: &PriceSeries, params: &EstimatorParams, warmup: usize) -> Result<IndexRun> {
    let prices = series.prices();
    let mut state = ReactiveState::new(prices[0], params, warmup)?;
    let mut sigma = Vec::with_capacity(prices.len());
    let mut provisional = Vec::with_capacity(prices.len());
    let mut states = Vec::with_capacity(prices.len());
    sigma.push(state.reactive_vol());
    provisional.push(state.is_provisional());
    states.push(state.clone());
    for &p in &prices[1..] {
        sigma.push(state.update(p, params)?);
        provisional.push(state.is_provisional());
        states.push(state.clone());
    }
    Ok(IndexRun {
        trace: VolTrace {
            instrument_id: series.instrument_id().to_string(),
            dates: series.dates().to_vec(),
            sigma,
            provisional,
        },
        states,
    })
}

/// Single-stock volatility trace driven by a precomputed index run. Every
/// stock date must exist on the index calendar; index dates on which the
/// stock did not trade are skipped.
pub fn run_stock(
    stock: &PriceSeries,
    index: &IndexRun,
    params: &EstimatorParams,
    warmup: usize,
) -> Result<VolTrace> {
    let index_dates = &index.trace.dates;
    let mut positions = Vec::with_capacity(stock.len());
    let mut j = 0;
    for d in stock.dates() {
        while j < index_dates.len() && index_dates[j] < *d {
            j += 1;
        }
        if j == index_dates.len() || index_dates[j] != *d {
            return Err(Error::Misaligned(format!(
                "{}: date {d} missing from index calendar",
                stock.instrument_id()
            )));
        }
        positions.push(j);
    }

    let prices = stock.prices();
    let mut state = StockState::new(prices[0], &index.states[positions[0]], params, warmup)?;
    let mut sigma = Vec::with_capacity(prices.len());
    let mut provisional = Vec::with_capacity(prices.len());
    sigma.push(state.reactive_vol());
    provisional.push(state.is_provisional());
    for (&p, &pos) in prices[1..].iter().zip(&positions[1..]) {
        sigma.push(state.update(p, &index.states[pos], params)?);
        provisional.push(state.is_provisional());
    }
    Ok(VolTrace {
        instrument_id: stock.instrument_id().to_string(),
        dates: stock.dates().to_vec(),
        sigma,
        provisional,
    })
}

#[cfg(test)]
// oracle values are kept at the precision they were computed with
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    fn defaults() -> EstimatorParams {
        EstimatorParams::default()
    }

    #[test]
    fn filter_examples() {
        assert_eq!(filter(0.0, 3.333), 0.0);
        assert_eq!(filter(0.5, 0.0), 0.5);
        // tanh(0.33333) / 3.3333, evaluated to 40 digits
        assert!((filter(0.1, 3.3333) - 0.096453889167861453).abs() < 1e-15);
        assert!((filter(0.1, 1.0 / 0.3) - 0.096453821259490303).abs() < 1e-15);
    }

    #[test]
    fn filter_is_odd_and_bounded() {
        for &z in &[-50.0, -1.0, -0.01, 0.3, 2.0, 1e6] {
            assert_eq!(filter(-z, 3.3), -filter(z, 3.3));
            assert!(filter(z, 3.3).abs() <= 1.0 / 3.3);
        }
    }

    #[test]
    fn params_validation() {
        assert!(defaults().validate().is_ok());
        let bad = [
            EstimatorParams { lambda_s: 0.2, ..defaults() },
            EstimatorParams { lambda_f: 1.0, ..defaults() },
            EstimatorParams { lambda_sigma: 0.0, ..defaults() },
            EstimatorParams { phi: -1.0, ..defaults() },
            EstimatorParams { ell: f64::NAN, ..defaults() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn init_examples() {
        let s = ReactiveState::new(100.0, &defaults(), DEFAULT_WARMUP).unwrap();
        assert_eq!(
            [s.slow_level, s.fast_level, s.filtered_slow_level, s.level],
            [100.0; 4]
        );
        assert!(s.is_provisional());
        assert!(ReactiveState::new(-1.0, &defaults(), 0).is_err());
        assert!(ReactiveState::new(0.0, &defaults(), 0).is_err());
        let s = ReactiveState::with_variance(100.0, &defaults(), 1e-4).unwrap();
        assert_eq!(s.reactive_vol(), 1e-2);
    }

    #[test]
    fn constant_price_decays_vol() {
        let p = defaults();
        let mut s = ReactiveState::with_variance(100.0, &p, 1e-4).unwrap();
        let mut prev = s.reactive_vol();
        for _ in 0..500 {
            let v = s.update(100.0, &p).unwrap();
            assert_eq!(s.level, 100.0);
            assert!(v < prev);
            prev = v;
        }
        assert!((prev / (1e-2 * 0.975f64.powi(250)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn one_step_down_move_matches_oracle() {
        // 40-digit evaluation of the step 100 -> 99 with sigma_tilde^2 = 1e-4.
        let p = defaults();
        let mut s = ReactiveState::with_variance(100.0, &p, 1e-4).unwrap();
        let sigma = s.update(99.0, &p).unwrap();
        assert!((s.slow_level - 99.9759).abs() < 1e-12);
        assert!((s.fast_level - 99.8516).abs() < 1e-12);
        assert!((s.filtered_slow_level - 99.975548929545652816).abs() < 1e-11);
        assert!(((s.fast_level / 99.0).powf(8.0) - 1.0 - 0.070924044817688116).abs() < 1e-13);
        assert!((s.level - 106.93700491716275498).abs() < 1e-11);
        assert!((s.sigma_tilde_sq() - 0.000099686170230679296).abs() < 1e-18);
        assert!((sigma - 0.010784754846525380).abs() < 1e-15);
        assert!(s.level > s.filtered_slow_level);
        assert!(sigma > s.sigma_tilde_sq().sqrt());
        assert!((s.taylor_level(&p) - 106.7968058723208174).abs() < 1e-11);
    }

    #[test]
    fn one_percent_drop_raises_vol_about_ell_percent() {
        let p = defaults();
        let mut s = ReactiveState::with_variance(100.0, &p, 1e-4).unwrap();
        s.update(99.0, &p).unwrap();
        let rel = s.level / s.last_price - 1.0;
        assert!((rel - 0.08).abs() < 0.005, "{rel}");
        // the up move is smaller by convexity of the power law
        let mut s = ReactiveState::with_variance(100.0, &p, 1e-4).unwrap();
        s.update(101.0, &p).unwrap();
        let rel = s.level / s.last_price - 1.0;
        assert!((rel + 0.08).abs() < 0.01, "{rel}");
    }

    #[test]
    fn taylor_close_for_small_gap() {
        let p = EstimatorParams { phi: 0.0, ..defaults() };
        let mut s = ReactiveState::with_variance(100.0, &p, 1e-4).unwrap();
        s.fast_level = 100.0 * (1.0 + 1e-4);
        s.level = s.filtered_slow_level * s.panic_factor(&p);
        let gap = (s.taylor_level(&p) - s.level).abs() / s.level;
        assert!(gap < 1e-6, "{gap}");

        s.fast_level = 105.0;
        s.level = s.filtered_slow_level * s.panic_factor(&p);
        let gap = (s.taylor_level(&p) - s.level).abs() / s.level;
        assert!(gap > 1e-3, "{gap}");
    }

    #[test]
    fn taylor_equals_filtered_slow_when_fast_equals_spot() {
        let s = ReactiveState::new(50.0, &defaults(), 0).unwrap();
        assert_eq!(s.taylor_level(&defaults()), s.filtered_slow_level);
    }

    #[test]
    fn no_leverage_no_filter_is_slow_level() {
        let p = EstimatorParams { phi: 0.0, ell: 0.0, ..defaults() };
        let mut s = ReactiveState::new(100.0, &p, 0).unwrap();
        for price in [101.0, 97.0, 99.5, 120.0, 80.0] {
            s.update(price, &p).unwrap();
            assert!((s.level - s.slow_level).abs() < 1e-12 * s.slow_level);
            assert_eq!(s.level, s.filtered_slow_level);
        }
    }

    #[test]
    fn warmup_seeds_sample_variance() {
        let p = defaults();
        let prices = [100.0, 101.0, 99.0, 102.0, 100.5];
        let mut s = ReactiveState::new(prices[0], &p, 4).unwrap();
        for &x in &prices[1..] {
            s.update(x, &p).unwrap();
        }
        assert!(!s.is_provisional());
        let r: Vec<f64> = prices.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect();
        let mean = r.iter().sum::<f64>() / 4.0;
        let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((s.sigma_tilde_sq() - var).abs() < 1e-16);
    }

    #[test]
    fn stock_with_flat_index_is_retarded_only() {
        let p = defaults();
        let mut index = ReactiveState::new(100.0, &p, 0).unwrap();
        let mut stock = StockState::with_variance(50.0, &index, &p, 1e-4).unwrap();
        let mut slow = 50.0;
        let mut var = 1e-4;
        let mut last = 50.0;
        for price in [51.0, 49.0, 48.0, 52.5] {
            index.update(100.0, &p).unwrap();
            let sigma = stock.update(price, &index, &p).unwrap();
            slow = 0.9759 * slow + 0.0241 * price;
            let lhat = price * (1.0 + filter((slow - price) / price, p.phi));
            var = 0.975 * var + 0.025 * ((price - last) / lhat).powi(2);
            last = price;
            assert!((sigma - var.sqrt() * lhat / price).abs() < 1e-15);
        }
    }

    #[test]
    fn stock_vol_rises_on_index_crash() {
        let p = defaults();
        let mut index = ReactiveState::new(100.0, &p, 0).unwrap();
        let mut stock = StockState::with_variance(50.0, &index, &p, 1e-4).unwrap();
        let before = stock.reactive_vol();
        index.update(90.0, &p).unwrap();
        let after = stock.update(50.0, &index, &p).unwrap();
        // the filter caps the panic factor near 1 + 1/phi
        assert!(after > before * 1.25, "{before} -> {after}");
        assert!(after < before * (1.0 + 0.3), "{before} -> {after}");
    }

    #[test]
    fn stock_requires_index_advance() {
        let p = defaults();
        let mut index = ReactiveState::new(100.0, &p, 0).unwrap();
        let mut stock = StockState::new(50.0, &index, &p, 0).unwrap();
        assert!(matches!(stock.update(51.0, &index, &p), Err(Error::Misaligned(_))));
        index.update(101.0, &p).unwrap();
        stock.update(51.0, &index, &p).unwrap();
        assert!(stock.update(52.0, &index, &p).is_err());
    }

    #[test]
    fn stock_on_own_index_reproduces_index() {
        let p = defaults();
        let prices = [100.0, 98.0, 97.5, 103.0, 101.0, 90.0, 95.0];
        let mut index = ReactiveState::new(prices[0], &p, 3).unwrap();
        let mut stock = StockState::new(prices[0], &index, &p, 3).unwrap();
        for &x in &prices[1..] {
            let a = index.update(x, &p).unwrap();
            let b = stock.update(x, &index, &p).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
            assert_eq!(index.level.to_bits(), stock.level.to_bits());
        }
    }

    #[test]
    fn json_snapshot_round_trip() {
        let p = defaults();
        let mut s = ReactiveState::new(100.0, &p, 5).unwrap();
        for x in [100.3, 99.1, 101.7] {
            s.update(x, &p).unwrap();
        }
        let back = ReactiveState::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
