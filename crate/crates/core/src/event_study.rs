//! Extreme-event study.
//!
//! A return is extreme when `|R(t)| > m * sigma(t-1)` for the volatility
//! forecast of the previous close. Each retained event carries the window of
//! normalized returns `r(k) = R(t+k) / sigma(t+k-1)` for `k = -delta..=delta`.
//! Events are split by the sign of `r(0)` and by whether the index moved by
//! more than 3% on the same day.

use std::fmt;

use chrono::NaiveDate;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::std_ema_trace;
use crate::error::{Error, Result};
use crate::fitting::fit_exp_decay;
use crate::reactive::{run_index, run_stock, EstimatorParams, DEFAULT_WARMUP};
use crate::simulation::path_rng;
use crate::timeseries::{arithmetic_returns, PriceSeries, ReturnSeries, VolTrace};

pub const DEFAULT_DELTA: usize = 9;
pub const DEFAULT_THRESHOLD_MULT: f64 = 3.0;
/// Absolute index return above which an event is systematic.
pub const SYSTEMATIC_INDEX_MOVE: f64 = 0.03;
pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;
/// Minimum tail sample for the Hill estimator.
pub const MIN_TAIL_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    /// Systematic positive.
    SyP,
    /// Systematic negative.
    SyN,
    /// Specific positive.
    SpP,
    /// Specific negative.
    SpN,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::SyP, Group::SyN, Group::SpP, Group::SpN];
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeEvent {
    pub instrument_id: String,
    pub event_date: NaiveDate,
    /// Position of the event in the instrument's return series.
    pub index: usize,
    pub group: Option<Group>,
    /// `r(-delta) ..= r(delta)`.
    pub window: Vec<f64>,
    pub r0: f64,
}

/// `r[j] = R[j] / sigma[j]`, or `None` where the forecast is provisional or
/// not positive.
pub fn normalized_returns(returns: &ReturnSeries, vol: &VolTrace) -> Result<Vec<Option<f64>>> {
    vol.check_aligned(returns)?;
    Ok(returns
        .returns
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let sigma = vol.sigma[j];
            (!vol.provisional[j] && sigma > 0.0 && sigma.is_finite()).then(|| r / sigma)
        })
        .collect())
}

/// Positions whose normalized return exceeds `threshold_mult` in magnitude,
/// before de-duplication.
pub fn crossings(normalized: &[Option<f64>], threshold_mult: f64) -> Vec<usize> {
    normalized
        .iter()
        .enumerate()
        .filter_map(|(j, r)| r.filter(|r| r.abs() > threshold_mult).map(|_| j))
        .collect()
}

pub fn detect_events(
    returns: &ReturnSeries,
    vol: &VolTrace,
    delta: usize,
    threshold_mult: f64,
) -> Result<Vec<ExtremeEvent>> {
    if !(threshold_mult >= 0.0) {
        return Err(Error::param("threshold_mult", "must be >= 0"));
    }
    let normalized = normalized_returns(returns, vol)?;
    let mut events = Vec::new();
    let mut blocked_until = None;
    for j in crossings(&normalized, threshold_mult) {
        if blocked_until.is_some_and(|b| j <= b) {
            continue;
        }
        blocked_until = Some(j + delta);
        if let Some(window) = full_window(&normalized, j, delta) {
            events.push(ExtremeEvent {
                instrument_id: returns.instrument_id.clone(),
                event_date: returns.dates[j],
                index: j,
                group: None,
                r0: window[delta],
                window,
            });
        }
    }
    Ok(events)
}

fn full_window(normalized: &[Option<f64>], center: usize, delta: usize) -> Option<Vec<f64>> {
    if center < delta || center + delta >= normalized.len() {
        return None;
    }
    normalized[center - delta..=center + delta].iter().copied().collect()
}

pub fn classify_event(event: &ExtremeEvent, index_returns: &ReturnSeries) -> Result<Group> {
    let pos = index_returns.position(event.event_date).ok_or_else(|| {
        Error::Misaligned(format!("no index return on {}", event.event_date))
    })?;
    let systematic = index_returns.returns[pos].abs() > SYSTEMATIC_INDEX_MOVE;
    Ok(match (systematic, event.r0 > 0.0) {
        (true, true) => Group::SyP,
        (true, false) => Group::SyN,
        (false, true) => Group::SpP,
        (false, false) => Group::SpN,
    })
}

pub fn classify_events(events: &mut [ExtremeEvent], index_returns: &ReturnSeries) -> Result<()> {
    for e in events.iter_mut() {
        e.group = Some(classify_event(e, index_returns)?);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QProfile {
    /// `None` for the random-date baseline.
    pub group: Option<Group>,
    pub k: Vec<i64>,
    pub q: Vec<f64>,
    /// `<r^2(k)>` before the square root.
    pub mean_sq: Vec<f64>,
    pub counts: Vec<usize>,
    /// Mean of `q_k` over `k = -delta..=-1`.
    pub mean_before: f64,
    /// Mean of `q_k` over `k = 1..=delta`.
    pub mean_after: f64,
}

impl QProfile {
    pub fn delta(&self) -> usize {
        self.k.len() / 2
    }
}

/// `q_k = sqrt(<r^2(k)>) - 1` over windows of equal length `2 delta + 1`.
pub fn profile_from_windows<'a>(
    windows: impl IntoIterator<Item = &'a [f64]>,
    group: Option<Group>,
) -> Result<QProfile> {
    let mut sums: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for w in windows {
        if sums.is_empty() {
            if w.len() % 2 == 0 {
                return Err(Error::Misaligned("window length must be odd".into()));
            }
            sums = vec![0.0; w.len()];
        } else if w.len() != sums.len() {
            return Err(Error::Misaligned("windows of different lengths".into()));
        }
        for (s, r) in sums.iter_mut().zip(w) {
            *s += r * r;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Degenerate(match group {
            Some(g) => format!("no events in group {g}"),
            None => "no windows".into(),
        }));
    }
    let delta = sums.len() / 2;
    let mean_sq: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
    let q: Vec<f64> = mean_sq.iter().map(|m| m.sqrt() - 1.0).collect();
    let mean_of = |range: std::ops::Range<usize>| q[range].iter().sum::<f64>() / delta.max(1) as f64;
    Ok(QProfile {
        group,
        k: (-(delta as i64)..=delta as i64).collect(),
        mean_before: mean_of(0..delta),
        mean_after: mean_of(delta + 1..2 * delta + 1),
        q,
        mean_sq,
        counts: vec![count; 2 * delta + 1],
    })
}

pub fn q_profile(events: &[ExtremeEvent], group: Group) -> Result<QProfile> {
    profile_from_windows(
        events
            .iter()
            .filter(|e| e.group == Some(group))
            .map(|e| e.window.as_slice()),
        Some(group),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryFit {
    /// Decay time in days.
    pub tau: f64,
    pub amplitude: f64,
    pub residual_norm: f64,
}

/// Exponential fit `q_k ~ a exp(-(k - 1) / tau)` over `k = 1..=delta`.
pub fn recovery_time(profile: &QProfile) -> Result<RecoveryFit> {
    let delta = profile.delta();
    let after = &profile.q[delta + 1..];
    let positive = after.iter().filter(|q| **q > 0.0).count();
    if positive < 3 {
        return Err(Error::Degenerate(format!(
            "only {positive} positive q_k after the event"
        )));
    }
    let xs: Vec<f64> = (0..after.len()).map(|i| i as f64).collect();
    let fit = fit_exp_decay(&xs, after)?;
    Ok(RecoveryFit {
        tau: fit.time_constant,
        amplitude: fit.amplitude,
        residual_norm: fit.residual_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub group: Option<Group>,
    pub alpha: f64,
    pub threshold: f64,
    pub n_tail: usize,
}

/// Hill estimator `alpha = k / sum ln(|x| / u)` over the `k` samples with
/// `|x| >= u`.
pub fn tail_exponent(sample: &[f64], threshold: f64, group: Option<Group>) -> Result<TailFit> {
    if !(threshold > 0.0) {
        return Err(Error::param("threshold", "must be > 0"));
    }
    let (n_tail, log_sum) = sample
        .iter()
        .map(|x| x.abs())
        .filter(|x| *x >= threshold)
        .fold((0usize, 0.0), |(n, s), x| (n + 1, s + (x / threshold).ln()));
    if n_tail < MIN_TAIL_SAMPLES {
        return Err(Error::TooShort {
            needed: MIN_TAIL_SAMPLES,
            got: n_tail,
        });
    }
    if !(log_sum > 0.0) {
        return Err(Error::Degenerate("all tail samples equal the threshold".into()));
    }
    Ok(TailFit {
        group,
        alpha: n_tail as f64 / log_sum,
        threshold,
        n_tail,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawCheck {
    pub base: TailFit,
    /// Refit above the upper quartile of the tail.
    pub upper: TailFit,
    /// `upper.alpha / base.alpha`; close to 1 for a power law, growing for
    /// thinner (e.g. exponential) tails.
    pub ratio: f64,
    pub consistent: bool,
}

/// Ratio above which the exponent is considered to drift with the threshold.
pub const POWER_LAW_DRIFT: f64 = 1.25;

pub fn power_law_check(sample: &[f64], threshold: f64, group: Option<Group>) -> Result<PowerLawCheck> {
    let base = tail_exponent(sample, threshold, group)?;
    let mut tail: Vec<f64> = sample
        .iter()
        .map(|x| x.abs())
        .filter(|x| *x >= threshold)
        .collect();
    tail.sort_by(f64::total_cmp);
    let upper_threshold = tail[tail.len() * 3 / 4];
    let upper = tail_exponent(&tail, upper_threshold, group)?;
    let ratio = upper.alpha / base.alpha;
    Ok(PowerLawCheck {
        base,
        upper,
        ratio,
        consistent: ratio < POWER_LAW_DRIFT,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarningStats {
    pub missed_fraction: f64,
    pub false_fraction: f64,
    pub multiplier: f64,
    pub lookback: usize,
    pub n_events: usize,
    pub n_missed: usize,
    pub n_warnings: usize,
    pub n_false: usize,
}

impl WarningStats {
    fn from_counts(multiplier: f64, lookback: usize, counts: [usize; 4]) -> Self {
        let [n_events, n_missed, n_warnings, n_false] = counts;
        let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            missed_fraction: frac(n_missed, n_events),
            false_fraction: frac(n_false, n_warnings),
            multiplier,
            lookback,
            n_events,
            n_missed,
            n_warnings,
            n_false,
        }
    }

    /// Pools counts from several instruments.
    pub fn merge(&self, other: &WarningStats) -> WarningStats {
        WarningStats::from_counts(
            self.multiplier,
            self.lookback,
            [
                self.n_events + other.n_events,
                self.n_missed + other.n_missed,
                self.n_warnings + other.n_warnings,
                self.n_false + other.n_false,
            ],
        )
    }

    pub fn empty(multiplier: f64, lookback: usize) -> Self {
        WarningStats::from_counts(multiplier, lookback, [0; 4])
    }
}

/// A warning fires on day `t` when the RMS of the `lookback` returns ending
/// at `t` exceeds `multiplier` times the RMS of their forecasts. An event is
/// missed when no warning fired in the `lookback` days before it; a warning
/// is false when no event follows within `lookback` days.
pub fn warning_signal_stats(
    returns: &ReturnSeries,
    vol: &VolTrace,
    events: &[ExtremeEvent],
    multiplier: f64,
    lookback: usize,
) -> Result<WarningStats> {
    vol.check_aligned(returns)?;
    if lookback == 0 || lookback > returns.len() {
        return Err(Error::param(
            "lookback",
            format!("{lookback} must be in 1..={}", returns.len()),
        ));
    }
    if !(multiplier >= 0.0) {
        return Err(Error::param("multiplier", "must be >= 0"));
    }
    let n = returns.len();
    let eligible: Vec<bool> = (0..n)
        .map(|j| !vol.provisional[j] && vol.sigma[j] > 0.0)
        .collect();
    let warning: Vec<bool> = (0..n)
        .map(|t| {
            if t + 1 < lookback {
                return false;
            }
            let window = t + 1 - lookback..=t;
            if !window.clone().all(|j| eligible[j]) {
                return false;
            }
            let realized = window.clone().map(|j| returns.returns[j].powi(2)).sum::<f64>();
            let predicted = window.map(|j| vol.sigma[j].powi(2)).sum::<f64>();
            realized.sqrt() > multiplier * predicted.sqrt()
        })
        .collect();
    let mut is_event = vec![false; n];
    for e in events {
        if e.index < n {
            is_event[e.index] = true;
        }
    }
    let n_missed = events
        .iter()
        .filter(|e| !(e.index.saturating_sub(lookback)..e.index).any(|t| warning[t]))
        .count();
    let n_warnings = warning.iter().filter(|w| **w).count();
    let n_false = (0..n)
        .filter(|&t| warning[t] && !(t + 1..=(t + lookback).min(n - 1)).any(|j| is_event[j]))
        .count();
    Ok(WarningStats::from_counts(
        multiplier,
        lookback,
        [events.len(), n_missed, n_warnings, n_false],
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub profile: QProfile,
    pub with_replacement: bool,
    pub n_windows: usize,
}

/// Windows centred on random dates, without the extreme-return condition.
/// Draws without replacement unless more windows are requested than there
/// are admissible dates. Returns the windows and whether replacement was used.
pub fn random_windows<R: Rng>(
    returns: &ReturnSeries,
    vol: &VolTrace,
    n_samples: usize,
    delta: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, bool)> {
    let normalized = normalized_returns(returns, vol)?;
    let candidates: Vec<Vec<f64>> = (0..normalized.len())
        .filter_map(|j| full_window(&normalized, j, delta))
        .collect();
    if candidates.is_empty() {
        return Err(Error::TooShort {
            needed: 2 * delta + 1,
            got: normalized.iter().filter(|r| r.is_some()).count(),
        });
    }
    if n_samples > candidates.len() {
        let picks = (0..n_samples)
            .map(|_| candidates[rng.gen_range(0..candidates.len())].clone())
            .collect();
        Ok((picks, true))
    } else {
        let picks = sample_indices(rng, candidates.len(), n_samples)
            .into_iter()
            .map(|i| candidates[i].clone())
            .collect();
        Ok((picks, false))
    }
}

pub fn random_baseline(
    returns: &ReturnSeries,
    vol: &VolTrace,
    n_samples: usize,
    delta: usize,
    seed: u64,
) -> Result<Baseline> {
    let mut rng = path_rng(seed, 0);
    let (windows, with_replacement) = random_windows(returns, vol, n_samples, delta, &mut rng)?;
    Ok(Baseline {
        profile: profile_from_windows(windows.iter().map(Vec::as_slice), None)?,
        with_replacement,
        n_windows: windows.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolComparison {
    /// Annualized mean forecast over the days preceding events.
    pub conditional: f64,
    /// Annualized mean forecast over the whole sample.
    pub unconditional: f64,
    pub n_conditional: usize,
    pub n_unconditional: usize,
}

impl VolComparison {
    pub fn merge(&self, other: &VolComparison) -> VolComparison {
        let pool = |a: f64, na: usize, b: f64, nb: usize| {
            if na + nb == 0 {
                0.0
            } else {
                (a * na as f64 + b * nb as f64) / (na + nb) as f64
            }
        };
        VolComparison {
            conditional: pool(self.conditional, self.n_conditional, other.conditional, other.n_conditional),
            unconditional: pool(
                self.unconditional,
                self.n_unconditional,
                other.unconditional,
                other.n_unconditional,
            ),
            n_conditional: self.n_conditional + other.n_conditional,
            n_unconditional: self.n_unconditional + other.n_unconditional,
        }
    }
}

/// Mean forecast volatility for the `lookback` returns before each event
/// against all returns, both annualized with `sqrt(252)`.
pub fn conditional_vol_comparison(
    events: &[ExtremeEvent],
    vol: &VolTrace,
    lookback: usize,
) -> Result<VolComparison> {
    if events.is_empty() || vol.len() < 2 {
        return Err(Error::Degenerate("need events and a volatility trace".into()));
    }
    let n_returns = vol.len() - 1;
    let eligible = |j: usize| !vol.provisional[j] && vol.sigma[j] > 0.0;
    let (mut cond_sum, mut cond_n) = (0.0, 0usize);
    for e in events {
        for j in e.index.saturating_sub(lookback)..e.index.min(n_returns) {
            if eligible(j) {
                cond_sum += vol.sigma[j];
                cond_n += 1;
            }
        }
    }
    let (mut all_sum, mut all_n) = (0.0, 0usize);
    for j in (0..n_returns).filter(|&j| eligible(j)) {
        all_sum += vol.sigma[j];
        all_n += 1;
    }
    if cond_n == 0 || all_n == 0 {
        return Err(Error::Degenerate("no eligible forecasts".into()));
    }
    let annual = TRADING_DAYS_PER_YEAR.sqrt();
    Ok(VolComparison {
        conditional: annual * cond_sum / cond_n as f64,
        unconditional: annual * all_sum / all_n as f64,
        n_conditional: cond_n,
        n_unconditional: all_n,
    })
}

/// Volatility estimator used to normalize returns in a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    Reactive,
    /// EMA of squared returns.
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub params: EstimatorParams,
    pub estimator: Estimator,
    pub warmup: usize,
    pub delta: usize,
    pub threshold_mult: f64,
    pub tail_threshold: f64,
    pub baseline_samples: usize,
    pub warning_multiplier: f64,
    pub warning_lookback: usize,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            params: EstimatorParams::default(),
            estimator: Estimator::Reactive,
            warmup: DEFAULT_WARMUP,
            delta: DEFAULT_DELTA,
            threshold_mult: DEFAULT_THRESHOLD_MULT,
            tail_threshold: DEFAULT_THRESHOLD_MULT,
            baseline_samples: 200,
            warning_multiplier: 2.0,
            warning_lookback: DEFAULT_DELTA,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailResult {
    pub group: Group,
    pub fit: Option<TailFit>,
    pub check: Option<PowerLawCheck>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub events: Vec<ExtremeEvent>,
    pub group_counts: Vec<(Group, usize)>,
    pub profiles: Vec<QProfile>,
    pub baseline: Option<Baseline>,
    pub tails: Vec<TailResult>,
    pub warnings: WarningStats,
    pub vol_comparison: Option<VolComparison>,
    /// Instruments left out, with the reason.
    pub skipped: Vec<(String, String)>,
}

struct InstrumentResult {
    events: Vec<ExtremeEvent>,
    baseline: Vec<Vec<f64>>,
    replaced: bool,
    warnings: WarningStats,
    comparison: Option<VolComparison>,
}

fn study_instrument(
    stock: &PriceSeries,
    stream: u64,
    index_run: &crate::reactive::IndexRun,
    index_returns: &ReturnSeries,
    config: &StudyConfig,
) -> Result<InstrumentResult> {
    let returns = arithmetic_returns(stock)?;
    let vol = match config.estimator {
        Estimator::Reactive => run_stock(stock, index_run, &config.params, config.warmup)?,
        Estimator::Standard => std_ema_trace(stock, config.params.lambda_sigma, config.warmup)?,
    };
    let mut events = detect_events(&returns, &vol, config.delta, config.threshold_mult)?;
    classify_events(&mut events, index_returns)?;
    let mut rng = path_rng(config.seed, stream);
    let (baseline, replaced) =
        match random_windows(&returns, &vol, config.baseline_samples, config.delta, &mut rng) {
            Ok(v) => v,
            Err(Error::TooShort { .. }) => (Vec::new(), false),
            Err(e) => return Err(e),
        };
    let warnings = if config.warning_lookback <= returns.len() {
        warning_signal_stats(
            &returns,
            &vol,
            &events,
            config.warning_multiplier,
            config.warning_lookback,
        )?
    } else {
        WarningStats::empty(config.warning_multiplier, config.warning_lookback)
    };
    let comparison = conditional_vol_comparison(&events, &vol, config.warning_lookback).ok();
    Ok(InstrumentResult {
        events,
        baseline,
        replaced,
        warnings,
        comparison,
    })
}

/// Runs detection, classification, profiles, tails, warning statistics and
/// the random baseline over a set of stocks sharing one index. Stocks are
/// processed in parallel; results are reduced in input order, so the output
/// depends only on the inputs and the seed.
pub fn run_study(stocks: &[PriceSeries], index: &PriceSeries, config: &StudyConfig) -> Result<StudyOutput> {
    config.params.validate()?;
    let index_run = run_index(index, &config.params, config.warmup)?;
    let index_returns = arithmetic_returns(index)?;

    let per_stock: Vec<Result<InstrumentResult>> = stocks
        .par_iter()
        .enumerate()
        .map(|(i, s)| study_instrument(s, i as u64, &index_run, &index_returns, config))
        .collect();

    let mut events = Vec::new();
    let mut baseline_windows = Vec::new();
    let mut replaced = false;
    let mut warnings = WarningStats::empty(config.warning_multiplier, config.warning_lookback);
    let mut comparison: Option<VolComparison> = None;
    let mut skipped = Vec::new();
    for (stock, result) in stocks.iter().zip(per_stock) {
        match result {
            Ok(r) => {
                events.extend(r.events);
                baseline_windows.extend(r.baseline);
                replaced |= r.replaced;
                warnings = warnings.merge(&r.warnings);
                if let Some(c) = r.comparison {
                    comparison = Some(comparison.map_or(c, |acc| acc.merge(&c)));
                }
            }
            Err(e) => skipped.push((stock.instrument_id().to_string(), e.to_string())),
        }
    }

    let group_counts: Vec<(Group, usize)> = Group::ALL
        .iter()
        .map(|g| (*g, events.iter().filter(|e| e.group == Some(*g)).count()))
        .collect();
    let profiles = Group::ALL
        .iter()
        .filter_map(|g| q_profile(&events, *g).ok())
        .collect();
    let baseline = if baseline_windows.is_empty() {
        None
    } else {
        Some(Baseline {
            n_windows: baseline_windows.len(),
            profile: profile_from_windows(baseline_windows.iter().map(Vec::as_slice), None)?,
            with_replacement: replaced,
        })
    };
    let tails = Group::ALL
        .iter()
        .map(|g| {
            let sample: Vec<f64> = events
                .iter()
                .filter(|e| e.group == Some(*g))
                .map(|e| e.r0)
                .collect();
            match power_law_check(&sample, config.tail_threshold, Some(*g)) {
                Ok(check) => TailResult {
                    group: *g,
                    fit: Some(check.base),
                    check: Some(check),
                    error: None,
                },
                Err(e) => TailResult {
                    group: *g,
                    fit: tail_exponent(&sample, config.tail_threshold, Some(*g)).ok(),
                    check: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    Ok(StudyOutput {
        events,
        group_counts,
        profiles,
        baseline,
        tails,
        warnings,
        vol_comparison: comparison,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::business_days;

    fn dates(n: usize) -> Vec<NaiveDate> {
        business_days(NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(), n)
    }

    /// Returns and a constant unit-free trace with sigma = 1.
    fn setup(returns: Vec<f64>) -> (ReturnSeries, VolTrace) {
        let d = dates(returns.len() + 1);
        let r = ReturnSeries {
            instrument_id: "x".into(),
            dates: d[1..].to_vec(),
            returns,
        };
        let v = VolTrace {
            instrument_id: "x".into(),
            sigma: vec![1.0; d.len()],
            provisional: vec![false; d.len()],
            dates: d,
        };
        (r, v)
    }

    #[test]
    fn quiet_series_has_no_events() {
        let (r, v) = setup(vec![0.5; 100]);
        assert!(detect_events(&r, &v, 9, 3.0).unwrap().is_empty());
        assert!(detect_events(&r, &v, 9, f64::INFINITY).unwrap().is_empty());
    }

    #[test]
    fn close_crossings_keep_first() {
        let mut x = vec![0.5; 60];
        x[20] = 4.0;
        x[24] = -5.0;
        x[40] = 3.5;
        let (r, v) = setup(x);
        let events = detect_events(&r, &v, 9, 3.0).unwrap();
        assert_eq!(events.iter().map(|e| e.index).collect::<Vec<_>>(), vec![20, 40]);
        assert_eq!(events[0].r0, 4.0);
        assert_eq!(events[0].window.len(), 19);
        assert_eq!(events[0].window[13], -5.0);
    }

    #[test]
    fn edge_windows_dropped_and_still_block() {
        let mut x = vec![0.5; 40];
        x[3] = 4.0;
        x[8] = 4.0;
        x[35] = 4.0;
        let (r, v) = setup(x);
        assert!(detect_events(&r, &v, 9, 3.0).unwrap().is_empty());
    }

    #[test]
    fn provisional_forecasts_are_excluded() {
        let mut x = vec![0.5; 60];
        x[25] = 4.0;
        let (r, mut v) = setup(x);
        v.provisional[20] = true;
        assert!(detect_events(&r, &v, 9, 3.0).unwrap().is_empty());
        let normalized = normalized_returns(&r, &v).unwrap();
        let all = crossings(&normalized, 0.0);
        assert_eq!(all.len(), 59);
    }

    #[test]
    fn misaligned_trace_rejected() {
        let (r, mut v) = setup(vec![0.1; 30]);
        v.sigma.pop();
        v.dates.pop();
        v.provisional.pop();
        assert!(matches!(detect_events(&r, &v, 9, 3.0), Err(Error::Misaligned(_))));
    }

    fn event_on(date: NaiveDate, r0: f64) -> ExtremeEvent {
        ExtremeEvent {
            instrument_id: "x".into(),
            event_date: date,
            index: 0,
            group: None,
            window: vec![r0],
            r0,
        }
    }

    #[test]
    fn classification_rule() {
        let d = dates(4);
        let index = ReturnSeries {
            instrument_id: "idx".into(),
            dates: d[1..].to_vec(),
            returns: vec![0.04, -0.01, 0.03],
        };
        assert_eq!(classify_event(&event_on(d[1], 3.5), &index).unwrap(), Group::SyP);
        assert_eq!(classify_event(&event_on(d[1], -3.5), &index).unwrap(), Group::SyN);
        assert_eq!(classify_event(&event_on(d[2], -4.0), &index).unwrap(), Group::SpN);
        assert_eq!(classify_event(&event_on(d[2], 4.0), &index).unwrap(), Group::SpP);
        // exactly 3% is not "exceeding"
        assert_eq!(classify_event(&event_on(d[3], 4.0), &index).unwrap(), Group::SpP);
        assert!(classify_event(&event_on(d[0], 4.0), &index).is_err());
    }

    #[test]
    fn unit_windows_give_zero_q() {
        let w: Vec<f64> = (0..19).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let p = profile_from_windows([w.as_slice()], Some(Group::SpP)).unwrap();
        assert!(p.q.iter().all(|q| q.abs() < 1e-15));
        assert_eq!(p.k.first(), Some(&-9));
        assert_eq!(p.k.last(), Some(&9));
    }

    #[test]
    fn q_profile_hand_computation() {
        // three 3-point windows (delta = 1)
        let ws = [vec![1.0, 4.0, 2.0], vec![-2.0, -5.0, 0.0], vec![0.5, 3.5, -1.0]];
        let events: Vec<ExtremeEvent> = ws
            .iter()
            .map(|w| ExtremeEvent {
                group: Some(Group::SyN),
                r0: w[1],
                window: w.clone(),
                ..event_on(dates(1)[0], w[1])
            })
            .collect();
        let p = q_profile(&events, Group::SyN).unwrap();
        let q_minus = ((1.0 + 4.0 + 0.25) / 3.0f64).sqrt() - 1.0;
        let q_zero = ((16.0 + 25.0 + 12.25) / 3.0f64).sqrt() - 1.0;
        let q_plus = ((4.0 + 0.0 + 1.0) / 3.0f64).sqrt() - 1.0;
        assert!((p.q[0] - q_minus).abs() < 1e-15);
        assert!((p.q[1] - q_zero).abs() < 1e-15);
        assert!((p.q[2] - q_plus).abs() < 1e-15);
        assert_eq!(p.mean_before, p.q[0]);
        assert_eq!(p.mean_after, p.q[2]);
        assert_eq!(p.counts, vec![3, 3, 3]);
        assert!(q_profile(&events, Group::SyP).is_err());
    }

    fn profile_with_after(after: &[f64]) -> QProfile {
        let delta = after.len();
        let mut q = vec![0.0; delta + 1];
        q.extend_from_slice(after);
        QProfile {
            group: None,
            k: (-(delta as i64)..=delta as i64).collect(),
            mean_sq: q.iter().map(|v| (v + 1.0) * (v + 1.0)).collect(),
            q,
            counts: vec![1; 2 * delta + 1],
            mean_before: 0.0,
            mean_after: 0.0,
        }
    }

    #[test]
    fn recovery_exact() {
        let after: Vec<f64> = (1..=9).map(|k| 0.5 * (-((k - 1) as f64) / 3.0).exp()).collect();
        let fit = recovery_time(&profile_with_after(&after)).unwrap();
        assert!((fit.tau - 3.0).abs() < 1e-9, "{}", fit.tau);
        assert!((fit.amplitude - 0.5).abs() < 1e-9);
    }

    #[test]
    fn recovery_degenerate() {
        assert!(recovery_time(&profile_with_after(&[0.2; 9])).is_err());
        let mostly_negative = [0.3, 0.1, -0.1, -0.2, -0.1, -0.3, -0.1, -0.2, -0.1];
        assert!(recovery_time(&profile_with_after(&mostly_negative)).is_err());
    }

    #[test]
    fn hill_rejects_small_tail() {
        let sample = vec![4.0; 49];
        assert!(matches!(tail_exponent(&sample, 3.0, None), Err(Error::TooShort { .. })));
        assert!(tail_exponent(&vec![3.0; 60], 3.0, None).is_err());
    }

    #[test]
    fn warnings_limits() {
        let mut x: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 0.8 } else { -0.8 }).collect();
        x[50] = 5.0;
        x[120] = -6.0;
        let (r, v) = setup(x);
        let events = detect_events(&r, &v, 9, 3.0).unwrap();
        assert_eq!(events.len(), 2);

        let all = warning_signal_stats(&r, &v, &events, 0.0, 9).unwrap();
        assert_eq!(all.missed_fraction, 0.0);
        assert!(all.false_fraction > 0.9);

        let none = warning_signal_stats(&r, &v, &events, f64::INFINITY, 9).unwrap();
        assert_eq!(none.missed_fraction, 1.0);
        assert_eq!(none.false_fraction, 0.0);
        assert_eq!(none.n_warnings, 0);

        assert!(warning_signal_stats(&r, &v, &events, 2.0, 500).is_err());
        assert!(warning_signal_stats(&r, &v, &events, 2.0, 0).is_err());
    }

    #[test]
    fn warning_rule_counts() {
        // threshold 2.5 on unit forecasts: a 9-day window fires when its sum
        // of squares exceeds 56.25
        let mut x = vec![0.5; 100];
        for v in &mut x[30..39] {
            *v = 2.6;
        }
        x[39] = 5.0;
        x[70] = 5.0;
        for v in &mut x[85..94] {
            *v = 2.6;
        }
        let (r, v) = setup(x);
        let events = detect_events(&r, &v, 9, 3.0).unwrap();
        assert_eq!(events.iter().map(|e| e.index).collect::<Vec<_>>(), vec![39, 70]);
        let stats = warning_signal_stats(&r, &v, &events, 2.5, 9).unwrap();
        // warnings on days 38..=42 (burst, then burst plus event) and 93
        assert_eq!(stats.n_warnings, 6);
        // day 38 precedes the event on 39; the others see no later event
        assert_eq!(stats.n_false, 5);
        // nothing fires before day 70
        assert_eq!(stats.n_missed, 1);
        assert_eq!(stats.missed_fraction, 0.5);
    }

    #[test]
    fn baseline_replacement_flag_and_determinism() {
        let x: Vec<f64> = (0..40).map(|i| if i % 3 == 0 { 1.2 } else { -0.9 }).collect();
        let (r, v) = setup(x);
        // 40 returns, delta 9 -> 22 admissible centres
        let a = random_baseline(&r, &v, 10, 9, 1).unwrap();
        assert!(!a.with_replacement);
        assert_eq!(a.n_windows, 10);
        assert_eq!(a, random_baseline(&r, &v, 10, 9, 1).unwrap());
        let b = random_baseline(&r, &v, 50, 9, 1).unwrap();
        assert!(b.with_replacement);
        assert_eq!(b.n_windows, 50);
        assert_eq!(b.profile.counts[0], 50);
        assert!(random_baseline(&r, &v, 10, 30, 1).is_err());
    }

    #[test]
    fn conditional_comparison_hand_case() {
        let (r, mut v) = setup(vec![0.1; 30]);
        for (j, s) in v.sigma.iter_mut().enumerate() {
            *s = 0.01 * (1.0 + j as f64);
        }
        let events = vec![
            ExtremeEvent { index: 12, ..event_on(r.dates[12], 4.0) },
            ExtremeEvent { index: 20, ..event_on(r.dates[20], -4.0) },
        ];
        let c = conditional_vol_comparison(&events, &v, 3).unwrap();
        // forecasts for returns 9,10,11 and 17,18,19
        let cond = [9, 10, 11, 17, 18, 19].iter().map(|j| 0.01 * (1.0 + *j as f64)).sum::<f64>() / 6.0;
        let all = (0..30).map(|j| 0.01 * (1.0 + j as f64)).sum::<f64>() / 30.0;
        assert!((c.conditional - cond * 252f64.sqrt()).abs() < 1e-12);
        assert!((c.unconditional - all * 252f64.sqrt()).abs() < 1e-12);
        assert_eq!(c.n_conditional, 6);

        let (_, flat) = setup(vec![0.1; 30]);
        let c = conditional_vol_comparison(&events, &flat, 9).unwrap();
        assert!((c.conditional - c.unconditional).abs() < 1e-12);
        assert!(conditional_vol_comparison(&[], &flat, 9).is_err());
    }
}
