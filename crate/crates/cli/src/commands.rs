use std::fs;
use std::path::{Path, PathBuf};

use reactive_vol::benchmarks::{
    align_by_date, garch_fit, garch_trace, increment_regression, std_ema_trace, GarchParams,
};
use reactive_vol::event_study::{recovery_time, run_study, Estimator, Group, StudyConfig};
use reactive_vol::simulation::{fit_exponential, leverage_correlation, simulate_path, SimConfig};
use reactive_vol::term_structure::{long_term_vols, term_structure};
use reactive_vol::timeseries::{load_dated_values, write_price_series};
use reactive_vol::{arithmetic_returns, load_price_series, run_index, run_stock};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{config_comment, ArtifactWriter};

pub fn path_string(p: &Path) -> String {
    p.display().to_string()
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateOptions {
    pub input: String,
    pub index: Option<String>,
    pub garch_params: Option<GarchParams>,
}

pub fn estimate(
    cfg: &RunConfig<EstimateOptions>,
    input: &Path,
    index: Option<&Path>,
    out: &mut ArtifactWriter,
) -> Result<Value, CliError> {
    let series = load_price_series(input)?;
    let params = &cfg.params;
    let reactive = match index {
        Some(path) => {
            let index_run = run_index(&load_price_series(path)?, params, cfg.warmup)?;
            run_stock(&series, &index_run, params, cfg.warmup)?
        }
        None => run_index(&series, params, cfg.warmup)?.trace,
    };
    let sd = std_ema_trace(&series, params.lambda_sigma, cfg.warmup)?;
    let (garch, fit) = match cfg.options.garch_params {
        Some(g) => {
            g.validate()?;
            (g, None)
        }
        None => {
            let returns = arithmetic_returns(&series)?;
            let fit = garch_fit(&returns.returns).map_err(|e| {
                CliError::Data(format!("{e}; pass --garch-params to skip the fit"))
            })?;
            (fit.params, Some(fit))
        }
    };
    let garch_vol = garch_trace(&series, &garch)?;

    let rows: Vec<String> = (0..reactive.len())
        .map(|i| {
            format!(
                "{},{},{},{},{}",
                reactive.dates[i].format("%Y-%m-%d"),
                reactive.sigma[i],
                sd.sigma[i],
                garch_vol.sigma[i],
                reactive.provisional[i]
            )
        })
        .collect();
    out.csv("estimate.csv", cfg, "date,sigma_reactive,sigma_sd,sigma_garch,provisional", &rows)?;
    Ok(json!({
        "rows": rows.len(),
        "garch_params": garch,
        "garch_fit": fit,
        "last_sigma_reactive": reactive.sigma.last(),
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateOptions {
    pub steps: usize,
    pub burn_in: usize,
    pub sigma_tilde: f64,
}

pub fn simulate(cfg: &RunConfig<SimulateOptions>, out: &mut ArtifactWriter) -> Result<Value, CliError> {
    let sim = SimConfig {
        n_steps: cfg.options.steps,
        sigma_tilde_const: cfg.options.sigma_tilde,
        params: cfg.params,
        seed: cfg.seed,
        burn_in: cfg.options.burn_in,
        ..SimConfig::default()
    };
    sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let path = simulate_path(&sim)?;
    let mut bytes = Vec::new();
    write_price_series(&path.series, &mut bytes, Some(&config_comment(cfg)?))?;
    out.write("simulated.csv", &bytes)?;
    Ok(json!({
        "steps": path.series.len(),
        "resampled": path.resampled,
        "last_price": path.series.prices().last(),
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelateOptions {
    pub input: String,
    pub tau_max: usize,
    pub fit_max: usize,
}

pub fn correlate(cfg: &RunConfig<CorrelateOptions>, input: &Path, out: &mut ArtifactWriter) -> Result<Value, CliError> {
    let o = &cfg.options;
    if o.fit_max > o.tau_max {
        return Err(CliError::Config(format!(
            "fit_max {} exceeds tau_max {}",
            o.fit_max, o.tau_max
        )));
    }
    let series = load_price_series(input)?;
    let corr = leverage_correlation(&series, o.tau_max)?;
    let (fit, fit_error) = match fit_exponential(&corr, 1, o.fit_max) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let rows: Vec<String> = (0..corr.taus.len())
        .map(|i| format!("{},{},{},{}", corr.taus[i], corr.values[i], corr.n_samples[i], corr.std_errors[i]))
        .collect();
    out.csv("corr.csv", cfg, "tau,value,n_samples,std_error", &rows)?;
    let result = json!({ "correlation": corr, "fit": fit, "fit_error": fit_error });
    out.json("corr.json", cfg, &result)?;
    Ok(json!({ "fit": fit, "fit_error": fit_error }))
}

#[derive(Debug, Clone, Serialize)]
pub struct TermOptions {
    pub input: String,
    pub maturities: Vec<f64>,
}

pub fn term(cfg: &RunConfig<TermOptions>, input: &Path, out: &mut ArtifactWriter) -> Result<Value, CliError> {
    let series = load_price_series(input)?;
    let run = run_index(&series, &cfg.params, cfg.warmup)?;
    let state = run.final_state();
    let vols = term_structure(state, cfg.params.lambda_s, cfg.params.lambda_f, &cfg.options.maturities)?;
    let (sigma_is, sigma_if) = long_term_vols(state);
    let rows: Vec<String> = cfg
        .options
        .maturities
        .iter()
        .zip(&vols)
        .map(|(t, v)| format!("{t},{},{}", v.sigma, v.clamped))
        .collect();
    out.csv("term.csv", cfg, "maturity,sigma,clamped", &rows)?;
    let points: Vec<Value> = cfg
        .options
        .maturities
        .iter()
        .zip(&vols)
        .map(|(t, v)| json!({ "maturity": t, "sigma": v.sigma, "clamped": v.clamped }))
        .collect();
    let result = json!({
        "date": series.dates().last(),
        "sigma_i": state.reactive_vol(),
        "sigma_is": sigma_is,
        "sigma_if": sigma_if,
        "provisional": state.is_provisional(),
        "term_structure": points,
    });
    out.json("term.json", cfg, &result)?;
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareOptions {
    pub x: String,
    pub y: String,
}

pub fn compare(cfg: &RunConfig<CompareOptions>, x: &Path, y: &Path, out: &mut ArtifactWriter) -> Result<Value, CliError> {
    let (xd, xv) = load_dated_values(x)?;
    let (yd, yv) = load_dated_values(y)?;
    let (dates, xa, ya) = align_by_date(&xd, &xv, &yd, &yv);
    let report = increment_regression(&xa, &ya)?;
    let result = json!({
        "regression": report,
        "common_dates": dates.len(),
        "first_date": dates.first(),
        "last_date": dates.last(),
    });
    out.json("compare.json", cfg, &result)?;
    Ok(json!({ "regression": report }))
}

#[derive(Debug, Clone, Serialize)]
pub struct EventsOptions {
    pub input: String,
    pub index: String,
    pub estimator: Estimator,
    pub delta: usize,
    pub threshold_mult: f64,
    pub tail_threshold: f64,
    pub baseline_samples: usize,
    pub warning_multiplier: f64,
    pub warning_lookback: usize,
}

/// CSV files in `dir`, sorted by name, leaving out `exclude`.
fn stock_files(dir: &Path, exclude: &Path) -> Result<Vec<PathBuf>, CliError> {
    let exclude = fs::canonicalize(exclude).ok();
    let entries = fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv && path.is_file() && fs::canonicalize(&path).ok() != exclude {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("no stock CSV files in {}", dir.display())));
    }
    Ok(files)
}

pub fn events(
    cfg: &RunConfig<EventsOptions>,
    dir: &Path,
    index: &Path,
    out: &mut ArtifactWriter,
) -> Result<Value, CliError> {
    let o = &cfg.options;
    let stocks = stock_files(dir, index)?
        .iter()
        .map(load_price_series)
        .collect::<Result<Vec<_>, _>>()?;
    let index_series = load_price_series(index)?;
    let study = StudyConfig {
        params: cfg.params,
        estimator: o.estimator,
        warmup: cfg.warmup,
        delta: o.delta,
        threshold_mult: o.threshold_mult,
        tail_threshold: o.tail_threshold,
        baseline_samples: o.baseline_samples,
        warning_multiplier: o.warning_multiplier,
        warning_lookback: o.warning_lookback,
        seed: cfg.seed,
    };
    let result = run_study(&stocks, &index_series, &study)?;

    let recovery: Vec<Value> = result
        .profiles
        .iter()
        .map(|p| {
            let fit = recovery_time(p);
            json!({
                "group": p.group,
                "events": p.counts.first(),
                "mean_before": p.mean_before,
                "mean_after": p.mean_after,
                "recovery": fit.as_ref().ok(),
                "recovery_error": fit.as_ref().err().map(|e| e.to_string()),
            })
        })
        .collect();
    out.json(
        "events.json",
        cfg,
        &json!({
            "instruments": stocks.len(),
            "skipped": result.skipped,
            "group_counts": result.group_counts,
            "profiles": recovery,
            "events": result.events,
        }),
    )?;

    let delta = o.delta as i64;
    let column = |g: Group| result.profiles.iter().find(|p| p.group == Some(g));
    let rows: Vec<String> = (0..2 * o.delta + 1)
        .map(|i| {
            let mut row = format!("{}", i as i64 - delta);
            for g in Group::ALL {
                row.push(',');
                if let Some(p) = column(g) {
                    row.push_str(&p.q[i].to_string());
                }
            }
            row.push(',');
            if let Some(b) = &result.baseline {
                row.push_str(&b.profile.q[i].to_string());
            }
            row
        })
        .collect();
    out.csv("qprofiles.csv", cfg, "k,SyP,SyN,SpP,SpN,baseline", &rows)?;
    out.json("tails.json", cfg, &result.tails)?;
    out.json(
        "warnings.json",
        cfg,
        &json!({
            "warnings": result.warnings,
            "vol_comparison": result.vol_comparison,
            "baseline": result.baseline.as_ref().map(|b| json!({
                "windows": b.n_windows,
                "with_replacement": b.with_replacement,
                "mean_before": b.profile.mean_before,
                "mean_after": b.profile.mean_after,
            })),
        }),
    )?;
    Ok(json!({
        "instruments": stocks.len(),
        "skipped": result.skipped.len(),
        "events": result.events.len(),
        "group_counts": result.group_counts,
    }))
}
