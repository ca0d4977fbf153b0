//! Price ingestion, arithmetic returns and the EMA kernel shared by every
//! estimator in the crate.
//!
//! The on-disk format is a UTF-8 CSV with header `date,close`, ISO-8601
//! dates and one instrument per file. Lines starting with `#` are comments,
//! which lets artifacts carry their configuration without breaking readers.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dated close prices for one instrument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    instrument_id: String,
    dates: Vec<NaiveDate>,
    prices: Vec<f64>,
}

impl PriceSeries {
    /// Validates and builds a series. Dates must be strictly increasing and
    /// every price finite and positive.
    pub fn new(
        instrument_id: impl Into<String>,
        dates: Vec<NaiveDate>,
        prices: Vec<f64>,
    ) -> Result<Self> {
        if dates.len() != prices.len() {
            return Err(Error::Misaligned(format!(
                "{} dates for {} prices",
                dates.len(),
                prices.len()
            )));
        }
        if prices.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: prices.len(),
            });
        }
        if let Some(i) = prices.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::NonPositivePrice { row: i + 1 });
        }
        if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::UnorderedDates { index: i + 1 });
        }
        Ok(Self {
            instrument_id: instrument_id.into(),
            dates,
            prices,
        })
    }

    pub fn instrument_id(&self) -> &str {
        &self.instrument_id
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Restricts the series to the given dates (which must be a subset,
    /// in order). Used to align a stock with an index calendar.
    pub fn restrict_to(&self, keep: &[NaiveDate]) -> Result<Self> {
        let mut dates = Vec::with_capacity(keep.len());
        let mut prices = Vec::with_capacity(keep.len());
        let mut j = 0;
        for d in keep {
            while j < self.dates.len() && self.dates[j] < *d {
                j += 1;
            }
            if j == self.dates.len() || self.dates[j] != *d {
                return Err(Error::Misaligned(format!(
                    "{} has no price on {d}",
                    self.instrument_id
                )));
            }
            dates.push(*d);
            prices.push(self.prices[j]);
        }
        Self::new(self.instrument_id.clone(), dates, prices)
    }
}

/// Arithmetic returns `R(t) = (P(t) - P(t-1)) / P(t-1)`, dated by `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub instrument_id: String,
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// Position of `date` in the series, if present.
    pub fn position(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }
}

/// Per-date volatility produced by an estimator, aligned with the price
/// dates it was computed from. `sigma[i]` is the forecast available at the
/// close of `dates[i]`, i.e. the scale of the return dated `dates[i + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolTrace {
    pub instrument_id: String,
    pub dates: Vec<NaiveDate>,
    pub sigma: Vec<f64>,
    /// True while the estimator is still in warm-up.
    pub provisional: Vec<bool>,
}

impl VolTrace {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Checks that this trace covers exactly the price dates behind `returns`.
    pub fn check_aligned(&self, returns: &ReturnSeries) -> Result<()> {
        if self.dates.len() != returns.len() + 1
            || self.sigma.len() != self.dates.len()
            || self.provisional.len() != self.dates.len()
            || self.dates[1..] != returns.dates[..]
        {
            return Err(Error::Misaligned(format!(
                "volatility trace for {} does not cover the return dates",
                self.instrument_id
            )));
        }
        Ok(())
    }
}

pub fn arithmetic_returns(series: &PriceSeries) -> Result<ReturnSeries> {
    let p = series.prices();
    if p.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: p.len(),
        });
    }
    let mut returns = Vec::with_capacity(p.len() - 1);
    for (i, w) in p.windows(2).enumerate() {
        let r = (w[1] - w[0]) / w[0];
        if r <= -1.0 {
            return Err(Error::ReturnBelowMinusOne { index: i, value: r });
        }
        returns.push(r);
    }
    Ok(ReturnSeries {
        instrument_id: series.instrument_id.clone(),
        dates: series.dates[1..].to_vec(),
        returns,
    })
}

/// One step of an exponential moving average: `(1 - lambda) * prev + lambda * x`.
pub fn ema_update(prev: f64, x: f64, lambda: f64) -> Result<f64> {
    check_weight("lambda", lambda)?;
    Ok(ema(prev, x, lambda))
}

#[inline]
pub(crate) fn ema(prev: f64, x: f64, lambda: f64) -> f64 {
    (1.0 - lambda) * prev + lambda * x
}

pub(crate) fn check_weight(name: &'static str, lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("{lambda} is outside (0, 1]")))
    }
}

/// `n` consecutive weekdays starting at `start` (rolled forward if it falls
/// on a weekend). Holidays are not modelled.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}

pub fn load_price_series(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let (dates, values) = load_dated_column(path, "close", |row, v| {
        if v > 0.0 {
            Ok(())
        } else {
            Err(Error::NonPositivePrice { row })
        }
    })?;
    PriceSeries::new(instrument_id_from_path(path), dates, values)
}

/// Reads a two-column `date,<value>` CSV with no sign restriction beyond
/// finiteness. Used for volatility series fed to the regression.
pub fn load_dated_values(path: impl AsRef<Path>) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
    load_dated_column(path.as_ref(), "", |_, _| Ok(()))
}

pub fn instrument_id_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn load_dated_column(
    path: &Path,
    value_column: &str,
    check: impl Fn(usize, f64) -> Result<()>,
) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
    let mut file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut text = String::new();
    file.read_to_string(&mut text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dated_column(&text, value_column, check)
}

fn parse_dated_column(
    text: &str,
    value_column: &str,
    check: impl Fn(usize, f64) -> Result<()>,
) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || !headers[0].eq_ignore_ascii_case("date") {
        return Err(Error::MalformedRow {
            row: 1,
            message: format!("expected header `date,{value_column}`"),
        });
    }
    if !value_column.is_empty() && !headers[1].eq_ignore_ascii_case(value_column) {
        return Err(Error::MalformedRow {
            row: 1,
            message: format!("expected header `date,{value_column}`"),
        });
    }

    let mut rows: Vec<(NaiveDate, f64, usize)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 2 {
            return Err(Error::MalformedRow {
                row,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| {
            Error::MalformedRow {
                row,
                message: format!("bad date {:?}: {e}", &record[0]),
            }
        })?;
        let value: f64 = record[1].parse().map_err(|_| Error::MalformedRow {
            row,
            message: format!("bad number {:?}", &record[1]),
        })?;
        if !value.is_finite() {
            return Err(Error::MalformedRow {
                row,
                message: format!("non-finite value {:?}", &record[1]),
            });
        }
        check(row, value)?;
        rows.push((date, value, row));
    }

    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateDate {
            row: w[0].2.max(w[1].2),
            date: w[1].0,
        });
    }
    Ok(rows.into_iter().map(|(d, v, _)| (d, v)).unzip())
}

/// Writes `date,close` rows. Floats use the shortest representation that
/// parses back to the same bits, so `load(write(s)) == s`.
pub fn write_price_series<W: Write>(
    series: &PriceSeries,
    out: W,
    comment: Option<&str>,
) -> Result<()> {
    write_dated_column(out, "close", series.dates(), series.prices(), comment)
}

pub fn write_dated_column<W: Write>(
    mut out: W,
    value_column: &str,
    dates: &[NaiveDate],
    values: &[f64],
    comment: Option<&str>,
) -> Result<()> {
    let io = |source| Error::Io {
        path: "<writer>".into(),
        source,
    };
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(out, "# {line}").map_err(io)?;
        }
    }
    writeln!(out, "date,{value_column}").map_err(io)?;
    for (d, v) in dates.iter().zip(values) {
        writeln!(out, "{},{}", d.format("%Y-%m-%d"), v).map_err(io)?;
    }
    Ok(())
}
