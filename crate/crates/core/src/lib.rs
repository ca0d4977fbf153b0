//! Reactive volatility estimation with a leverage-driven level, plus the
//! standard benchmarks, a stochastic simulator and an extreme-event study.
//!
//! Prices enter through [`PriceSeries`]; [`run_index`] and [`run_stock`]
//! turn them into [`VolTrace`]s that downstream modules consume.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;

pub mod benchmarks;
pub mod event_study;
pub mod fitting;
pub mod reactive;
pub mod simulation;
pub mod stats;
pub mod term_structure;
pub mod timeseries;

pub use error::{Error, Result};
pub use reactive::{
    filter, run_index, run_stock, EstimatorParams, IndexRun, ReactiveState, StockState, DEFAULT_WARMUP,
};
pub use timeseries::{arithmetic_returns, load_price_series, PriceSeries, ReturnSeries, VolTrace};
