#![allow(dead_code)]

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use reactive_vol::simulation::{simulate_path, SimConfig};
use reactive_vol::timeseries::write_price_series;
use reactive_vol::PriceSeries;

pub const BIN: &str = env!("CARGO_BIN_EXE_reactive-vol");

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("REACTIVE_VOL_THREADS")
        .output()
        .expect("binary runs")
}

fn save(series: &PriceSeries, path: &Path) {
    write_price_series(series, File::create(path).unwrap(), None).unwrap();
}

/// Index path plus `n_stocks` stocks sharing its calendar. Each stock
/// follows `0.9 R_I + R_own` with its own simulated path, and two index
/// shocks make sure systematic events occur.
pub struct Corpus {
    pub index: PriceSeries,
    pub stocks: Vec<PriceSeries>,
}

pub fn corpus(seed: u64, n_stocks: usize, steps: usize) -> Corpus {
    let base = |stream: u64, sigma: f64| SimConfig {
        n_steps: steps,
        sigma_tilde_const: sigma,
        seed,
        stream,
        ..SimConfig::default()
    };
    let index_path = simulate_path(&base(0, 0.01)).unwrap();
    let mut index_returns = index_path.raw_returns();
    for (day, shock) in [(steps / 2, -0.06), (3 * steps / 4, 0.05)] {
        if day < index_returns.len() {
            index_returns[day] = shock;
        }
    }
    let dates = index_path.series.dates().to_vec();
    let compound = |id: String, returns: &[f64]| {
        let mut prices = vec![100.0];
        for r in returns {
            prices.push(prices.last().unwrap() * (1.0 + r));
        }
        PriceSeries::new(id, dates.clone(), prices).unwrap()
    };
    let index = compound("index".into(), &index_returns);
    let stocks = (0..n_stocks)
        .map(|i| {
            let own = simulate_path(&base(i as u64 + 1, 0.015)).unwrap().raw_returns();
            let returns: Vec<f64> = index_returns
                .iter()
                .zip(&own)
                .map(|(ri, ro)| (0.9 * ri + ro).max(-0.5))
                .collect();
            compound(format!("stock_{i:02}"), &returns)
        })
        .collect();
    Corpus { index, stocks }
}

/// Writes the corpus as `<dir>/index.csv` and `<dir>/stocks/stock_NN.csv`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> (PathBuf, PathBuf) {
    let stocks_dir = dir.join("stocks");
    std::fs::create_dir_all(&stocks_dir).unwrap();
    let index = dir.join("index.csv");
    save(&corpus.index, &index);
    for s in &corpus.stocks {
        save(s, &stocks_dir.join(format!("{}.csv", s.instrument_id())));
    }
    (index, stocks_dir)
}
