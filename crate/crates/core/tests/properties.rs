use chrono::NaiveDate;
use proptest::prelude::*;
use reactive_vol::benchmarks::increment_regression;
use reactive_vol::event_study::{crossings, profile_from_windows};
use reactive_vol::term_structure::{relaxation_weight, sigma_t, TermVolInputs};
use reactive_vol::timeseries::{business_days, ema_update, write_price_series};
use reactive_vol::{arithmetic_returns, filter, load_price_series, EstimatorParams, PriceSeries, ReactiveState};

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(1995, 6, 1).unwrap()
}

fn price_series(prices: Vec<f64>) -> PriceSeries {
    PriceSeries::new("p", business_days(start(), prices.len()), prices).unwrap()
}

fn params() -> impl Strategy<Value = EstimatorParams> {
    (0.001f64..0.2, 0.05f64..0.9, 0.005f64..0.2, prop_oneof![Just(0.0), 0.1f64..10.0], 0.0f64..12.0).prop_map(
        |(lambda_s, frac, lambda_sigma, phi, ell)| EstimatorParams {
            lambda_s,
            lambda_f: lambda_s + frac * (1.0 - lambda_s),
            lambda_sigma,
            phi,
            ell,
        },
    )
}

fn path(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    (1.0f64..1e4, prop::collection::vec(-0.2f64..0.2, 1..max_len)).prop_map(|(p0, moves)| {
        let mut prices = vec![p0];
        for m in moves {
            let last = *prices.last().unwrap();
            prices.push(last * (1.0 + m));
        }
        prices
    })
}

proptest! {
    #[test]
    fn ema_is_convex(prev in -1e6f64..1e6, x in -1e6f64..1e6, lambda in 1e-6f64..=1.0) {
        let y = ema_update(prev, x, lambda).unwrap();
        prop_assert!(y >= prev.min(x) && y <= prev.max(x));
    }

    #[test]
    fn returns_reconstruct_prices(prices in path(300)) {
        let series = price_series(prices.clone());
        let returns = arithmetic_returns(&series).unwrap();
        let mut p = prices[0];
        for (r, expected) in returns.returns.iter().zip(&prices[1..]) {
            p *= 1.0 + r;
            prop_assert!((p - expected).abs() <= 1e-12 * expected.abs());
            p = *expected;
        }
    }

    #[test]
    fn loader_is_idempotent(raw in prop::collection::vec(1e-300f64..1e300, 2..50)) {
        let series = price_series(raw);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let mut first = Vec::new();
        write_price_series(&series, &mut first, None).unwrap();
        std::fs::write(&path, &first).unwrap();
        let loaded = load_price_series(&path).unwrap();
        prop_assert_eq!(loaded.prices(), series.prices());
        prop_assert_eq!(loaded.dates(), series.dates());
        let mut second = Vec::new();
        write_price_series(&loaded, &mut second, None).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn level_is_consistent_after_every_update(p in params(), prices in path(200), var in 0.0f64..1e-2) {
        let mut state = ReactiveState::with_variance(prices[0], &p, var).unwrap();
        for &price in &prices[1..] {
            state.update(price, &p).unwrap();
            prop_assert!(state.level_consistency_error(&p) <= 1e-12 * state.level);
        }
    }

    #[test]
    fn filter_is_bounded_and_monotone(z1 in -1e3f64..1e3, z2 in -1e3f64..1e3, phi in 1e-3f64..100.0) {
        prop_assert!(filter(z1, phi).abs() <= 1.0 / phi);
        let (lo, hi) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
        prop_assert!(filter(lo, phi) <= filter(hi, phi));
    }

    #[test]
    fn term_structure_is_monotone(
        mut vols in prop::array::uniform3(0.001f64..0.1),
        lambda_s in 0.001f64..0.5,
        ratio in 1.0f64..20.0,
        reversed in any::<bool>(),
        mut maturities in prop::collection::vec(1e-3f64..1e4, 2..20),
    ) {
        vols.sort_by(|a, b| b.total_cmp(a));
        if reversed {
            vols.reverse();
        }
        maturities.sort_by(f64::total_cmp);
        let sigma = |maturity| sigma_t(&TermVolInputs {
            sigma_i: vols[0],
            sigma_if: vols[1],
            sigma_is: vols[2],
            lambda_s,
            lambda_f: (lambda_s * ratio).min(1.0),
            maturity,
        }).unwrap();
        for w in maturities.windows(2) {
            let (a, b) = (sigma(w[0]), sigma(w[1]));
            prop_assert!(!a.clamped && !b.clamped);
            let slack = 1e-15 * a.sigma;
            if reversed {
                prop_assert!(b.sigma >= a.sigma - slack);
            } else {
                prop_assert!(b.sigma <= a.sigma + slack);
            }
        }
    }

    #[test]
    fn flat_term_structure(c in 1e-4f64..1.0, maturity in 1e-6f64..1e6, lambda_s in 0.001f64..0.1) {
        let v = sigma_t(&TermVolInputs {
            sigma_i: c,
            sigma_if: c,
            sigma_is: c,
            lambda_s,
            lambda_f: 2.0 * lambda_s,
            maturity,
        }).unwrap();
        prop_assert!((v.sigma - c).abs() <= 1e-14 * c);
    }

    #[test]
    fn relaxation_weights_decrease(lambda in 1e-4f64..1.0, t1 in 1e-6f64..1e6, t2 in 1e-6f64..1e6) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let (a, b) = (relaxation_weight(lambda, lo), relaxation_weight(lambda, hi));
        prop_assert!(a > 0.0 && a <= 1.0 && b > 0.0 && b <= 1.0);
        prop_assert!(b <= a);
    }

    #[test]
    fn state_json_is_bit_exact(p in params(), prices in path(60), warmup in 0usize..80) {
        let mut state = ReactiveState::new(prices[0], &p, warmup).unwrap();
        for &price in &prices[1..] {
            state.update(price, &p).unwrap();
        }
        let text = state.to_json().unwrap();
        let back = ReactiveState::from_json(&text).unwrap();
        prop_assert_eq!(&back, &state);
        prop_assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn regression_ignores_level_shifts(
        x in prop::collection::vec(-1.0f64..1.0, 5..100),
        noise in prop::collection::vec(-1.0f64..1.0, 100),
        shift_x in -100.0f64..100.0,
        shift_y in -100.0f64..100.0,
    ) {
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, n)| 2.0 * a + n).collect();
        let base = increment_regression(&x, &y).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v + shift_x).collect();
        let ys: Vec<f64> = y.iter().map(|v| v + shift_y).collect();
        let shifted = increment_regression(&xs, &ys).unwrap();
        prop_assert!((base.slope - shifted.slope).abs() <= 1e-9 * base.slope.abs().max(1.0));
        prop_assert!((base.r_squared - shifted.r_squared).abs() <= 1e-9);
    }

    #[test]
    fn threshold_limits_of_crossings(values in prop::collection::vec(prop::option::of(-10.0f64..10.0), 0..200)) {
        prop_assert!(crossings(&values, f64::INFINITY).is_empty());
        let expected: Vec<usize> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_some_and(|v| v != 0.0))
            .map(|(i, _)| i)
            .collect();
        prop_assert_eq!(crossings(&values, 0.0), expected);
    }

    #[test]
    fn pooled_profile_is_weighted_mean_of_groups(
        a in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 5), 1..20),
        b in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 5), 1..20),
    ) {
        let pa = profile_from_windows(a.iter().map(Vec::as_slice), None).unwrap();
        let pb = profile_from_windows(b.iter().map(Vec::as_slice), None).unwrap();
        let pooled = profile_from_windows(a.iter().chain(&b).map(Vec::as_slice), None).unwrap();
        let (na, nb) = (a.len() as f64, b.len() as f64);
        for k in 0..5 {
            let mixed = (na * pa.mean_sq[k] + nb * pb.mean_sq[k]) / (na + nb);
            prop_assert!((pooled.mean_sq[k] - mixed).abs() <= 1e-12 * mixed.max(1.0));
        }
    }
}

#[test]
fn ten_thousand_rows_round_trip() {
    let mut prices = Vec::with_capacity(10_000);
    let mut p = 1234.5678;
    for i in 0..10_000 {
        p *= 1.0 + 0.01 * ((i as f64) * 0.7).sin();
        prices.push(p);
    }
    let series = price_series(prices);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.csv");
    let mut bytes = Vec::new();
    write_price_series(&series, &mut bytes, Some("generated")).unwrap();
    std::fs::write(&path, bytes).unwrap();
    assert_eq!(load_price_series(&path).unwrap(), PriceSeries::new("big", series.dates().to_vec(), series.prices().to_vec()).unwrap());
}
