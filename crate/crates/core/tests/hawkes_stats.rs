mod common;

use lobsim_core::hawkes::{stationarity_check, HawkesParams};
use lobsim_core::stats::{ks_test, mean};

#[test]
fn poisson_counts_match_mean() {
    // mu = 2/s over 100 s: mean 200, sigma sqrt(200) per run
    let counts = common::poisson_counts(200, 100.0, 2.0);
    let m = mean(&counts);
    let sigma = 200f64.sqrt();
    assert!((m - 200.0).abs() < 3.0 * sigma, "mean {m}");
    // the sample mean itself has standard error sigma / sqrt(200)
    assert!((m - 200.0).abs() < 3.0 * sigma / 200f64.sqrt(), "mean {m}");
    let var = counts.iter().map(|c| (c - m).powi(2)).sum::<f64>() / 199.0;
    assert!((var / 200.0 - 1.0).abs() < 0.35, "variance {var}");
}

#[test]
fn poisson_interarrivals_are_exponential() {
    let gaps = common::poisson_interarrivals(10_000, 2.0, 5);
    let (d, p) = ks_test(&gaps, |x| 1.0 - (-2.0 * x).exp());
    assert!(p > 0.01, "KS D={d} p={p}");
    // and the test has power: the wrong rate is rejected
    let (_, p_wrong) = ks_test(&gaps, |x| 1.0 - (-2.2 * x).exp());
    assert!(p_wrong < 0.01, "p={p_wrong}");
}

#[test]
fn near_critical_throughput_matches_stationary_rate() {
    let (mu, n, kappa, horizon) = (0.02, 0.9, 1.0, 1000.0);
    let params = common::self_exciting(mu, n, kappa);
    let (ok, radius) = stationarity_check(&params).unwrap();
    assert!(ok && (radius - 0.9).abs() < 1e-12);
    let rates = params.stationary_rates().unwrap();
    assert!(rates.iter().all(|r| (r - mu / (1.0 - n)).abs() < 1e-12));

    let runs = 100;
    let counts = common::hawkes_counts(&params, runs, horizon);
    let want = common::TYPES as f64 * common::self_exciting_mean_count(mu, n, kappa, horizon);
    let se = (common::TYPES as f64 * common::self_exciting_count_var(mu, n, horizon) / runs as f64).sqrt();
    let m = mean(&counts);
    assert!((m - want).abs() < 3.0 * se, "mean {m}, expected {want} ± {}", 3.0 * se);
}

#[test]
fn mean_count_formula_limits() {
    // n -> 0 gives the Poisson count; long horizons approach mu T / (1 - n)
    assert!((common::self_exciting_mean_count(0.5, 1e-12, 1.0, 10.0) - 5.0).abs() < 1e-9);
    let long = common::self_exciting_mean_count(0.1, 0.5, 2.0, 1e6);
    assert!((long / (0.1 * 1e6 / 0.5) - 1.0).abs() < 1e-5);
}

#[test]
fn default_parameters_are_stationary() {
    let p = HawkesParams::default();
    let (ok, r) = stationarity_check(&p).unwrap();
    assert!(ok, "radius {r}");
}
