//! Execution-quality and performance measures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lob::Direction;

/// Seconds in a trading year: 252 sessions of 6.5 hours.
pub const ANNUALIZATION_SECONDS: f64 = 252.0 * 6.5 * 3600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no fills: slippage undefined")]
    NoFills,
    #[error("arrival price must be positive")]
    BadArrival,
    #[error("market volume is zero: participation undefined")]
    ZeroVolume,
    #[error("need at least {need} samples, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("zero variance: Sharpe undefined")]
    UndefinedSharpe,
    #[error("impact fit failed: {0}")]
    FitFailed(String),
    #[error("decay fit did not converge (best grid beta {best_beta})")]
    NoConvergence { best_beta: f64 },
}

/// Volume-weighted execution cost against the arrival mid, in bps.
/// Positive is a cost for either side.
pub fn slippage_target_arrival(fills: &[(f64, u64)], arrival_mid: f64, side: Direction) -> Result<f64, MetricsError> {
    if !(arrival_mid > 0.0) {
        return Err(MetricsError::BadArrival);
    }
    let qty: u64 = fills.iter().map(|(_, s)| s).sum();
    if qty == 0 {
        return Err(MetricsError::NoFills);
    }
    let vwap = fills.iter().map(|(p, s)| p * *s as f64).sum::<f64>() / qty as f64;
    Ok(side.sign() * (vwap - arrival_mid) / arrival_mid * 1e4)
}

/// `100 q / v` in percent.
pub fn participation_rate(q: f64, v: f64) -> Result<f64, MetricsError> {
    if v == 0.0 {
        return Err(MetricsError::ZeroVolume);
    }
    Ok(100.0 * q / v)
}

/// Annualized Sharpe of PnL increments sampled every `dt` seconds.
pub fn sharpe_ratio(increments: &[f64], dt: f64, annualization: f64) -> Result<f64, MetricsError> {
    let n = increments.len();
    if n < 2 {
        return Err(MetricsError::TooFew { need: 2, got: n });
    }
    let mean = increments.iter().sum::<f64>() / n as f64;
    let var = increments.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs()) || sd == 0.0 {
        return Err(MetricsError::UndefinedSharpe);
    }
    Ok(mean / sd * (annualization / dt).sqrt())
}

/// Executed quantity against relative impact, sell impacts already negated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImpactCurve {
    pub points: Vec<(f64, f64)>,
}

impl ImpactCurve {
    /// Averages several episode paths into `bins` equal-width quantity bins
    /// over `(0, q_max]`. Empty bins are left out.
    pub fn binned(paths: &[Vec<(f64, f64)>], bins: usize, q_max: f64) -> Self {
        let mut sum_q = vec![0.0; bins];
        let mut sum_i = vec![0.0; bins];
        let mut n = vec![0usize; bins];
        for path in paths {
            for &(q, imp) in path {
                if q <= 0.0 || q > q_max {
                    continue;
                }
                let b = (((q / q_max) * bins as f64).ceil() as usize).clamp(1, bins) - 1;
                sum_q[b] += q;
                sum_i[b] += imp;
                n[b] += 1;
            }
        }
        let points = (0..bins)
            .filter(|b| n[*b] > 0)
            .map(|b| (sum_q[b] / n[b] as f64, sum_i[b] / n[b] as f64))
            .collect();
        Self { points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactFit {
    pub delta: f64,
    pub coefficient: f64,
    pub r2: f64,
}

/// Log-log least squares `log I = log c + delta log q` over positive points.
pub fn fit_impact_exponent(curve: &ImpactCurve) -> Result<ImpactFit, MetricsError> {
    let n = curve.points.len();
    if n < 10 {
        return Err(MetricsError::TooFew { need: 10, got: n });
    }
    let pos: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|(q, i)| *q > 0.0 && *i > 0.0)
        .map(|(q, i)| (q.ln(), i.ln()))
        .collect();
    if pos.len() * 2 < n {
        return Err(MetricsError::FitFailed(format!("{} of {} impacts non-positive", n - pos.len(), n)));
    }
    let m = pos.len() as f64;
    let mx = pos.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pos.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pos.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pos.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pos.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(MetricsError::FitFailed("degenerate quantities".into()));
    }
    let delta = sxy / sxx;
    let intercept = my - delta * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(ImpactFit { delta, coefficient: intercept.exp(), r2 })
}

/// Post-execution impact path: `z = t / T` past the end of execution and the
/// raw impact there, plus the impact at `z = 1` used for normalization.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecayPath {
    pub peak: f64,
    pub points: Vec<(f64, f64)>,
}

/// Relaxation profile `z^(1-beta) - (z-1)^(1-beta)`.
pub fn i_prop(z: f64, beta: f64) -> f64 {
    z.powf(1.0 - beta) - (z - 1.0).max(0.0).powf(1.0 - beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub beta: f64,
    pub rmse: f64,
}

fn decay_rmse(path: &DecayPath, beta: f64) -> f64 {
    let n = path.points.len() as f64;
    let sse: f64 = path.points.iter().map(|(z, imp)| (imp / path.peak - i_prop(*z, beta)).powi(2)).sum();
    (sse / n).sqrt()
}

/// Least-squares `beta` on `[0, 1)`: a 0.001 grid followed by golden-section
/// refinement around the best grid point.
pub fn fit_decay_beta(path: &DecayPath) -> Result<DecayFit, MetricsError> {
    let n = path.points.len();
    if n < 10 {
        return Err(MetricsError::TooFew { need: 10, got: n });
    }
    if !(path.peak > 0.0) {
        return Err(MetricsError::FitFailed("peak impact must be positive".into()));
    }
    if path.points.iter().any(|(z, _)| !(*z > 1.0)) {
        return Err(MetricsError::FitFailed("decay path must have z > 1".into()));
    }
    const STEP: f64 = 1e-3;
    let mut best = (0.0, f64::INFINITY);
    for k in 0..1000 {
        let b = k as f64 * STEP;
        let e = decay_rmse(path, b);
        if e < best.1 {
            best = (b, e);
        }
    }
    if !best.1.is_finite() {
        return Err(MetricsError::NoConvergence { best_beta: best.0 });
    }
    let (mut lo, mut hi) = ((best.0 - STEP).max(0.0), (best.0 + STEP).min(0.999_999));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (decay_rmse(path, x1), decay_rmse(path, x2));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = decay_rmse(path, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = decay_rmse(path, x2);
        }
    }
    let mut beta = 0.5 * (lo + hi);
    let mut rmse = decay_rmse(path, beta);
    if best.1 < rmse {
        beta = best.0;
        rmse = best.1;
    }
    if !rmse.is_finite() {
        return Err(MetricsError::NoConvergence { best_beta: best.0 });
    }
    Ok(DecayFit { beta, rmse })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slippage_cases() {
        let at = [(100.0, 3), (100.0, 2)];
        assert_eq!(slippage_target_arrival(&at, 100.0, Direction::Buy).unwrap(), 0.0);
        let up = [(100.10, 1)];
        assert!((slippage_target_arrival(&up, 100.0, Direction::Buy).unwrap() - 10.0).abs() < 1e-9);
        assert!((slippage_target_arrival(&up, 100.0, Direction::Sell).unwrap() + 10.0).abs() < 1e-9);
        assert_eq!(slippage_target_arrival(&[], 100.0, Direction::Buy), Err(MetricsError::NoFills));
        assert_eq!(slippage_target_arrival(&up, 0.0, Direction::Buy), Err(MetricsError::BadArrival));
    }

    #[test]
    fn participation_cases() {
        assert!((participation_rate(1.0, 0.55).unwrap() - 181.818_181).abs() < 1e-4);
        assert!((participation_rate(1.0, 22.0).unwrap() - 4.545_454).abs() < 1e-4);
        assert_eq!(participation_rate(0.0, 22.0).unwrap(), 0.0);
        assert_eq!(participation_rate(1.0, 0.0), Err(MetricsError::ZeroVolume));
    }

    #[test]
    fn sharpe_cases() {
        let alt: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(sharpe_ratio(&alt, 1.0, ANNUALIZATION_SECONDS).unwrap(), 0.0);
        assert_eq!(sharpe_ratio(&[1.0; 20], 1.0, ANNUALIZATION_SECONDS), Err(MetricsError::UndefinedSharpe));
        assert_eq!(sharpe_ratio(&[0.1; 20], 1.0, ANNUALIZATION_SECONDS), Err(MetricsError::UndefinedSharpe));
        assert!(matches!(sharpe_ratio(&[1.0], 1.0, 1.0), Err(MetricsError::TooFew { .. })));
        // mean 0.1, sample sd 1: alternate 0.1 +/- a with a chosen so sd is exactly 1 for n = 4
        let a = (3.0f64 / 4.0).sqrt();
        let inc = [0.1 + a, 0.1 - a, 0.1 + a, 0.1 - a];
        let s = sharpe_ratio(&inc, 1.0, ANNUALIZATION_SECONDS).unwrap();
        assert!((s - 0.1 * 5_896_800f64.sqrt()).abs() < 1e-9);
        assert!((s - 242.83).abs() < 0.01);
    }

    #[test]
    fn impact_exponent_recovers_planted() {
        for delta in [0.0, 0.3, 0.5, 0.7, 1.0] {
            let pts = (1..=20).map(|k| (k as f64 * 60.0, 0.001 * (k as f64 * 60.0).powf(delta))).collect();
            let fit = fit_impact_exponent(&ImpactCurve { points: pts }).unwrap();
            assert!((fit.delta - delta).abs() < 1e-9, "{delta} -> {}", fit.delta);
            assert!((fit.coefficient - 0.001).abs() < 1e-9);
        }
    }

    #[test]
    fn impact_fit_rejects_negative_curves() {
        let pts = (1..=12).map(|k| (k as f64, if k < 8 { -0.1 } else { 0.1 })).collect();
        assert!(matches!(fit_impact_exponent(&ImpactCurve { points: pts }), Err(MetricsError::FitFailed(_))));
        let short = ImpactCurve { points: vec![(1.0, 1.0); 5] };
        assert!(matches!(fit_impact_exponent(&short), Err(MetricsError::TooFew { .. })));
    }

    #[test]
    fn binning_averages_by_quantity() {
        let a = vec![(10.0, 1.0), (60.0, 2.0), (100.0, 4.0)];
        let b = vec![(20.0, 3.0), (70.0, 2.0)];
        let c = ImpactCurve::binned(&[a, b], 2, 100.0);
        assert_eq!(c.points, vec![(15.0, 2.0), (230.0 / 3.0, 8.0 / 3.0)]);
    }

    #[test]
    fn flat_decay_gives_zero_beta() {
        let path = DecayPath { peak: 2.0, points: (1..=20).map(|k| (1.0 + k as f64 * 0.05, 2.0)).collect() };
        let fit = fit_decay_beta(&path).unwrap();
        assert!(fit.beta < 1e-3, "beta {}", fit.beta);
        assert!(fit.rmse < 1e-6);
        assert!((i_prop(3.7, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decay_fit_validation() {
        let path = DecayPath { peak: 0.0, points: vec![(1.5, 1.0); 12] };
        assert!(fit_decay_beta(&path).is_err());
        let path = DecayPath { peak: 1.0, points: vec![(1.0, 1.0); 12] };
        assert!(fit_decay_beta(&path).is_err());
    }
}
