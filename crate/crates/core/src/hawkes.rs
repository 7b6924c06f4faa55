//! Multivariate compound Hawkes process driving the exogenous order flow.
//!
//! Twelve event types (six per book side) are excited through exponential
//! kernels. `alpha[i][j]` is the jump added to the intensity of type `i` by an
//! event of type `j`, decaying at rate `kappa[i][j]`. Sampling uses Ogata
//! thinning: between events every kernel decays, so the current total
//! intensity dominates the process until the next accepted event.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of event types in the taxonomy.
pub const N_TYPES: usize = 12;

const DEFAULT_PARAMS: &str = include_str!("../params/default_hawkes.toml");

#[derive(Debug, Error)]
pub enum HawkesError {
    #[error("invalid hawkes parameters: {0}")]
    Invalid(String),
    #[error("query time {t} precedes last event time {last}")]
    TimeReversal { t: f64, last: f64 },
    #[error("failed to read parameter file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse parameter file: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Side of the book an event touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        }
    }
}

/// What an event does to the side it touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    LoDeep,
    LoTop,
    LoInspread,
    CoDeep,
    CoTop,
    /// Market order hitting the named side: `Mo` on `Bid` is a sell.
    Mo,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::LoDeep,
        EventKind::LoTop,
        EventKind::LoInspread,
        EventKind::CoDeep,
        EventKind::CoTop,
        EventKind::Mo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::LoDeep => "lo_deep",
            EventKind::LoTop => "lo_top",
            EventKind::LoInspread => "lo_inspread",
            EventKind::CoDeep => "co_deep",
            EventKind::CoTop => "co_top",
            EventKind::Mo => "mo",
        }
    }
}

/// One of the twelve (kind, side) pairs. Index layout is `side * 6 + kind`,
/// bid side first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventType {
    pub kind: EventKind,
    pub side: Side,
}

impl EventType {
    pub fn new(kind: EventKind, side: Side) -> Self {
        Self { kind, side }
    }

    pub fn index(self) -> usize {
        let s = match self.side {
            Side::Bid => 0,
            Side::Ask => 6,
        };
        s + self.kind as usize
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < N_TYPES, "event type index out of range: {i}");
        let side = if i < 6 { Side::Bid } else { Side::Ask };
        Self::new(EventKind::ALL[i % 6], side)
    }

    pub fn all() -> impl Iterator<Item = EventType> {
        (0..N_TYPES).map(EventType::from_index)
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.kind.as_str(), self.side.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketEvent {
    pub time: f64,
    pub etype: EventType,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    pub baseline: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
    pub kappa: Vec<Vec<f64>>,
    pub size_mean: Vec<f64>,
    #[serde(default = "default_volume_scale")]
    pub volume_scale: f64,
}

fn default_volume_scale() -> f64 {
    1.0
}

impl Default for HawkesParams {
    fn default() -> Self {
        let p: HawkesParams = toml::from_str(DEFAULT_PARAMS).expect("bundled parameter file parses");
        p.validate().expect("bundled parameter file is valid");
        p
    }
}

impl HawkesParams {
    /// Pure Poisson flow: no excitation, unit kernels, point-mass sizes.
    pub fn poisson(baseline: Vec<f64>) -> Self {
        Self {
            baseline,
            alpha: vec![vec![0.0; N_TYPES]; N_TYPES],
            kappa: vec![vec![1.0; N_TYPES]; N_TYPES],
            size_mean: vec![1.0; N_TYPES],
            volume_scale: 1.0,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, HawkesError> {
        let p: HawkesParams = toml::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HawkesError> {
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_str(&s)
    }

    pub fn with_volume_scale(mut self, scale: f64) -> Self {
        self.volume_scale = scale;
        self
    }

    /// Checks shapes, signs and stationarity.
    pub fn validate(&self) -> Result<(), HawkesError> {
        self.validate_shapes()?;
        if !(self.volume_scale > 0.0 && self.volume_scale.is_finite()) {
            return Err(HawkesError::Invalid(format!(
                "volume_scale must be positive, got {}",
                self.volume_scale
            )));
        }
        if let Some(m) = self.size_mean.iter().find(|m| !(**m >= 1.0 && m.is_finite())) {
            return Err(HawkesError::Invalid(format!(
                "size_mean entries must be >= 1 (positive integer marks), got {m}"
            )));
        }
        let (stationary, radius) = stationarity_check(self)?;
        if !stationary {
            return Err(HawkesError::Invalid(format!(
                "non-stationary excitation, spectral radius {radius:.4}"
            )));
        }
        Ok(())
    }

    fn validate_shapes(&self) -> Result<(), HawkesError> {
        let square = |m: &Vec<Vec<f64>>, name: &str| -> Result<(), HawkesError> {
            if m.len() != N_TYPES || m.iter().any(|r| r.len() != N_TYPES) {
                return Err(HawkesError::Invalid(format!("{name} must be {N_TYPES}x{N_TYPES}")));
            }
            Ok(())
        };
        if self.baseline.len() != N_TYPES {
            return Err(HawkesError::Invalid(format!("baseline must have {N_TYPES} entries")));
        }
        if self.size_mean.len() != N_TYPES {
            return Err(HawkesError::Invalid(format!("size_mean must have {N_TYPES} entries")));
        }
        square(&self.alpha, "alpha")?;
        square(&self.kappa, "kappa")?;
        if self.baseline.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return Err(HawkesError::Invalid("baseline rates must be non-negative".into()));
        }
        if self.alpha.iter().flatten().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(HawkesError::Invalid("alpha entries must be non-negative".into()));
        }
        if self.kappa.iter().flatten().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(HawkesError::Invalid("kappa entries must be positive".into()));
        }
        Ok(())
    }

    /// Branching matrix `alpha / kappa`.
    pub fn branching_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(N_TYPES, N_TYPES, |i, j| self.alpha[i][j] / self.kappa[i][j])
    }

    /// Long-run event rate per type, `(I - K)^-1 mu`.
    pub fn stationary_rates(&self) -> Option<Vec<f64>> {
        let k = self.branching_matrix();
        let a = DMatrix::<f64>::identity(N_TYPES, N_TYPES) - k;
        let mu = nalgebra::DVector::from_iterator(
            N_TYPES,
            self.baseline.iter().map(|b| b * self.volume_scale),
        );
        a.lu().solve(&mu).map(|v| v.iter().copied().collect())
    }
}

/// Returns whether the excitation is stationary and the spectral radius of
/// the branching matrix.
pub fn stationarity_check(params: &HawkesParams) -> Result<(bool, f64), HawkesError> {
    params.validate_shapes()?;
    let radius = params
        .branching_matrix()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max);
    Ok((radius < 1.0, radius))
}

/// Recursive kernel state. `acc[i * 12 + j]` holds
/// `sum_k alpha_ij exp(-kappa_ij (t_ref - t_k^j))` at `t_ref = last_event_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHistory {
    acc: Vec<f64>,
    last_event_time: f64,
}

impl Default for EventHistory {
    fn default() -> Self {
        Self::new(0.0)
    }
}

impl EventHistory {
    pub fn new(start: f64) -> Self {
        Self { acc: vec![0.0; N_TYPES * N_TYPES], last_event_time: start }
    }

    pub fn last_event_time(&self) -> f64 {
        self.last_event_time
    }

    pub fn accumulators(&self) -> &[f64] {
        &self.acc
    }

    /// Registers an event of type `etype` at `t`, exciting every type.
    pub fn record(&mut self, params: &HawkesParams, etype: EventType, t: f64) -> Result<(), HawkesError> {
        if t < self.last_event_time {
            return Err(HawkesError::TimeReversal { t, last: self.last_event_time });
        }
        let dt = t - self.last_event_time;
        let j = etype.index();
        for i in 0..N_TYPES {
            for k in 0..N_TYPES {
                let a = &mut self.acc[i * N_TYPES + k];
                if *a != 0.0 {
                    *a *= (-params.kappa[i][k] * dt).exp();
                }
            }
            self.acc[i * N_TYPES + j] += params.alpha[i][j];
        }
        self.last_event_time = t;
        Ok(())
    }
}

/// Per-type intensity at `t >= history.last_event_time()`.
pub fn intensity_at(
    params: &HawkesParams,
    history: &EventHistory,
    t: f64,
) -> Result<[f64; N_TYPES], HawkesError> {
    if t < history.last_event_time {
        return Err(HawkesError::TimeReversal { t, last: history.last_event_time });
    }
    Ok(intensity_unchecked(params, history, t))
}

fn intensity_unchecked(params: &HawkesParams, history: &EventHistory, t: f64) -> [f64; N_TYPES] {
    let dt = t - history.last_event_time;
    let mut out = [0.0; N_TYPES];
    for (i, lam) in out.iter_mut().enumerate() {
        let mut s = params.baseline[i] * params.volume_scale;
        let row = &history.acc[i * N_TYPES..(i + 1) * N_TYPES];
        for (j, a) in row.iter().enumerate() {
            if *a != 0.0 {
                s += a * (-params.kappa[i][j] * dt).exp();
            }
        }
        *lam = s;
    }
    out
}

/// Draws a geometric size on `{1, 2, ...}` with the configured mean.
pub fn sample_order_size<R: Rng + ?Sized>(params: &HawkesParams, etype: EventType, rng: &mut R) -> u64 {
    let mean = params.size_mean[etype.index()];
    if mean <= 1.0 {
        return 1;
    }
    let p = 1.0 / mean;
    let geo = Geometric::new(p).expect("validated size mean gives p in (0, 1)");
    1 + geo.sample(rng)
}

/// Draws the next event after `t_now` by thinning without touching `history`.
/// Returns `None` when the total intensity has vanished.
pub fn draw_next_event<R: Rng + ?Sized>(
    params: &HawkesParams,
    history: &EventHistory,
    t_now: f64,
    rng: &mut R,
) -> Result<Option<MarketEvent>, HawkesError> {
    if t_now < history.last_event_time {
        return Err(HawkesError::TimeReversal { t: t_now, last: history.last_event_time });
    }
    let mut s = t_now;
    let mut bound: f64 = intensity_unchecked(params, history, s).iter().sum();
    loop {
        if !(bound > 1e-300) {
            return Ok(None);
        }
        let wait: f64 = Exp::new(bound).expect("positive rate").sample(rng);
        s += wait;
        let lam = intensity_unchecked(params, history, s);
        let total: f64 = lam.iter().sum();
        let u: f64 = rng.random();
        if u * bound <= total {
            let mut pick = rng.random::<f64>() * total;
            let mut idx = N_TYPES - 1;
            for (i, l) in lam.iter().enumerate() {
                if pick < *l {
                    idx = i;
                    break;
                }
                pick -= l;
            }
            // guard against rounding landing on a zero-rate tail type
            while lam[idx] == 0.0 && idx > 0 {
                idx -= 1;
            }
            let etype = EventType::from_index(idx);
            let size = sample_order_size(params, etype, rng);
            return Ok(Some(MarketEvent { time: s, etype, size }));
        }
        bound = total;
    }
}

/// Draws the next event and commits it to `history`.
pub fn simulate_next_event<R: Rng + ?Sized>(
    params: &HawkesParams,
    history: &mut EventHistory,
    t_now: f64,
    rng: &mut R,
) -> Result<Option<MarketEvent>, HawkesError> {
    let ev = draw_next_event(params, history, t_now, rng)?;
    if let Some(e) = &ev {
        history.record(params, e.etype, e.time)?;
    }
    Ok(ev)
}

/// Owns parameters and history for one episode.
#[derive(Debug, Clone)]
pub struct HawkesEngine {
    params: HawkesParams,
    history: EventHistory,
}

impl HawkesEngine {
    pub fn new(params: HawkesParams) -> Result<Self, HawkesError> {
        params.validate()?;
        Ok(Self { params, history: EventHistory::new(0.0) })
    }

    pub fn params(&self) -> &HawkesParams {
        &self.params
    }

    pub fn history(&self) -> &EventHistory {
        &self.history
    }

    pub fn intensity(&self, t: f64) -> Result<[f64; N_TYPES], HawkesError> {
        intensity_at(&self.params, &self.history, t)
    }

    pub fn draw<R: Rng + ?Sized>(&self, t_now: f64, rng: &mut R) -> Result<Option<MarketEvent>, HawkesError> {
        draw_next_event(&self.params, &self.history, t_now, rng)
    }

    pub fn record(&mut self, etype: EventType, t: f64) -> Result<(), HawkesError> {
        self.history.record(&self.params, etype, t)
    }

    pub fn next_event<R: Rng + ?Sized>(&mut self, t_now: f64, rng: &mut R) -> Result<Option<MarketEvent>, HawkesError> {
        simulate_next_event(&self.params, &mut self.history, t_now, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn poisson_params(rate_each: f64) -> HawkesParams {
        HawkesParams::poisson(vec![rate_each; N_TYPES])
    }

    #[test]
    fn index_layout_round_trips() {
        for i in 0..N_TYPES {
            assert_eq!(EventType::from_index(i).index(), i);
        }
        assert_eq!(EventType::new(EventKind::Mo, Side::Bid).index(), 5);
        assert_eq!(EventType::new(EventKind::LoDeep, Side::Ask).index(), 6);
        assert_eq!(EventType::new(EventKind::Mo, Side::Ask).to_string(), "mo_ask");
    }

    #[test]
    fn zero_excitation_intensity_is_baseline() {
        let p = poisson_params(2.0);
        let h = EventHistory::new(0.0);
        for t in [0.0, 0.5, 17.0] {
            let lam = intensity_at(&p, &h, t).unwrap();
            assert!(lam.iter().all(|l| *l == 2.0));
        }
    }

    #[test]
    fn single_event_kernel() {
        let mut p = poisson_params(1.0);
        p.alpha[0][3] = 0.5;
        p.kappa[0][3] = 1.0;
        let mut h = EventHistory::new(0.0);
        h.record(&p, EventType::from_index(3), 0.0).unwrap();
        let lam = intensity_at(&p, &h, 0.5).unwrap();
        // 1 + 0.5 e^{-0.5}
        assert!((lam[0] - 1.303_265_329_856_316_7).abs() < 1e-12);
        assert_eq!(lam[1], 1.0);
    }

    #[test]
    fn volume_scale_multiplies_baseline() {
        let p = poisson_params(0.1).with_volume_scale(40.0);
        let lam = intensity_at(&p, &EventHistory::new(0.0), 3.0).unwrap();
        assert!(lam.iter().all(|l| (l - 4.0).abs() < 1e-12));
    }

    #[test]
    fn query_before_last_event_is_rejected() {
        let p = poisson_params(1.0);
        let mut h = EventHistory::new(0.0);
        h.record(&p, EventType::from_index(0), 2.0).unwrap();
        assert!(matches!(intensity_at(&p, &h, 1.0), Err(HawkesError::TimeReversal { .. })));
    }

    #[test]
    fn self_excitation_jump_is_alpha() {
        let mut p = poisson_params(0.3);
        for i in 0..N_TYPES {
            p.alpha[i][5] = 0.02 * (i as f64 + 1.0);
            p.kappa[i][5] = 2.0;
        }
        let mut h = EventHistory::new(0.0);
        let t = 1.25;
        let before = intensity_at(&p, &h, t).unwrap();
        h.record(&p, EventType::from_index(5), t).unwrap();
        let after = intensity_at(&p, &h, t).unwrap();
        for i in 0..N_TYPES {
            assert!((after[i] - before[i] - p.alpha[i][5]).abs() < 1e-9);
        }
    }

    #[test]
    fn fixed_seed_reproduces_stream() {
        let p = HawkesParams::default();
        let run = |seed| {
            let mut e = HawkesEngine::new(p.clone()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t = 0.0;
            let mut out = Vec::new();
            while let Some(ev) = e.next_event(t, &mut rng).unwrap() {
                if ev.time > 50.0 {
                    break;
                }
                t = ev.time;
                out.push(ev);
            }
            out
        };
        let a = run(9);
        assert_eq!(a, run(9));
        assert_ne!(a, run(10));
        assert!(a.windows(2).all(|w| w[0].time < w[1].time));
        assert!(a.iter().all(|e| e.size >= 1));
    }

    #[test]
    fn size_sampling() {
        let mut p = poisson_params(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let et = EventType::from_index(0);
        assert!((0..1000).all(|_| sample_order_size(&p, et, &mut rng) == 1));
        p.size_mean[0] = 2.0;
        let n = 100_000;
        let sum: u64 = (0..n).map(|_| sample_order_size(&p, et, &mut rng)).sum();
        let mean = sum as f64 / n as f64;
        assert!((mean - 2.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn invalid_size_mean_rejected() {
        for bad in [0.0, -1.0, 0.5] {
            let mut p = poisson_params(1.0);
            p.size_mean[4] = bad;
            assert!(matches!(p.validate(), Err(HawkesError::Invalid(_))));
        }
    }

    #[test]
    fn stationarity_radius() {
        let p = poisson_params(1.0);
        assert_eq!(stationarity_check(&p).unwrap(), (true, 0.0));

        let mut half = poisson_params(1.0);
        let mut over = poisson_params(1.0);
        for i in 0..N_TYPES {
            half.alpha[i][i] = 1.0;
            half.kappa[i][i] = 2.0;
            over.alpha[i][i] = 3.0;
            over.kappa[i][i] = 2.0;
        }
        let (ok, r) = stationarity_check(&half).unwrap();
        assert!(ok && (r - 0.5).abs() < 1e-9);
        let (ok, r) = stationarity_check(&over).unwrap();
        assert!(!ok && (r - 1.5).abs() < 1e-9);
        assert!(over.validate().is_err());
    }

    #[test]
    fn malformed_matrices_rejected() {
        let mut p = poisson_params(1.0);
        p.alpha.pop();
        assert!(stationarity_check(&p).is_err());
        let mut p = poisson_params(1.0);
        p.alpha[2][2] = -0.1;
        assert!(stationarity_check(&p).is_err());
    }

    #[test]
    fn default_params_are_stationary() {
        let p = HawkesParams::default();
        let (ok, r) = stationarity_check(&p).unwrap();
        assert!(ok, "radius {r}");
        assert!(p.stationary_rates().unwrap().iter().all(|r| *r > 0.0));
    }
}
