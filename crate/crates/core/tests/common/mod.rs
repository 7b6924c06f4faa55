//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use lobsim_core::rl::net::Adam;
use lobsim_core::rl::policy::{sample_action, ActionMask, Architecture, PolicyParams};
use lobsim_core::rl::ppo::{ppo_loss_and_grad, PpoConfig, Sample};
use lobsim_core::rl::sil::{sil_loss_and_grad, sil_objective, SilBuffer, SilEntry};
use lobsim_core::rl::ObsNorm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small randomised network: 8 inputs, two hidden layers.
pub fn random_policy(seed: u64) -> PolicyParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = PolicyParams::init(Architecture::new(8, vec![7, 6]), ObsNorm::default(), false, &mut rng);
    // make the output heads non-trivial so every path carries signal
    for v in p.params.iter_mut() {
        *v += rng.random_range(-0.3..0.3);
    }
    p
}

fn random_mask(rng: &mut ChaCha8Rng) -> ActionMask {
    let mut m = [true; 5];
    for v in m.iter_mut().take(4) {
        *v = rng.random_bool(0.7);
    }
    m
}

fn random_input(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..8).map(|_| rng.random_range(-1.5..1.5)).collect()
}

/// Worst elementwise relative error between an analytic gradient and central
/// finite differences of `loss`.
pub fn max_rel_err(loss: impl Fn(&[f64]) -> f64, params: &[f64], analytic: &[f64]) -> f64 {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut p = params.to_vec();
    for i in 0..params.len() {
        p[i] = params[i] + h;
        let up = loss(&p);
        p[i] = params[i] - h;
        let down = loss(&p);
        p[i] = params[i];
        let fd = (up - down) / (2.0 * h);
        let scale = fd.abs().max(analytic[i].abs()).max(1e-6);
        worst = worst.max((fd - analytic[i]).abs() / scale);
    }
    worst
}

/// PPO samples whose ratios avoid the clip kinks.
pub fn ppo_batch(policy: &PolicyParams, seed: u64, n: usize) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratios = [1.0, 0.9, 1.1, 1.5, 0.6];
    (0..n)
        .map(|i| {
            let input = random_input(&mut rng);
            let mask = random_mask(&mut rng);
            let e = policy.evaluate(&input, &mask).unwrap();
            let (d, a) = sample_action(&e, &mut rng);
            let r: f64 = ratios[i % ratios.len()];
            Sample {
                old_log_prob: e.log_prob(d, a) - r.ln(),
                input,
                mask,
                intervene: d,
                action: a,
                advantage: rng.random_range(-2.0..2.0),
                ret: rng.random_range(-1.0..1.0),
            }
        })
        .collect()
}

pub fn ppo_gradient_error(seed: u64) -> f64 {
    let policy = random_policy(seed);
    let cfg = PpoConfig { entropy_coef: 0.05, ..Default::default() };
    let batch = ppo_batch(&policy, seed + 100, 40);
    let (_, grad) = ppo_loss_and_grad(&policy, &policy.params, &batch, &cfg);
    max_rel_err(|p| ppo_loss_and_grad(&policy, p, &batch, &cfg).0.total, &policy.params, &grad)
}

pub fn sil_entries(policy: &PolicyParams, seed: u64, n: usize) -> Vec<SilEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let input = random_input(&mut rng);
            let mask = random_mask(&mut rng);
            let e = policy.evaluate(&input, &mask).unwrap();
            let (d, a) = sample_action(&e, &mut rng);
            // half of the entries sit below the current value and must not contribute
            let gap = if rng.random_bool(0.5) { rng.random_range(0.2..2.0) } else { -rng.random_range(0.2..2.0) };
            SilEntry { input, mask, intervene: d, action: a, ret: e.value + gap, value_at_insert: e.value - 1.0 }
        })
        .collect()
}

pub fn sil_gradient_error(seed: u64) -> f64 {
    let policy = random_policy(seed);
    let cfg = PpoConfig { sil_value_coef: 0.5, ..Default::default() };
    let entries = sil_entries(&policy, seed + 7, 40);
    let batch: Vec<&SilEntry> = entries.iter().collect();
    let (_, grad, advs) = sil_loss_and_grad(&policy, &policy.params, &batch, &cfg);
    max_rel_err(|p| sil_objective(&policy, p, &batch, &advs, &cfg), &policy.params, &grad)
}

/// Randomised inserts; returns `(accepted, violations, max_len)`.
pub fn sil_admission_trial(n: usize, capacity: usize, seed: u64) -> (usize, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = SilBuffer::new(capacity);
    let mut accepted = 0;
    let mut max_len = 0;
    for _ in 0..n {
        let v = rng.random_range(-5.0..5.0);
        let r = v + rng.random_range(-3.0..3.0);
        let e = SilEntry { input: vec![v], mask: [true; 5], intervene: false, action: 4, ret: r, value_at_insert: v };
        if buf.insert(e) {
            accepted += 1;
        }
        max_len = max_len.max(buf.len());
    }
    let violations = buf.entries().filter(|e| !(e.ret > e.value_at_insert)).count();
    (accepted, violations, max_len)
}

pub fn fresh_adam(p: &PolicyParams) -> Adam {
    Adam::new(p.len(), 1e-3)
}

use lobsim_core::eventlog::{FillRecord, LogRecord, RecordKind, RecordSlot};
use lobsim_core::hawkes::Side;
use lobsim_core::lob::{CancelLevel, LimitSlot, Lob, Owner};

/// Outcome of [`lob_random_ops`].
pub struct LobRun {
    pub lob: Lob,
    pub log: Vec<LogRecord>,
    pub violations: Vec<String>,
    pub fills: usize,
}

fn record(seq: &mut u64, time: f64, actor: Owner, kind: RecordKind, side: Side) -> LogRecord {
    *seq += 1;
    LogRecord { seq: *seq, time, actor, kind, side, slot: None, price_ticks: None, size: 0, order_id: None, fills: Vec::new() }
}

/// Drives a book through `n` random limit, cancel and market operations from
/// three owners, logging each one the way episodes do. Volume conservation,
/// price-then-FIFO fill order and an uncrossed book are checked against an
/// independent ledger after every operation; the book's own structural
/// check runs every 1000 operations.
pub fn lob_random_ops(n: usize, seed: u64) -> LobRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lob = Lob::new(0.01, 1000);
    let mut log = Vec::new();
    let mut violations = Vec::new();
    let mut seq = 0;
    let mut volume: u64 = 0;
    let mut fills = 0;
    let mut ids = Vec::new();
    let owners = [Owner::Exogenous, Owner::Agent(1), Owner::Agent(2)];
    for i in 0..n {
        let t = i as f64 * 1e-3;
        for (side, placed) in lob.ensure_two_sided(2, t) {
            volume += 2;
            let mut r = record(&mut seq, t, Owner::Exogenous, RecordKind::Seed, side);
            r.price_ticks = Some(placed.price);
            r.size = 2;
            r.order_id = Some(placed.id);
            log.push(r);
        }
        let owner = owners[rng.random_range(0..3)];
        let side = if rng.random_bool(0.5) { Side::Bid } else { Side::Ask };
        match rng.random_range(0..100) {
            0..40 => {
                let slot = [LimitSlot::Deep, LimitSlot::Top, LimitSlot::Inspread][rng.random_range(0..3)];
                let size = rng.random_range(1..=4);
                if let Ok(p) = lob.submit_limit(owner, side, slot, size, t) {
                    volume += size;
                    ids.push(p.id);
                    let mut r = record(&mut seq, t, owner, RecordKind::Lo, side);
                    r.slot = Some(slot.into());
                    r.price_ticks = Some(p.price);
                    r.size = size;
                    r.order_id = Some(p.id);
                    log.push(r);
                }
            }
            40..60 => {
                let level = if rng.random_bool(0.5) { CancelLevel::Top } else { CancelLevel::Deep };
                if let Some(c) = lob.cancel_order(owner, side, level) {
                    volume -= c.size;
                    let mut r = record(&mut seq, t, owner, RecordKind::Co, side);
                    r.slot = Some(level.into());
                    r.price_ticks = Some(c.price);
                    r.size = c.size;
                    log.push(r);
                }
            }
            60..70 if !ids.is_empty() => {
                let lo = ids.len().saturating_sub(1000);
                let id = ids[rng.random_range(lo..ids.len())];
                if let Some(c) = lob.cancel_by_id(owner, id) {
                    volume -= c.size;
                    let mut r = record(&mut seq, t, owner, RecordKind::Co, side);
                    r.slot = Some(RecordSlot::Id);
                    r.price_ticks = Some(c.price);
                    r.size = c.size;
                    r.order_id = Some(id);
                    log.push(r);
                }
            }
            _ => {
                let size = rng.random_range(1..=6);
                let hit = side.opposite();
                let before: Vec<(i64, u64)> = lob.orders().filter(|o| o.side == hit).map(|o| (o.price, o.id)).collect();
                let Ok(fs) = lob.submit_market(owner, side, size, t) else { continue };
                let filled: u64 = fs.iter().map(|f| f.size).sum();
                volume -= filled;
                fills += fs.len();
                // expected maker sequence: best price first, arrival order within a level
                let mut expect = before;
                expect.sort_by_key(|&(p, id)| (if hit == Side::Bid { -p } else { p }, id));
                let got: Vec<(i64, u64)> = fs.iter().map(|f| (f.price, f.maker_order)).collect();
                if got.len() > expect.len() || got[..] != expect[..got.len()] {
                    violations.push(format!("op {i}: fills out of price-time order"));
                }
                if filled > size {
                    violations.push(format!("op {i}: filled {filled} of {size}"));
                }
                let mut r = record(&mut seq, t, owner, RecordKind::Mo, hit);
                r.size = size;
                r.fills = fs.iter().map(FillRecord::from).collect();
                log.push(r);
            }
        }
        if let (Some(b), Some(a)) = (lob.best_bid(), lob.best_ask()) {
            if b >= a {
                violations.push(format!("op {i}: crossed {b} >= {a}"));
            }
        }
        if lob.resting_volume() != volume {
            violations.push(format!("op {i}: resting {} != ledger {volume}", lob.resting_volume()));
        }
        if i % 1000 == 0 {
            let counted: u64 = lob.orders().map(|o| o.size).sum();
            if counted != volume {
                violations.push(format!("op {i}: counted {counted} != ledger {volume}"));
            }
            if let Err(e) = lob.check_invariants() {
                violations.push(format!("op {i}: {e}"));
            }
        }
        if violations.len() > 20 {
            break;
        }
    }
    LobRun { lob, log, violations, fills }
}

use lobsim_core::hawkes::{HawkesEngine, HawkesParams};

/// Number of Hawkes event types.
pub const TYPES: usize = 12;

/// Event counts on `[0, horizon]` of a zero-excitation process with total
/// baseline `mu_total`, one count per seeded run.
pub fn poisson_counts(runs: u64, horizon: f64, mu_total: f64) -> Vec<f64> {
    let params = HawkesParams::poisson(vec![mu_total / TYPES as f64; TYPES]);
    (0..runs)
        .map(|seed| {
            let mut eng = HawkesEngine::new(params.clone()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut t = 0.0;
            let mut n = 0;
            while let Some(ev) = eng.next_event(t, &mut rng).unwrap() {
                if ev.time > horizon {
                    break;
                }
                t = ev.time;
                n += 1;
            }
            n as f64
        })
        .collect()
}

/// `n` consecutive inter-arrival times of the same zero-excitation process.
pub fn poisson_interarrivals(n: usize, mu_total: f64, seed: u64) -> Vec<f64> {
    let params = HawkesParams::poisson(vec![mu_total / TYPES as f64; TYPES]);
    let mut eng = HawkesEngine::new(params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let ev = eng.next_event(t, &mut rng).unwrap().unwrap();
        out.push(ev.time - t);
        t = ev.time;
    }
    out
}

/// Diagonal self-excitation with branching ratio `branching` on every type.
pub fn self_exciting(mu: f64, branching: f64, kappa: f64) -> HawkesParams {
    let mut p = HawkesParams::poisson(vec![mu; TYPES]);
    for i in 0..TYPES {
        p.alpha[i][i] = branching * kappa;
        p.kappa[i][i] = kappa;
    }
    p
}

/// Mean event count of one type on `[0, T]` from an empty history:
/// the mean intensity solves `m' = -kappa (1 - n) m + kappa (1 - n) mu / (1 - n)`
/// with `m(0) = mu`, so `m(t) = mu / (1 - n) * (1 - n e^{-kappa (1 - n) t})`.
pub fn self_exciting_mean_count(mu: f64, n: f64, kappa: f64, t: f64) -> f64 {
    let r = kappa * (1.0 - n);
    mu / (1.0 - n) * (t - n * (1.0 - (-r * t).exp()) / r)
}

/// Long-horizon variance of a linear Hawkes count: `mu T / (1 - n)^3`.
pub fn self_exciting_count_var(mu: f64, n: f64, t: f64) -> f64 {
    mu * t / (1.0 - n).powi(3)
}

/// Total counts on `[0, horizon]` over `runs` seeds.
pub fn hawkes_counts(params: &HawkesParams, runs: u64, horizon: f64) -> Vec<f64> {
    (0..runs)
        .map(|seed| {
            let mut eng = HawkesEngine::new(params.clone()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
            let mut t = 0.0;
            let mut n = 0;
            while let Some(ev) = eng.next_event(t, &mut rng).unwrap() {
                if ev.time > horizon {
                    break;
                }
                t = ev.time;
                n += 1;
            }
            n as f64
        })
        .collect()
}

use lobsim_core::metrics::DecayPath;

/// `∫_a^b f`, 5-point Gauss-Legendre on panels halving towards `a`, so an
/// integrable singularity at `a` is resolved.
pub fn graded_integral(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
    const W: [f64; 5] = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1];
    let len = b - a;
    let mut total = 0.0;
    for k in 0..120 {
        let hi = a + len / 2f64.powi(k);
        let lo = a + len / 2f64.powi(k + 1);
        let (c, h) = ((hi + lo) / 2.0, (hi - lo) / 2.0);
        total += h * X.iter().zip(&W).map(|(x, w)| w * f(c + h * x)).sum::<f64>();
    }
    total
}

/// Mid-price impact of a unit-rate execution over `[0, 1]` under a
/// power-law propagator `G(t) = t^-beta`, at time `z` after the start.
pub fn propagator_impact(z: f64, beta: f64) -> f64 {
    // I(z) = ∫_0^min(z,1) G(z - s) ds, written in the lag x = z - s
    graded_integral(|x| x.powf(-beta), (z - 1.0).max(0.0), z)
}

/// Noiseless post-execution path for a planted `beta`.
pub fn planted_decay_path(beta: f64, peak: f64) -> DecayPath {
    let i1 = propagator_impact(1.0, beta);
    let points = (1..=300).map(|k| 1.0 + k as f64 / 100.0).map(|z| (z, peak * propagator_impact(z, beta) / i1)).collect();
    DecayPath { peak, points }
}
