//! One seeded episode: exogenous flow, agents, sampling and per-episode stats.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ScenarioConfig, TwapSide};
use super::RunError;
use crate::agent::{Agent, AgentAction, AgentFill, TimerSchedule, Venue, WakeReason};
use crate::eventlog::{EventLog, LogRecord, RecordKind};
use crate::hawkes::{EventKind, HawkesEngine, HawkesParams, MarketEvent, Side};
use crate::lob::{AgentId, Direction, Lob, Owner};
use crate::metrics::{participation_rate, sharpe_ratio, slippage_target_arrival, ANNUALIZATION_SECONDS};
use crate::rl::{PolicyParams, RhoSchedule, RlAgent, RlAgentConfig, Trajectory};
use crate::twap::{TwapAgent, TwapConfig};

pub const TWAP_ID: AgentId = 1;
pub const RL_ID: AgentId = 2;

/// Independent random streams derived from the episode seed.
const STREAM_FLOW: u64 = 0;
const STREAM_SCENARIO: u64 = 1;
const STREAM_POLICY: u64 = 2;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// RL agent wiring for one episode.
#[derive(Debug, Clone)]
pub struct RlSetup {
    pub cfg: RlAgentConfig,
    pub start: f64,
    pub stop: f64,
    pub policy: Arc<PolicyParams>,
    pub record: bool,
}

/// Everything random about an episode other than the order flow, resolved.
#[derive(Debug, Clone)]
pub struct EpisodeSetup {
    pub episode: usize,
    pub seed: u64,
    pub twap: Option<TwapConfig>,
    pub rl: Option<RlSetup>,
    pub rho: RhoSchedule,
}

impl EpisodeSetup {
    /// Draws the TWAP side and start for `seed`. `policy` is required when
    /// the scenario has an RL agent.
    pub fn prepare(cfg: &ScenarioConfig, episode: usize, seed: u64, policy: Option<Arc<PolicyParams>>, record: bool) -> Result<Self, RunError> {
        let mut rng = stream_rng(seed, STREAM_SCENARIO);
        let w = cfg.trading_start();
        let twap = match &cfg.twap {
            None => None,
            Some(spec) => {
                let side = match spec.side {
                    TwapSide::Buy => Some(Direction::Buy),
                    TwapSide::Sell => Some(Direction::Sell),
                    TwapSide::Mixed => spec.mix.sample(&mut rng),
                };
                let start = spec.start.sample(cfg.trading_seconds, &mut rng);
                side.map(|s| spec.to_config(s, w + start))
            }
        };
        let rho = match &twap {
            Some(t) => RhoSchedule { side: Some(t.side), start: t.start_time, end: t.end_time() },
            None => RhoSchedule::NONE,
        };
        let rl = match &cfg.rl {
            None => None,
            Some(spec) => {
                let policy = policy.ok_or_else(|| RunError::Config("scenario has an RL agent but no policy was supplied".into()))?;
                if policy.rho_aware != spec.agent.mode.rho_aware() {
                    return Err(RunError::Config(format!(
                        "policy rho_aware={} does not match rl mode {:?}",
                        policy.rho_aware, spec.agent.mode
                    )));
                }
                let stop = spec.stop.unwrap_or(cfg.trading_seconds).min(cfg.trading_seconds);
                Some(RlSetup { cfg: spec.agent.clone(), start: w + spec.start, stop: w + stop, policy, record })
            }
        };
        Ok(Self { episode, seed, twap, rl, rho })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TwapStats {
    pub side: Option<Direction>,
    pub start: f64,
    pub end: f64,
    pub quantity: u64,
    pub executed: u64,
    pub complete: bool,
    pub arrival_mid: f64,
    pub slippage_bps: f64,
    pub pov_pct: f64,
    /// Realized mean child size: executed quantity per action taken.
    pub mean_child_size: f64,
    /// Mean submitted order size (limit and market), a diagnostic that
    /// counts unfilled and urgent orders.
    pub mean_submitted_size: f64,
    pub market_orders: u64,
    pub limit_orders: u64,
    pub infeasible: u64,
    /// `(seconds since TWAP start, cumulative executed)` at each sample.
    pub q_path: Vec<(f64, u64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RlStats {
    pub start: f64,
    pub stop: f64,
    /// Mark-to-market (cash + inventory × mid) sampled every second.
    pub pnl_path: Vec<f64>,
    pub inventory_path: Vec<i64>,
    pub rho_path: Vec<i8>,
    pub episode_return: f64,
    /// Final mark-to-market minus the liquidation fee.
    pub pnl: f64,
    pub interventions: u64,
    pub infeasible: u64,
    pub traded_volume: u64,
    pub sharpe_before: f64,
    pub sharpe_during: f64,
    pub before_samples: usize,
    pub during_samples: usize,
    /// Sum of PnL increments in each window.
    pub return_before: f64,
    pub return_during: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub scenario: String,
    pub episode: usize,
    pub seed: u64,
    pub exogenous_events: u64,
    pub dropped_events: u64,
    pub seeded_orders: u64,
    /// Exogenous market-order volume during trading.
    pub exo_volume: u64,
    pub exo_volume_rate: f64,
    /// Mid price at each second of trading, `(seconds since trading start, mid)`.
    pub mid_path: Vec<(f64, f64)>,
    pub twap: Option<TwapStats>,
    pub rl: Option<RlStats>,
    pub book_hash: String,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutput {
    pub stats: EpisodeStats,
    pub log: Option<Vec<LogRecord>>,
    pub trajectory: Option<Trajectory>,
}

enum Slot {
    Twap(TwapAgent),
    Rl(RlAgent),
}

struct Runtime {
    slot: Slot,
    timer: TimerSchedule,
    start: f64,
    stop: f64,
    activated: bool,
    done: bool,
}

impl Runtime {
    fn agent(&mut self) -> &mut dyn Agent {
        match &mut self.slot {
            Slot::Twap(a) => a,
            Slot::Rl(a) => a,
        }
    }

    fn agent_ref(&self) -> &dyn Agent {
        match &self.slot {
            Slot::Twap(a) => a,
            Slot::Rl(a) => a,
        }
    }

    fn live(&self) -> bool {
        self.activated && !self.done
    }
}

#[derive(Clone, Copy, Default)]
struct Trigger {
    market_order: bool,
    quotes_changed: bool,
}

impl Trigger {
    fn any(self) -> bool {
        self.market_order || self.quotes_changed
    }

    fn reason(self) -> WakeReason {
        if self.market_order {
            WakeReason::MarketOrderObserved
        } else {
            WakeReason::SpreadChanged
        }
    }

    fn merge(&mut self, other: Trigger) {
        self.market_order |= other.market_order;
        self.quotes_changed |= other.quotes_changed;
    }
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    engine: HawkesEngine,
    flow_rng: ChaCha8Rng,
    venue: Venue,
    pending: Option<MarketEvent>,
    agents: Vec<Runtime>,
    exo_events: u64,
    exo_volume: u64,
}

/// Rewake guard for executors that keep sweeping at the horizon.
const MAX_REWAKES: usize = 100_000;

impl<'a> Sim<'a> {
    fn redraw(&mut self, t: f64) -> Result<(), RunError> {
        self.pending = self.engine.draw(t, &mut self.flow_rng)?;
        Ok(())
    }

    fn dispatch_fills(&mut self, fills: Vec<(AgentId, AgentFill)>) {
        for (id, f) in fills {
            if let Some(rt) = self.agents.iter_mut().find(|r| r.agent_ref().id() == id) {
                rt.agent().on_fill(&f);
            }
        }
    }

    /// Applies an agent's actions; returns the merged trigger.
    fn apply_actions(&mut self, id: AgentId, actions: Vec<AgentAction>, t: f64) -> Result<Trigger, RunError> {
        let mut trig = Trigger::default();
        let mut any = false;
        for act in actions {
            match self.venue.apply_action(id, act, t) {
                Ok(Some((applied, fills))) => {
                    any = true;
                    self.engine.record(applied.etype, t)?;
                    trig.merge(Trigger { market_order: applied.is_market_order(), quotes_changed: applied.quotes_changed });
                    self.dispatch_fills(fills);
                    self.venue.refill(t);
                }
                Ok(None) => {}
                Err(_) => self.venue.count_infeasible(id),
            }
        }
        if any {
            // the drawn candidate assumed the old history; resample from now
            self.redraw(t)?;
        }
        Ok(trig)
    }

    fn wake(&mut self, idx: usize, reason: WakeReason, t: f64, cascade: bool) -> Result<(), RunError> {
        let id = self.agents[idx].agent_ref().id();
        let view = self.venue.view(id, t);
        let actions = self.agents[idx].agent().on_wake(&view, reason)?;
        let trig = self.apply_actions(id, actions, t)?;
        if cascade && trig.any() {
            self.event_wakes(Some(idx), trig, t)?;
        }
        Ok(())
    }

    /// Event-driven wakes, one level deep.
    fn event_wakes(&mut self, exclude: Option<usize>, trig: Trigger, t: f64) -> Result<(), RunError> {
        for j in 0..self.agents.len() {
            if Some(j) == exclude || !self.agents[j].live() || !self.agents[j].agent_ref().event_driven() {
                continue;
            }
            if t < self.agents[j].start || t > self.agents[j].stop {
                continue;
            }
            self.wake(j, trig.reason(), t, false)?;
        }
        Ok(())
    }

    fn exogenous(&mut self, ev: MarketEvent) -> Result<(), RunError> {
        self.exo_events += 1;
        let applied = self.venue.apply_exogenous(&ev);
        self.engine.record(ev.etype, ev.time)?;
        self.venue.refill(ev.time);
        if let Some((ap, fills)) = applied {
            if ap.etype.kind == EventKind::Mo && ev.time >= self.cfg.trading_start() {
                self.exo_volume += ap.fills.iter().map(|f| f.size).sum::<u64>();
            }
            let trig = Trigger { market_order: ap.is_market_order(), quotes_changed: ap.quotes_changed };
            self.dispatch_fills(fills);
            if trig.any() {
                self.event_wakes(None, trig, ev.time)?;
            }
        }
        self.redraw(ev.time)
    }

    fn activate(&mut self, idx: usize, t: f64) {
        let id = self.agents[idx].agent_ref().id();
        self.venue.register(id);
        let view = self.venue.view(id, t);
        self.agents[idx].agent().on_activate(&view);
        self.agents[idx].activated = true;
    }

    fn timer(&mut self, idx: usize, t: f64) -> Result<(), RunError> {
        self.agents[idx].timer.advance();
        self.wake(idx, WakeReason::Timer, t, true)?;
        let id = self.agents[idx].agent_ref().id();
        let mut guard = 0;
        while self.agents[idx].agent_ref().wants_rewake(&self.venue.view(id, t)) {
            guard += 1;
            if guard > MAX_REWAKES {
                return Err(RunError::Agent(format!("agent {id} kept requesting wakes at t={t}")));
            }
            self.wake(idx, WakeReason::Timer, t, true)?;
        }
        if let Slot::Twap(a) = &self.agents[idx].slot {
            if a.state.terminal {
                self.finish(idx, t);
            }
        }
        Ok(())
    }

    fn finish(&mut self, idx: usize, t: f64) {
        if self.agents[idx].done {
            return;
        }
        let id = self.agents[idx].agent_ref().id();
        let view = self.venue.view(id, t);
        self.agents[idx].agent().on_stop(&view);
        self.venue.withdraw_all(id, t);
        self.agents[idx].done = true;
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Sample,
    Activate,
    Timer,
    Stop,
    Exogenous,
    End,
}

/// Runs one episode. Agent faults abort the episode but still return the
/// partial log and stats with `aborted` set.
pub fn run_episode(cfg: &ScenarioConfig, params: &HawkesParams, setup: EpisodeSetup) -> Result<EpisodeOutput, RunError> {
    let mut lob = Lob::new(cfg.tick_size, cfg.initial_mid);
    let mut venue_log = EventLog::new(cfg.event_log);
    for k in 1..=i64::from(cfg.initial_depth) {
        for (side, p) in [(Side::Bid, cfg.initial_mid - k), (Side::Ask, cfg.initial_mid + k)] {
            let placed = lob.submit_limit_at(Owner::Exogenous, side, p, cfg.seed_size, 0.0)?;
            venue_log.push(LogRecord {
                seq: 0,
                time: 0.0,
                actor: Owner::Exogenous,
                kind: RecordKind::Seed,
                side,
                slot: None,
                price_ticks: Some(p),
                size: cfg.seed_size,
                order_id: Some(placed.id),
                fills: vec![],
            });
        }
    }
    let venue = Venue::new(lob, venue_log, cfg.seed_size);
    let mut agents = Vec::new();
    let end = cfg.end_time();
    if let Some(tc) = &setup.twap {
        let a = TwapAgent::new(TWAP_ID, tc.clone()).map_err(|e| RunError::Config(e.to_string()))?;
        let stop = tc.end_time().min(end);
        agents.push(Runtime {
            timer: TimerSchedule::new(tc.start_time, tc.period, stop),
            start: tc.start_time,
            stop,
            slot: Slot::Twap(a),
            activated: false,
            done: false,
        });
    }
    if let Some(rl) = &setup.rl {
        let mut a = RlAgent::new(RL_ID, rl.cfg.clone(), rl.start, rl.stop, rl.policy.clone(), setup.rho, policy_seed(setup.seed));
        if rl.record {
            a = a.recording();
        }
        agents.push(Runtime {
            timer: TimerSchedule::new(rl.start, rl.cfg.period, rl.stop),
            start: rl.start,
            stop: rl.stop,
            slot: Slot::Rl(a),
            activated: false,
            done: false,
        });
    }
    let engine = HawkesEngine::new(params.clone())?;
    let mut sim = Sim { cfg, engine, flow_rng: stream_rng(setup.seed, STREAM_FLOW), venue, pending: None, agents, exo_events: 0, exo_volume: 0 };
    sim.redraw(0.0)?;

    let w = cfg.trading_start();
    let mut next_sample_k: u64 = 0;
    let n_samples = cfg.trading_seconds.floor() as u64;
    let mut mid_path = Vec::new();
    let mut twap_q = Vec::new();
    let mut rl_pnl = Vec::new();
    let mut rl_inv = Vec::new();
    let mut rl_rho = Vec::new();
    let mut aborted = None;

    loop {
        let mut best: (f64, Kind, usize) = (end, Kind::End, 0);
        let mut consider = |t: f64, k: Kind, i: usize| {
            if (t, k) < (best.0, best.1) {
                best = (t, k, i);
            }
        };
        if next_sample_k <= n_samples {
            consider(w + next_sample_k as f64, Kind::Sample, 0);
        }
        for (i, rt) in sim.agents.iter().enumerate() {
            if rt.done {
                continue;
            }
            if !rt.activated {
                consider(rt.start, Kind::Activate, i);
                continue;
            }
            if let Some(t) = rt.timer.peek() {
                consider(t, Kind::Timer, i);
            } else if matches!(rt.slot, Slot::Rl(_)) {
                consider(rt.stop, Kind::Stop, i);
            }
        }
        if let Some(ev) = &sim.pending {
            if ev.time <= end {
                consider(ev.time, Kind::Exogenous, 0);
            }
        }
        let (t, kind, i) = best;
        let step = match kind {
            Kind::Sample => {
                let mid = sim.venue.mid_price().unwrap_or(f64::NAN);
                mid_path.push((t - w, mid));
                for rt in &sim.agents {
                    match &rt.slot {
                        Slot::Twap(a) if rt.activated => twap_q.push((t - rt.start, a.state.q_executed)),
                        Slot::Rl(a) if t >= rt.start - 1e-9 && t <= rt.stop + 1e-9 => {
                            let acct = sim.venue.account(RL_ID).cloned().unwrap_or_default();
                            rl_pnl.push(acct.mark_to_market(mid));
                            rl_inv.push(acct.inventory);
                            rl_rho.push(a.rho_schedule().rho_at(t));
                        }
                        _ => {}
                    }
                }
                next_sample_k += 1;
                Ok(())
            }
            Kind::Activate => {
                sim.activate(i, t);
                Ok(())
            }
            Kind::Timer => sim.timer(i, t),
            Kind::Stop => {
                sim.finish(i, t);
                Ok(())
            }
            Kind::Exogenous => {
                let ev = sim.pending.take().expect("pending event");
                sim.exogenous(ev)
            }
            Kind::End => {
                for j in 0..sim.agents.len() {
                    if sim.agents[j].activated {
                        sim.finish(j, end);
                    }
                }
                break;
            }
        };
        if let Err(e) = step {
            match e {
                RunError::Agent(msg) => {
                    aborted = Some(msg);
                    break;
                }
                other => return Err(other),
            }
        }
    }

    // stats
    let trading = cfg.trading_seconds;
    let exo_volume_rate = sim.exo_volume as f64 / trading;
    let mut stats = EpisodeStats {
        scenario: cfg.name.clone(),
        episode: setup.episode,
        seed: setup.seed,
        exogenous_events: sim.exo_events,
        dropped_events: sim.venue.lob.dropped_events(),
        seeded_orders: sim.venue.seeded_orders,
        exo_volume: sim.exo_volume,
        exo_volume_rate,
        mid_path,
        twap: None,
        rl: None,
        book_hash: sim.venue.lob.book_hash(),
        aborted,
    };
    let mut trajectory = None;
    let tick = cfg.tick_size;
    for rt in &mut sim.agents {
        match &mut rt.slot {
            Slot::Twap(a) => {
                let c = &a.cfg;
                let fills: Vec<(f64, u64)> = a.state.fills.iter().map(|(p, s, _)| (*p as f64 * tick, *s)).collect();
                let arrival = a.state.arrival_mid.unwrap_or(f64::NAN);
                let slippage = slippage_target_arrival(&fills, arrival, c.side).unwrap_or(f64::NAN);
                let pov = participation_rate(c.quantity as f64 / c.horizon, exo_volume_rate).unwrap_or(f64::NAN);
                stats.twap = Some(TwapStats {
                    side: Some(c.side),
                    start: c.start_time - w,
                    end: c.end_time() - w,
                    quantity: c.quantity,
                    executed: a.state.q_executed,
                    complete: a.state.q_executed == c.quantity,
                    arrival_mid: arrival,
                    slippage_bps: slippage,
                    pov_pct: pov,
                    mean_child_size: a.state.realized_child_size().unwrap_or(f64::NAN),
                    mean_submitted_size: a.state.mean_submitted_size().unwrap_or(f64::NAN),
                    market_orders: a.state.market_orders,
                    limit_orders: a.state.limit_orders,
                    infeasible: sim.venue.account(TWAP_ID).map(|x| x.infeasible).unwrap_or(0),
                    q_path: std::mem::take(&mut twap_q),
                });
            }
            Slot::Rl(a) => {
                let acct = sim.venue.account(RL_ID).cloned().unwrap_or_default();
                let twap_start = setup.twap.as_ref().map(|t| t.start_time);
                let split = split_sharpe(&rl_pnl, rt.start, twap_start);
                let final_mtm = rl_pnl.last().copied().unwrap_or(0.0);
                stats.rl = Some(RlStats {
                    start: rt.start - w,
                    stop: rt.stop - w,
                    pnl_path: std::mem::take(&mut rl_pnl),
                    inventory_path: std::mem::take(&mut rl_inv),
                    rho_path: std::mem::take(&mut rl_rho),
                    episode_return: a.episode_return(),
                    pnl: final_mtm - crate::rl::obs::LIQUIDATION_FEE * a.liquidated_notional,
                    interventions: a.interventions,
                    infeasible: acct.infeasible,
                    traded_volume: acct.traded_volume,
                    sharpe_before: split.sharpe_before,
                    sharpe_during: split.sharpe_during,
                    before_samples: split.before,
                    during_samples: split.during,
                    return_before: split.return_before,
                    return_during: split.return_during,
                });
                if setup.rl.as_ref().is_some_and(|r| r.record) {
                    trajectory = Some(a.take_trajectory());
                }
            }
        }
    }
    let log = cfg.event_log.then(|| sim.venue.log.records().to_vec());
    Ok(EpisodeOutput { stats, log, trajectory })
}

fn policy_seed(seed: u64) -> u64 {
    let mut r = stream_rng(seed, STREAM_POLICY);
    rand::Rng::random(&mut r)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SharpeSplit {
    pub before: usize,
    pub during: usize,
    pub sharpe_before: f64,
    pub sharpe_during: f64,
    pub return_before: f64,
    pub return_during: f64,
}

/// Splits per-second MtM increments at the TWAP start: an increment over
/// `(t_k, t_k+1]` is "before" iff `t_k+1 <= start`.
pub fn split_sharpe(path: &[f64], path_start: f64, twap_start: Option<f64>) -> SharpeSplit {
    let mut before = Vec::new();
    let mut during = Vec::new();
    for k in 0..path.len().saturating_sub(1) {
        let inc = path[k + 1] - path[k];
        let t_next = path_start + (k + 1) as f64;
        match twap_start {
            Some(s) if t_next > s + 1e-9 => during.push(inc),
            _ => before.push(inc),
        }
    }
    let sr = |v: &[f64]| sharpe_ratio(v, 1.0, ANNUALIZATION_SECONDS).unwrap_or(f64::NAN);
    SharpeSplit {
        before: before.len(),
        during: during.len(),
        sharpe_before: sr(&before),
        sharpe_during: sr(&during),
        return_before: before.iter().sum(),
        return_during: during.iter().sum(),
    }
}
