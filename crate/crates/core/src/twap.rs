//! TWAP meta-order executor.
//!
//! The horizon is split into windows. Each timer wake either pulls orders
//! when execution runs ahead of the linear schedule, sends a market order
//! when the window is late and its limit orders are not filling, or joins the
//! top of book with a limit order sized from the remaining quantity and the
//! remaining number of actions. A final market order at the horizon sweeps
//! whatever is left.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Agent, AgentAction, AgentError, AgentFill, MarketView, WakeReason};
use crate::lob::{AgentId, Direction, LimitSlot, Price};

const EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TwapConfigError {
    #[error("quantity must be at least 1")]
    ZeroQuantity,
    #[error("window must satisfy 0 < window <= horizon")]
    BadWindow,
    #[error("period must satisfy 0 < period <= window")]
    BadPeriod,
    #[error("urgency thresholds must lie in (0, 1)")]
    BadThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwapConfig {
    pub side: Direction,
    /// Total meta-order quantity.
    pub quantity: u64,
    /// Execution horizon in seconds.
    pub horizon: f64,
    pub window: f64,
    pub period: f64,
    pub start_time: f64,
    #[serde(default = "default_time_frac")]
    pub urgency_time_frac: f64,
    #[serde(default = "default_fill_frac")]
    pub urgency_fill_frac: f64,
}

fn default_time_frac() -> f64 {
    0.75
}

fn default_fill_frac() -> f64 {
    0.90
}

impl TwapConfig {
    pub fn new(side: Direction, quantity: u64, horizon: f64, window: f64, period: f64, start_time: f64) -> Self {
        Self {
            side,
            quantity,
            horizon,
            window,
            period,
            start_time,
            urgency_time_frac: default_time_frac(),
            urgency_fill_frac: default_fill_frac(),
        }
    }

    pub fn validate(&self) -> Result<(), TwapConfigError> {
        if self.quantity == 0 {
            return Err(TwapConfigError::ZeroQuantity);
        }
        if !(self.window > 0.0 && self.window <= self.horizon) {
            return Err(TwapConfigError::BadWindow);
        }
        if !(self.period > 0.0 && self.period <= self.window) {
            return Err(TwapConfigError::BadPeriod);
        }
        let inside = |x: f64| x > 0.0 && x < 1.0;
        if !inside(self.urgency_time_frac) || !inside(self.urgency_fill_frac) {
            return Err(TwapConfigError::BadThreshold);
        }
        Ok(())
    }

    /// Number of timer wakes over the horizon.
    pub fn total_actions(&self) -> u64 {
        (self.horizon / self.period).round().max(1.0) as u64
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.horizon
    }

    /// Linear schedule target at `time`.
    pub fn scheduled(&self, time: f64) -> f64 {
        let frac = ((time - self.start_time) / self.horizon).clamp(0.0, 1.0);
        self.quantity as f64 * frac
    }

    /// Index of the window containing `time`; a window owns `(start, end]`.
    pub fn window_index(&self, time: f64) -> u64 {
        let rel = (time - self.start_time - EPS).max(0.0);
        (rel / self.window).floor() as u64
    }

    /// Fraction of the current window elapsed at `time`, in `(0, 1]`.
    pub fn window_elapsed(&self, time: f64) -> f64 {
        let w = self.window_index(time) as f64;
        let len = (self.horizon - w * self.window).min(self.window);
        ((time - self.start_time - w * self.window) / len).clamp(0.0, 1.0)
    }

    /// Cumulative schedule target at the end of the window containing `time`.
    pub fn window_end_target(&self, time: f64) -> f64 {
        let end = ((self.window_index(time) + 1) as f64 * self.window).min(self.horizon);
        self.quantity as f64 * end / self.horizon
    }
}

/// Average child order size per action period, `Q * f / T`.
pub fn expected_child_size(cfg: &TwapConfig) -> f64 {
    cfg.quantity as f64 * cfg.period / cfg.horizon
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TwapState {
    pub q_executed: u64,
    /// Timer wakes taken so far.
    pub wakes: u64,
    pub window: u64,
    pub window_executed: u64,
    pub window_lo_placed: u64,
    pub window_lo_filled: u64,
    pub urgent: bool,
    pub terminal: bool,
    pub arrival_mid: Option<f64>,
    /// Sizes of submitted child orders, limit and market.
    pub child_sizes: Vec<u64>,
    /// Execution record as (price ticks, size, time).
    pub fills: Vec<(Price, u64, f64)>,
    pub market_orders: u64,
    pub limit_orders: u64,
}

impl TwapState {
    pub fn q_rem(&self, cfg: &TwapConfig) -> u64 {
        cfg.quantity - self.q_executed
    }

    /// Remaining actions including the current one.
    pub fn a_rem(&self, cfg: &TwapConfig) -> u64 {
        (cfg.total_actions() + 1).saturating_sub(self.wakes).max(1)
    }

    pub fn window_fill_frac(&self) -> f64 {
        if self.window_lo_placed == 0 {
            0.0
        } else {
            self.window_lo_filled as f64 / self.window_lo_placed as f64
        }
    }

    fn roll_window(&mut self, cfg: &TwapConfig, time: f64) {
        let w = cfg.window_index(time);
        if w != self.window {
            self.window = w;
            self.window_executed = 0;
            self.window_lo_placed = 0;
            self.window_lo_filled = 0;
            self.urgent = false;
        }
    }

    /// Executed quantity per timer wake taken.
    pub fn realized_child_size(&self) -> Option<f64> {
        (self.wakes > 0).then(|| self.q_executed as f64 / self.wakes as f64)
    }

    pub fn mean_submitted_size(&self) -> Option<f64> {
        if self.child_sizes.is_empty() {
            return None;
        }
        Some(self.child_sizes.iter().sum::<u64>() as f64 / self.child_sizes.len() as f64)
    }
}

/// Late in the window with poorly filling limit orders.
pub fn is_urgent(state: &TwapState, cfg: &TwapConfig, time: f64) -> bool {
    cfg.window_elapsed(time) >= cfg.urgency_time_frac && state.window_fill_frac() < cfg.urgency_fill_frac
}

/// Executed quantity exceeds the linear schedule by more than one child order.
pub fn is_over_executed(state: &TwapState, cfg: &TwapConfig, time: f64) -> bool {
    state.q_executed as f64 > cfg.scheduled(time) + expected_child_size(cfg) + EPS
}

/// One flowchart step. Returns the actions to apply in order; an empty list is a skip.
pub fn twap_decide(state: &mut TwapState, cfg: &TwapConfig, view: &MarketView, time: f64) -> Vec<AgentAction> {
    state.roll_window(cfg, time);
    let side = cfg.side.order_side();
    let cancel_all = || -> Vec<AgentAction> {
        view.own_orders.iter().map(|o| AgentAction::CancelOrder { id: o.id }).collect()
    };
    let q_rem = state.q_rem(cfg);

    if time >= cfg.end_time() - EPS {
        state.terminal = true;
        let mut acts = cancel_all();
        if q_rem > 0 {
            acts.push(AgentAction::Market { side, size: q_rem });
            state.child_sizes.push(q_rem);
            state.market_orders += 1;
        }
        return acts;
    }
    if q_rem == 0 || is_over_executed(state, cfg, time) {
        return cancel_all();
    }
    if is_urgent(state, cfg, time) {
        state.urgent = true;
        let target = (cfg.window_end_target(time) - EPS).ceil() as u64;
        let shortfall = target.saturating_sub(state.q_executed).min(q_rem);
        if shortfall > 0 {
            let mut acts = cancel_all();
            acts.push(AgentAction::Market { side, size: shortfall });
            state.child_sizes.push(shortfall);
            state.market_orders += 1;
            return acts;
        }
    }
    let resting: u64 = view.own_orders.iter().map(|o| o.size).sum();
    let a_rem = state.a_rem(cfg);
    let q_lim = q_rem.div_ceil(a_rem).min(q_rem.saturating_sub(resting));
    if q_lim == 0 {
        return Vec::new();
    }
    state.window_lo_placed += q_lim;
    state.child_sizes.push(q_lim);
    state.limit_orders += 1;
    vec![AgentAction::Limit { side, slot: LimitSlot::Top, size: q_lim }]
}

#[derive(Debug, Clone)]
pub struct TwapAgent {
    id: AgentId,
    pub cfg: TwapConfig,
    pub state: TwapState,
}

impl TwapAgent {
    pub fn new(id: AgentId, cfg: TwapConfig) -> Result<Self, TwapConfigError> {
        cfg.validate()?;
        Ok(Self { id, cfg, state: TwapState::default() })
    }
}

impl Agent for TwapAgent {
    fn id(&self) -> AgentId {
        self.id
    }

    fn period(&self) -> f64 {
        self.cfg.period
    }

    fn start_time(&self) -> f64 {
        self.cfg.start_time
    }

    fn stop_time(&self) -> f64 {
        self.cfg.end_time()
    }

    fn event_driven(&self) -> bool {
        false
    }

    fn on_activate(&mut self, view: &MarketView) {
        self.state.arrival_mid = view.mid_price();
    }

    fn on_wake(&mut self, view: &MarketView, reason: WakeReason) -> Result<Vec<AgentAction>, AgentError> {
        if reason == WakeReason::Timer && !self.state.terminal {
            self.state.wakes += 1;
        }
        Ok(twap_decide(&mut self.state, &self.cfg, view, view.time))
    }

    fn on_fill(&mut self, fill: &AgentFill) {
        self.state.roll_window(&self.cfg, fill.time);
        self.state.q_executed += fill.size;
        self.state.window_executed += fill.size;
        if fill.as_maker {
            self.state.window_lo_filled += fill.size;
        }
        self.state.fills.push((fill.price, fill.size, fill.time));
    }

    fn wants_rewake(&self, _view: &MarketView) -> bool {
        self.state.terminal && self.state.q_executed < self.cfg.quantity
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::OwnOrder;
    use crate::hawkes::Side;
    use crate::lob::QuoteState;

    fn view(time: f64, own: Vec<OwnOrder>) -> MarketView {
        MarketView {
            time,
            tick_size: 0.01,
            quote: QuoteState { best_bid: Some(999), best_ask: Some(1001), ..Default::default() },
            own_orders: own,
            inventory: 0,
            cash: 0.0,
            last_event: None,
        }
    }

    fn cfg() -> TwapConfig {
        TwapConfig::new(Direction::Buy, 300, 300.0, 50.0, 1.0, 100.0)
    }

    #[test]
    fn child_size_cases() {
        assert_eq!(expected_child_size(&cfg()), 1.0);
        assert_eq!(expected_child_size(&TwapConfig::new(Direction::Buy, 8, 320.0, 160.0, 40.0, 0.0)), 1.0);
        assert_eq!(expected_child_size(&TwapConfig::new(Direction::Sell, 1200, 1200.0, 50.0, 1.0, 0.0)), 1.0);
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        c.quantity = 0;
        assert_eq!(c.validate(), Err(TwapConfigError::ZeroQuantity));
        let mut c = cfg();
        c.period = 60.0;
        assert_eq!(c.validate(), Err(TwapConfigError::BadPeriod));
        let mut c = cfg();
        c.urgency_fill_frac = 1.0;
        assert_eq!(c.validate(), Err(TwapConfigError::BadThreshold));
    }

    #[test]
    fn urgency_truth_table() {
        let c = cfg();
        let mut s = TwapState { window_lo_placed: 100, ..Default::default() };
        // window 0 spans (100, 150]; 80% elapsed at t = 140
        s.window_lo_filled = 95;
        assert!(!is_urgent(&s, &c, 140.0));
        s.window_lo_filled = 50;
        assert!(is_urgent(&s, &c, 140.0));
        s.window_lo_filled = 0;
        assert!(!is_urgent(&s, &c, 135.0));
    }

    #[test]
    fn on_schedule_places_top_limit() {
        // Q=300 over 300 s: at t=250 (half way, mid-window) 150 executed, 150 actions left
        let c = cfg();
        let mut s = TwapState { q_executed: 150, wakes: 151, window: 2, window_lo_placed: 10, window_lo_filled: 10, ..Default::default() };
        assert_eq!(s.a_rem(&c), 150);
        let acts = twap_decide(&mut s, &c, &view(250.0, vec![]), 250.0);
        assert_eq!(acts, vec![AgentAction::Limit { side: Side::Bid, slot: LimitSlot::Top, size: 1 }]);
    }

    #[test]
    fn urgent_sends_market_for_shortfall() {
        // window 0 at 80%: schedule says 40, target at window end 50, executed 20
        let c = cfg();
        let mut s = TwapState { q_executed: 20, wakes: 40, window_lo_placed: 40, window_lo_filled: 20, window_executed: 20, ..Default::default() };
        let own = vec![OwnOrder { id: 7, side: Side::Bid, price: 999, size: 1 }];
        let acts = twap_decide(&mut s, &c, &view(140.0, own), 140.0);
        assert_eq!(acts, vec![AgentAction::CancelOrder { id: 7 }, AgentAction::Market { side: Side::Bid, size: 30 }]);
        assert!(s.urgent);
    }

    #[test]
    fn ahead_of_schedule_cancels_and_skips() {
        let c = cfg();
        let mut s = TwapState { q_executed: 30, wakes: 10, window_lo_placed: 10, window_lo_filled: 10, ..Default::default() };
        let own = vec![OwnOrder { id: 3, side: Side::Bid, price: 999, size: 1 }, OwnOrder { id: 4, side: Side::Bid, price: 998, size: 1 }];
        let acts = twap_decide(&mut s, &c, &view(110.0, own), 110.0);
        assert_eq!(acts, vec![AgentAction::CancelOrder { id: 3 }, AgentAction::CancelOrder { id: 4 }]);
    }

    #[test]
    fn terminal_sweep_and_window_reset() {
        let c = cfg();
        let mut s = TwapState { q_executed: 290, wakes: 300, window: 5, urgent: true, ..Default::default() };
        let acts = twap_decide(&mut s, &c, &view(400.0, vec![]), 400.0);
        assert_eq!(acts, vec![AgentAction::Market { side: Side::Bid, size: 10 }]);
        assert!(s.terminal);

        let mut s = TwapState { window: 0, urgent: true, window_executed: 9, ..Default::default() };
        s.roll_window(&c, 150.5);
        assert_eq!((s.window, s.urgent, s.window_executed), (1, false, 0));
    }

    #[test]
    fn sell_side_only_trades_asks() {
        let mut c = cfg();
        c.side = Direction::Sell;
        let mut s = TwapState { wakes: 1, ..Default::default() };
        let acts = twap_decide(&mut s, &c, &view(101.0, vec![]), 101.0);
        assert_eq!(acts, vec![AgentAction::Limit { side: Side::Ask, slot: LimitSlot::Top, size: 1 }]);
    }

    #[test]
    fn realized_child_size_counts_executed_per_wake() {
        let s = TwapState { q_executed: 300, wakes: 300, child_sizes: vec![1, 1, 40], ..Default::default() };
        assert_eq!(s.realized_child_size(), Some(1.0));
        assert_eq!(s.mean_submitted_size(), Some(14.0));
        assert_eq!(TwapState::default().realized_child_size(), None);
    }
}
