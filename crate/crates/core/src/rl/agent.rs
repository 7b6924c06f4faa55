//! Market-making agent driven by a [`PolicyParams`] snapshot.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::obs::{action_mask, build_observation, step_reward, ObsContext, RhoSchedule};
use super::policy::{sample_action, PolicyParams, RlAction, N_ACTIONS};
use super::ppo::{Step, Trajectory};
use crate::agent::{Agent, AgentAction, AgentError, MarketView, WakeReason};
use crate::hawkes::Side;
use crate::lob::{AgentId, CancelLevel, LimitSlot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RlMode {
    /// Rho-blind.
    Url,
    /// Sees the TWAP-presence signal.
    Frl,
}

impl RlMode {
    pub fn rho_aware(self) -> bool {
        self == RlMode::Frl
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlAgentConfig {
    pub mode: RlMode,
    /// Timer period in seconds.
    pub period: f64,
    pub order_size: u64,
    pub inventory_cap: i64,
    /// Per-intervention cost in currency.
    pub c_int: f64,
}

impl Default for RlAgentConfig {
    fn default() -> Self {
        Self { mode: RlMode::Url, period: 0.213, order_size: 1, inventory_cap: 20, c_int: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct RlAgent {
    id: AgentId,
    cfg: RlAgentConfig,
    start: f64,
    stop: f64,
    policy: Arc<PolicyParams>,
    rng: ChaCha8Rng,
    rho: RhoSchedule,
    ctx: Option<ObsContext>,
    record: bool,
    steps: Vec<Step>,
    last_mtm: f64,
    last_intervened: bool,
    decided: bool,
    episode_return: f64,
    pub interventions: u64,
    pub action_counts: [u64; N_ACTIONS],
    /// Inventory liquidated at the end, in currency.
    pub liquidated_notional: f64,
    pub stopped: bool,
}

impl RlAgent {
    pub fn new(id: AgentId, cfg: RlAgentConfig, start: f64, stop: f64, policy: Arc<PolicyParams>, rho: RhoSchedule, seed: u64) -> Self {
        Self {
            id,
            cfg,
            start,
            stop,
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            rho,
            ctx: None,
            record: false,
            steps: Vec::new(),
            last_mtm: 0.0,
            last_intervened: false,
            decided: false,
            episode_return: 0.0,
            interventions: 0,
            action_counts: [0; N_ACTIONS],
            liquidated_notional: 0.0,
            stopped: false,
        }
    }

    /// Keep every decision for training.
    pub fn recording(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn config(&self) -> &RlAgentConfig {
        &self.cfg
    }

    pub fn rho_schedule(&self) -> &RhoSchedule {
        &self.rho
    }

    /// Sum of step rewards so far (currency units).
    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }

    pub fn take_trajectory(&mut self) -> Trajectory {
        Trajectory { steps: std::mem::take(&mut self.steps) }
    }

    fn mark(&self, view: &MarketView) -> f64 {
        let mid_ticks = view
            .quote
            .mid()
            .or_else(|| self.ctx.as_ref().and_then(|c| c.last_two_sided).and_then(|q| q.mid()))
            .or_else(|| self.ctx.as_ref().map(|c| c.reference_mid))
            .unwrap_or(0.0);
        view.cash + view.inventory as f64 * mid_ticks * view.tick_size
    }

    fn settle_previous(&mut self, mtm: f64, liquidated: f64, done: bool) {
        if !self.decided {
            return;
        }
        let r = step_reward(self.last_mtm, mtm, liquidated, self.last_intervened, self.cfg.c_int);
        self.episode_return += r;
        if let Some(s) = self.steps.last_mut() {
            s.reward = r;
            s.done = done;
        }
    }

    fn to_action(&self, a: RlAction) -> AgentAction {
        let size = self.cfg.order_size;
        match a {
            RlAction::PlaceBid => AgentAction::Limit { side: Side::Bid, slot: LimitSlot::Top, size },
            RlAction::PlaceAsk => AgentAction::Limit { side: Side::Ask, slot: LimitSlot::Top, size },
            RlAction::CancelBid => AgentAction::Cancel { side: Side::Bid, level: CancelLevel::Top },
            RlAction::CancelAsk => AgentAction::Cancel { side: Side::Ask, level: CancelLevel::Top },
            RlAction::Skip => AgentAction::Skip,
        }
    }
}

impl Agent for RlAgent {
    fn id(&self) -> AgentId {
        self.id
    }

    fn period(&self) -> f64 {
        self.cfg.period
    }

    fn start_time(&self) -> f64 {
        self.start
    }

    fn stop_time(&self) -> f64 {
        self.stop
    }

    fn event_driven(&self) -> bool {
        true
    }

    fn on_activate(&mut self, view: &MarketView) {
        let reference = view.quote.mid().unwrap_or(crate::lob::DEFAULT_INITIAL_MID as f64);
        self.ctx = Some(ObsContext::new(self.policy.norm, reference, self.start, self.stop));
        self.last_mtm = self.mark(view);
    }

    fn on_wake(&mut self, view: &MarketView, _reason: WakeReason) -> Result<Vec<AgentAction>, AgentError> {
        if self.stopped {
            return Ok(vec![]);
        }
        if self.ctx.is_none() {
            self.on_activate(view);
        }
        let mtm = self.mark(view);
        self.settle_previous(mtm, 0.0, false);
        let rho_aware = self.policy.rho_aware;
        let obs = build_observation(view, self.ctx.as_mut().expect("activated"), &self.rho, rho_aware);
        let input = obs.input();
        let mask = action_mask(view, self.cfg.inventory_cap, self.cfg.order_size);
        let eval = self.policy.evaluate(&input, &mask).map_err(|e| AgentError::Internal { agent: self.id, msg: e.to_string() })?;
        let (intervene, a) = sample_action(&eval, &mut self.rng);
        if self.record {
            self.steps.push(Step {
                input,
                mask,
                intervene,
                action: a,
                log_prob: eval.log_prob(intervene, a),
                value: eval.value,
                reward: 0.0,
                done: false,
            });
        }
        self.decided = true;
        self.last_mtm = mtm;
        self.last_intervened = intervene;
        if intervene {
            self.interventions += 1;
            self.action_counts[a] += 1;
        }
        let act = self.to_action(RlAction::from_index(a));
        Ok(if act == AgentAction::Skip { vec![] } else { vec![act] })
    }

    /// Liquidates the remaining inventory at mid (1 bps fee) and closes the trajectory.
    fn on_stop(&mut self, view: &MarketView) {
        if self.stopped {
            return;
        }
        self.stopped = true;
        let mtm = self.mark(view);
        let mid = if view.inventory != 0 { (mtm - view.cash) / view.inventory as f64 } else { 0.0 };
        self.liquidated_notional = (view.inventory as f64 * mid).abs();
        self.settle_previous(mtm, self.liquidated_notional, true);
        if !self.decided {
            self.episode_return -= super::obs::LIQUIDATION_FEE * self.liquidated_notional;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lob::QuoteState;
    use crate::rl::obs::{ObsNorm, OBS_DIM};
    use crate::rl::policy::Architecture;

    fn view(t: f64, inv: i64, cash: f64, bid: i64) -> MarketView {
        MarketView {
            time: t,
            tick_size: 0.01,
            quote: QuoteState { best_bid: Some(bid), best_ask: Some(bid + 2), top_bid_size: 2, top_ask_size: 2, deep_bid_size: 1, deep_ask_size: 1 },
            own_orders: vec![],
            inventory: inv,
            cash,
            last_event: None,
        }
    }

    #[test]
    fn rewards_telescope_to_pnl_minus_costs() {
        let pol = Arc::new(PolicyParams::zeros(Architecture::new(OBS_DIM, vec![4]), ObsNorm::default(), false));
        let cfg = RlAgentConfig { c_int: 0.0, ..Default::default() };
        let mut a = RlAgent::new(1, cfg, 0.0, 10.0, pol, RhoSchedule::NONE, 3).recording();
        a.on_activate(&view(0.0, 0, 0.0, 999));
        a.on_wake(&view(1.0, 0, 0.0, 999), WakeReason::Timer).unwrap();
        a.on_wake(&view(2.0, 5, -50.0, 999), WakeReason::Timer).unwrap();
        // mid up one tick with 5 units held
        a.on_wake(&view(3.0, 5, -50.0, 1000), WakeReason::Timer).unwrap();
        a.on_stop(&view(4.0, 5, -50.0, 1000));
        let tr = a.take_trajectory();
        assert_eq!(tr.steps.len(), 3);
        assert!((tr.steps[1].reward - 0.05).abs() < 1e-9);
        assert!(tr.steps[2].done);
        // final mark: 5 × 10.01 − 50 = 0.05, fee 1 bps of 50.05
        let expected = 0.05 - 1e-4 * 50.05;
        assert!((a.episode_return() - expected).abs() < 1e-9, "{}", a.episode_return());
        assert!((tr.episode_return() - expected).abs() < 1e-9);
    }
}
