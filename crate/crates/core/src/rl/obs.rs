//! Observation features, the TWAP-presence signal, action masking and the
//! per-step reward.

use serde::{Deserialize, Serialize};

use super::policy::{ActionMask, RlAction};
use crate::agent::MarketView;
use crate::hawkes::Side;
use crate::lob::{Direction, QuoteState};

/// Net input width: 13 book/inventory/time features plus rho.
pub const OBS_DIM: usize = 14;

/// Fixed scales dividing raw features; stored with checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObsNorm {
    /// Inventory scale (units).
    pub inventory: f64,
    /// Price offset scale (ticks).
    pub price_ticks: f64,
    pub spread_ticks: f64,
    /// Top-of-book depth scale (units).
    pub depth: f64,
    /// Own resting size scale (units).
    pub own: f64,
    /// Price offsets are clamped to ± this many scale units.
    pub clamp: f64,
}

impl Default for ObsNorm {
    fn default() -> Self {
        Self { inventory: 20.0, price_ticks: 10.0, spread_ticks: 5.0, depth: 10.0, own: 5.0, clamp: 5.0 }
    }
}

/// When a TWAP is running and which way. `side = None` means no TWAP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoSchedule {
    pub side: Option<Direction>,
    pub start: f64,
    pub end: f64,
}

impl RhoSchedule {
    pub const NONE: RhoSchedule = RhoSchedule { side: None, start: 0.0, end: 0.0 };

    /// +1 while a buy TWAP executes, −1 for sell, 0 otherwise.
    pub fn rho_at(&self, t: f64) -> i8 {
        match self.side {
            Some(d) if t >= self.start && t < self.end => d.sign() as i8,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
    pub rho: i8,
    /// Book was one-sided; quote features come from the last two-sided snapshot.
    pub stale: bool,
}

impl Observation {
    /// Network input: features followed by rho.
    pub fn input(&self) -> Vec<f64> {
        let mut v = self.features.clone();
        v.push(f64::from(self.rho));
        v
    }
}

/// Per-agent state needed to build observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsContext {
    pub norm: ObsNorm,
    /// Mid (ticks) when the agent started; price features are offsets from it.
    pub reference_mid: f64,
    pub start: f64,
    pub stop: f64,
    pub last_two_sided: Option<QuoteState>,
}

impl ObsContext {
    pub fn new(norm: ObsNorm, reference_mid: f64, start: f64, stop: f64) -> Self {
        Self { norm, reference_mid, start, stop, last_two_sided: None }
    }
}

/// Builds the observation. `rho_aware = false` pins rho to 0.
pub fn build_observation(view: &MarketView, ctx: &mut ObsContext, rho: &RhoSchedule, rho_aware: bool) -> Observation {
    let n = ctx.norm;
    let stale = !view.quote.is_two_sided();
    if !stale {
        ctx.last_two_sided = Some(view.quote);
    }
    let q = if stale { ctx.last_two_sided.unwrap_or(view.quote) } else { view.quote };
    let bb = q.best_bid.map(|p| p as f64).unwrap_or(ctx.reference_mid - 1.0);
    let ba = q.best_ask.map(|p| p as f64).unwrap_or(ctx.reference_mid + 1.0);
    let off = |p: f64| ((p - ctx.reference_mid) / n.price_ticks).clamp(-n.clamp, n.clamp);
    let (tb, ta) = (q.top_bid_size as f64, q.top_ask_size as f64);
    let imbalance = if tb + ta > 0.0 { (tb - ta) / (tb + ta) } else { 0.0 };
    let own_top = |side: Side, best: Option<i64>| view.resting_at(side, best) as f64;
    let own_bid_top = own_top(Side::Bid, view.quote.best_bid);
    let own_ask_top = own_top(Side::Ask, view.quote.best_ask);
    let span = (ctx.stop - ctx.start).max(1e-9);
    let features = vec![
        view.inventory as f64 / n.inventory,
        off(bb),
        off(ba),
        (ba - bb) / n.spread_ticks,
        tb / n.depth,
        ta / n.depth,
        imbalance,
        own_bid_top / n.own,
        own_ask_top / n.own,
        (view.resting(Side::Bid) as f64 - own_bid_top) / n.own,
        (view.resting(Side::Ask) as f64 - own_ask_top) / n.own,
        ((view.time - ctx.start) / span).clamp(0.0, 1.0),
        f64::from(u8::from(stale)),
    ];
    let rho = if rho_aware { rho.rho_at(view.time) } else { 0 };
    Observation { features, rho, stale }
}

/// Feasible actions: placements may not push inventory plus same-side resting
/// size past the cap; cancels need an own order at that side's best price.
pub fn action_mask(view: &MarketView, inventory_cap: i64, order_size: u64) -> ActionMask {
    let size = order_size as i64;
    let long_exposure = view.inventory + view.resting(Side::Bid) as i64;
    let short_exposure = -view.inventory + view.resting(Side::Ask) as i64;
    let mut m = [true; 5];
    m[RlAction::PlaceBid.index()] = long_exposure + size <= inventory_cap && view.quote.best_bid.is_some();
    m[RlAction::PlaceAsk.index()] = short_exposure + size <= inventory_cap && view.quote.best_ask.is_some();
    m[RlAction::CancelBid.index()] = view.resting_at(Side::Bid, view.quote.best_bid) > 0;
    m[RlAction::CancelAsk.index()] = view.resting_at(Side::Ask, view.quote.best_ask) > 0;
    m
}

/// Liquidation fee rate: 1 bps of notional.
pub const LIQUIDATION_FEE: f64 = 1e-4;

/// `ΔMtM − fee × liquidated notional − c_int × intervened`.
pub fn step_reward(prev_mtm: f64, new_mtm: f64, liquidated_notional: f64, intervened: bool, c_int: f64) -> f64 {
    (new_mtm - prev_mtm) - LIQUIDATION_FEE * liquidated_notional.abs() - if intervened { c_int } else { 0.0 }
}
