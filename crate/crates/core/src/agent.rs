//! Agent interface: actions, wake scheduling, per-agent accounts, and the
//! venue that applies actions to the book and logs them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{EventLog, FillRecord, LogRecord, RecordKind, RecordSlot};
use crate::hawkes::{EventKind, EventType, MarketEvent, Side};
use crate::lob::{AgentId, CancelLevel, EventOutcome, Fill, LimitSlot, Lob, LobError, OrderId, Owner, Price, QuoteState};

/// One agent decision. `Market.side` is the taker's order side (`Bid` buys).
/// `CancelOrder` addresses a specific own order; executors use it to pull
/// orders that drifted away from the two visible levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentAction {
    Limit { side: Side, slot: LimitSlot, size: u64 },
    Market { side: Side, size: u64 },
    Cancel { side: Side, level: CancelLevel },
    CancelOrder { id: OrderId },
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WakeReason {
    Timer,
    MarketOrderObserved,
    SpreadChanged,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent {agent} failed: {msg}")]
    Internal { agent: AgentId, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OwnOrder {
    pub id: OrderId,
    pub side: Side,
    pub price: Price,
    pub size: u64,
}

/// Anonymous description of the most recent book mutation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventSummary {
    pub time: f64,
    pub kind: RecordKind,
    pub side: Side,
    pub size: u64,
}

/// What an agent may see when woken.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketView {
    pub time: f64,
    pub tick_size: f64,
    pub quote: QuoteState,
    pub own_orders: Vec<OwnOrder>,
    pub inventory: i64,
    pub cash: f64,
    pub last_event: Option<EventSummary>,
}

impl MarketView {
    pub fn mid_price(&self) -> Option<f64> {
        self.quote.mid().map(|m| m * self.tick_size)
    }

    pub fn resting(&self, side: Side) -> u64 {
        self.own_orders.iter().filter(|o| o.side == side).map(|o| o.size).sum()
    }

    pub fn resting_at(&self, side: Side, price: Option<Price>) -> u64 {
        match price {
            Some(p) => self.own_orders.iter().filter(|o| o.side == side && o.price == p).map(|o| o.size).sum(),
            None => 0,
        }
    }
}

/// A fill as seen by one participant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentFill {
    pub order_id: Option<OrderId>,
    pub as_maker: bool,
    /// Order side of this participant (`Bid` bought).
    pub side: Side,
    pub price: Price,
    pub size: u64,
    pub time: f64,
}

pub trait Agent: Send {
    fn id(&self) -> AgentId;
    /// Timer period in seconds.
    fn period(&self) -> f64;
    /// Activation time; timer wakes fall at `start + k * period`, `k >= 1`.
    fn start_time(&self) -> f64;
    /// Last time the agent may act.
    fn stop_time(&self) -> f64;
    /// Whether market orders and quote changes wake this agent.
    fn event_driven(&self) -> bool;
    fn on_activate(&mut self, _view: &MarketView) {}
    fn on_wake(&mut self, view: &MarketView, reason: WakeReason) -> Result<Vec<AgentAction>, AgentError>;
    fn on_fill(&mut self, _fill: &AgentFill) {}
    /// Asked right after a wake's actions were applied; `true` wakes the agent
    /// again at the same instant.
    fn wants_rewake(&self, _view: &MarketView) -> bool {
        false
    }
    fn on_stop(&mut self, _view: &MarketView) {}
}

/// Cash and inventory book-keeping for one agent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Account {
    pub inventory: i64,
    pub cash: f64,
    pub orders: BTreeMap<OrderId, OwnOrder>,
    pub traded_volume: u64,
    pub infeasible: u64,
}

impl Account {
    pub fn mark_to_market(&self, mid_price: f64) -> f64 {
        self.cash + self.inventory as f64 * mid_price
    }

    fn apply_fill(&mut self, side: Side, price: Price, size: u64, tick: f64) {
        let notional = price as f64 * tick * size as f64;
        match side {
            Side::Bid => {
                self.inventory += size as i64;
                self.cash -= notional;
            }
            Side::Ask => {
                self.inventory -= size as i64;
                self.cash += notional;
            }
        }
        self.traded_volume += size;
    }
}

/// Result of applying one event or action to the venue.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub etype: EventType,
    pub fills: Vec<Fill>,
    pub quotes_changed: bool,
}

impl Applied {
    pub fn is_market_order(&self) -> bool {
        self.etype.kind == EventKind::Mo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Infeasible {
    NoRoomInSpread,
    NothingToCancel,
    NoLiquidity,
    InvalidSize,
    NotOwner,
}

/// Book plus accounts plus log: everything an action touches.
#[derive(Debug, Clone)]
pub struct Venue {
    pub lob: Lob,
    pub log: EventLog,
    accounts: BTreeMap<AgentId, Account>,
    last_event: Option<EventSummary>,
    pub seed_size: u64,
    pub seeded_orders: u64,
}

impl Venue {
    pub fn new(lob: Lob, log: EventLog, seed_size: u64) -> Self {
        Self { lob, log, accounts: BTreeMap::new(), last_event: None, seed_size, seeded_orders: 0 }
    }

    pub fn register(&mut self, id: AgentId) {
        self.accounts.entry(id).or_default();
    }

    pub fn account(&self, id: AgentId) -> Option<&Account> {
        self.accounts.get(&id)
    }

    pub fn mid_price(&self) -> Option<f64> {
        self.lob.quote_state().mid().map(|m| m * self.lob.tick_size())
    }

    pub fn view(&self, id: AgentId, time: f64) -> MarketView {
        let acct = self.accounts.get(&id).cloned().unwrap_or_default();
        MarketView {
            time,
            tick_size: self.lob.tick_size(),
            quote: self.lob.quote_state(),
            own_orders: acct.orders.values().copied().collect(),
            inventory: acct.inventory,
            cash: acct.cash,
            last_event: self.last_event,
        }
    }

    /// Places an order at an explicit price and logs it as a seed or limit record.
    pub fn place_at(&mut self, owner: Owner, side: Side, price: Price, size: u64, time: f64, kind: RecordKind) -> Result<(), LobError> {
        let placed = self.lob.submit_limit_at(owner, side, price, size, time)?;
        self.log.push(LogRecord {
            seq: 0,
            time,
            actor: owner,
            kind,
            side,
            slot: None,
            price_ticks: Some(placed.price),
            size,
            order_id: Some(placed.id),
            fills: vec![],
        });
        Ok(())
    }

    /// Injects seeding liquidity on empty sides; returns how many orders were added.
    pub fn refill(&mut self, time: f64) -> usize {
        let seeded = self.lob.ensure_two_sided(self.seed_size, time);
        for (side, p) in &seeded {
            self.log.push(LogRecord {
                seq: 0,
                time,
                actor: Owner::Exogenous,
                kind: RecordKind::Seed,
                side: *side,
                slot: None,
                price_ticks: Some(p.price),
                size: self.seed_size.max(1),
                order_id: Some(p.id),
                fills: vec![],
            });
        }
        self.seeded_orders += seeded.len() as u64;
        seeded.len()
    }

    fn settle(&mut self, fills: &[Fill]) -> Vec<(AgentId, AgentFill)> {
        let tick = self.lob.tick_size();
        let mut out = Vec::new();
        for f in fills {
            if let Owner::Agent(id) = f.maker {
                let acct = self.accounts.entry(id).or_default();
                acct.apply_fill(f.maker_side, f.price, f.size, tick);
                if let Some(o) = acct.orders.get_mut(&f.maker_order) {
                    o.size -= f.size;
                    if o.size == 0 {
                        acct.orders.remove(&f.maker_order);
                    }
                }
                out.push((
                    id,
                    AgentFill { order_id: Some(f.maker_order), as_maker: true, side: f.maker_side, price: f.price, size: f.size, time: f.time },
                ));
            }
            if let Owner::Agent(id) = f.taker {
                let side = f.maker_side.opposite();
                self.accounts.entry(id).or_default().apply_fill(side, f.price, f.size, tick);
                out.push((id, AgentFill { order_id: None, as_maker: false, side, price: f.price, size: f.size, time: f.time }));
            }
        }
        out
    }

    fn note(&mut self, time: f64, kind: RecordKind, side: Side, size: u64) {
        self.last_event = Some(EventSummary { time, kind, side, size });
    }

    /// Applies an exogenous event. Returns `None` when the book dropped it.
    pub fn apply_exogenous(&mut self, ev: &MarketEvent) -> Option<(Applied, Vec<(AgentId, AgentFill)>)> {
        let before = self.lob.quote_state();
        let outcome = self.lob.apply_market_event(ev)?;
        let side = ev.etype.side;
        let (rec, fills) = match outcome {
            EventOutcome::Placed(p) => {
                let slot = match ev.etype.kind {
                    EventKind::LoDeep => RecordSlot::Deep,
                    EventKind::LoTop => RecordSlot::Top,
                    _ => RecordSlot::Inspread,
                };
                (rec_limit(ev.time, Owner::Exogenous, side, slot, p.price, ev.size, p.id), vec![])
            }
            EventOutcome::Cancelled(c) => {
                let slot = if ev.etype.kind == EventKind::CoDeep { RecordSlot::Deep } else { RecordSlot::Top };
                (rec_cancel(ev.time, Owner::Exogenous, side, slot, c.price, c.size, c.id), vec![])
            }
            EventOutcome::Traded(fills) => (rec_market(ev.time, Owner::Exogenous, side, ev.size, &fills), fills),
        };
        let kind = rec.kind;
        self.log.push(rec);
        self.note(ev.time, kind, side, ev.size);
        let agent_fills = self.settle(&fills);
        let quotes_changed = !before.same_quotes(&self.lob.quote_state());
        Some((Applied { etype: ev.etype, fills, quotes_changed }, agent_fills))
    }

    /// Validates and applies an agent action. `Ok(None)` means skip.
    pub fn apply_action(
        &mut self,
        id: AgentId,
        action: AgentAction,
        time: f64,
    ) -> Result<Option<(Applied, Vec<(AgentId, AgentFill)>)>, Infeasible> {
        let owner = Owner::Agent(id);
        let before = self.lob.quote_state();
        let (rec, etype, fills) = match action {
            AgentAction::Skip => return Ok(None),
            AgentAction::Limit { side, slot, size } => {
                if size == 0 {
                    return Err(Infeasible::InvalidSize);
                }
                let p = self.lob.submit_limit(owner, side, slot, size, time).map_err(|e| match e {
                    LobError::NoRoomInSpread => Infeasible::NoRoomInSpread,
                    _ => Infeasible::InvalidSize,
                })?;
                self.accounts.entry(id).or_default().orders.insert(p.id, OwnOrder { id: p.id, side, price: p.price, size });
                let kind = match slot {
                    LimitSlot::Deep => EventKind::LoDeep,
                    LimitSlot::Top => EventKind::LoTop,
                    LimitSlot::Inspread => EventKind::LoInspread,
                };
                (rec_limit(time, owner, side, slot.into(), p.price, size, p.id), EventType::new(kind, side), vec![])
            }
            AgentAction::Market { side, size } => {
                if size == 0 {
                    return Err(Infeasible::InvalidSize);
                }
                let fills = self.lob.submit_market(owner, side, size, time).map_err(|_| Infeasible::InvalidSize)?;
                if fills.is_empty() {
                    return Err(Infeasible::NoLiquidity);
                }
                let hit = side.opposite();
                (rec_market(time, owner, hit, size, &fills), EventType::new(EventKind::Mo, hit), fills)
            }
            AgentAction::Cancel { side, level } => {
                let c = self.lob.cancel_order(owner, side, level).ok_or(Infeasible::NothingToCancel)?;
                self.accounts.entry(id).or_default().orders.remove(&c.id);
                let kind = match level {
                    CancelLevel::Deep => EventKind::CoDeep,
                    CancelLevel::Top => EventKind::CoTop,
                };
                (rec_cancel(time, owner, side, level.into(), c.price, c.size, c.id), EventType::new(kind, side), vec![])
            }
            AgentAction::CancelOrder { id: oid } => {
                let side = self.lob.order(oid).map(|o| o.side).ok_or(Infeasible::NothingToCancel)?;
                let c = self.lob.cancel_by_id(owner, oid).ok_or(Infeasible::NotOwner)?;
                self.accounts.entry(id).or_default().orders.remove(&c.id);
                // an id-addressed cancel excites the flow like a cancel at the nearer visible level
                let kind = if self.lob.best(side) == Some(c.price) || self.lob.best(side).is_none() {
                    EventKind::CoTop
                } else {
                    EventKind::CoDeep
                };
                (rec_cancel(time, owner, side, RecordSlot::Id, c.price, c.size, c.id), EventType::new(kind, side), vec![])
            }
        };
        let kind = rec.kind;
        let side = rec.side;
        let size = rec.size;
        self.log.push(rec);
        self.note(time, kind, side, size);
        let agent_fills = self.settle(&fills);
        let quotes_changed = !before.same_quotes(&self.lob.quote_state());
        Ok(Some((Applied { etype, fills, quotes_changed }, agent_fills)))
    }

    /// Pulls every resting order of `id` without exciting the flow.
    pub fn withdraw_all(&mut self, id: AgentId, time: f64) {
        let ids: Vec<OrderId> = self.accounts.get(&id).map(|a| a.orders.keys().copied().collect()).unwrap_or_default();
        for oid in ids {
            let side = match self.lob.order(oid) {
                Some(o) => o.side,
                None => continue,
            };
            if let Some(c) = self.lob.cancel_by_id(Owner::Agent(id), oid) {
                self.log.push(rec_cancel(time, Owner::Agent(id), side, RecordSlot::Id, c.price, c.size, c.id));
            }
        }
        if let Some(a) = self.accounts.get_mut(&id) {
            a.orders.clear();
        }
    }

    pub fn count_infeasible(&mut self, id: AgentId) {
        self.accounts.entry(id).or_default().infeasible += 1;
    }
}

fn rec_limit(time: f64, actor: Owner, side: Side, slot: RecordSlot, price: Price, size: u64, id: OrderId) -> LogRecord {
    LogRecord { seq: 0, time, actor, kind: RecordKind::Lo, side, slot: Some(slot), price_ticks: Some(price), size, order_id: Some(id), fills: vec![] }
}

fn rec_cancel(time: f64, actor: Owner, side: Side, slot: RecordSlot, price: Price, size: u64, id: OrderId) -> LogRecord {
    LogRecord { seq: 0, time, actor, kind: RecordKind::Co, side, slot: Some(slot), price_ticks: Some(price), size, order_id: Some(id), fills: vec![] }
}

fn rec_market(time: f64, actor: Owner, hit: Side, size: u64, fills: &[Fill]) -> LogRecord {
    LogRecord {
        seq: 0,
        time,
        actor,
        kind: RecordKind::Mo,
        side: hit,
        slot: None,
        price_ticks: None,
        size,
        order_id: None,
        fills: fills.iter().map(FillRecord::from).collect(),
    }
}

/// Timer schedule `start + k * period` for `k = 1, 2, ...` up to `stop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimerSchedule {
    pub start: f64,
    pub period: f64,
    pub stop: f64,
    k: u64,
}

impl TimerSchedule {
    pub fn new(start: f64, period: f64, stop: f64) -> Self {
        assert!(period > 0.0, "timer period must be positive");
        Self { start, period, stop, k: 1 }
    }

    pub fn peek(&self) -> Option<f64> {
        let t = self.start + self.k as f64 * self.period;
        // tolerate rounding in start + k * period landing just past stop
        (t <= self.stop + 1e-9).then_some(t)
    }

    pub fn advance(&mut self) {
        self.k += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wake {
    pub time: f64,
    pub reason: WakeReason,
    pub agent: AgentId,
}

/// Per-agent schedule description for [`schedule_wakes`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WakeSpec {
    pub agent: AgentId,
    pub period: f64,
    pub start: f64,
    pub stop: f64,
    pub event_driven: bool,
}

/// Observed market event relevant to wake-ups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WakeTrigger {
    pub time: f64,
    pub market_order: bool,
    pub quotes_changed: bool,
}

/// Interleaves timer wakes with event-driven wakes for a fixed event stream.
/// Ties order by time, then timer before event, then agent id; event wakes
/// sort immediately after their trigger.
pub fn schedule_wakes(agents: &[WakeSpec], triggers: &[WakeTrigger], horizon: f64) -> Vec<Wake> {
    let mut out = Vec::new();
    for a in agents {
        let mut sched = TimerSchedule::new(a.start, a.period, a.stop.min(horizon));
        while let Some(t) = sched.peek() {
            out.push(Wake { time: t, reason: WakeReason::Timer, agent: a.agent });
            sched.advance();
        }
        if a.event_driven {
            for tr in triggers {
                if tr.time < a.start || tr.time > a.stop.min(horizon) {
                    continue;
                }
                let reason = if tr.market_order {
                    WakeReason::MarketOrderObserved
                } else if tr.quotes_changed {
                    WakeReason::SpreadChanged
                } else {
                    continue;
                };
                out.push(Wake { time: tr.time, reason, agent: a.agent });
            }
        }
    }
    out.sort_by(|x, y| {
        x.time
            .total_cmp(&y.time)
            .then((x.reason != WakeReason::Timer).cmp(&(y.reason != WakeReason::Timer)))
            .then(x.agent.cmp(&y.agent))
    });
    out
}
