//! Price-time priority limit order book on an integer tick grid.
//!
//! Only two visible slots exist relative to the best quote: `Top` (at the
//! best) and `Deep` (one tick behind it). Orders that drift further away as
//! the best moves stay in the book and keep their priority.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::warn;

use crate::hawkes::{EventKind, MarketEvent, Side};

pub type Price = i64;
pub type OrderId = u64;
pub type AgentId = u32;

pub const DEFAULT_TICK_SIZE: f64 = 0.01;
pub const DEFAULT_INITIAL_MID: Price = 1000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LobError {
    #[error("order size must be at least 1")]
    ZeroSize,
    #[error("no room in spread")]
    NoRoomInSpread,
    #[error("limit price {price} would cross the opposite best {opposite}")]
    WouldCross { price: Price, opposite: Price },
    #[error("no reference price on the {0:?} side")]
    NoReference(Side),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Owner {
    Exogenous,
    Agent(AgentId),
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Exogenous => f.write_str("exo"),
            Owner::Agent(id) => write!(f, "agent-{id}"),
        }
    }
}

impl FromStr for Owner {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "exo" {
            return Ok(Owner::Exogenous);
        }
        s.strip_prefix("agent-")
            .and_then(|n| n.parse().ok())
            .map(Owner::Agent)
            .ok_or_else(|| format!("unknown owner '{s}'"))
    }
}

impl Serialize for Owner {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Owner {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Trading direction of a participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Buy,
    Sell,
}

impl Direction {
    /// Order side used when submitting: buyers rest on and trade from the bid.
    pub fn order_side(self) -> Side {
        match self {
            Direction::Buy => Side::Bid,
            Direction::Sell => Side::Ask,
        }
    }

    /// +1 for buys, -1 for sells.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Buy => 1.0,
            Direction::Sell => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Buy => "buy",
            Direction::Sell => "sell",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitSlot {
    Deep,
    Top,
    Inspread,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CancelLevel {
    Deep,
    Top,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Order {
    pub id: OrderId,
    pub owner: Owner,
    pub side: Side,
    pub price: Price,
    pub size: u64,
    pub entry_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fill {
    pub taker: Owner,
    pub maker: Owner,
    pub maker_order: OrderId,
    /// Side of the resting (maker) order.
    pub maker_side: Side,
    pub price: Price,
    pub size: u64,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placed {
    pub id: OrderId,
    pub price: Price,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cancelled {
    pub id: OrderId,
    pub price: Price,
    pub size: u64,
}

/// Outcome of routing one exogenous event through the book.
#[derive(Debug, Clone, PartialEq)]
pub enum EventOutcome {
    Placed(Placed),
    Cancelled(Cancelled),
    Traded(Vec<Fill>),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuoteState {
    pub best_bid: Option<Price>,
    pub best_ask: Option<Price>,
    pub top_bid_size: u64,
    pub top_ask_size: u64,
    pub deep_bid_size: u64,
    pub deep_ask_size: u64,
}

impl QuoteState {
    pub fn is_two_sided(&self) -> bool {
        self.best_bid.is_some() && self.best_ask.is_some()
    }

    pub fn is_one_sided(&self) -> bool {
        self.best_bid.is_some() != self.best_ask.is_some()
    }

    /// Midprice in ticks.
    pub fn mid(&self) -> Option<f64> {
        Some((self.best_bid? + self.best_ask?) as f64 / 2.0)
    }

    pub fn spread(&self) -> Option<Price> {
        Some(self.best_ask? - self.best_bid?)
    }

    pub fn same_quotes(&self, other: &QuoteState) -> bool {
        self.best_bid == other.best_bid && self.best_ask == other.best_ask
    }
}

#[derive(Debug, Clone)]
pub struct Lob {
    tick_size: f64,
    bids: BTreeMap<Price, VecDeque<Order>>,
    asks: BTreeMap<Price, VecDeque<Order>>,
    locator: HashMap<OrderId, (Side, Price)>,
    next_id: OrderId,
    last_best_bid: Price,
    last_best_ask: Price,
    resting_volume: u64,
    dropped_events: u64,
}

impl Default for Lob {
    fn default() -> Self {
        Self::new(DEFAULT_TICK_SIZE, DEFAULT_INITIAL_MID)
    }
}

impl Lob {
    /// Empty book whose reference quotes straddle `initial_mid` one tick each side.
    pub fn new(tick_size: f64, initial_mid: Price) -> Self {
        Self {
            tick_size,
            bids: BTreeMap::new(),
            asks: BTreeMap::new(),
            locator: HashMap::new(),
            next_id: 1,
            last_best_bid: initial_mid - 1,
            last_best_ask: initial_mid + 1,
            resting_volume: 0,
            dropped_events: 0,
        }
    }

    pub fn tick_size(&self) -> f64 {
        self.tick_size
    }

    pub fn resting_volume(&self) -> u64 {
        self.resting_volume
    }

    pub fn dropped_events(&self) -> u64 {
        self.dropped_events
    }

    pub fn order_count(&self) -> usize {
        self.locator.len()
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.keys().next().copied()
    }

    pub fn best(&self, side: Side) -> Option<Price> {
        match side {
            Side::Bid => self.best_bid(),
            Side::Ask => self.best_ask(),
        }
    }

    pub fn last_best(&self, side: Side) -> Price {
        match side {
            Side::Bid => self.last_best_bid,
            Side::Ask => self.last_best_ask,
        }
    }

    fn book(&self, side: Side) -> &BTreeMap<Price, VecDeque<Order>> {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    fn book_mut(&mut self, side: Side) -> &mut BTreeMap<Price, VecDeque<Order>> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    /// Price one tick away from `p`, behind the best on `side`.
    fn behind(side: Side, p: Price) -> Price {
        match side {
            Side::Bid => p - 1,
            Side::Ask => p + 1,
        }
    }

    fn improve(side: Side, p: Price) -> Price {
        match side {
            Side::Bid => p + 1,
            Side::Ask => p - 1,
        }
    }

    fn crosses(side: Side, price: Price, opposite: Price) -> bool {
        match side {
            Side::Bid => price >= opposite,
            Side::Ask => price <= opposite,
        }
    }

    fn level_size(&self, side: Side, price: Option<Price>) -> u64 {
        price
            .and_then(|p| self.book(side).get(&p))
            .map(|q| q.iter().map(|o| o.size).sum())
            .unwrap_or(0)
    }

    pub fn quote_state(&self) -> QuoteState {
        let bb = self.best_bid();
        let ba = self.best_ask();
        QuoteState {
            best_bid: bb,
            best_ask: ba,
            top_bid_size: self.level_size(Side::Bid, bb),
            top_ask_size: self.level_size(Side::Ask, ba),
            deep_bid_size: self.level_size(Side::Bid, bb.map(|p| p - 1)),
            deep_ask_size: self.level_size(Side::Ask, ba.map(|p| p + 1)),
        }
    }

    /// Reference best on `side`: the live best, or the last known best kept
    /// strictly inside the opposite quote.
    fn reference_best(&self, side: Side) -> Price {
        if let Some(p) = self.best(side) {
            return p;
        }
        let last = self.last_best(side);
        match (side, self.best(side.opposite())) {
            (Side::Bid, Some(ask)) => last.min(ask - 1),
            (Side::Ask, Some(bid)) => last.max(bid + 1),
            _ => last,
        }
    }

    /// Price a limit order in `slot` on `side` would rest at.
    pub fn slot_price(&self, side: Side, slot: LimitSlot) -> Result<Price, LobError> {
        let best = self.reference_best(side);
        let price = match slot {
            LimitSlot::Top => best,
            LimitSlot::Deep => Self::behind(side, best),
            LimitSlot::Inspread => {
                if self.best(side).is_none() {
                    return Err(LobError::NoRoomInSpread);
                }
                let p = Self::improve(side, best);
                if let Some(opp) = self.best(side.opposite()) {
                    if Self::crosses(side, p, opp) {
                        return Err(LobError::NoRoomInSpread);
                    }
                }
                p
            }
        };
        if let Some(opp) = self.best(side.opposite()) {
            if Self::crosses(side, price, opp) {
                return Err(LobError::WouldCross { price, opposite: opp });
            }
        }
        Ok(price)
    }

    pub fn submit_limit(
        &mut self,
        owner: Owner,
        side: Side,
        slot: LimitSlot,
        size: u64,
        time: f64,
    ) -> Result<Placed, LobError> {
        if size == 0 {
            return Err(LobError::ZeroSize);
        }
        let price = self.slot_price(side, slot)?;
        self.submit_limit_at(owner, side, price, size, time)
    }

    /// Rests an order at an explicit price. Used for book seeding and replay.
    pub fn submit_limit_at(
        &mut self,
        owner: Owner,
        side: Side,
        price: Price,
        size: u64,
        time: f64,
    ) -> Result<Placed, LobError> {
        if size == 0 {
            return Err(LobError::ZeroSize);
        }
        if let Some(opp) = self.best(side.opposite()) {
            if Self::crosses(side, price, opp) {
                return Err(LobError::WouldCross { price, opposite: opp });
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        let order = Order { id, owner, side, price, size, entry_time: time };
        self.book_mut(side).entry(price).or_default().push_back(order);
        self.locator.insert(id, (side, price));
        self.resting_volume += size;
        self.refresh_last_best();
        Ok(Placed { id, price })
    }

    /// Executes against the opposite side. `side` is the taker's order side:
    /// `Bid` buys (lifts asks), `Ask` sells (hits bids). Residual volume beyond
    /// the available liquidity is discarded.
    pub fn submit_market(&mut self, owner: Owner, side: Side, size: u64, time: f64) -> Result<Vec<Fill>, LobError> {
        if size == 0 {
            return Err(LobError::ZeroSize);
        }
        let maker_side = side.opposite();
        let mut remaining = size;
        let mut fills = Vec::new();
        while remaining > 0 {
            let Some(price) = self.best(maker_side) else { break };
            let queue = self.book_mut(maker_side).get_mut(&price).expect("best level exists");
            let mut emptied = Vec::new();
            while remaining > 0 {
                let Some(front) = queue.front_mut() else { break };
                let take = remaining.min(front.size);
                front.size -= take;
                remaining -= take;
                fills.push(Fill {
                    taker: owner,
                    maker: front.owner,
                    maker_order: front.id,
                    maker_side,
                    price,
                    size: take,
                    time,
                });
                if front.size == 0 {
                    emptied.push(front.id);
                    queue.pop_front();
                }
            }
            if queue.is_empty() {
                self.book_mut(maker_side).remove(&price);
            }
            for id in emptied {
                self.locator.remove(&id);
            }
        }
        let filled: u64 = fills.iter().map(|f| f.size).sum();
        self.resting_volume -= filled;
        if fills.is_empty() {
            warn!(?side, size, "market order found an empty opposite side");
        }
        self.refresh_last_best();
        Ok(fills)
    }

    fn level_price(&self, side: Side, level: CancelLevel) -> Option<Price> {
        let best = self.best(side)?;
        Some(match level {
            CancelLevel::Top => best,
            CancelLevel::Deep => Self::behind(side, best),
        })
    }

    /// Cancels `owner`'s oldest order resting at the named level.
    pub fn cancel_order(&mut self, owner: Owner, side: Side, level: CancelLevel) -> Option<Cancelled> {
        let price = self.level_price(side, level)?;
        let queue = self.book_mut(side).get_mut(&price)?;
        let pos = queue.iter().position(|o| o.owner == owner)?;
        let order = queue.remove(pos).expect("position is in range");
        if queue.is_empty() {
            self.book_mut(side).remove(&price);
        }
        self.locator.remove(&order.id);
        self.resting_volume -= order.size;
        self.refresh_last_best();
        Some(Cancelled { id: order.id, price, size: order.size })
    }

    /// Cancels a specific order if `owner` owns it.
    pub fn cancel_by_id(&mut self, owner: Owner, id: OrderId) -> Option<Cancelled> {
        let (side, price) = *self.locator.get(&id)?;
        let queue = self.book_mut(side).get_mut(&price)?;
        let pos = queue.iter().position(|o| o.id == id && o.owner == owner)?;
        let order = queue.remove(pos).expect("position is in range");
        if queue.is_empty() {
            self.book_mut(side).remove(&price);
        }
        self.locator.remove(&id);
        self.resting_volume -= order.size;
        self.refresh_last_best();
        Some(Cancelled { id, price, size: order.size })
    }

    pub fn order(&self, id: OrderId) -> Option<&Order> {
        let (side, price) = self.locator.get(&id)?;
        self.book(*side).get(price)?.iter().find(|o| o.id == id)
    }

    /// Routes an exogenous event. Infeasible events are dropped and counted.
    pub fn apply_market_event(&mut self, event: &MarketEvent) -> Option<EventOutcome> {
        let side = event.etype.side;
        let owner = Owner::Exogenous;
        let out = match event.etype.kind {
            EventKind::LoDeep => self.submit_limit(owner, side, LimitSlot::Deep, event.size, event.time).ok().map(EventOutcome::Placed),
            EventKind::LoTop => self.submit_limit(owner, side, LimitSlot::Top, event.size, event.time).ok().map(EventOutcome::Placed),
            EventKind::LoInspread => self
                .submit_limit(owner, side, LimitSlot::Inspread, event.size, event.time)
                .ok()
                .map(EventOutcome::Placed),
            EventKind::CoDeep => self.cancel_order(owner, side, CancelLevel::Deep).map(EventOutcome::Cancelled),
            EventKind::CoTop => self.cancel_order(owner, side, CancelLevel::Top).map(EventOutcome::Cancelled),
            EventKind::Mo => {
                // the event names the side it hits; the taker trades the other way
                let fills = self.submit_market(owner, side.opposite(), event.size, event.time).unwrap_or_default();
                (!fills.is_empty()).then_some(EventOutcome::Traded(fills))
            }
        };
        if out.is_none() {
            self.dropped_events += 1;
        }
        out
    }

    /// Places a seeding order on any empty side at the last known best moved
    /// one tick outward.
    pub fn ensure_two_sided(&mut self, size: u64, time: f64) -> Vec<(Side, Placed)> {
        let mut out = Vec::new();
        for side in [Side::Bid, Side::Ask] {
            if self.best(side).is_none() {
                let mut price = Self::behind(side, self.last_best(side));
                if let Some(opp) = self.best(side.opposite()) {
                    if Self::crosses(side, price, opp) {
                        price = Self::behind(side, opp);
                    }
                }
                let placed = self
                    .submit_limit_at(Owner::Exogenous, side, price, size.max(1), time)
                    .expect("seed price does not cross");
                out.push((side, placed));
            }
        }
        out
    }

    fn refresh_last_best(&mut self) {
        if let Some(b) = self.best_bid() {
            self.last_best_bid = b;
        }
        if let Some(a) = self.best_ask() {
            self.last_best_ask = a;
        }
    }

    /// Every resting order, bids from best to worst then asks from best to worst.
    pub fn orders(&self) -> impl Iterator<Item = &Order> {
        self.bids.values().rev().flatten().chain(self.asks.values().flatten())
    }

    pub fn orders_of(&self, owner: Owner) -> impl Iterator<Item = &Order> {
        self.orders().filter(move |o| o.owner == owner)
    }

    /// SHA-256 over the canonical resting state.
    pub fn book_hash(&self) -> String {
        let mut h = Sha256::new();
        for o in self.orders() {
            h.update(o.id.to_le_bytes());
            h.update(o.owner.to_string().as_bytes());
            h.update([o.side as u8]);
            h.update(o.price.to_le_bytes());
            h.update(o.size.to_le_bytes());
            h.update(o.entry_time.to_bits().to_le_bytes());
        }
        h.update(self.next_id.to_le_bytes());
        hex::encode(h.finalize())
    }

    /// Structural checks: uncrossed, FIFO by entry time, volume accounting.
    pub fn check_invariants(&self) -> Result<(), String> {
        if let (Some(b), Some(a)) = (self.best_bid(), self.best_ask()) {
            if b >= a {
                return Err(format!("crossed book: bid {b} >= ask {a}"));
            }
        }
        let mut total = 0;
        for (side, book) in [(Side::Bid, &self.bids), (Side::Ask, &self.asks)] {
            for (price, q) in book {
                if q.is_empty() {
                    return Err(format!("empty level {price} on {side:?}"));
                }
                for w in q.iter().collect::<Vec<_>>().windows(2) {
                    if w[0].entry_time > w[1].entry_time || w[0].id > w[1].id {
                        return Err(format!("FIFO violated at {price} on {side:?}"));
                    }
                }
                for o in q {
                    if o.size == 0 || o.price != *price || o.side != side {
                        return Err(format!("malformed order {}", o.id));
                    }
                    total += o.size;
                }
            }
        }
        if total != self.resting_volume {
            return Err(format!("volume mismatch: counted {total}, tracked {}", self.resting_volume));
        }
        if self.locator.len() != self.orders().count() {
            return Err("locator out of sync".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hawkes::EventType;

    const EXO: Owner = Owner::Exogenous;
    const A: Owner = Owner::Agent(1);

    fn book(bid: Price, ask: Price) -> Lob {
        let mut l = Lob::new(0.01, (bid + ask) / 2);
        l.submit_limit_at(EXO, Side::Bid, bid, 5, 0.0).unwrap();
        l.submit_limit_at(EXO, Side::Ask, ask, 5, 0.0).unwrap();
        l
    }

    #[test]
    fn top_limit_joins_best_at_tail() {
        let mut l = book(100, 102);
        let p = l.submit_limit(A, Side::Bid, LimitSlot::Top, 2, 1.0).unwrap();
        assert_eq!(p.price, 100);
        let q: Vec<_> = l.orders().filter(|o| o.price == 100).map(|o| o.owner).collect();
        assert_eq!(q, vec![EXO, A]);
    }

    #[test]
    fn inspread_improves_best() {
        let mut l = book(100, 102);
        let p = l.submit_limit(A, Side::Bid, LimitSlot::Inspread, 1, 1.0).unwrap();
        assert_eq!(p.price, 101);
        assert_eq!(l.best_bid(), Some(101));
    }

    #[test]
    fn inspread_rejected_on_one_tick_spread() {
        let mut l = book(100, 101);
        assert_eq!(l.submit_limit(A, Side::Ask, LimitSlot::Inspread, 1, 1.0), Err(LobError::NoRoomInSpread));
        l.check_invariants().unwrap();
    }

    #[test]
    fn deep_is_one_tick_behind() {
        let mut l = book(100, 102);
        assert_eq!(l.submit_limit(A, Side::Bid, LimitSlot::Deep, 1, 1.0).unwrap().price, 99);
        assert_eq!(l.submit_limit(A, Side::Ask, LimitSlot::Deep, 1, 1.0).unwrap().price, 103);
    }

    #[test]
    fn market_order_walks_fifo() {
        let mut l = Lob::new(0.01, 101);
        l.submit_limit_at(EXO, Side::Bid, 100, 1, 0.0).unwrap();
        let first = l.submit_limit_at(EXO, Side::Ask, 102, 3, 0.0).unwrap();
        let second = l.submit_limit_at(A, Side::Ask, 102, 4, 0.5).unwrap();
        let fills = l.submit_market(Owner::Agent(2), Side::Bid, 5, 1.0).unwrap();
        assert_eq!(fills.len(), 2);
        assert_eq!((fills[0].maker_order, fills[0].size), (first.id, 3));
        assert_eq!((fills[1].maker_order, fills[1].size), (second.id, 2));
        assert_eq!(l.order(second.id).unwrap().size, 2);
        l.check_invariants().unwrap();
    }

    #[test]
    fn market_sell_clears_level() {
        let mut l = Lob::new(0.01, 101);
        l.submit_limit_at(EXO, Side::Bid, 100, 1, 0.0).unwrap();
        l.submit_limit_at(EXO, Side::Bid, 99, 1, 0.0).unwrap();
        l.submit_limit_at(EXO, Side::Ask, 102, 1, 0.0).unwrap();
        let fills = l.submit_market(A, Side::Ask, 1, 1.0).unwrap();
        assert_eq!(fills.len(), 1);
        assert_eq!(fills[0].price, 100);
        assert_eq!(l.best_bid(), Some(99));
    }

    #[test]
    fn market_residual_discarded_and_zero_rejected() {
        let mut l = book(100, 102);
        let fills = l.submit_market(A, Side::Bid, 9, 1.0).unwrap();
        assert_eq!(fills.iter().map(|f| f.size).sum::<u64>(), 5);
        assert_eq!(l.best_ask(), None);
        assert!(l.submit_market(A, Side::Bid, 3, 1.0).unwrap().is_empty());
        assert_eq!(l.submit_market(A, Side::Bid, 0, 1.0), Err(LobError::ZeroSize));
    }

    #[test]
    fn cancel_semantics() {
        let mut l = book(100, 102);
        let first = l.submit_limit(A, Side::Bid, LimitSlot::Top, 2, 1.0).unwrap();
        l.submit_limit(A, Side::Bid, LimitSlot::Top, 3, 2.0).unwrap();
        let c = l.cancel_order(A, Side::Bid, CancelLevel::Top).unwrap();
        assert_eq!((c.id, c.size), (first.id, 2));
        assert_eq!(l.cancel_order(A, Side::Ask, CancelLevel::Deep), None);
        // exogenous cancels never touch agent orders
        let c = l.cancel_order(EXO, Side::Bid, CancelLevel::Top).unwrap();
        assert_eq!(c.size, 5);
        assert_eq!(l.cancel_order(EXO, Side::Bid, CancelLevel::Top), None);
        assert_eq!(l.best_bid(), Some(100));
        l.check_invariants().unwrap();
    }

    #[test]
    fn quote_state_cases() {
        let q = book(100, 102).quote_state();
        assert_eq!((q.mid(), q.spread()), (Some(101.0), Some(2)));
        let q = book(100, 101).quote_state();
        assert_eq!((q.mid(), q.spread()), (Some(100.5), Some(1)));
        let mut l = Lob::new(0.01, 101);
        l.submit_limit_at(EXO, Side::Bid, 100, 1, 0.0).unwrap();
        let q = l.quote_state();
        assert!(q.is_one_sided());
        assert_eq!(q.mid(), None);
    }

    #[test]
    fn market_event_routing() {
        let mut direct = book(100, 102);
        let mut routed = direct.clone();
        let ev = MarketEvent { time: 1.0, etype: EventType::new(EventKind::Mo, Side::Bid), size: 2 };
        let fills = match routed.apply_market_event(&ev) {
            Some(EventOutcome::Traded(f)) => f,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(fills, direct.submit_market(EXO, Side::Ask, 2, 1.0).unwrap());
        assert_eq!(routed.book_hash(), direct.book_hash());

        let mut l = Lob::new(0.01, 101);
        l.submit_limit_at(EXO, Side::Ask, 102, 1, 0.0).unwrap();
        let ev = MarketEvent { time: 1.0, etype: EventType::new(EventKind::CoTop, Side::Bid), size: 1 };
        assert_eq!(l.apply_market_event(&ev), None);
        assert_eq!(l.dropped_events(), 1);

        let mut l = book(100, 102);
        let before = l.resting_volume();
        let ev = MarketEvent { time: 1.0, etype: EventType::new(EventKind::LoTop, Side::Ask), size: 3 };
        assert!(matches!(l.apply_market_event(&ev), Some(EventOutcome::Placed(Placed { price: 102, .. }))));
        assert_eq!(l.resting_volume(), before + 3);
    }

    #[test]
    fn seeding_refills_empty_side() {
        let mut l = book(100, 102);
        l.submit_market(A, Side::Bid, 5, 1.0).unwrap();
        let seeded = l.ensure_two_sided(2, 1.0);
        assert_eq!(seeded.len(), 1);
        assert_eq!(seeded[0].1.price, 103);
        assert!(l.quote_state().is_two_sided());
    }

    #[test]
    fn owner_string_round_trip() {
        for o in [EXO, Owner::Agent(7)] {
            assert_eq!(o.to_string().parse::<Owner>().unwrap(), o);
        }
        assert!("bogus".parse::<Owner>().is_err());
    }
}
