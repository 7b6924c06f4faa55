//! Line-delimited JSON event log and its replay.
//!
//! One record per applied book mutation. `side` always names the book side
//! touched: a market order record with `side = "bid"` is a sell that hit the
//! bids. Replaying a log on a fresh book reproduces every fill and the final
//! book hash.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hawkes::Side;
use crate::lob::{CancelLevel, Fill, LimitSlot, Lob, OrderId, Owner, Price};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    /// Limit order placement.
    Lo,
    /// Cancellation.
    Co,
    /// Market order.
    Mo,
    /// Liquidity injected to keep the book two-sided.
    Seed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordSlot {
    Deep,
    Top,
    Inspread,
    /// Cancellation addressed by order id.
    Id,
}

impl From<LimitSlot> for RecordSlot {
    fn from(s: LimitSlot) -> Self {
        match s {
            LimitSlot::Deep => RecordSlot::Deep,
            LimitSlot::Top => RecordSlot::Top,
            LimitSlot::Inspread => RecordSlot::Inspread,
        }
    }
}

impl From<CancelLevel> for RecordSlot {
    fn from(s: CancelLevel) -> Self {
        match s {
            CancelLevel::Deep => RecordSlot::Deep,
            CancelLevel::Top => RecordSlot::Top,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillRecord {
    pub price_ticks: Price,
    pub size: u64,
    pub maker: Owner,
}

impl From<&Fill> for FillRecord {
    fn from(f: &Fill) -> Self {
        Self { price_ticks: f.price, size: f.size, maker: f.maker }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub time: f64,
    pub actor: Owner,
    pub kind: RecordKind,
    pub side: Side,
    pub slot: Option<RecordSlot>,
    pub price_ticks: Option<Price>,
    pub size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_id: Option<OrderId>,
    #[serde(default)]
    pub fills: Vec<FillRecord>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("record {seq}: {msg}")]
    Replay { seq: u64, msg: String },
}

/// In-memory log with monotone sequence numbers.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    records: Vec<LogRecord>,
    enabled: bool,
    next_seq: u64,
}

impl EventLog {
    pub fn new(enabled: bool) -> Self {
        Self { records: Vec::new(), enabled, next_seq: 0 }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    /// Assigns the next sequence number and stores the record when enabled.
    pub fn push(&mut self, mut rec: LogRecord) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        rec.seq = seq;
        if self.enabled {
            self.records.push(rec);
        }
        seq
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.next_seq as usize
    }

    pub fn is_empty(&self) -> bool {
        self.next_seq == 0
    }
}

pub fn write_records<W: Write>(mut w: W, records: &[LogRecord]) -> Result<(), LogError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<LogRecord>, LogError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?;
        out.push(rec);
    }
    Ok(out)
}

/// Applies `records` to `lob`, checking each reproduced fill list against the
/// logged one.
pub fn replay_into(lob: &mut Lob, records: &[LogRecord]) -> Result<(), LogError> {
    let fail = |seq, msg: String| LogError::Replay { seq, msg };
    for (i, r) in records.iter().enumerate() {
        if i > 0 && r.seq <= records[i - 1].seq {
            return Err(fail(r.seq, "sequence numbers not increasing".into()));
        }
        match r.kind {
            RecordKind::Lo | RecordKind::Seed => {
                let price = r.price_ticks.ok_or_else(|| fail(r.seq, "limit record without price".into()))?;
                let placed = lob
                    .submit_limit_at(r.actor, r.side, price, r.size, r.time)
                    .map_err(|e| fail(r.seq, e.to_string()))?;
                if let Some(id) = r.order_id {
                    if id != placed.id {
                        return Err(fail(r.seq, format!("order id {} replayed as {}", id, placed.id)));
                    }
                }
            }
            RecordKind::Co => {
                let cancelled = match r.slot {
                    Some(RecordSlot::Id) => {
                        let id = r.order_id.ok_or_else(|| fail(r.seq, "id cancel without order id".into()))?;
                        lob.cancel_by_id(r.actor, id)
                    }
                    Some(RecordSlot::Top) => lob.cancel_order(r.actor, r.side, CancelLevel::Top),
                    Some(RecordSlot::Deep) => lob.cancel_order(r.actor, r.side, CancelLevel::Deep),
                    _ => return Err(fail(r.seq, "cancel record with bad slot".into())),
                };
                let c = cancelled.ok_or_else(|| fail(r.seq, "nothing to cancel on replay".into()))?;
                if c.size != r.size || Some(c.price) != r.price_ticks {
                    return Err(fail(r.seq, "cancelled order differs".into()));
                }
            }
            RecordKind::Mo => {
                let fills = lob
                    .submit_market(r.actor, r.side.opposite(), r.size, r.time)
                    .map_err(|e| fail(r.seq, e.to_string()))?;
                let got: Vec<FillRecord> = fills.iter().map(FillRecord::from).collect();
                if got != r.fills {
                    return Err(fail(r.seq, format!("fills differ: logged {:?}, replayed {:?}", r.fills, got)));
                }
            }
        }
    }
    Ok(())
}

/// Replays onto a fresh book and returns it.
pub fn replay(records: &[LogRecord], tick_size: f64, initial_mid: Price) -> Result<Lob, LogError> {
    let mut lob = Lob::new(tick_size, initial_mid);
    replay_into(&mut lob, records)?;
    Ok(lob)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_line_round_trip_keeps_float_bits() {
        let r = LogRecord {
            seq: 3,
            time: 0.1 + 0.2,
            actor: Owner::Agent(2),
            kind: RecordKind::Mo,
            side: Side::Ask,
            slot: None,
            price_ticks: None,
            size: 4,
            order_id: None,
            fills: vec![FillRecord { price_ticks: 1001, size: 4, maker: Owner::Exogenous }],
        };
        let mut buf = Vec::new();
        write_records(&mut buf, std::slice::from_ref(&r)).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, vec![r.clone()]);
        assert_eq!(back[0].time.to_bits(), r.time.to_bits());
        let line = String::from_utf8(buf).unwrap();
        assert!(line.contains("\"actor\":\"agent-2\""));
    }

    #[test]
    fn replay_detects_tampered_fills() {
        let mut lob = Lob::new(0.01, 1000);
        let mut log = EventLog::new(true);
        let p = lob.submit_limit_at(Owner::Exogenous, Side::Ask, 1001, 2, 0.0).unwrap();
        log.push(LogRecord {
            seq: 0,
            time: 0.0,
            actor: Owner::Exogenous,
            kind: RecordKind::Seed,
            side: Side::Ask,
            slot: None,
            price_ticks: Some(p.price),
            size: 2,
            order_id: Some(p.id),
            fills: vec![],
        });
        let fills = lob.submit_market(Owner::Agent(1), Side::Bid, 1, 1.0).unwrap();
        log.push(LogRecord {
            seq: 0,
            time: 1.0,
            actor: Owner::Agent(1),
            kind: RecordKind::Mo,
            side: Side::Ask,
            slot: None,
            price_ticks: None,
            size: 1,
            order_id: None,
            fills: fills.iter().map(FillRecord::from).collect(),
        });
        let replayed = replay(log.records(), 0.01, 1000).unwrap();
        assert_eq!(replayed.book_hash(), lob.book_hash());

        let mut bad = log.records().to_vec();
        bad[1].fills[0].price_ticks = 1002;
        assert!(matches!(replay(&bad, 0.01, 1000), Err(LogError::Replay { seq: 1, .. })));
    }
}
