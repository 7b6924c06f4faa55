//! Hawkes-driven limit order book simulator.
//!
//! Exogenous order flow comes from a twelve-type compound Hawkes process
//! ([`hawkes`]) routed through a price-time priority book ([`lob`]). Agents
//! plug in through [`agent`]: a TWAP meta-order executor ([`twap`]) and an
//! impulse-control market maker trained with PPO and self-imitation
//! ([`rl`]). [`runner`] wires seeded episodes and experiments together and
//! [`metrics`] turns their output into slippage, Sharpe and impact figures.

pub mod agent;
pub mod eventlog;
pub mod hawkes;
pub mod lob;
pub mod metrics;
pub mod rl;
pub mod runner;
pub mod stats;
pub mod twap;

pub use hawkes::{HawkesEngine, HawkesParams, MarketEvent, Side};
pub use lob::{Direction, Lob, Owner};
