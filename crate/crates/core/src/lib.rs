//! Flow-level performance models for two-carrier cellular schedulers.
//!
//! A cell is split into `J` areas, each with its own peak rate on the two
//! carriers. Single-carrier (SC) flows are routed to one carrier on arrival
//! (JFQ, JSQ or a state-blind Bernoulli split), dual-carrier (DC) flows are
//! served on both carriers at once under volume balancing, and each carrier
//! is shared in processor-sharing fashion.
//!
//! The crate is `no_std` (it needs `alloc`) and is split into:
//!
//! * [`model`]: domain types and closed-form rate, load and throughput formulas.
//! * [`ctmc`]: truncated state space, generator assembly, stationary solver and
//!   Little's-law throughputs.
//! * [`sim`]: exact event-driven simulation of the untruncated process.
//! * [`capacity`]: bisection of throughput targets into sustainable traffic.
//! * [`stats`]: confidence intervals and the regression used by the simulator.
#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod capacity;
pub mod ctmc;
mod error;
pub mod model;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
