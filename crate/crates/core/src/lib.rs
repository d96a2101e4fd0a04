//! Robust integrated visible-light positioning and communication.
//!
//! Computes LED power allocations that minimise the positioning CRLB under
//! rate-outage constraints, and checks them by Monte Carlo simulation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod fisher;
pub mod rate;
pub mod scenario;
pub mod conic;
pub mod allocator;
pub mod positioning;
pub mod montecarlo;
pub mod cli;
