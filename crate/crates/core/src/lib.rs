//! Distributed opportunistic scheduling with per-station PI control of the
//! access probability: analytic solvers, a mini-slot simulator, selfish
//! strategies and the experiment harness.

pub mod analytic;
pub mod channel;
pub mod control;
pub mod error;
pub mod experiments;
pub mod par;
mod quad;
pub mod sim;
pub mod strategies;

pub use error::{Error, Result};
