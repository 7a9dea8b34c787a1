//! Outage capacity of bursty amplify-and-forward (BAF) relaying with one-bit
//! incremental feedback.
//!
//! The crate pairs every closed-form expression with a Monte Carlo simulation
//! of the feedback protocol over block-Rayleigh fading:
//!
//! - [`channel`]: geometry, path loss, burst fraction and reproducible channel draws.
//! - [`analytic`]: capacities, outage thresholds, cut-set bounds, Δ ratios and relay placement.
//! - [`protocol`]: the per-block incremental-relaying state machine.
//! - [`montecarlo`]: outage, `E(N)`, Lemma-1 and ε-capacity estimators plus a quadrature oracle.
//! - [`experiment`]: configuration and result rows behind the `baf` command-line tool.

pub mod analytic;
pub mod channel;
mod error;
pub mod experiment;
pub mod montecarlo;
pub mod protocol;

pub use error::{Error, Result};
