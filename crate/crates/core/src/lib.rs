//! Goodput-aware network control for lossy wireless meshes.
//!
//! Links fail in outages and retry via ARQ, so the usable rate of a link is
//! its goodput: rate times slot success probability. This crate builds the
//! whole control stack on that quantity:
//!
//! - [`channel`]: Rayleigh outage model, goodput, closed-form derivatives.
//! - [`properties`]: randomized checks of the structural properties
//!   (monotonicity, log-concavity, supermodularity) the upper layers assume.
//! - [`region`]: achievable goodput regions under retransmission and
//!   packet-dropping policies, with convex hulls for two-link systems.
//! - [`game`]: the distributed weighted-goodput scheduling game with power
//!   and price players, plus brute-force and KKT cross-checks.
//! - [`controller`]: dual-decomposition rate control and backpressure
//!   weighting on top of the scheduler.
//! - [`queue`]: slot-level queue simulation for stability experiments.
//! - [`config`] / [`scenario`]: TOML experiment configs and the CSV-emitting
//!   scenario runner behind the `goodput` binary.

pub mod channel;
pub mod config;
pub mod controller;
pub mod error;
pub mod game;
pub mod properties;
pub mod queue;
pub mod region;
pub mod scenario;
pub mod seed;

pub use error::{Error, Result};
