// SPDX-License-Identifier: MIT OR Apache-2.0

//! Compound sequential change-point detection across `K` parallel data
//! streams.
//!
//! Every stream carries a Bayesian posterior `W_{k,t}` that its change point
//! has already happened. At each time step the detector keeps the largest set
//! of streams whose mean posterior stays at or below a level `alpha` (the
//! local false non-discovery rate) and permanently deactivates the rest.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: change-point priors and observation densities.
//! - [`posterior`]: online posterior recursions in log-odds space.
//! - [`detector`]: the deactivation rules, streaming state and checkpoints.
//! - [`calibrate`]: Monte Carlo estimation of the limiting threshold table.
//! - [`simulate`]: replication engine and per-time metrics.
//! - [`verify`]: brute-force oracles and exact small-instance enumeration.
//!
//! Data-parallel work (per-stream updates, replications) goes through
//! [`Execution`]; with the `parallel` feature disabled every path runs
//! sequentially and produces identical output.

#![forbid(unsafe_code)]

pub mod calibrate;
pub mod detector;
mod error;
mod exec;
pub mod hexfloat;
pub mod io;
pub mod model;
pub(crate) mod numeric;
pub mod posterior;
pub mod rng;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Execution;
