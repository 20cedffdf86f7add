//! Desk-scale laboratory for studying byzantine action faults in synchronous
//! multi-worker advantage actor-critic training.
//!
//! The crate implements the full pipeline: a minimal reverse-mode autodiff
//! substrate ([`diffmath`]), two deterministic discrete-action environments
//! ([`envsim`]), a shared actor-critic network ([`actorcritic`]), a
//! synchronous multi-worker A2C trainer ([`a2c`]), an opposite-action fault
//! injector with exact fraction accounting ([`byzantine`]), and an experiment
//! harness with CSV/JSON/SVG outputs ([`exp`]).
//!
//! Everything is seeded and 64-bit; identical configs produce byte-identical
//! metrics files.

pub mod a2c;
pub mod actorcritic;
pub mod byzantine;
pub mod cli;
pub mod diffmath;
pub mod envsim;
pub mod error;
pub mod exp;
pub mod rng;

pub use error::{Error, Result};
