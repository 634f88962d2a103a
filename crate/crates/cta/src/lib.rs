//! Continual test-time adaptation engine with a synthetic domain-shift
//! benchmark harness.
//!
//! The crate trains a small convolutional classifier on a rendered "source"
//! domain, then streams shifted target domains through one of three
//! adaptation strategies while the harness scores accuracy, forgetting, and
//! prediction entropy:
//!
//! * **BN**    - re-estimates normalization statistics from each test batch;
//!   no parameter is learned.
//! * **TENT**  - additionally minimizes prediction entropy online, updating
//!   only the normalization scale/shift parameters.
//! * **CoTTA** - a mean teacher supervises the full student network, with a
//!   stochastic restore pulling weights back toward the source model.
//!
//! Everything downstream of a seed is deterministic: rendering, training,
//! adaptation order, and restore draws all derive from one master seed.
//!
//! Start with the `examples/` directory; each example exercises one
//! capability end to end. The `cta` binary exposes the same flows as
//! subcommands for scripted runs.

pub mod adapt;
pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod shiftgen;

pub use error::{CtaError, Result};
