//! Deterministic federated-averaging simulator with pluggable client selection.
//!
//! The crate is organised around the round loop in [`engine`]: each
//! communication round asks a [`selection::SelectionStrategy`] for an active
//! set, runs local SGD on those clients ([`engine::local_update`]), averages
//! the returned models and reports the observed losses back to the strategy.
//! [`selection::UcbCs`] ranks clients by a discounted upper confidence bound on
//! their local loss; [`selection::RandomSelection`], [`selection::PowerOfChoice`]
//! and [`selection::StalePowerOfChoice`] are the baselines it is compared with.
//!
//! With the default `parallel` feature, per-client work inside a round runs on
//! the rayon pool. Results are bitwise identical to the sequential path because
//! every client draws from its own `(seed, client, round)` random stream and
//! outputs are merged in client-id order.

pub mod data;
pub mod engine;
mod error;
mod frame;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
