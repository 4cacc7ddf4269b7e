//! Hardware-aware neural architecture search over per-layer independent
//! attention shapes ("infinite-head" attention).
//!
//! The crate is organised bottom-up:
//!
//! * [`genome`] – the architecture design space, validation, repair and counting.
//! * [`iha_ref`] – a double-precision reference kernel for the attention mechanism.
//! * [`surrogate`] – the encoder surrogate that predicts validation loss, its
//!   flat-MLP baseline and a synthetic label oracle.
//! * [`metrics`] – ranking metrics, Pareto dominance and 2-D hypervolume.
//! * [`hwcost`] – analytical substrate costs and the multi-chip ring co-search.
//! * [`search`] – the NSGA-II engine with optional surrogate co-evolution.

pub mod error;
pub mod genome;
pub mod hwcost;
pub mod iha_ref;
pub mod metrics;
pub mod search;
pub mod surrogate;

mod util;

pub use error::{Error, Result};
