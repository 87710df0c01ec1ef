//! Federated-learning simulator with the CrowdGuard backdoor defense.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod config;
pub mod data;
pub mod defense;
pub mod error;
pub mod nn;
pub mod orchestrator;
pub mod report;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
