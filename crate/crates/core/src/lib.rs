//! Two-tier task offloading for V2X-enabled mobile edge computing.
//!
//! Needing vehicles (NVs) with sequential tasks are first paired with idle
//! vehicles ([`matching`]) and split their task with the helper
//! ([`tier1`]). NVs left unmatched upload to a chain of RSUs that share
//! bandwidth and compute ([`tier2`]).

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod constraints;
pub mod harness;
pub mod kkt;
pub mod matching;
pub mod model;
pub mod numerics;
pub mod scenario;
pub mod tier1;
pub mod tier2;
