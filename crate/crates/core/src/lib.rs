//! Monte Carlo modified profile likelihood for fixed-effects models with
//! one nuisance parameter per cluster.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod io;
pub mod models;
pub mod mpl;
pub mod optim;
pub mod rng;
pub mod sim;

/// Seed used whenever the caller does not supply one.
pub const DEFAULT_SEED: u64 = 20_190_601;
