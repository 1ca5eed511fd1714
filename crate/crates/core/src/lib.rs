//! Deterministic simulator for sparse heterogeneous ensemble federated
//! learning, with FedAvg, FedProx and FedEns baselines.

// NaN must fail validation, hence the negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod sparsify;
pub mod vector;

pub use error::{Error, Result};
pub use rng::{derive_stream, RngStream};
pub use vector::ParamVector;
