//! Simulator and verification library for tensor-parallel Transformer
//! inference partitioned across a network of memory-constrained chips.
//!
//! The crate plans weight sharding with zero duplication ([`partition`]),
//! proves the partitioned computation numerically equivalent to the
//! monolithic one ([`exec`]), and predicts per-block latency, runtime
//! breakdown, energy and EDP for Siracusa-class multi-chip systems
//! ([`perf`], [`energy`]).

pub mod config;
pub mod energy;
pub mod error;
pub mod exec;
pub mod model;
pub mod partition;
pub mod perf;
pub mod report;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::TensorView;
