//! Files, configuration, training and evaluation for recurrent relational
//! networks, on top of the `rrn-core` library.
//!
//! The `rrn` binary wraps these modules in a command line.

pub mod check;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod fetch;
pub mod metrics;
pub mod train;

pub use config::{TaskKind, TrainConfig};
pub use error::{Error, Result};
