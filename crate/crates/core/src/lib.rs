//! Attention-guided deep hashing for image retrieval.

pub mod attention;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod datasets;
pub mod error;
pub mod hashnet;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod plot;
pub mod retrieval;
pub mod trainer;

pub use error::{Error, Result};
