//! Multi-task learning lab built around gradient routing between split task
//! towers on an MMoE backbone.

pub mod data;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod nn;

pub use error::{Error, Result};
