//! Benchmark toolkit for multi-label pedestrian attribute recognition and
//! attribute-based person retrieval across domains.

pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod retrieval;
pub mod schema;
pub mod trainer;

pub use error::{Error, Result};
