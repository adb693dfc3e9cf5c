pub mod agent;
pub mod dataset;
pub mod density;
pub mod dynamics;
pub mod env;
pub mod harness;
pub mod error;
pub mod nn;
pub mod rng;
pub mod thresholds;

pub use error::{Error, Result};
