//! Vision-aided predictive downlink scheduling simulator.

pub mod channel;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod harness;
pub mod identify;
pub mod predict;
pub mod scene;
pub mod scheduler;

pub use error::{Error, Result};
