//! Simulator for a single organic molecule coupled to a long-lived acoustic
//! mode of its host nanocrystal.

mod error;
pub mod dump;
pub mod analytics;
pub mod dynamics;
pub mod experiments;
pub mod hilbert;
pub mod model;
pub mod records;

pub use error::{Error, Result};
