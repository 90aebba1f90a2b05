//! The goal-selection network and the direct-regression baseline.

mod config;
mod forward;
mod net;
mod predict;
#[cfg(test)]
mod tests;

pub use config::{ModelConfig, Variant};
pub use forward::*;
pub use net::*;
pub use predict::*;
