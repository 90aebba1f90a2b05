//! Goal-conditioned multi-agent trajectory prediction on heterogeneous scene graphs.
//!
//! Scenes are turned into a typed graph whose edges carry only relative
//! (translation- and rotation-invariant) features. A graph-attention
//! encoder/decoder produces one query per agent and mode; each query picks a
//! goal in stages (lane, then point on that lane, or a free point for
//! pedestrians), refines it with a regressed offset and completes the
//! trajectory towards it.

pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod render;
pub mod scenegraph;
pub mod synthgen;
pub mod training;

pub use error::{Error, Result};
