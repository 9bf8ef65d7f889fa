//! Granular-media manipulation with Gaussian splats.
//!
//! The pipeline lifts multi-view RGBD frames into a fixed set of 3D Gaussian
//! splats ([`scene_init`], [`splat`]), learns a graph-network dynamics model
//! over those splats ([`dynamics`]) and plans pushes with gradient-refined
//! model-predictive control on a density-field cost ([`planner`]). A
//! quasi-static desk pushing simulator ([`sim`]) provides data and the
//! evaluation environment.

pub mod adam;
pub mod dynamics;
pub mod error;
pub mod math;
pub mod planner;
pub mod scene_init;
pub mod sim;
pub mod splat;

pub use error::{Error, Result};
