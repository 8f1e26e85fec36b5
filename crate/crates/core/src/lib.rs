//! Urban tree placement optimization against aggregated mean radiant temperature.
//!
//! The crate is organized bottom-up: [`raster`] holds the spatial data model,
//! [`meteo`] the hourly forcing and solar geometry, [`shadow`] the ray-marched
//! shading and sky view factors, [`tmrt`] the radiation model and the fast
//! sun-binned evaluator, [`optimize`] the iterated local search and its
//! baselines, and [`analysis`] the metrics and post-hoc studies.

pub mod analysis;
pub mod error;
pub mod fixtures;
pub mod meteo;
pub mod optimize;
pub mod raster;
pub mod shadow;
pub mod tmrt;

pub use error::{Error, Result};
