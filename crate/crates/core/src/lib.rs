//! Core library: solar shadow geometry, negative-shadow parameter sweeps,
//! scene synthesis and compositing, lane detection, attack evaluation,
//! closed-loop simulation, and the luminosity-filter defense.

pub mod attack;
pub mod compositor;
pub mod defense;
pub mod detector;
pub mod error;
pub mod geom;
pub mod raster;
pub mod report;
pub mod scene;
pub mod sim;
pub mod solar;
pub mod sweep;

pub use error::{Error, Result};
