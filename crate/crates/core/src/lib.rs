//! Inhomogeneous geometric Brownian motion: exact moments, numerical schemes
//! and their bias, boundary and Monte Carlo analysis.

pub mod boundary;
pub mod error;
pub mod model;
pub mod moments;
pub mod montecarlo;
pub mod noise;
pub mod schemes;

pub use error::{Error, ExistenceCondition, Result};
pub use model::{BoundaryClass, BoundaryKind, ModelParams, StationaryDensity};
pub use schemes::{NoiseDraw, SchemeKind, TimeGrid, Trajectory};

/// Library version recorded in output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
