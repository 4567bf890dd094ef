//! Coverage mapping of mobile network metadata onto statistical areas.
//!
//! The crate is organised bottom-up:
//!
//! * [`propagation`]: extended Hata path loss, link budgets, RSS fields.
//! * [`geo`]: grids, settlements, statistical areas, voronoi tiles.
//! * [`mapping`]: the five BTS-to-area weighting schemes and aggregation.
//! * [`simulation`]: the synthetic-country study comparing the schemes.
//! * [`io`]: ESRI ASCII rasters, CSV tables, GeoJSON areas, JSON config.
//! * [`report`]: summary tables and SVG box plots of a finished study.

pub mod error;
pub mod geo;
pub mod io;
pub mod mapping;
pub mod propagation;
pub mod report;
pub mod simulation;

pub use error::{Error, Result};
pub use propagation::BtsId;
