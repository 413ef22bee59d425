//! Std companion to `incidence-core`: binary raster and JSON/PLY/PNG file
//! formats, the dataset intrinsics table, synthetic ray perturbation, the
//! benchmark harness, and the `incidence` command-line tool.

pub mod benchmark;
pub mod cli;
pub mod perturb;
pub mod rasterio;

pub use rasterio::fixtures::{fixture_intrinsics, FixtureEntry, FIXTURES};
