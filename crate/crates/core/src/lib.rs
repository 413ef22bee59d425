//! Incident-field camera calibration.
//!
//! A pinhole camera with intrinsics `[fx, fy, bx, by]` assigns every pixel
//! `(x, y)` the ray `[(x - bx) / fx, (y - by) / fy, 1]`. A dense field of
//! these rays (an *incident map*) is invariant to cropping and resizing of
//! the image, and the intrinsics can be read back from any two of its pixels.
//! This crate provides:
//!
//! - [`geometry`]: the pinhole model, incident-map synthesis, and the
//!   crop/resize/augmentation transforms on intrinsics.
//! - [`solver`]: the two-point minimal solver, RANSAC recovery with
//!   least-squares polish, and centered 1-DoF focal enumeration.
//! - [`diffusion`]: a raster-space DDPM/DDIM scheduler with pluggable
//!   denoisers, multi-resolution noise, and ensemble aggregation.
//! - [`metrics`]: calibration error, affine-invariant depth error, and
//!   Chamfer-L1 / F-score point-cloud metrics.
//! - [`recon`]: depth unprojection to point clouds and its inverse.
//!
//! The crate is `no_std` (with `alloc`). The `parallel` feature runs RANSAC
//! trials and ensemble members on rayon; results are bit-identical to the
//! serial path.
#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod diffusion;
pub mod geometry;
pub mod metrics;
pub mod recon;
pub mod solver;

mod stats;

pub use geometry::{ImageGeometry, IncidentMap, Intrinsics, PixelCoord};
pub use metrics::{CalibrationError, DepthMap, PointCloud};
pub use solver::{CalibrationEstimate, FocalGrid, SolverConfig};
