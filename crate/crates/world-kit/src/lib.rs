//! Reconstruction of semantically layered 3D mesh worlds from
//! equirectangular panoramas with per-layer masks and depth maps.
//!
//! The crate is organized around the pipeline stages:
//! - [`erp`] — equirectangular/spherical/pinhole transforms and sampling
//! - [`layering`] — seam-aware instance bookkeeping and onion-peel decomposition
//! - [`depth`] — cross-layer depth alignment, sky depth, adaptive compression
//! - [`warp`] — sheet-warp meshing, sky dome, object placement
//! - [`meshopt`] — decimation, compact codec, PLY/GLB export
//! - [`cache`] — expandable RGB-D point world cache and trajectory sampling
//! - [`raster`] — deterministic software rasterizer for evaluation renders
//! - [`fixture`] — synthetic scenes with analytic depth used by the test suite

pub mod cache;
pub mod depth;
pub mod erp;
pub mod error;
pub mod fixture;
pub mod io;
pub mod layering;
pub mod mask;
pub mod meshopt;
pub mod metrics;
pub mod raster;
pub mod warp;

pub use error::{Error, Result};
