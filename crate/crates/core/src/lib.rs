//! Reconstruction-and-resimulation toolkit for LiDAR point clouds.
//!
//! The crate turns posed LiDAR sequences into signed-distance fields and
//! triangle meshes, re-raycasts those meshes under configurable virtual
//! sensor profiles, and scores reconstruction fidelity:
//!
//! - [`geometry`] / [`ply`] — core types, rigid motion, PLY interchange.
//! - [`ingest`] — dynamic removal, registration, outlier filtering, and
//!   supervision-ray construction from posed frames.
//! - [`sdf`] — grid SDF, LiDAR volume rendering, gradient-based fitting,
//!   TSDF fusion, and marching-cubes mesh extraction.
//! - [`lidar`] — sensor profiles, BVH ray casting, scan simulation.
//! - [`replay`] — dynamic-object pose replay, asset matching, labels.
//! - [`metrics`] — truncated Chamfer distance, depth RMSE, rankings.

pub mod error;
pub mod geometry;
pub mod ingest;
pub mod lidar;
pub mod metrics;
pub mod ply;
pub mod replay;
pub mod rng;
pub mod sdf;
pub mod shapes;

pub use error::{Error, Result};
