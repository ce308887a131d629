//! Superquadric abstraction of discrete signed distance fields.
//!
//! The pipeline takes a truncated SDF sampled on a regular voxel grid and
//! grows a sparse set of superquadrics out of it:
//!
//! 1. [`voi`] marches a geometric sequence of negative isolevels and labels
//!    26-connected interior volumes (VOIs) that seed new primitives.
//! 2. [`fitting`] grows each seed with an EM loop: posterior voxel/primitive
//!    correspondences followed by a bounded Levenberg-Marquardt update of the
//!    eleven primitive parameters.
//! 3. [`marching`] alternates the two, deactivating interior voxels that an
//!    accepted primitive explains, until no prominent interior volume is left.
//!
//! [`metrics`] scores a result (Chamfer-L1 and lattice IoU) and [`io`] reads
//! and writes grids, meshes and primitive lists.
//!
//! Data-parallel inner loops run on rayon when the `parallel` feature is on
//! (the default). Results are bit-identical with any thread count.

pub mod error;
pub mod fitting;
pub mod grid;
pub mod io;
pub mod marching;
pub mod metrics;
pub mod par;
pub mod superquadric;
pub mod voi;

pub use error::{Error, Result};
pub use fitting::{FitOptions, FitOutcome, RemovalStats};
pub use grid::VoxelGrid;
pub use marching::{march, AbstractionResult, MarchingConfig};
pub use superquadric::Superquadric;

/// World-space point / vector type used throughout the crate.
pub type Point3 = nalgebra::Vector3<f64>;
