//! Opportunistic linear-convex localization for mobile robot networks.
//!
//! A robot updates its location estimate only when it finds `m + 1`
//! neighbours whose convex hull strictly contains it. The update is a convex
//! combination of the neighbours' estimates (and the beacons' true positions)
//! weighted by barycentric coordinates computed from pairwise distances alone,
//! via Cayley-Menger determinants.
//!
//! Modules:
//!
//! - [`geometry`]: distance-only simplex volumes, inclusion test and
//!   barycentric coordinates in `R^1..R^3`.
//! - [`world`]: ground-truth kinematics, neighbour discovery and noisy
//!   odometry/ranging.
//! - [`localizer`]: triangulation-set discovery and the estimate update.
//! - [`ltv`]: system-matrix assembly, slice segmentation, convergence and
//!   feasibility checks.
//! - [`harness`]: experiment configuration, Monte-Carlo replication and
//!   CSV/JSON output.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod localizer;
pub mod ltv;
pub mod point;
pub mod rng;
pub mod world;

pub use error::{Error, Result};
pub use point::Point;
