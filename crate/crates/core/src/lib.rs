//! Rigid pose recovery of a known 3D shape from one silhouette.
//!
//! Rotations are searched over a disc parametrisation of SO(3) on which two
//! precomputed scalar fields (projected area and fitted-ellipse aspect ratio)
//! are sampled. Intersecting their iso-contours yields a small candidate set
//! that is ranked by Hausdorff distance and optionally polished on SE(3).

pub mod error;
pub mod experiment;
pub mod geometry2d;
pub mod io;
pub mod metrics;
pub mod projection;
pub mod refine;
pub mod rotations;
pub mod shapes;
pub mod search;
pub mod signatures;

pub use error::{Error, Result};
