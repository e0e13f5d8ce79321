//! Planar silhouette primitives.
//!
//! A [`Silhouette`] is a closed polyline of 2D points (the last vertex connects
//! back to the first). Everything here is a pure function of its inputs.

mod alpha_shape;
mod ellipse;
mod grid;
mod hausdorff;
mod polygon;

pub use alpha_shape::{extract_silhouette, extract_silhouette_with, median_nn_spacing, Alpha};
pub use ellipse::{fit_ellipse, Ellipse};
pub use grid::PointGrid;
pub use hausdorff::{directed_hausdorff, hausdorff, hausdorff_points};
pub use polygon::{
    bbox_aspect_ratio, convex_hull, extents, extents_of, polygon_area, polygon_centroid,
    signed_area, vertex_mean,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point2 = nalgebra::Point2<f64>;
pub type Vector2 = nalgebra::Vector2<f64>;

/// Relative area tolerance below which a polygon is considered degenerate.
pub const DEGENERACY_EPS: f64 = 1e-12;

/// Ordered closed outline of a projected shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SilhouetteRepr", into = "SilhouetteRepr")]
pub struct Silhouette {
    points: Vec<Point2>,
}

impl Silhouette {
    /// Validates and wraps an ordered vertex list.
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InsufficientPoints {
                needed: 3,
                found: points.len(),
            });
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidParameter(
                "silhouette contains non-finite coordinates".into(),
            ));
        }
        let area = signed_area(&points).abs();
        let (lx, ly) = extents_of(&points);
        let tolerance = DEGENERACY_EPS * lx * ly;
        if area <= tolerance {
            return Err(Error::DegenerateSilhouette { area, tolerance });
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point2> {
        self.points
    }

    /// Rigidly moves every vertex; area is preserved so no revalidation is needed.
    pub fn translated(&self, offset: Vector2) -> Self {
        Self {
            points: self.points.iter().map(|p| p + offset).collect(),
        }
    }

    /// Rotates every vertex about the origin by `theta` radians.
    pub fn rotated(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            points: self
                .points
                .iter()
                .map(|p| Point2::new(c * p.x - s * p.y, s * p.x + c * p.y))
                .collect(),
        }
    }

    /// Uniform scaling about the origin.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.points.iter().map(|p| Point2::from(p.coords * factor)).collect())
    }

    pub(crate) fn from_trusted(points: Vec<Point2>) -> Self {
        debug_assert!(points.len() >= 3);
        Self { points }
    }
}

#[derive(Serialize, Deserialize)]
struct SilhouetteRepr {
    points: Vec<[f64; 2]>,
}

impl TryFrom<SilhouetteRepr> for Silhouette {
    type Error = Error;

    fn try_from(r: SilhouetteRepr) -> Result<Self> {
        Silhouette::new(r.points.into_iter().map(|[x, y]| Point2::new(x, y)).collect())
    }
}

impl From<Silhouette> for SilhouetteRepr {
    fn from(s: Silhouette) -> Self {
        SilhouetteRepr {
            points: s.points.into_iter().map(|p| [p.x, p.y]).collect(),
        }
    }
}
