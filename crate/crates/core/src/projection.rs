//! Template handling and image formation.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry2d::{extract_silhouette_with, Alpha, Point2, Silhouette};
use crate::rotations::RigidTransform;

/// Relative depth guard for perspective projection, as a fraction of the depth prior.
pub const Z_MIN_FRACTION: f64 = 1e-6;
/// Default absolute depth guard when no prior is available.
pub const DEFAULT_Z_MIN: f64 = 1e-6;

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::EmptyMesh);
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        for (k, f) in faces.iter().enumerate() {
            if let Some(&i) = f.iter().find(|&&i| i >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "face {k} references vertex {i}, mesh has {}",
                    vertices.len()
                )));
            }
            let a = triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
            if !(a > 0.0) {
                return Err(Error::InvalidMesh(format!("face {k} has zero area")));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face_area(&self, k: usize) -> f64 {
        let f = self.faces[k];
        triangle_area(&self.vertices[f[0]], &self.vertices[f[1]], &self.vertices[f[2]])
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|k| self.face_area(k)).sum()
    }

    /// Same connectivity with every vertex mapped through `f`.
    pub fn map_vertices(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Result<Self> {
        Self::new(self.vertices.iter().map(f).collect(), self.faces.clone())
    }
}

fn triangle_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Ordered 3D template point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 3]>", into = "Vec<[f64; 3]>")]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
}

impl PointCloud {
    /// Requires at least 4 finite points that do not all lie on one line.
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::InsufficientPoints {
                needed: 4,
                found: points.len(),
            });
        }
        if points.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidParameter("non-finite cloud point".into()));
        }
        let n = points.len() as f64;
        let c = points.iter().sum::<Vector3<f64>>() / n;
        let mut cov = Matrix3::<f64>::zeros();
        for p in &points {
            cov += (p - c) * (p - c).transpose();
        }
        let ev = cov.symmetric_eigen().eigenvalues;
        let mut ev: Vec<f64> = ev.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        if !(ev[2] > 0.0) || ev[1] <= 1e-12 * ev[2] {
            return Err(Error::DegenerateConfiguration(
                "cloud collapses to a line or a point".into(),
            ));
        }
        Ok(Self { points })
    }

    pub(crate) fn from_trusted(points: Vec<Vector3<f64>>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in &self.points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Largest dimension: the longest bounding-box edge at the identity pose.
    pub fn largest_dimension(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).max()
    }

    /// Content hash used to tie precomputed fields to a template.
    pub fn fingerprint(&self) -> u64 {
        crate::io::fingerprint(self)
    }
}

impl TryFrom<Vec<[f64; 3]>> for PointCloud {
    type Error = Error;

    fn try_from(v: Vec<[f64; 3]>) -> Result<Self> {
        PointCloud::new(v.into_iter().map(Vector3::from).collect())
    }
}

impl From<PointCloud> for Vec<[f64; 3]> {
    fn from(c: PointCloud) -> Self {
        c.points.into_iter().map(|p| [p.x, p.y, p.z]).collect()
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive, got ({fx}, {fy})"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidParameter("principal point is not finite".into()));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn to_pixel(&self, p: &Point2) -> Point2 {
        Point2::new(self.fx * p.x + self.cx, self.fy * p.y + self.cy)
    }

    pub fn to_normalized(&self, p: &Point2) -> Point2 {
        Point2::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy)
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            fx: 800.0,
            fy: 800.0,
            cx: 320.0,
            cy: 320.0,
        }
    }
}

/// Image formation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProjectionMode {
    Orthographic,
    /// Pinhole camera; silhouettes live in normalised image coordinates.
    /// `depth` is the object depth prior used when precomputing fields.
    Perspective {
        depth: f64,
        intrinsics: CameraIntrinsics,
    },
}

impl ProjectionMode {
    pub fn perspective(depth: f64, intrinsics: CameraIntrinsics) -> Result<Self> {
        if !(depth > 0.0 && depth.is_finite()) {
            return Err(Error::InvalidParameter(format!("depth prior {depth}")));
        }
        Ok(Self::Perspective { depth, intrinsics })
    }

    pub fn is_perspective(&self) -> bool {
        matches!(self, Self::Perspective { .. })
    }

    /// Translation that places the template at the reference position used
    /// for signature fields: the origin for orthographic, the prior depth on
    /// the optical axis for perspective.
    pub fn reference_translation(&self) -> Vector3<f64> {
        match self {
            Self::Orthographic => Vector3::zeros(),
            Self::Perspective { depth, .. } => Vector3::new(0.0, 0.0, *depth),
        }
    }

    /// Size in silhouette units of one template length unit at the reference position.
    pub fn image_scale(&self) -> f64 {
        match self {
            Self::Orthographic => 1.0,
            Self::Perspective { depth, .. } => 1.0 / depth,
        }
    }

    /// Depth guard for perspective projection.
    pub fn z_min(&self) -> f64 {
        match self {
            Self::Orthographic => DEFAULT_Z_MIN,
            Self::Perspective { depth, .. } => Z_MIN_FRACTION * depth,
        }
    }
}

/// Area-uniform surface sampling; deterministic in `seed`.
pub fn sample_mesh(mesh: &TriangleMesh, m: usize, seed: u64) -> Result<PointCloud> {
    if m < 4 {
        return Err(Error::InsufficientPoints { needed: 4, found: m });
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for k in 0..mesh.faces.len() {
        total += mesh.face_area(k);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::EmptyMesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..m)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            let k = cumulative
                .partition_point(|&c| c <= u)
                .min(mesh.faces.len() - 1);
            let f = mesh.faces[k];
            let (a, b, c) = (
                mesh.vertices[f[0]],
                mesh.vertices[f[1]],
                mesh.vertices[f[2]],
            );
            let r1: f64 = rng.random::<f64>().sqrt();
            let r2: f64 = rng.random();
            a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
        })
        .collect();
    PointCloud::new(points)
}

/// Maps every point through `pose`.
pub fn transform(q: &PointCloud, pose: &RigidTransform) -> PointCloud {
    let m = *pose.r.matrix();
    PointCloud::from_trusted(q.points.iter().map(|p| m * p + pose.t).collect())
}

/// Drops the depth coordinate.
pub fn project_orthographic(q: &PointCloud) -> Vec<Point2> {
    q.points.iter().map(|p| Point2::new(p.x, p.y)).collect()
}

/// Normalised image coordinates `(x/z, y/z)`.
pub fn project_normalized(q: &PointCloud, z_min: f64) -> Result<Vec<Point2>> {
    q.points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            if !(p.z > z_min) {
                return Err(Error::PointBehindCamera {
                    index,
                    depth: p.z,
                    z_min,
                });
            }
            Ok(Point2::new(p.x / p.z, p.y / p.z))
        })
        .collect()
}

/// Pixel coordinates `(fx x/z + cx, fy y/z + cy)` with the default depth guard.
pub fn project_perspective(q: &PointCloud, k: &CameraIntrinsics) -> Result<Vec<Point2>> {
    Ok(project_normalized(q, DEFAULT_Z_MIN)?
        .iter()
        .map(|p| k.to_pixel(p))
        .collect())
}

/// Silhouette of the posed template: transform, project, extract the outer boundary.
/// Perspective silhouettes are in normalised image coordinates.
pub fn silhouette_of(
    q: &PointCloud,
    pose: &RigidTransform,
    mode: &ProjectionMode,
    alpha: Alpha,
) -> Result<Silhouette> {
    silhouette_of_scaled(q, pose, mode, alpha, 1.0)
}

/// As [`silhouette_of`], with the projected points scaled about the image
/// origin (scaled-orthographic when the mode is orthographic).
pub fn silhouette_of_scaled(
    q: &PointCloud,
    pose: &RigidTransform,
    mode: &ProjectionMode,
    alpha: Alpha,
    scale: f64,
) -> Result<Silhouette> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale {scale}")));
    }
    let posed = transform(q, pose);
    let mut pts = match mode {
        ProjectionMode::Orthographic => project_orthographic(&posed),
        ProjectionMode::Perspective { .. } => project_normalized(&posed, mode.z_min())?,
    };
    if scale != 1.0 {
        for p in &mut pts {
            p.coords *= scale;
        }
    }
    extract_silhouette_with(&pts, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> PointCloud {
        PointCloud::new(vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_line_clouds() {
        let line: Vec<Vector3<f64>> = (0..10).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(
            PointCloud::new(line),
            Err(Error::DegenerateConfiguration(_))
        ));
        assert!(matches!(
            PointCloud::new(vec![Vector3::zeros(); 3]),
            Err(Error::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn orthographic_drops_z() {
        let q = PointCloud::new(vec![
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 1.0),
        ])
        .unwrap();
        assert_eq!(project_orthographic(&q)[0], Point2::new(1.0, 2.0));
    }

    #[test]
    fn perspective_basics() {
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        let q = PointCloud::new(vec![
            Vector3::new(1.0, 1.0, 2.0),
            Vector3::new(0.0, 0.0, 5.0),
            Vector3::new(1.0, 0.0, 3.0),
            Vector3::new(0.0, 1.0, 4.0),
        ])
        .unwrap();
        let p = project_perspective(&q, &k).unwrap();
        assert_eq!(p[0], Point2::new(0.5, 0.5));
        assert_eq!(p[1], Point2::new(0.0, 0.0));
        let behind = transform(
            &tetra(),
            &RigidTransform::new(crate::rotations::Rotation::identity(), Vector3::new(0.0, 0.0, -0.5)),
        );
        assert!(matches!(
            project_perspective(&behind, &k),
            Err(Error::PointBehindCamera { .. })
        ));
    }

    #[test]
    fn mesh_validation() {
        let v = vec![Vector3::zeros(), Vector3::x(), Vector3::y()];
        assert!(matches!(TriangleMesh::new(v.clone(), vec![]), Err(Error::EmptyMesh)));
        assert!(matches!(
            TriangleMesh::new(v.clone(), vec![[0, 1, 3]]),
            Err(Error::InvalidMesh(_))
        ));
        assert!(matches!(
            TriangleMesh::new(v.clone(), vec![[0, 1, 1]]),
            Err(Error::InvalidMesh(_))
        ));
        let m = TriangleMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert_eq!(m.surface_area(), 0.5);
    }

    #[test]
    fn intrinsics_roundtrip() {
        let k = CameraIntrinsics::default();
        let p = Point2::new(0.125, -0.03);
        let back = k.to_normalized(&k.to_pixel(&p));
        assert!((back - p).norm() < 1e-15);
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
    }
}
