//! Rotation algebra: Postel (azimuthal-equidistant) disc parametrisation,
//! axis-angle maps, Z rotations, geodesic distance, Horn alignment and
//! Haar-uniform sampling.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::PointCloud;

/// Orthonormality tolerance for [`Rotation::new`].
pub const ROTATION_TOL: f64 = 1e-9;

/// Proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Rotation {
    m: Matrix3<f64>,
}

impl Rotation {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if !(err <= ROTATION_TOL && (det - 1.0).abs() <= ROTATION_TOL) {
            return Err(Error::InvalidParameter(format!(
                "not a rotation: orthonormality error {err:e}, det {det}"
            )));
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>) -> Self {
        Self {
            m: q.to_rotation_matrix().into_inner(),
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn transpose(&self) -> Self {
        Self {
            m: self.m.transpose(),
        }
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.m * v
    }

    /// Composition followed by projection back onto SO(3) through a unit quaternion,
    /// so long products do not drift away from orthonormality.
    pub fn compose(&self, other: &Rotation) -> Self {
        let m = self.m * other.m;
        let r = nalgebra::Rotation3::from_matrix_unchecked(m);
        Self::from_quaternion(&UnitQuaternion::from_rotation_matrix(&r))
    }

    /// Rotation by `alpha` radians about the X, Y or Z axis.
    pub fn about_x(alpha: f64) -> Self {
        let (s, c) = alpha.sin_cos();
        Self {
            m: Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        }
    }

    pub fn about_y(alpha: f64) -> Self {
        let (s, c) = alpha.sin_cos();
        Self {
            m: Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        }
    }

    pub fn about_z(alpha: f64) -> Self {
        z_rotation(alpha)
    }

    /// Intrinsic X-Y-Z Euler angles: `R = Rx(a) * Ry(b) * Rz(c)`.
    pub fn from_euler_xyz(a: f64, b: f64, c: f64) -> Self {
        Self {
            m: Self::about_x(a).m * Self::about_y(b).m * Self::about_z(c).m,
        }
    }

    /// Inverse of [`Rotation::from_euler_xyz`], with `b` in `[-pi/2, pi/2]`.
    pub fn to_euler_xyz(&self) -> (f64, f64, f64) {
        let m = &self.m;
        let b = m[(0, 2)].clamp(-1.0, 1.0).asin();
        if m[(0, 2)].abs() < 1.0 - 1e-12 {
            let a = (-m[(1, 2)]).atan2(m[(2, 2)]);
            let c = (-m[(0, 1)]).atan2(m[(0, 0)]);
            (a, b, c)
        } else {
            // Gimbal lock: only a +/- c is determined; put it all in a.
            let a = m[(2, 1)].atan2(m[(1, 1)]);
            (a, b, 0.0)
        }
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation { m: self.m * rhs.m }
    }
}

impl Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;

    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.m * rhs
    }
}

impl TryFrom<[[f64; 3]; 3]> for Rotation {
    type Error = Error;

    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self> {
        Rotation::new(Matrix3::from_fn(|i, j| rows[i][j]))
    }
}

impl From<Rotation> for [[f64; 3]; 3] {
    fn from(r: Rotation) -> Self {
        let m = r.m;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

/// Rotation angle and unit axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisAngle {
    pub alpha: f64,
    pub axis: Vector3<f64>,
}

impl AxisAngle {
    pub fn new(alpha: f64, axis: Vector3<f64>) -> Result<Self> {
        if !(0.0..=PI).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "rotation angle {alpha} outside [0, pi]"
            )));
        }
        if (axis.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("axis is not a unit vector".into()));
        }
        Ok(Self { alpha, axis })
    }

    /// The rotation vector `alpha * axis`.
    pub fn vector(&self) -> Vector3<f64> {
        self.axis * self.alpha
    }
}

/// Point of the closed Postel disc of radius pi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscPoint {
    pub d: Vector2<f64>,
}

/// Slack allowed on the disc radius for points produced by interpolation.
pub const DISC_TOL: f64 = 1e-12;

impl DiscPoint {
    pub fn new(d1: f64, d2: f64) -> Result<Self> {
        let d = Vector2::new(d1, d2);
        if !(d.norm() <= PI + DISC_TOL) {
            return Err(Error::InvalidParameter(format!(
                "disc point ({d1}, {d2}) outside radius pi"
            )));
        }
        Ok(Self { d })
    }

    pub fn norm(&self) -> f64 {
        self.d.norm()
    }

    pub fn rotation(&self) -> Rotation {
        postel_to_rotation(&disc_lift(self))
    }
}

/// Rotation followed by translation: `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub r: Rotation,
    pub t: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(r: Rotation, t: Vector3<f64>) -> Self {
        Self { r, t }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vector3::zeros())
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.r.m * p + self.t
    }

    /// `self ∘ inner`: applies `inner` first.
    pub fn after(&self, inner: &RigidTransform) -> RigidTransform {
        RigidTransform {
            r: Rotation {
                m: self.r.m * inner.r.m,
            },
            t: self.r.m * inner.t + self.t,
        }
    }
}

/// Rodrigues' formula for a rotation of `alpha` about `axis`.
pub fn postel_to_rotation(aa: &AxisAngle) -> Rotation {
    exp_so3(&aa.vector())
}

/// Exponential map from a rotation vector.
pub fn exp_so3(w: &Vector3<f64>) -> Rotation {
    let theta = w.norm();
    if theta == 0.0 {
        return Rotation::identity();
    }
    let k = w / theta;
    let km = k.cross_matrix();
    let (s, c) = theta.sin_cos();
    Rotation {
        m: Matrix3::identity() + km * s + km * km * (1.0 - c),
    }
}

/// Principal logarithm as a rotation vector (norm in `[0, pi]`).
pub fn log_so3(r: &Rotation) -> Vector3<f64> {
    rotation_to_postel(r).vector()
}

/// Principal axis-angle of a rotation. Half turns get the axis sign whose
/// largest-magnitude component is positive; the identity gets axis `(1, 0, 0)`.
pub fn rotation_to_postel(r: &Rotation) -> AxisAngle {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(r.m);
    let q = UnitQuaternion::from_rotation_matrix(&rot).into_inner();
    let (w, mut v) = if q.w < 0.0 {
        (-q.w, -q.imag())
    } else {
        (q.w, q.imag())
    };
    let s = v.norm();
    if s == 0.0 {
        return AxisAngle {
            alpha: 0.0,
            axis: Vector3::x(),
        };
    }
    let alpha = 2.0 * s.atan2(w);
    v /= s;
    if PI - alpha < 1e-12 {
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v = -v;
        }
    }
    AxisAngle { alpha, axis: v }
}

/// Lifts a disc point to the axis-angle pair `(|d|, (d1, 0, d2) / |d|)`.
pub fn disc_lift(d: &DiscPoint) -> AxisAngle {
    let n = d.d.norm();
    if n == 0.0 {
        return AxisAngle {
            alpha: 0.0,
            axis: Vector3::x(),
        };
    }
    AxisAngle {
        alpha: n.min(PI),
        axis: Vector3::new(d.d.x / n, 0.0, d.d.y / n),
    }
}

/// Rotation about the Z axis.
pub fn z_rotation(theta: f64) -> Rotation {
    let (s, c) = theta.sin_cos();
    Rotation {
        m: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
    }
}

/// Angle of the relative rotation `aᵀb`, in `[0, pi]`.
///
/// Evaluated as `atan2(sin, cos)` of the relative rotation, which equals
/// `arccos((tr(aᵀb) - 1) / 2)` but stays accurate near 0 and pi.
pub fn geodesic_distance(a: &Rotation, b: &Rotation) -> f64 {
    let m = a.m.transpose() * b.m;
    let cos = 0.5 * (m.trace() - 1.0);
    let sin = 0.5
        * Vector3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        )
        .norm();
    sin.atan2(cos).clamp(0.0, PI)
}

/// Rotation minimising `sum |q_i - R p_i|^2` after removing both centroids,
/// via the unit-quaternion eigenvector method.
pub fn horn_align(p: &PointCloud, q: &PointCloud) -> Result<Rotation> {
    horn_align_points(p.points(), q.points())
}

pub fn horn_align_points(p: &[Vector3<f64>], q: &[Vector3<f64>]) -> Result<Rotation> {
    if p.len() != q.len() {
        return Err(Error::InvalidParameter(format!(
            "point counts differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    if p.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            found: p.len(),
        });
    }
    let n = p.len() as f64;
    let cp = p.iter().sum::<Vector3<f64>>() / n;
    let cq = q.iter().sum::<Vector3<f64>>() / n;
    let mut s = Matrix3::<f64>::zeros();
    for (a, b) in p.iter().zip(q) {
        s += (a - cp) * (b - cq).transpose();
    }
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    let nm = Matrix4::new(
        sxx + syy + szz,
        syz - szy,
        szx - sxz,
        sxy - syx,
        syz - szy,
        sxx - syy - szz,
        sxy + syx,
        szx + sxz,
        szx - sxz,
        sxy + syx,
        -sxx + syy - szz,
        syz + szy,
        sxy - syx,
        szx + sxz,
        syz + szy,
        -sxx - syy + szz,
    );
    let eig = nm.symmetric_eigen();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let (l0, l1) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    let scale = eig.eigenvalues.abs().max();
    if !(scale > 0.0) || l0 - l1 <= 1e-10 * scale {
        return Err(Error::DegenerateConfiguration(
            "cross-covariance is rank deficient".into(),
        ));
    }
    let v = eig.eigenvectors.column(order[0]);
    let quat = UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]));
    Ok(Rotation::from_quaternion(&quat))
}

/// Haar-uniform rotation from a normalised 4D Gaussian quaternion, deterministic in `seed`.
pub fn random_rotation(seed: u64) -> Rotation {
    random_rotation_with(&mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn random_rotation_with<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    loop {
        let w: f64 = rng.sample(StandardNormal);
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        let q = Quaternion::new(w, x, y, z);
        if q.norm() > 1e-9 {
            return Rotation::from_quaternion(&UnitQuaternion::from_quaternion(q));
        }
    }
}
