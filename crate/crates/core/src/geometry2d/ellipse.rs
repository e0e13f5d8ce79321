use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{Point2, Silhouette};
use crate::error::{Error, Result};

/// Ellipse in centre / semi-axes / orientation form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: Point2,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Direction of the major axis, in `(-pi/2, pi/2]`.
    pub angle: f64,
}

impl Ellipse {
    /// `semi_major / semi_minor`, always `>= 1`.
    pub fn aspect_ratio(&self) -> f64 {
        self.semi_major / self.semi_minor
    }

    /// Point at parameter `t` on the ellipse.
    pub fn point_at(&self, t: f64) -> Point2 {
        let (s, c) = self.angle.sin_cos();
        let (x, y) = (self.semi_major * t.cos(), self.semi_minor * t.sin());
        Point2::new(self.center.x + c * x - s * y, self.center.y + s * x + c * y)
    }
}

/// Direct least-squares ellipse fit to the silhouette vertices.
///
/// Minimises the algebraic distance subject to `4ac - b^2 = 1`, which forces
/// an ellipse. Uses the numerically stable block decomposition of the
/// scatter matrix, on coordinates normalised to zero mean and unit RMS radius.
pub fn fit_ellipse(sil: &Silhouette) -> Result<Ellipse> {
    fit_points(sil.points())
}

pub(crate) fn fit_points(pts: &[Point2]) -> Result<Ellipse> {
    if pts.len() < 5 {
        return Err(Error::EllipseFitFailure(format!(
            "need at least 5 points, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mean = pts.iter().fold(Vector2::zeros(), |a, p| a + p.coords) / n;
    let rms = (pts.iter().map(|p| (p.coords - mean).norm_squared()).sum::<f64>() / n).sqrt();
    if !(rms > 0.0 && rms.is_finite()) {
        return Err(Error::EllipseFitFailure("points coincide".into()));
    }
    let k = 1.0 / rms;

    let mut s1 = Matrix3::<f64>::zeros();
    let mut s2 = Matrix3::<f64>::zeros();
    let mut s3 = Matrix3::<f64>::zeros();
    for p in pts {
        let x = (p.x - mean.x) * k;
        let y = (p.y - mean.y) * k;
        let d1 = Vector3::new(x * x, x * y, y * y);
        let d2 = Vector3::new(x, y, 1.0);
        s1 += d1 * d1.transpose();
        s2 += d1 * d2.transpose();
        s3 += d2 * d2.transpose();
    }
    let spread = s3.symmetric_eigen().eigenvalues;
    if spread.min() <= 1e-10 * spread.max() {
        return Err(Error::EllipseFitFailure("points are collinear".into()));
    }
    let s3_inv = s3
        .try_inverse()
        .ok_or_else(|| Error::EllipseFitFailure("points are collinear".into()))?;
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    // Premultiply by the inverse of the constraint block [[0,0,2],[0,-1,0],[2,0,0]].
    let mc = Matrix3::from_rows(&[
        m.row(2) * 0.5,
        -m.row(1),
        m.row(0) * 0.5,
    ]);

    let mut best: Option<(f64, Vector3<f64>)> = None;
    for ev in mc.complex_eigenvalues().iter() {
        if ev.im.abs() > 1e-9 * (1.0 + ev.re.abs()) {
            continue;
        }
        let shifted = mc - Matrix3::identity() * ev.re;
        let svd = shifted.svd(false, true);
        let v_t = match svd.v_t {
            Some(v) => v,
            None => continue,
        };
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("three singular values");
        let a1: Vector3<f64> = v_t.row(imin).transpose();
        let cond = 4.0 * a1[0] * a1[2] - a1[1] * a1[1];
        if cond > 0.0 && best.as_ref().is_none_or(|(c, _)| cond > *c) {
            best = Some((cond, a1));
        }
    }
    let (_, a1) =
        best.ok_or_else(|| Error::EllipseFitFailure("no elliptic eigenvector".into()))?;
    let a2 = t * a1;
    let conic = [a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]];
    let e = conic_to_ellipse(conic)?;
    Ok(Ellipse {
        center: Point2::new(e.center.x * rms + mean.x, e.center.y * rms + mean.y),
        semi_major: e.semi_major * rms,
        semi_minor: e.semi_minor * rms,
        angle: e.angle,
    })
}

/// Converts `A x^2 + B xy + C y^2 + D x + E y + F = 0` to geometric form.
fn conic_to_ellipse([a, b, c, d, e, f]: [f64; 6]) -> Result<Ellipse> {
    let q = Matrix2::new(2.0 * a, b, b, 2.0 * c);
    let centre = q
        .try_inverse()
        .ok_or_else(|| Error::EllipseFitFailure("conic has no centre".into()))?
        * Vector2::new(-d, -e);
    let fc = f + 0.5 * (d * centre.x + e * centre.y);
    let eig = Matrix2::new(a, 0.5 * b, 0.5 * b, c).symmetric_eigen();
    let (l0, l1) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    let r0 = -fc / l0;
    let r1 = -fc / l1;
    if !(r0 > 0.0 && r1 > 0.0 && r0.is_finite() && r1.is_finite()) {
        return Err(Error::EllipseFitFailure("conic is not a real ellipse".into()));
    }
    let (major, minor, axis) = if r0 >= r1 {
        (r0.sqrt(), r1.sqrt(), eig.eigenvectors.column(0).into_owned())
    } else {
        (r1.sqrt(), r0.sqrt(), eig.eigenvectors.column(1).into_owned())
    };
    let mut angle = axis[1].atan2(axis[0]);
    if angle <= -std::f64::consts::FRAC_PI_2 {
        angle += std::f64::consts::PI;
    } else if angle > std::f64::consts::FRAC_PI_2 {
        angle -= std::f64::consts::PI;
    }
    Ok(Ellipse {
        center: Point2::new(centre.x, centre.y),
        semi_major: major,
        semi_minor: minor,
        angle,
    })
}
