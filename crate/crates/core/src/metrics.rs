//! Pose error metrics: orientation (OE), translation (TE) and point RMSE.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::projection::{transform, PointCloud};
use crate::rotations::{horn_align, RigidTransform, Rotation};

/// Success thresholds for the noise study.
pub const SUCCESS_OE_DEG: f64 = 6.0;
pub const SUCCESS_TE_PCT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    /// Mean absolute intrinsic XYZ Euler angle of the residual rotation, degrees.
    pub oe: f64,
    pub te: f64,
    pub te_pct: f64,
    pub rmse: f64,
    pub rmse_pct: f64,
}

/// Mean absolute XYZ Euler angle (degrees) of the rotation that best aligns the
/// estimate-posed cloud onto the ground-truth-posed cloud.
pub fn orientation_error(
    q: &PointCloud,
    pose_gt: &RigidTransform,
    pose_est: &RigidTransform,
) -> Result<f64> {
    let gt = transform(q, pose_gt);
    let est = transform(q, pose_est);
    let r = horn_align(&est, &gt)?;
    Ok(mean_abs_euler_deg(&r))
}

/// Mean absolute intrinsic XYZ Euler angle of `r`, in degrees.
pub fn mean_abs_euler_deg(r: &Rotation) -> f64 {
    let (a, b, c) = r.to_euler_xyz();
    (a.abs() + b.abs() + c.abs()).to_degrees() / 3.0
}

/// Smallest orientation error over ground-truth poses related by the given symmetry group
/// (object-frame rotations). An empty group means the raw error.
pub fn orientation_error_sym(
    q: &PointCloud,
    pose_gt: &RigidTransform,
    pose_est: &RigidTransform,
    group: &[Rotation],
) -> Result<f64> {
    let mut best = orientation_error(q, pose_gt, pose_est)?;
    for g in group {
        let alt = RigidTransform::new(pose_gt.r * *g, pose_gt.t);
        best = best.min(orientation_error(q, &alt, pose_est)?);
    }
    Ok(best)
}

/// `(|t_gt - t_est|, percent of ld)`.
pub fn translation_error(t_gt: &Vector3<f64>, t_est: &Vector3<f64>, ld: f64) -> (f64, f64) {
    let e = (t_gt - t_est).norm();
    (e, 100.0 * e / ld)
}

/// Root mean squared distance between corresponding points of the two posed clouds.
pub fn rmse(q: &PointCloud, pose_gt: &RigidTransform, pose_est: &RigidTransform, ld: f64) -> (f64, f64) {
    let n = q.len() as f64;
    let sum: f64 = q
        .points()
        .iter()
        .map(|p| (pose_gt.apply(p) - pose_est.apply(p)).norm_squared())
        .sum();
    let e = (sum / n).sqrt();
    (e, 100.0 * e / ld)
}

pub fn pose_error(
    q: &PointCloud,
    pose_gt: &RigidTransform,
    pose_est: &RigidTransform,
    ld: f64,
) -> Result<PoseError> {
    pose_error_sym(q, pose_gt, pose_est, ld, &[])
}

pub fn pose_error_sym(
    q: &PointCloud,
    pose_gt: &RigidTransform,
    pose_est: &RigidTransform,
    ld: f64,
    group: &[Rotation],
) -> Result<PoseError> {
    let oe = orientation_error_sym(q, pose_gt, pose_est, group)?;
    let (te, te_pct) = translation_error(&pose_gt.t, &pose_est.t, ld);
    let (rmse, rmse_pct) = rmse(q, pose_gt, pose_est, ld);
    Ok(PoseError {
        oe,
        te,
        te_pct,
        rmse,
        rmse_pct,
    })
}

/// `OE <= 6°` and `TE <= 2 %` of the largest dimension.
pub fn is_success(err: &PoseError) -> bool {
    err.oe <= SUCCESS_OE_DEG && err.te_pct <= SUCCESS_TE_PCT
}
