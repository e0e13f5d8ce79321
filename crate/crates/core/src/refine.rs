//! Local pose polishing on SE(3).
//!
//! The template silhouette is re-extracted at every evaluated pose; gradients
//! hold the current boundary vertices fixed and move only those. Steps are
//! taken in a 6-dimensional tangent space (rotation vector in radians, then
//! translation in units of the template's largest dimension) and mapped back
//! with `R exp(w)`, `t + ld * tau`. The optimiser minimises a smooth surrogate
//! (symmetric mean squared nearest-vertex distance); the Hausdorff distance
//! decides which visited pose is returned.

use nalgebra::{SMatrix, SVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use fnv::FnvHashMap;

use crate::geometry2d::{extract_silhouette_with, hausdorff, Alpha, Point2, PointGrid, Silhouette};
use crate::projection::{silhouette_of, PointCloud, ProjectionMode};
use crate::rotations::{exp_so3, RigidTransform};

/// Tangent vector: rotation (radians) then translation (fractions of the largest dimension).
pub type Vec6 = SVector<f64, 6>;
type Mat6 = SMatrix<f64, 6, 6>;

/// Length of the first, gradient-direction step in tangent units.
const FIRST_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineParams {
    pub max_iterations: usize,
    /// Stop once a proposed tangent step is shorter than this.
    pub step_tolerance: f64,
    /// Stop once an accepted step lowers the surrogate by less than this fraction.
    pub cost_tolerance: f64,
    /// Central-difference step: radians for rotation, fraction of the largest dimension for translation.
    pub finite_difference_scale: f64,
    /// Initial step multiplier; doubled (up to 1) on success, halved on failure.
    pub damping_init: f64,
    /// Let the perspective depth move. Off by default: the depth prior is an
    /// input, and silhouettes constrain depth only weakly.
    pub refine_depth: bool,
    pub alpha: Alpha,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            step_tolerance: 1e-6,
            cost_tolerance: 1e-9,
            finite_difference_scale: 1e-4,
            damping_init: 1.0,
            refine_depth: false,
            alpha: Alpha::default(),
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step_tolerance", self.step_tolerance),
            ("cost_tolerance", self.cost_tolerance),
            ("finite_difference_scale", self.finite_difference_scale),
            ("damping_init", self.damping_init),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    /// Visited pose with the lowest Hausdorff distance.
    pub pose: RigidTransform,
    pub hausdorff: f64,
    pub initial_hausdorff: f64,
    pub iterations: usize,
}

/// Symmetric mean squared nearest-vertex distance between two point sets.
pub fn surrogate_cost(a: &[Point2], grid_a: &PointGrid, b: &[Point2], grid_b: &PointGrid) -> f64 {
    let one_way = |from: &[Point2], to: &[Point2], grid: &PointGrid| {
        from.iter().map(|p| grid.nearest_sq(to, p, None)).sum::<f64>() / from.len() as f64
    };
    0.5 * (one_way(a, b, grid_b) + one_way(b, a, grid_a))
}

fn grid_for(points: &[Point2]) -> PointGrid {
    let n = points.len();
    let perimeter: f64 = (0..n).map(|i| (points[(i + 1) % n] - points[i]).norm()).sum();
    PointGrid::new(points, (perimeter / n as f64).max(f64::MIN_POSITIVE))
}

/// Maps a tangent vector at `pose` back onto SE(3).
pub fn retract(pose: &RigidTransform, x: &Vec6, ld: f64) -> RigidTransform {
    let w = Vector3::new(x[0], x[1], x[2]);
    let tau = Vector3::new(x[3], x[4], x[5]);
    RigidTransform::new(pose.r.compose(&exp_so3(&w)), pose.t + tau * ld)
}

/// Everything the cost needs that does not depend on the pose.
pub struct Objective<'a> {
    q: &'a PointCloud,
    target: &'a Silhouette,
    target_grid: PointGrid,
    mode: ProjectionMode,
    alpha: Alpha,
    ld: f64,
    dims: usize,
}

impl<'a> Objective<'a> {
    /// Also differentiate along depth (perspective mode only).
    pub fn with_depth(mut self) -> Self {
        if self.mode.is_perspective() {
            self.dims = 6;
        }
        self
    }

    pub fn new(q: &'a PointCloud, target: &'a Silhouette, mode: &ProjectionMode, alpha: Alpha) -> Self {
        Self {
            q,
            target,
            target_grid: grid_for(target.points()),
            mode: *mode,
            alpha,
            ld: q.largest_dimension(),
            dims: 5,
        }
    }

    fn render(&self, pose: &RigidTransform) -> Result<Option<Silhouette>> {
        match silhouette_of(self.q, pose, &self.mode, self.alpha) {
            Ok(s) => Ok(Some(s)),
            Err(
                Error::DegenerateProjection
                | Error::DegenerateSilhouette { .. }
                | Error::PointBehindCamera { .. },
            ) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn project(&self, pose: &RigidTransform, p: &Vector3<f64>) -> Option<Point2> {
        let v = pose.apply(p);
        match self.mode {
            ProjectionMode::Orthographic => Some(Point2::new(v.x, v.y)),
            ProjectionMode::Perspective { .. } => (v.z > self.mode.z_min()).then(|| Point2::new(v.x / v.z, v.y / v.z)),
        }
    }

    /// Indices of the template points that are silhouette vertices at `pose`.
    fn boundary(&self, pose: &RigidTransform) -> Result<Option<Vec<usize>>> {
        let Some(pts) = self.q.points().iter().map(|p| self.project(pose, p)).collect::<Option<Vec<_>>>() else {
            return Ok(None);
        };
        let sil = match extract_silhouette_with(&pts, self.alpha) {
            Ok(s) => s,
            Err(Error::DegenerateProjection | Error::DegenerateSilhouette { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let key = |p: &Point2| [p.x.to_bits(), p.y.to_bits()];
        let index: FnvHashMap<[u64; 2], usize> = pts.iter().enumerate().map(|(i, p)| (key(p), i)).collect();
        Ok(Some(sil.points().iter().map(|p| index[&key(p)]).collect()))
    }

    fn frozen_cost(&self, pose: &RigidTransform, boundary: &[usize]) -> f64 {
        let Some(pts) = boundary
            .iter()
            .map(|&i| self.project(pose, &self.q.points()[i]))
            .collect::<Option<Vec<_>>>()
        else {
            return f64::INFINITY;
        };
        surrogate_cost(&pts, &grid_for(&pts), self.target.points(), &self.target_grid)
    }

    fn cost_of(&self, sil: &Silhouette) -> f64 {
        let pts = sil.points();
        surrogate_cost(pts, &grid_for(pts), self.target.points(), &self.target_grid)
    }

    /// Surrogate cost at `pose`; infinite where no silhouette can be formed.
    pub fn cost(&self, pose: &RigidTransform) -> Result<f64> {
        Ok(self.render(pose)?.map_or(f64::INFINITY, |s| self.cost_of(&s)))
    }

    /// Central-difference gradient in tangent coordinates at `pose`, with the
    /// silhouette vertex set of `pose` held fixed. The depth coordinate is left
    /// at zero unless enabled with [`Objective::with_depth`].
    pub fn gradient(&self, pose: &RigidTransform, h: f64) -> Result<Vec6> {
        let dims = self.dims;
        let Some(boundary) = self.boundary(pose)? else {
            return Ok(Vec6::zeros());
        };
        let evals: Vec<f64> = (0..2 * dims)
            .into_par_iter()
            .map(|k| {
                let mut x = Vec6::zeros();
                x[k / 2] = if k % 2 == 0 { h } else { -h };
                self.frozen_cost(&retract(pose, &x, self.ld), &boundary)
            })
            .collect();
        let mut g = Vec6::zeros();
        for i in 0..dims {
            let (plus, minus) = (evals[2 * i], evals[2 * i + 1]);
            g[i] = if plus.is_finite() && minus.is_finite() {
                (plus - minus) / (2.0 * h)
            } else {
                0.0
            };
        }
        Ok(g)
    }
}

/// Damped quasi-Newton descent of the surrogate cost from `init`.
///
/// Only steps that lower the surrogate are taken. The returned pose is the
/// visited pose with the smallest Hausdorff distance to `g_star`, so it is never
/// worse than `init` on that measure.
pub fn refine_pose(
    q: &PointCloud,
    g_star: &Silhouette,
    init: &RigidTransform,
    params: &RefineParams,
    mode: &ProjectionMode,
) -> Result<Refinement> {
    params.validate()?;
    let mut obj = Objective::new(q, g_star, mode, params.alpha);
    if params.refine_depth {
        obj = obj.with_depth();
    }
    let Some(sil0) = obj.render(init)? else {
        return Err(Error::DegenerateProjection);
    };
    let initial_hausdorff = hausdorff(&sil0, g_star);
    let mut best = (*init, initial_hausdorff);
    let mut pose = *init;
    let mut cost = obj.cost_of(&sil0);
    let h = params.finite_difference_scale;
    let mut grad = obj.gradient(&pose, h)?;
    let mut inv_hessian = Mat6::identity();
    let mut damping = params.damping_init;
    let mut first = true;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let direction = if first {
            let n = grad.norm();
            if n == 0.0 {
                break;
            }
            -grad * (FIRST_STEP / n)
        } else {
            -(inv_hessian * grad)
        };
        let step = direction * damping;
        if step.norm() < params.step_tolerance {
            break;
        }
        let trial = retract(&pose, &step, obj.ld);
        let Some(sil) = obj.render(&trial)? else {
            damping *= 0.5;
            continue;
        };
        let trial_cost = obj.cost_of(&sil);
        if !(trial_cost < cost) {
            damping *= 0.5;
            continue;
        }
        let hd = hausdorff(&sil, g_star);
        if hd < best.1 {
            best = (trial, hd);
        }
        let decrease = (cost - trial_cost) / cost;
        let new_grad = obj.gradient(&trial, h)?;
        let y = new_grad - grad;
        let sy = step.dot(&y);
        if sy > 1e-300 {
            if first {
                // Scale the initial inverse Hessian to the observed curvature.
                inv_hessian = Mat6::identity() * (sy / y.norm_squared());
            }
            let rho = 1.0 / sy;
            let a = Mat6::identity() - step * y.transpose() * rho;
            inv_hessian = a * inv_hessian * a.transpose() + step * step.transpose() * rho;
        }
        first = false;
        pose = trial;
        cost = trial_cost;
        grad = new_grad;
        damping = (damping * 2.0).min(1.0);
        if decrease < params.cost_tolerance {
            break;
        }
    }
    Ok(Refinement {
        pose: best.0,
        hausdorff: best.1,
        initial_hausdorff,
        iterations,
    })
}
