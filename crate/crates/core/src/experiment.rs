//! Synthetic trials: random poses, rendered (optionally noisy) query
//! silhouettes, search plus refinement, and error reports.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry2d::{Point2, Silhouette};
use crate::io::{Report, TrialRecord};
use crate::metrics::{is_success, pose_error_sym, PoseError};
use crate::projection::{silhouette_of, PointCloud, ProjectionMode};
use crate::refine::{refine_pose, RefineParams};
use crate::rotations::{random_rotation_with, RigidTransform, Rotation};
use crate::search::{compute_translation, estimate_pose, SearchParams, SearchResult};
use crate::signatures::SignatureField;

/// Named boundary-noise levels as fractions of the largest dimension.
pub fn noise_level(name: &str) -> Option<f64> {
    match name {
        "none" => Some(0.0),
        "low" => Some(0.01),
        "med" | "medium" => Some(0.02),
        "high" => Some(0.04),
        _ => None,
    }
}

/// Adds isotropic Gaussian noise of standard deviation `sigma` to every vertex.
/// A zero `sigma` returns the input unchanged.
pub fn add_boundary_noise(sil: &Silhouette, sigma: f64, seed: u64) -> Result<Silhouette> {
    if sigma == 0.0 {
        return Ok(sil.clone());
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidParameter(format!("noise sigma {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = sil
        .points()
        .iter()
        .map(|p| Point2::new(p.x + normal.sample(&mut rng), p.y + normal.sample(&mut rng)))
        .collect();
    Silhouette::new(pts)
}

/// Random ground-truth pose. Orthographic poses shift in-plane by up to half
/// the largest dimension; perspective poses sit at `depth_scale` times the
/// prior depth and shift laterally by up to a tenth of it.
pub fn random_pose(seed: u64, mode: &ProjectionMode, ld: f64, depth_scale: f64) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = random_rotation_with(&mut rng);
    let mut u = || rng.random_range(-1.0..1.0);
    let t = match mode {
        ProjectionMode::Orthographic => Vector3::new(0.5 * ld * u(), 0.5 * ld * u(), 0.0),
        ProjectionMode::Perspective { depth, .. } => {
            let z = depth * depth_scale;
            Vector3::new(0.1 * z * u(), 0.1 * z * u(), z)
        }
    };
    RigidTransform::new(r, t)
}

/// Fixed inputs of a benchmark run.
pub struct Bench<'a> {
    pub q: &'a PointCloud,
    pub pal: &'a SignatureField,
    pub pearl: Option<&'a SignatureField>,
    pub mode: ProjectionMode,
    pub search: SearchParams,
    /// `None` skips refinement.
    pub refine: Option<RefineParams>,
    /// Noise standard deviation as a fraction of the largest dimension.
    pub noise: f64,
    /// Ground-truth depth relative to the prior (perspective only).
    pub depth_scale: f64,
    /// Also test whether any of the best `top_k` candidates succeeds.
    pub top_k: Option<usize>,
    /// Equivalent ground-truth rotations for symmetric templates.
    pub symmetry: Vec<Rotation>,
    pub seed: u64,
}

/// Everything produced by one trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub truth: RigidTransform,
    pub estimate: RigidTransform,
    /// `None` when no candidate survived; the estimate is then the identity
    /// rotation placed on the query centroid.
    pub search: Option<SearchResult>,
    pub query: Silhouette,
}

fn trial_seed(seed: u64, trial: usize, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(2 * trial as u128);
    rng.random()
}

impl Bench<'_> {
    pub fn ld(&self) -> f64 {
        self.q.largest_dimension()
    }

    /// Ground-truth pose and query silhouette of trial `i`.
    pub fn query(&self, i: usize) -> Result<(RigidTransform, Silhouette)> {
        let truth = random_pose(trial_seed(self.seed, i, 1), &self.mode, self.ld(), self.depth_scale);
        let clean = silhouette_of(self.q, &truth, &self.mode, self.search.alpha)?;
        let sigma = self.noise * self.ld() * self.mode.image_scale();
        let noisy = add_boundary_noise(&clean, sigma, trial_seed(self.seed, i, 2))?;
        Ok((truth, noisy))
    }

    fn polish(&self, g: &Silhouette, init: &RigidTransform) -> Result<RigidTransform> {
        match &self.refine {
            Some(p) => Ok(refine_pose(self.q, g, init, p, &self.mode)?.pose),
            None => Ok(*init),
        }
    }

    fn error(&self, truth: &RigidTransform, est: &RigidTransform) -> Result<PoseError> {
        pose_error_sym(self.q, truth, est, self.ld(), &self.symmetry)
    }

    pub fn trial(&self, i: usize) -> Result<TrialOutcome> {
        let (truth, query) = self.query(i)?;
        let mut params = self.search;
        params.seed = trial_seed(self.seed, i, 3);
        let search = match estimate_pose(self.q, self.pal, self.pearl, &query, &params, &self.mode) {
            Ok(r) => Some(r),
            Err(Error::NoCandidates(_)) => None,
            Err(e) => return Err(e),
        };
        let estimate = match &search {
            Some(r) => self.polish(&query, &r.best.pose())?,
            None => RigidTransform::new(
                Rotation::identity(),
                compute_translation(self.q, &query, &self.mode, self.search.alpha)?,
            ),
        };
        let error = self.error(&truth, &estimate)?;
        let success = search.is_some() && is_success(&error);
        let top_k_success = match self.top_k {
            None => None,
            Some(k) => {
                let mut any = success;
                let ranked = search.iter().flat_map(|r| r.candidates.iter().take(k).skip(1));
                for c in ranked {
                    if any {
                        break;
                    }
                    let est = self.polish(&query, &c.pose())?;
                    any = is_success(&self.error(&truth, &est)?);
                }
                Some(any)
            }
        };
        let record = TrialRecord {
            trial: i,
            error,
            success,
            top_k_success,
            candidates: search
                .as_ref()
                .and_then(|r| r.diagnostics.levels.first())
                .map_or(0, |l| l.candidates),
            pyramid_level: search.as_ref().map_or(0, |r| r.pyramid_level_used),
        };
        Ok(TrialOutcome {
            record,
            truth,
            estimate,
            search,
            query,
        })
    }

    /// Runs `trials` trials in order. Trials without candidates count as failures.
    pub fn run(&self, label: &str, trials: usize) -> Result<Report> {
        let records = (0..trials)
            .map(|i| self.trial(i).map(|o| o.record))
            .collect::<Result<Vec<_>>>()?;
        Ok(Report::new(label, records))
    }
}

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
