//! Global rotation search over the Postel disc.
//!
//! The query silhouette's area and aspect ratio select disc points from the
//! iso-contours of the precomputed fields. Every surviving disc point is swept
//! about the optical axis, filtered by silhouette extents, and the resulting
//! poses are ranked by Hausdorff distance. Tolerances are relaxed level by level
//! until a candidate falls below the acceptance threshold.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use fnv::FnvHashMap;
use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry2d::{
    convex_hull, extents, extents_of, hausdorff, polygon_centroid, Alpha, Point2,
    Silhouette,
};
use crate::projection::{silhouette_of, PointCloud, ProjectionMode};
use crate::rotations::{z_rotation, DiscPoint, RigidTransform, Rotation};
use crate::signatures::{
    contour_hits, disc_silhouette, signature_values, ContourSite, FieldKind, IsoContourSet,
    SignatureField,
};

/// Geometric relaxation of `(eps_cap, eps_z)` between retries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pyramid {
    pub levels: usize,
    pub factor: f64,
}

impl Default for Pyramid {
    fn default() -> Self {
        Self {
            levels: 4,
            factor: 1.6,
        }
    }
}

/// Search tolerances. `eps_xy` is relative to the largest PAL value, `eps_z` and
/// `eps_h` to the template's largest dimension; `eps_e` is absolute and
/// `eps_cap` is a distance on the disc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub eps_xy: f64,
    pub eps_z: f64,
    pub eps_e: f64,
    pub eps_cap: f64,
    pub eps_h: f64,
    pub n_z: usize,
    pub lambda_c: usize,
    pub pyramid: Pyramid,
    pub seed: u64,
    /// Use the aspect-ratio field to prune disc points.
    pub accelerate: bool,
    /// Widen the area band and de-bias the extents by the boundary noise
    /// estimated from the query (see [`boundary_noise`]).
    pub noise_compensation: bool,
    /// Relative uncertainty of the perspective depth prior. When positive, the
    /// area band covers depths within this fraction of the prior and each
    /// candidate is placed at the depth implied by its area ratio. Ignored in
    /// orthographic mode.
    pub depth_tolerance: f64,
    pub alpha: Alpha,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            eps_xy: 0.02,
            eps_z: 0.03,
            eps_e: 0.05,
            eps_cap: 0.08,
            eps_h: 0.02,
            n_z: 360,
            lambda_c: 128,
            pyramid: Pyramid::default(),
            seed: 0,
            accelerate: true,
            noise_compensation: true,
            depth_tolerance: 0.0,
            alpha: Alpha::default(),
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eps_xy", self.eps_xy),
            ("eps_z", self.eps_z),
            ("eps_e", self.eps_e),
            ("eps_cap", self.eps_cap),
            ("eps_h", self.eps_h),
            ("pyramid factor", self.pyramid.factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..0.5).contains(&self.depth_tolerance) {
            return Err(Error::InvalidParameter(format!(
                "depth_tolerance must be in [0, 0.5), got {}",
                self.depth_tolerance
            )));
        }
        if self.n_z < 4 {
            return Err(Error::InvalidParameter(format!("n_z must be at least 4, got {}", self.n_z)));
        }
        if self.lambda_c < 1 {
            return Err(Error::InvalidParameter("lambda_c must be at least 1".into()));
        }
        if self.pyramid.levels < 1 {
            return Err(Error::InvalidParameter("pyramid needs at least one level".into()));
        }
        Ok(())
    }

    /// `(eps_cap, eps_z)` at pyramid level `k`.
    pub fn level_tolerances(&self, k: usize) -> (f64, f64) {
        let f = self.pyramid.factor.powi(k as i32);
        (self.eps_cap * f, self.eps_z * f)
    }
}

/// Where a candidate came from: the disc point (by its index in the swept list) and the sweep angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateOrigin {
    pub disc: DiscPoint,
    pub disc_index: usize,
    pub theta: f64,
    pub theta_index: usize,
}

/// Pose hypothesis. `translation` has zero depth in orthographic mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
    /// Hausdorff distance to the query silhouette; infinite until evaluated.
    pub score: f64,
    pub origin: CandidateOrigin,
}

impl Candidate {
    pub fn pose(&self) -> RigidTransform {
        RigidTransform::new(self.rotation, self.translation)
    }
}

/// Counts for one pyramid level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagnostics {
    pub level: usize,
    pub eps_cap: f64,
    pub eps_z: f64,
    pub accelerated: bool,
    pub u_ae: usize,
    /// `|C|` before the candidate cap.
    pub candidates: usize,
    pub evaluated: usize,
    pub best_score: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub u_a: usize,
    pub u_e: usize,
    pub levels: Vec<LevelDiagnostics>,
    /// Not serialised and ignored by equality, so results stay comparable across runs.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl PartialEq for Diagnostics {
    fn eq(&self, other: &Self) -> bool {
        self.u_a == other.u_a && self.u_e == other.u_e && self.levels == other.levels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Candidate,
    /// Ascending by score, ties by provenance indices.
    pub candidates: Vec<Candidate>,
    pub pyramid_level_used: usize,
    pub diagnostics: Diagnostics,
}

/// Signatures of a rendered disc silhouette that the search reuses.
#[derive(Debug)]
struct View {
    area: f64,
    aspect: f64,
    centroid: Point2,
    hull: Vec<Point2>,
}

impl View {
    fn new(sil: &Silhouette) -> Self {
        let (area, aspect) = signature_values(sil);
        let centroid = polygon_centroid(sil);
        let hull = convex_hull(sil.points())
            .into_iter()
            .map(|i| sil.points()[i])
            .collect();
        Self {
            area,
            aspect,
            centroid,
            hull,
        }
    }
}

/// Disc silhouettes keyed by the bit pattern of the disc point. Views that
/// cannot be extracted are remembered as `None`.
struct ViewCache<'a> {
    q: &'a PointCloud,
    mode: ProjectionMode,
    alpha: Alpha,
    map: FnvHashMap<[u64; 2], Option<Arc<View>>>,
}

fn key(d: &DiscPoint) -> [u64; 2] {
    [d.d.x.to_bits(), d.d.y.to_bits()]
}

impl<'a> ViewCache<'a> {
    fn new(q: &'a PointCloud, mode: ProjectionMode, alpha: Alpha) -> Self {
        Self {
            q,
            mode,
            alpha,
            map: FnvHashMap::default(),
        }
    }

    fn views(&mut self, pts: &[DiscPoint]) -> Result<Vec<Option<Arc<View>>>> {
        let mut missing: Vec<DiscPoint> = Vec::new();
        let mut seen = FnvHashMap::default();
        for d in pts {
            if !self.map.contains_key(&key(d)) && seen.insert(key(d), ()).is_none() {
                missing.push(*d);
            }
        }
        let (q, mode, alpha) = (self.q, self.mode, self.alpha);
        let rendered: Vec<Result<Option<Arc<View>>>> = missing
            .par_iter()
            .map(|d| match disc_silhouette(q, d, &mode, alpha) {
                Ok(sil) => Ok(Some(Arc::new(View::new(&sil)))),
                Err(e) if is_view_failure(&e) => Ok(None),
                Err(e) => Err(e),
            })
            .collect();
        for (d, r) in missing.iter().zip(rendered) {
            self.map.insert(key(d), r?);
        }
        Ok(pts.iter().map(|d| self.map[&key(d)].clone()).collect())
    }
}

/// Errors that only rule out one pose rather than the whole query.
fn is_view_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateProjection
            | Error::DegenerateSilhouette { .. }
            | Error::PointBehindCamera { .. }
            | Error::InsufficientPoints { .. }
    )
}

/// Translation that moves the template's identity-pose silhouette centroid
/// onto the centroid of `g_star`. The depth component is zero for
/// orthographic mode and the prior depth for perspective mode, where the
/// image offset is scaled back to object units at that depth.
pub fn compute_translation(
    q: &PointCloud,
    g_star: &Silhouette,
    mode: &ProjectionMode,
    alpha: Alpha,
) -> Result<Vector3<f64>> {
    let base = disc_silhouette(q, &DiscPoint { d: Vector2::zeros() }, mode, alpha)?;
    Ok(lift_offset(
        polygon_centroid(g_star) - polygon_centroid(&base),
        mode,
    ))
}

fn lift_offset(offset: Vector2<f64>, mode: &ProjectionMode) -> Vector3<f64> {
    lift_scaled(offset, 1.0, mode)
}

/// Perspective placement at `depth / scale`, where the view appears `scale`
/// times as large as at the prior depth.
fn lift_scaled(offset: Vector2<f64>, scale: f64, mode: &ProjectionMode) -> Vector3<f64> {
    match mode {
        ProjectionMode::Orthographic => Vector3::new(offset.x, offset.y, 0.0),
        ProjectionMode::Perspective { depth, .. } => {
            let z = depth / scale;
            Vector3::new(offset.x * z, offset.y * z, z)
        }
    }
}

/// Contour seeds: points with the field value stored at grid nodes, `None`
/// for interpolated edge crossings.
struct Seeds {
    points: Vec<DiscPoint>,
    stored: Vec<Option<f64>>,
}

fn contour_seeds(field: &SignatureField, level: f64, tol: f64) -> Seeds {
    let hits = contour_hits(field, level);
    let g = &field.grid;
    let n = g.resolution();
    let mut touched = vec![false; n * n];
    let mut seeds = Seeds {
        points: Vec::with_capacity(hits.len()),
        stored: Vec::with_capacity(hits.len()),
    };
    for h in &hits {
        let stored = match h.site {
            ContourSite::Node(k) => {
                touched[k] = true;
                Some(level)
            }
            ContourSite::Edge(a, b) => {
                touched[a] = true;
                touched[b] = true;
                None
            }
        };
        seeds.points.push(h.point);
        seeds.stored.push(stored);
    }
    for j in 0..n {
        for i in 0..n {
            if touched[g.index(i, j)] || !g.node_in_masked_cell(i, j) {
                continue;
            }
            if let Some(v) = field.value(i, j) {
                if (v - level).abs() <= tol {
                    seeds.points.push(g.node_point(i, j));
                    seeds.stored.push(Some(v));
                }
            }
        }
    }
    seeds
}

/// Grid-level contour of `field` at `level`: marching-squares crossings, nodes
/// equal to the level, and nodes within `tol` of the level that no crossing touches.
pub fn contour_with_band(field: &SignatureField, level: f64, tol: f64) -> IsoContourSet {
    IsoContourSet {
        points: contour_seeds(field, level, tol).points,
    }
}

fn check_field(
    field: &SignatureField,
    kind: FieldKind,
    q: &PointCloud,
    mode: &ProjectionMode,
) -> Result<()> {
    if field.kind != kind {
        return Err(Error::InvalidParameter(format!(
            "expected a {kind:?} field, got {:?}",
            field.kind
        )));
    }
    let template = q.fingerprint();
    if field.meta.fingerprint != template || field.meta.point_count != q.len() {
        return Err(Error::FingerprintMismatch {
            field: field.meta.fingerprint,
            template,
        });
    }
    if field.meta.mode != *mode {
        return Err(Error::ModeMismatch(format!(
            "field precomputed for {:?}, query uses {:?}",
            field.meta.mode, mode
        )));
    }
    Ok(())
}

/// Keeps seeds whose true signature is within `tol` of `level`. Node values
/// come from the field, which holds exactly that signature; crossings are
/// rendered.
fn filter_by_signature(
    seeds: Seeds,
    cache: &mut ViewCache,
    kind: FieldKind,
    level: f64,
    tol: f64,
) -> Result<IsoContourSet> {
    let crossings: Vec<DiscPoint> = seeds
        .points
        .iter()
        .zip(&seeds.stored)
        .filter(|(_, s)| s.is_none())
        .map(|(d, _)| *d)
        .collect();
    let mut views = cache.views(&crossings)?.into_iter();
    let mut points = Vec::new();
    for (d, stored) in seeds.points.into_iter().zip(seeds.stored) {
        let value = match stored {
            Some(v) => Some(v),
            None => views.next().flatten().map(|v| match kind {
                FieldKind::Pal => v.area,
                FieldKind::Pearl => v.aspect,
            }),
        };
        if value.is_some_and(|v| (v - level).abs() <= tol) {
            points.push(d);
        }
    }
    Ok(IsoContourSet { points })
}

/// Disc points whose true silhouette area is within `tol` (absolute, in
/// squared silhouette units) of `area_star`, seeded from the PAL contour.
///
/// The field's own projection mode and the given `alpha` are used for re-evaluation.
pub fn area_candidates(
    q: &PointCloud,
    pal: &SignatureField,
    area_star: f64,
    tol: f64,
    alpha: Alpha,
) -> Result<IsoContourSet> {
    let mut cache = ViewCache::new(q, pal.meta.mode, alpha);
    area_candidates_cached(pal, area_star, tol, &mut cache)
}

fn area_candidates_cached(
    pal: &SignatureField,
    area_star: f64,
    tol: f64,
    cache: &mut ViewCache,
) -> Result<IsoContourSet> {
    let seeds = contour_seeds(pal, area_star, tol);
    let set = filter_by_signature(seeds, cache, FieldKind::Pal, area_star, tol)?;
    if set.is_empty() {
        return Err(Error::NoCandidates(format!(
            "no disc point matches area {area_star:.6e}"
        )));
    }
    Ok(set)
}

/// Disc points whose true fitted-ellipse aspect ratio is within `eps_e` of
/// `ar_star`, seeded from the PEARL contour.
pub fn ear_candidates(
    q: &PointCloud,
    pearl: &SignatureField,
    ar_star: f64,
    eps_e: f64,
    alpha: Alpha,
) -> Result<IsoContourSet> {
    let mut cache = ViewCache::new(q, pearl.meta.mode, alpha);
    let seeds = contour_seeds(pearl, ar_star, eps_e);
    let set = filter_by_signature(seeds, &mut cache, FieldKind::Pearl, ar_star, eps_e)?;
    if set.is_empty() {
        return Err(Error::NoCandidates(format!(
            "no disc point matches aspect ratio {ar_star:.6}"
        )));
    }
    Ok(set)
}

/// Points of `u_a` within `eps_cap` of some point of `u_e`. An empty `u_e`
/// leaves `u_a` unchanged.
pub fn intersect_candidates(u_a: &IsoContourSet, u_e: &IsoContourSet, eps_cap: f64) -> IsoContourSet {
    if u_e.is_empty() {
        return u_a.clone();
    }
    let r2 = eps_cap * eps_cap;
    IsoContourSet {
        points: u_a
            .points
            .iter()
            .filter(|a| u_e.points.iter().any(|e| (a.d - e.d).norm_squared() <= r2))
            .copied()
            .collect(),
    }
}

/// Mean per-side overshoot of the extents, in noise standard deviations, for
/// densely sampled outlines with isotropic vertex noise (measured on the
/// built-in templates at 1-4 % noise).
const EXTENT_OVERSHOOT: f64 = 1.4;

/// Robust estimate of the standard deviation of isotropic vertex noise.
///
/// Uses the median squared second difference `v_i - (v_{i-1} + v_{i+1}) / 2`,
/// whose noise part has per-axis variance `1.5 sigma^2`; its squared norm over
/// that variance is chi-squared with 2 degrees of freedom (median `2 ln 2`).
/// Clean dense outlines give a small floor set by the vertex spacing.
pub fn boundary_noise(sil: &Silhouette) -> f64 {
    let p = sil.points();
    let n = p.len();
    let mut d2: Vec<f64> = (0..n)
        .map(|i| {
            let mid = (p[(i + n - 1) % n].coords + p[(i + 1) % n].coords) * 0.5;
            (p[i].coords - mid).norm_squared()
        })
        .collect();
    let m = n / 2;
    let (_, median, _) = d2.select_nth_unstable_by(m, f64::total_cmp);
    (*median / (3.0 * std::f64::consts::LN_2)).sqrt()
}

/// Predicted standard deviation of the shoelace area of an `n`-vertex outline
/// with perimeter `perimeter` under isotropic vertex noise `sigma`. The
/// noise-by-edge terms contribute `sigma perimeter / sqrt(n)` for evenly spaced
/// vertices, the noise-by-noise terms `sigma^2 sqrt(n / 2)`; the two are uncorrelated.
pub fn area_noise(sigma: f64, n: usize, perimeter: f64) -> f64 {
    let n = n as f64;
    (sigma * sigma * (n / 2.0).sqrt()).hypot(sigma * perimeter / n.sqrt())
}

/// Silhouette-level facts about the query.
#[derive(Debug, Clone, Copy)]
struct Query {
    area: f64,
    aspect: f64,
    centroid: Point2,
    extents: (f64, f64),
    /// Extra area, extent and acceptance tolerances from boundary noise.
    area_slack: f64,
    extent_slack: f64,
    hausdorff_slack: f64,
    /// Zero unless the perspective depth prior is uncertain.
    depth_tolerance: f64,
}

impl Query {
    fn new(g: &Silhouette, compensate: bool) -> Self {
        let (area, aspect) = signature_values(g);
        let (mut lx, mut ly) = extents(g);
        let (mut area_slack, mut extent_slack, mut hausdorff_slack) = (0.0, 0.0, 0.0);
        if compensate {
            let sigma = boundary_noise(g);
            let hull: Vec<Point2> = convex_hull(g.points()).into_iter().map(|i| g.points()[i]).collect();
            let perimeter: f64 = (0..hull.len())
                .map(|i| (hull[(i + 1) % hull.len()] - hull[i]).norm())
                .sum();
            area_slack = 2.0 * area_noise(sigma, g.len(), perimeter);
            let shift = 2.0 * EXTENT_OVERSHOOT * sigma;
            lx = (lx - shift).max(0.0);
            ly = (ly - shift).max(0.0);
            extent_slack = 2.0 * sigma;
            // Expected largest of n half-normal vertex displacements.
            hausdorff_slack = sigma * (2.0 * (g.len() as f64).ln()).sqrt();
        }
        Self {
            area,
            aspect,
            centroid: polygon_centroid(g),
            extents: (lx, ly),
            area_slack,
            extent_slack,
            hausdorff_slack,
            depth_tolerance: 0.0,
        }
    }

    /// Image scale of the query relative to `view` rendered at the prior
    /// depth: the square root of the area ratio, clamped to the depth
    /// tolerance. Exactly 1 when the prior is trusted.
    fn scale_to(&self, view: &View) -> f64 {
        let d = self.depth_tolerance;
        if d == 0.0 {
            return 1.0;
        }
        (self.area / view.area).sqrt().clamp(1.0 / (1.0 + d), 1.0 / (1.0 - d))
    }

    /// Area range of disc views that can explain the query.
    fn area_band(&self) -> (f64, f64) {
        let d = self.depth_tolerance;
        (self.area * (1.0 - d).powi(2), self.area * (1.0 + d).powi(2))
    }
}

fn sweep_view(
    view: &View,
    d: DiscPoint,
    disc_index: usize,
    query: &Query,
    eps_z_abs: f64,
    n_z: usize,
    mode: &ProjectionMode,
) -> Vec<Candidate> {
    let base = d.rotation();
    let scale = query.scale_to(view);
    let mut out = Vec::new();
    let mut rotated = vec![Point2::origin(); view.hull.len()];
    for k in 0..n_z {
        let theta = 2.0 * PI * k as f64 / n_z as f64;
        let (s, c) = theta.sin_cos();
        for (dst, p) in rotated.iter_mut().zip(&view.hull) {
            *dst = Point2::new(c * p.x - s * p.y, s * p.x + c * p.y);
        }
        let (lx, ly) = extents_of(&rotated);
        let (lx, ly) = (lx * scale, ly * scale);
        let tol = eps_z_abs + query.extent_slack;
        if (lx - query.extents.0).abs() > tol || (ly - query.extents.1).abs() > tol {
            continue;
        }
        let cz = view.centroid;
        let moved = Vector2::new(c * cz.x - s * cz.y, s * cz.x + c * cz.y) * scale;
        out.push(Candidate {
            rotation: z_rotation(theta) * base,
            translation: lift_scaled(query.centroid.coords - moved, scale, mode),
            score: f64::INFINITY,
            origin: CandidateOrigin {
                disc: d,
                disc_index,
                theta,
                theta_index: k,
            },
        });
    }
    out
}

/// Rotations `M(theta_k) F(G(d))` for `theta_k = 2 pi k / n_z` whose silhouette
/// extents match those of `g_star` within `eps_z_abs` on both axes. Each
/// candidate carries the centroid-matching translation; scores are unset.
pub fn z_sweep(
    q: &PointCloud,
    d: &DiscPoint,
    g_star: &Silhouette,
    eps_z_abs: f64,
    n_z: usize,
    mode: &ProjectionMode,
    alpha: Alpha,
) -> Result<Vec<Candidate>> {
    let view = View::new(&disc_silhouette(q, d, mode, alpha)?);
    Ok(sweep_view(&view, *d, 0, &Query::new(g_star, false), eps_z_abs, n_z, mode))
}

/// Concatenates the per-disc-point lists and, if more than `lambda_c`
/// candidates remain, keeps a uniform random subset of that size in the original order.
pub fn assemble_candidates(per_d: Vec<Vec<Candidate>>, lambda_c: usize, seed: u64) -> Vec<Candidate> {
    let all: Vec<Candidate> = per_d.into_iter().flatten().collect();
    if all.len() <= lambda_c {
        return all;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = rand::seq::index::sample(&mut rng, all.len(), lambda_c).into_vec();
    keep.sort_unstable();
    keep.into_iter().map(|i| all[i]).collect()
}

fn rank(c: &mut [Candidate]) {
    c.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(a.origin.disc_index.cmp(&b.origin.disc_index))
            .then(a.origin.theta_index.cmp(&b.origin.theta_index))
    });
}

fn score_one(
    mut c: Candidate,
    q: &PointCloud,
    g_star: &Silhouette,
    target: Point2,
    mode: &ProjectionMode,
    alpha: Alpha,
    recentre: bool,
) -> Result<Option<Candidate>> {
    let render = |c: &Candidate| match silhouette_of(q, &c.pose(), mode, alpha) {
        Ok(s) => Ok(Some(s)),
        Err(e) if is_view_failure(&e) => Ok(None),
        Err(e) => Err(e),
    };
    let Some(mut sil) = render(&c)? else {
        return Ok(None);
    };
    if recentre {
        // Off-axis placement shifts the perspective centroid slightly; one
        // correction step at the candidate's depth absorbs it.
        let offset = target - polygon_centroid(&sil);
        c.translation.x += offset.x * c.translation.z;
        c.translation.y += offset.y * c.translation.z;
        match render(&c)? {
            Some(s) => sil = s,
            None => return Ok(None),
        }
    }
    c.score = hausdorff(&sil, g_star);
    Ok(Some(c))
}

/// Scores every candidate by the Hausdorff distance between its rendered
/// silhouette and `g_star`, drops candidates that cannot be rendered, and
/// sorts ascending with ties broken by `(disc_index, theta_index)`.
pub fn evaluate_candidates(
    candidates: &[Candidate],
    q: &PointCloud,
    g_star: &Silhouette,
    mode: &ProjectionMode,
    alpha: Alpha,
) -> Result<Vec<Candidate>> {
    evaluate(candidates, q, g_star, mode, alpha, false)
}

fn evaluate(
    candidates: &[Candidate],
    q: &PointCloud,
    g_star: &Silhouette,
    mode: &ProjectionMode,
    alpha: Alpha,
    recentre: bool,
) -> Result<Vec<Candidate>> {
    let target = polygon_centroid(g_star);
    let scored: Vec<Result<Option<Candidate>>> = candidates
        .par_iter()
        .map(|c| score_one(*c, q, g_star, target, mode, alpha, recentre))
        .collect();
    let mut out = Vec::with_capacity(scored.len());
    for s in scored {
        out.extend(s?);
    }
    rank(&mut out);
    Ok(out)
}

fn level_seed(seed: u64, level: usize) -> u64 {
    seed ^ (level as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// State shared by the pyramid levels of one query.
struct Search<'a> {
    q: &'a PointCloud,
    g_star: &'a Silhouette,
    params: &'a SearchParams,
    mode: ProjectionMode,
    query: Query,
    cache: ViewCache<'a>,
    u_a: IsoContourSet,
    u_e: Option<IsoContourSet>,
    eps_z_unit: f64,
}

impl<'a> Search<'a> {
    fn new(
        q: &'a PointCloud,
        pal: &SignatureField,
        pearl: Option<&SignatureField>,
        g_star: &'a Silhouette,
        params: &'a SearchParams,
        mode: &ProjectionMode,
    ) -> Result<Self> {
        params.validate()?;
        check_field(pal, FieldKind::Pal, q, mode)?;
        if let Some(p) = pearl {
            check_field(p, FieldKind::Pearl, q, mode)?;
            if p.grid != pal.grid {
                return Err(Error::InvalidParameter("PAL and PEARL grids differ".into()));
            }
        }
        let mut query = Query::new(g_star, params.noise_compensation);
        if mode.is_perspective() {
            query.depth_tolerance = params.depth_tolerance;
        }
        let mut cache = ViewCache::new(q, *mode, params.alpha);
        let (lo, hi) = query.area_band();
        let tol = 0.5 * (hi - lo) + params.eps_xy * pal.max() + query.area_slack;
        let u_a = area_candidates_cached(pal, 0.5 * (lo + hi), tol, &mut cache)?;
        let u_e = match pearl {
            Some(pearl) if params.accelerate => {
                // Only PEARL points that can pass the widest intersection are re-evaluated.
                let (widest, _) = params.level_tolerances(params.pyramid.levels - 1);
                let mut seeds = contour_seeds(pearl, query.aspect, params.eps_e);
                let r2 = widest * widest;
                let near: Vec<bool> = seeds
                    .points
                    .iter()
                    .map(|e| u_a.points.iter().any(|a| (a.d - e.d).norm_squared() <= r2))
                    .collect();
                let mut keep = near.iter();
                seeds.points.retain(|_| *keep.next().expect("same length"));
                let mut keep = near.iter();
                seeds.stored.retain(|_| *keep.next().expect("same length"));
                Some(filter_by_signature(
                    seeds,
                    &mut cache,
                    FieldKind::Pearl,
                    query.aspect,
                    params.eps_e,
                )?)
            }
            _ => None,
        };
        let eps_z_unit = q.largest_dimension() * mode.image_scale();
        Ok(Self {
            q,
            g_star,
            params,
            mode: *mode,
            query,
            cache,
            u_a,
            u_e,
            eps_z_unit,
        })
    }

    fn disc_points(&self, eps_cap: f64, accelerated: bool) -> IsoContourSet {
        match (&self.u_e, accelerated) {
            // An empty PEARL set gives no information; nothing is pruned.
            (Some(u_e), true) if !u_e.is_empty() => intersect_candidates(&self.u_a, u_e, eps_cap),
            _ => self.u_a.clone(),
        }
    }

    fn sweep(&mut self, pts: &IsoContourSet, eps_z: f64) -> Result<Vec<Vec<Candidate>>> {
        let views = self.cache.views(&pts.points)?;
        let eps_z_abs = eps_z * self.eps_z_unit;
        let (query, n_z, mode) = (self.query, self.params.n_z, self.mode);
        Ok(pts
            .points
            .par_iter()
            .zip(views.par_iter())
            .enumerate()
            .map(|(i, (d, v))| match v {
                Some(v) => sweep_view(v, *d, i, &query, eps_z_abs, n_z, &mode),
                None => Vec::new(),
            })
            .collect())
    }

    fn level(&mut self, level: usize, eps_cap: f64, eps_z: f64, accelerated: bool) -> Result<(LevelDiagnostics, Vec<Candidate>)> {
        let pts = self.disc_points(eps_cap, accelerated);
        let lists = self.sweep(&pts, eps_z)?;
        let total = lists.iter().map(Vec::len).sum();
        let chosen = assemble_candidates(lists, self.params.lambda_c, level_seed(self.params.seed, level));
        let ranked = evaluate(
            &chosen,
            self.q,
            self.g_star,
            &self.mode,
            self.params.alpha,
            self.mode.is_perspective(),
        )?;
        let diag = LevelDiagnostics {
            level,
            eps_cap,
            eps_z,
            accelerated,
            u_ae: pts.len(),
            candidates: total,
            evaluated: ranked.len(),
            best_score: ranked.first().map(|c| c.score),
        };
        Ok((diag, ranked))
    }
}

/// Full search: area and aspect-ratio contours, intersection, Z sweep, capped
/// assembly and Hausdorff ranking, retried with relaxed `(eps_cap, eps_z)` until
/// the best score is at most `eps_h` times the template's largest dimension (in
/// silhouette units). If the accelerated levels never reach that threshold, the
/// pyramid is replayed without the aspect-ratio pruning, exactly as a search
/// with `accelerate = false` would run it (those levels are numbered from
/// `pyramid.levels`). The best ranking over all levels is returned.
pub fn estimate_pose(
    q: &PointCloud,
    pal: &SignatureField,
    pearl: Option<&SignatureField>,
    g_star: &Silhouette,
    params: &SearchParams,
    mode: &ProjectionMode,
) -> Result<SearchResult> {
    let start = Instant::now();
    let mut search = Search::new(q, pal, pearl, g_star, params, mode)?;
    let accept = params.eps_h * search.eps_z_unit + search.query.hausdorff_slack;
    let accelerated = search.u_e.is_some();
    let mut schedule: Vec<(usize, f64, f64, bool)> = (0..params.pyramid.levels)
        .map(|k| {
            let (c, z) = params.level_tolerances(k);
            (k, c, z, accelerated)
        })
        .collect();
    if accelerated {
        schedule.extend((0..params.pyramid.levels).map(|k| {
            let (c, z) = params.level_tolerances(k);
            (k, c, z, false)
        }));
    }
    let mut levels = Vec::new();
    let mut best: Option<(usize, Vec<Candidate>)> = None;
    for (k, eps_cap, eps_z, acc) in schedule {
        let (mut diag, ranked) = search.level(k, eps_cap, eps_z, acc)?;
        if accelerated && !acc {
            diag.level += params.pyramid.levels;
        }
        let number = diag.level;
        levels.push(diag);
        if let Some(top) = ranked.first() {
            let improves = best
                .as_ref()
                .is_none_or(|(_, b)| top.score < b[0].score);
            if improves {
                best = Some((number, ranked));
            }
        }
        if best.as_ref().is_some_and(|(_, b)| b[0].score <= accept) {
            break;
        }
    }
    let diagnostics = Diagnostics {
        u_a: search.u_a.len(),
        u_e: search.u_e.as_ref().map_or(0, IsoContourSet::len),
        levels,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let Some((level, candidates)) = best else {
        return Err(Error::NoCandidates(format!(
            "no candidate survived any pyramid level ({} disc points matched the area)",
            diagnostics.u_a
        )));
    };
    Ok(SearchResult {
        best: candidates[0],
        candidates,
        pyramid_level_used: level,
        diagnostics,
    })
}

/// `|C|` at the first pyramid level, before the candidate cap.
pub fn count_candidates(
    q: &PointCloud,
    pal: &SignatureField,
    pearl: Option<&SignatureField>,
    g_star: &Silhouette,
    params: &SearchParams,
    mode: &ProjectionMode,
) -> Result<usize> {
    let mut search = Search::new(q, pal, pearl, g_star, params, mode)?;
    let (eps_cap, eps_z) = params.level_tolerances(0);
    let pts = search.disc_points(eps_cap, search.u_e.is_some());
    Ok(search.sweep(&pts, eps_z)?.iter().map(Vec::len).sum())
}
