use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;
use silpose::experiment::{add_boundary_noise, random_pose};
use silpose::geometry2d::{hausdorff, polygon_area, polygon_centroid, Alpha, Point2, Silhouette};
use silpose::metrics::pose_error;
use silpose::projection::{sample_mesh, silhouette_of, CameraIntrinsics, PointCloud, ProjectionMode};
use silpose::rotations::{geodesic_distance, random_rotation, DiscPoint, RigidTransform, Rotation};
use silpose::search::*;
use silpose::signatures::{disc_silhouette, precompute_fields, DiscGrid, IsoContourSet, SignatureField};
use silpose::{shapes, Error};

const ORTHO: ProjectionMode = ProjectionMode::Orthographic;

struct Template {
    q: PointCloud,
    pal: SignatureField,
    pearl: SignatureField,
}

impl Template {
    fn new(mesh: silpose::projection::TriangleMesh, m: usize, n: usize, mode: ProjectionMode) -> Self {
        let q = sample_mesh(&mesh, m, 1).unwrap();
        let (pal, pearl) = precompute_fields(&q, &DiscGrid::new(n).unwrap(), &mode, Alpha::default(), 0).unwrap();
        Self { q, pal, pearl }
    }

    fn render(&self, pose: &RigidTransform) -> Silhouette {
        silhouette_of(&self.q, pose, &self.pal.meta.mode, Alpha::default()).unwrap()
    }
}

fn lprism() -> &'static Template {
    static T: OnceLock<Template> = OnceLock::new();
    T.get_or_init(|| Template::new(shapes::l_prism(), 10_000, 48, ORTHO))
}

fn sphere() -> &'static Template {
    static T: OnceLock<Template> = OnceLock::new();
    T.get_or_init(|| Template::new(shapes::unit_sphere(), 10_000, 16, ORTHO))
}

fn slab() -> &'static Template {
    static T: OnceLock<Template> = OnceLock::new();
    T.get_or_init(|| Template::new(shapes::elongated_box(), 10_000, 24, ORTHO))
}

fn circle(n: usize, r: f64) -> Silhouette {
    Silhouette::new(
        (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                Point2::new(r * t.cos(), r * t.sin())
            })
            .collect(),
    )
    .unwrap()
}

fn set(points: &[(f64, f64)]) -> IsoContourSet {
    IsoContourSet {
        points: points.iter().map(|&(x, y)| DiscPoint { d: Vector2::new(x, y) }).collect(),
    }
}

#[test]
fn translation_of_the_untranslated_template_is_zero() {
    let t = lprism();
    let g = t.render(&RigidTransform::identity());
    assert_eq!(compute_translation(&t.q, &g, &ORTHO, Alpha::default()).unwrap(), Vector3::zeros());
}

#[test]
fn translation_follows_a_shifted_silhouette() {
    let t = lprism();
    let ld = t.q.largest_dimension();
    let g = t.render(&RigidTransform::identity()).translated(Vector2::new(3.0, -1.0));
    let tr = compute_translation(&t.q, &g, &ORTHO, Alpha::default()).unwrap();
    assert!((tr - Vector3::new(3.0, -1.0, 0.0)).norm() < 0.01 * ld);
    // Fixed point: the template placed at `tr` has the query centroid.
    let placed = t.render(&RigidTransform::new(Rotation::identity(), tr));
    assert!((polygon_centroid(&placed) - polygon_centroid(&g)).norm() <= 1e-6 * ld);
}

#[test]
fn area_self_query_finds_the_node_neighbourhood() {
    let t = lprism();
    let g = &t.pal.grid;
    let h = g.spacing();
    for (i, j) in [(10, 20), (24, 24), (30, 14)] {
        let v = t.pal.value(i, j).unwrap();
        let u = area_candidates(&t.q, &t.pal, v, 0.02 * t.pal.max(), Alpha::default()).unwrap();
        let node = g.node(i, j);
        assert!(u.points.iter().any(|p| (p.d - node).norm() <= h * 2f64.sqrt()));
    }
}

#[test]
fn infeasible_area_and_ratio_give_no_candidates() {
    let t = lprism();
    let r = area_candidates(&t.q, &t.pal, 2.0 * t.pal.max(), 0.02 * t.pal.max(), Alpha::default());
    assert!(matches!(r, Err(Error::NoCandidates(_))));
    let s = sphere();
    let r = ear_candidates(&s.q, &s.pearl, 10.0, 0.05, Alpha::default());
    assert!(matches!(r, Err(Error::NoCandidates(_))));
}

#[test]
fn sphere_contours_cover_the_whole_disc() {
    let s = sphere();
    let masked = s.pal.grid.masked_count();
    let u_a = area_candidates(&s.q, &s.pal, PI, 0.02 * s.pal.max(), Alpha::default()).unwrap();
    assert!(u_a.len() >= masked, "{} of {masked}", u_a.len());
    let u_e = ear_candidates(&s.q, &s.pearl, 1.0, 0.05, Alpha::default()).unwrap();
    assert!(u_e.len() >= masked, "{} of {masked}", u_e.len());
}

#[test]
fn aspect_self_query_on_elongated_box() {
    let t = slab();
    let g = &t.pearl.grid;
    for (i, j) in [(6, 12), (12, 12), (17, 9)] {
        let v = t.pearl.value(i, j).unwrap();
        let u = ear_candidates(&t.q, &t.pearl, v, 0.05, Alpha::default()).unwrap();
        let node = g.node(i, j);
        assert!(u.points.iter().any(|p| (p.d - node).norm() <= g.spacing() * 2f64.sqrt()));
    }
}

#[test]
fn intersection_edge_cases() {
    let a = set(&[(0.0, 0.0), (1.0, 1.0), (-2.0, 0.5)]);
    assert_eq!(intersect_candidates(&a, &a, 0.01), a);
    let far = set(&[(3.0, -1.0)]);
    assert!(intersect_candidates(&a, &far, 0.08).is_empty());
    assert_eq!(intersect_candidates(&a, &IsoContourSet::default(), 0.08), a);
}

#[test]
fn sweep_of_the_exact_view_accepts_zero_angle() {
    let t = lprism();
    let d = DiscPoint::new(0.9, -1.7).unwrap();
    let g = disc_silhouette(&t.q, &d, &ORTHO, Alpha::default()).unwrap();
    let c = z_sweep(&t.q, &d, &g, 0.03, 360, &ORTHO, Alpha::default()).unwrap();
    let zero = c.iter().find(|c| c.origin.theta_index == 0).expect("theta 0 accepted");
    assert!(zero.translation.norm() < 1e-12);
    assert!(c.iter().all(|c| c.score.is_infinite()));
}

#[test]
fn sweep_of_a_sphere_accepts_every_angle() {
    let s = sphere();
    let d = DiscPoint::new(0.4, 2.0).unwrap();
    let g = disc_silhouette(&s.q, &d, &ORTHO, Alpha::default()).unwrap();
    let c = z_sweep(&s.q, &d, &g, 0.03 * 2.0, 90, &ORTHO, Alpha::default()).unwrap();
    assert_eq!(c.len(), 90);
}

#[test]
fn zero_extent_tolerance_on_noisy_data_is_empty() {
    let t = lprism();
    let d = DiscPoint::new(0.9, -1.7).unwrap();
    let clean = disc_silhouette(&t.q, &d, &ORTHO, Alpha::default()).unwrap();
    let noisy = add_boundary_noise(&clean, 0.01, 3).unwrap();
    assert!(z_sweep(&t.q, &d, &noisy, 0.0, 360, &ORTHO, Alpha::default()).unwrap().is_empty());
}

fn dummy(n: usize, disc_index: usize) -> Vec<Candidate> {
    (0..n)
        .map(|k| Candidate {
            rotation: Rotation::identity(),
            translation: Vector3::zeros(),
            score: f64::INFINITY,
            origin: CandidateOrigin {
                disc: DiscPoint { d: Vector2::zeros() },
                disc_index,
                theta: 0.0,
                theta_index: k,
            },
        })
        .collect()
}

#[test]
fn assembly_caps_reproducibly_and_keeps_order() {
    assert!(assemble_candidates(vec![], 8, 0).is_empty());
    let small = assemble_candidates(vec![dummy(3, 0), dummy(4, 1)], 8, 0);
    assert_eq!(small, [dummy(3, 0), dummy(4, 1)].concat());
    let lists = vec![dummy(10, 0), dummy(6, 1)];
    let a = assemble_candidates(lists.clone(), 8, 5);
    assert_eq!(a.len(), 8);
    assert_eq!(a, assemble_candidates(lists.clone(), 8, 5));
    assert_ne!(a, assemble_candidates(lists, 8, 6));
    let keys: Vec<_> = a.iter().map(|c| (c.origin.disc_index, c.origin.theta_index)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

fn candidate(pose: RigidTransform, disc_index: usize, theta_index: usize) -> Candidate {
    Candidate {
        rotation: pose.r,
        translation: pose.t,
        score: f64::INFINITY,
        origin: CandidateOrigin {
            disc: DiscPoint { d: Vector2::zeros() },
            disc_index,
            theta: 0.0,
            theta_index,
        },
    }
}

#[test]
fn evaluation_ranks_truth_first_and_matches_recomputation() {
    let t = lprism();
    let truth = RigidTransform::new(random_rotation(4), Vector3::new(0.1, -0.2, 0.0));
    let g = t.render(&truth);
    let mut cands = vec![candidate(truth, 5, 0)];
    for k in 0..6 {
        let r = random_rotation(100 + k);
        cands.push(candidate(RigidTransform::new(r, truth.t), k as usize, 1));
    }
    // Duplicate pair with the same provenance keys in reverse order.
    cands.push(candidate(RigidTransform::new(random_rotation(9), truth.t), 7, 3));
    cands.push(candidate(RigidTransform::new(random_rotation(9), truth.t), 7, 2));
    let ranked = evaluate_candidates(&cands, &t.q, &g, &ORTHO, Alpha::default()).unwrap();
    assert_eq!(ranked.len(), cands.len());
    assert_eq!(ranked[0].pose(), truth);
    assert_eq!(ranked[0].score, 0.0);
    for c in &ranked {
        assert_eq!(c.score, hausdorff(&t.render(&c.pose()), &g));
    }
    let dup: Vec<_> = ranked.iter().filter(|c| c.origin.disc_index == 7).collect();
    assert_eq!(dup[0].score, dup[1].score);
    assert_eq!((dup[0].origin.theta_index, dup[1].origin.theta_index), (2, 3));
}

#[test]
fn noise_free_lprism_is_recovered_before_refinement() {
    let t = lprism();
    let ld = t.q.largest_dimension();
    for seed in 1u64..9 {
        let truth = random_pose(seed, &ORTHO, ld, 1.0);
        let g = t.render(&truth);
        let r = estimate_pose(&t.q, &t.pal, Some(&t.pearl), &g, &SearchParams::default(), &ORTHO).unwrap();
        let e = pose_error(&t.q, &truth, &r.best.pose(), ld).unwrap();
        // The N = 48 grid is half the default resolution, so allow 3 degrees.
        assert!(e.oe <= 3.0 && e.te_pct <= 1.0, "seed {seed}: {e:?}");
        assert!(r.candidates.windows(2).all(|w| w[0].score <= w[1].score));
    }
}

#[test]
fn sphere_search_accepts_immediately() {
    let s = sphere();
    let ld = s.q.largest_dimension();
    let g = s.render(&RigidTransform::new(random_rotation(5), Vector3::new(0.2, 0.1, 0.0)));
    let p = SearchParams::default();
    let r = estimate_pose(&s.q, &s.pal, Some(&s.pearl), &g, &p, &ORTHO).unwrap();
    assert!(r.best.score <= p.eps_h * ld);
    assert_eq!(r.pyramid_level_used, 0);
}

#[test]
fn oversized_silhouette_has_no_candidates() {
    let t = lprism();
    let g = circle(400, 3.0);
    let r = estimate_pose(&t.q, &t.pal, Some(&t.pearl), &g, &SearchParams::default(), &ORTHO);
    assert!(matches!(r, Err(Error::NoCandidates(_))));
}

#[test]
fn mismatched_fields_are_refused() {
    let t = lprism();
    let other = sample_mesh(&shapes::l_prism(), 10_000, 2).unwrap();
    let g = t.render(&RigidTransform::identity());
    let p = SearchParams::default();
    assert!(matches!(
        estimate_pose(&other, &t.pal, Some(&t.pearl), &g, &p, &ORTHO),
        Err(Error::FingerprintMismatch { .. })
    ));
    let persp = ProjectionMode::perspective(5.0, CameraIntrinsics::default()).unwrap();
    assert!(matches!(
        estimate_pose(&t.q, &t.pal, Some(&t.pearl), &g, &p, &persp),
        Err(Error::ModeMismatch(_))
    ));
    assert!(matches!(
        estimate_pose(&t.q, &t.pearl, None, &g, &p, &ORTHO),
        Err(Error::InvalidParameter(_))
    ));
    let bad = SearchParams { n_z: 2, ..p };
    assert!(bad.validate().is_err());
}

#[test]
fn search_is_deterministic_and_ignores_in_plane_shifts() {
    let t = lprism();
    let truth = random_pose(7, &ORTHO, 1.0, 1.0);
    let g = t.render(&truth);
    let p = SearchParams::default();
    let a = estimate_pose(&t.q, &t.pal, Some(&t.pearl), &g, &p, &ORTHO).unwrap();
    let b = estimate_pose(&t.q, &t.pal, Some(&t.pearl), &g, &p, &ORTHO).unwrap();
    assert_eq!(a, b);
    let shift = Vector2::new(0.37, -0.21);
    let c = estimate_pose(&t.q, &t.pal, Some(&t.pearl), &g.translated(shift), &p, &ORTHO).unwrap();
    let rot = |r: &SearchResult| r.candidates.iter().map(|c| (c.origin.disc_index, c.origin.theta_index)).collect::<Vec<_>>();
    assert_eq!(rot(&a), rot(&c));
    for (x, y) in a.candidates.iter().zip(&c.candidates) {
        assert!((x.rotation.matrix() - y.rotation.matrix()).abs().max() < 1e-12);
        assert!((y.translation - x.translation - Vector3::new(shift.x, shift.y, 0.0)).norm() < 1e-9);
    }
}

#[test]
fn candidate_count_is_deterministic_and_ignores_the_cap() {
    let t = lprism();
    let g = t.render(&random_pose(8, &ORTHO, 1.0, 1.0));
    let p = SearchParams::default();
    let n = count_candidates(&t.q, &t.pal, Some(&t.pearl), &g, &p, &ORTHO).unwrap();
    assert!(n > 0);
    assert_eq!(n, count_candidates(&t.q, &t.pal, Some(&t.pearl), &g, &p, &ORTHO).unwrap());
    let tiny = SearchParams { lambda_c: 1, ..p };
    assert_eq!(n, count_candidates(&t.q, &t.pal, Some(&t.pearl), &g, &tiny, &ORTHO).unwrap());
    let plain = count_candidates(&t.q, &t.pal, None, &g, &p, &ORTHO).unwrap();
    assert!(plain >= n);
}

#[test]
fn acceleration_never_loses_an_acceptable_pose() {
    let t = lprism();
    let ld = t.q.largest_dimension();
    let p = SearchParams::default();
    let plain_params = SearchParams { accelerate: false, ..p };
    for seed in 20..40 {
        let g = t.render(&random_pose(seed, &ORTHO, ld, 1.0));
        let acc = estimate_pose(&t.q, &t.pal, Some(&t.pearl), &g, &p, &ORTHO).unwrap();
        let plain = estimate_pose(&t.q, &t.pal, Some(&t.pearl), &g, &plain_params, &ORTHO).unwrap();
        // Acceptance threshold including the boundary-noise allowance of the query.
        let accept = p.eps_h * ld + boundary_noise(&g) * (2.0 * (g.len() as f64).ln()).sqrt();
        assert!(
            acc.best.score <= plain.best.score + 1e-9 || acc.best.score <= accept,
            "seed {seed}: {} vs {}",
            acc.best.score,
            plain.best.score
        );
    }
}

#[test]
fn some_candidate_is_near_the_truth_without_a_cap() {
    let t = lprism();
    let p = SearchParams { lambda_c: usize::MAX, ..SearchParams::default() };
    for seed in [30u64, 31] {
        let truth = random_pose(seed, &ORTHO, 1.0, 1.0);
        let g = t.render(&truth);
        let r = estimate_pose(&t.q, &t.pal, Some(&t.pearl), &g, &p, &ORTHO).unwrap();
        let nearest = r
            .candidates
            .iter()
            .map(|c| geodesic_distance(&c.rotation, &truth.r))
            .fold(f64::INFINITY, f64::min);
        // Within one grid cell plus one sweep step.
        let bound = t.pal.grid.spacing() + 2.0 * PI / p.n_z as f64;
        assert!(nearest < bound, "seed {seed}: {} deg", nearest.to_degrees());
    }
}

#[test]
fn boundary_noise_estimate_tracks_the_true_sigma() {
    let c = circle(4000, 1.0);
    assert!(boundary_noise(&c) < 1e-3);
    for sigma in [0.005, 0.01, 0.04] {
        let noisy = add_boundary_noise(&c, sigma, 11).unwrap();
        let est = boundary_noise(&noisy);
        assert!((est / sigma - 1.0).abs() < 0.1, "{sigma}: {est}");
    }
}

#[test]
fn predicted_area_scatter_matches_monte_carlo() {
    let c = circle(800, 1.0);
    let perimeter = 2.0 * PI;
    for sigma in [0.01, 0.04] {
        let areas: Vec<f64> = (0..400)
            .map(|s| polygon_area(&add_boundary_noise(&c, sigma, s).unwrap()))
            .collect();
        let mean = areas.iter().sum::<f64>() / areas.len() as f64;
        let sd = (areas.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (areas.len() - 1) as f64).sqrt();
        let predicted = area_noise(sigma, c.len(), perimeter);
        assert!((sd / predicted - 1.0).abs() < 0.15, "{sigma}: measured {sd}, predicted {predicted}");
    }
}

#[test]
fn uncertain_depth_prior_is_absorbed() {
    let mode = ProjectionMode::perspective(8.0, CameraIntrinsics::default()).unwrap();
    let t = Template::new(shapes::l_prism(), 10_000, 40, mode);
    let ld = t.q.largest_dimension();
    let p = SearchParams { depth_tolerance: 0.12, ..SearchParams::default() };
    for (seed, scale) in [(1u64, 1.1), (2, 0.9)] {
        let truth = random_pose(seed, &mode, ld, scale);
        let g = t.render(&truth);
        let r = estimate_pose(&t.q, &t.pal, Some(&t.pearl), &g, &p, &mode).unwrap();
        let e = pose_error(&t.q, &truth, &r.best.pose(), ld).unwrap();
        assert!(e.oe <= 6.0, "scale {scale}: {e:?}");
        assert!((r.best.translation.z / truth.t.z - 1.0).abs() < 0.05);
    }
    assert!(SearchParams { depth_tolerance: 0.5, ..p }.validate().is_err());
}

proptest! {
    #[test]
    fn intersection_matches_brute_force(
        a in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 0..60),
        e in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 1..60),
        eps in 0.01..1.0f64,
    ) {
        let (ua, ue) = (set(&a), set(&e));
        let got = intersect_candidates(&ua, &ue, eps);
        let expected: Vec<DiscPoint> = ua
            .points
            .iter()
            .filter(|p| ue.points.iter().any(|q| ((p.d.x - q.d.x).powi(2) + (p.d.y - q.d.y).powi(2)).sqrt() <= eps))
            .copied()
            .collect();
        prop_assert_eq!(got.points, expected);
    }

    #[test]
    fn assembly_is_a_sorted_subset(sizes in prop::collection::vec(0usize..30, 0..6), cap in 1usize..50, seed in any::<u64>()) {
        let lists: Vec<Vec<Candidate>> = sizes.iter().enumerate().map(|(i, &n)| dummy(n, i)).collect();
        let total: usize = sizes.iter().sum();
        let out = assemble_candidates(lists, cap, seed);
        prop_assert_eq!(out.len(), total.min(cap));
        let keys: Vec<_> = out.iter().map(|c| (c.origin.disc_index, c.origin.theta_index)).collect();
        prop_assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }
}
