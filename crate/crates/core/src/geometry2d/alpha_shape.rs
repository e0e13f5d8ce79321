use fnv::FnvHashMap;
use serde::{Deserialize, Serialize};

use super::grid::PointGrid;
use super::polygon::{convex_hull, extents_of, signed_area};
use super::{Point2, Silhouette, DEGENERACY_EPS};
use crate::error::{Error, Result};

/// Number of points used to estimate the nearest-neighbour spacing.
const SPACING_SAMPLE: usize = 1024;
/// Number of points checked for containment after tracing.
const COVERAGE_SAMPLE: usize = 128;

/// Disc radius used to extract the outer boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Alpha {
    /// Multiple of the median nearest-neighbour spacing of the projected points.
    Relative(f64),
    /// Fixed radius in projected-plane units.
    Absolute(f64),
}

impl Default for Alpha {
    fn default() -> Self {
        Alpha::Relative(5.0)
    }
}

impl Alpha {
    pub fn resolve(&self, points: &[Point2]) -> Result<f64> {
        let a = match *self {
            Alpha::Relative(k) => {
                if !(k.is_finite() && k > 0.0) {
                    return Err(Error::InvalidParameter(format!("alpha factor {k}")));
                }
                k * median_nn_spacing(points)
            }
            Alpha::Absolute(a) => a,
        };
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha radius {a}")));
        }
        Ok(a)
    }
}

/// Median distance from a point to its nearest neighbour.
///
/// For large inputs the median is taken over an evenly strided subset of query
/// points (neighbours are still searched among all points).
pub fn median_nn_spacing(points: &[Point2]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    spacing_with(points, &density_grid(points))
}

/// Grid whose cells hold about two points each for a uniformly filled bounding box.
fn density_grid(points: &[Point2]) -> PointGrid {
    let n = points.len() as f64;
    let (w, h) = extents_of(points);
    let cell = (2.0 * w * h / n)
        .sqrt()
        .max(w.max(h) / n)
        .max(f64::MIN_POSITIVE);
    PointGrid::new(points, cell)
}

fn spacing_with(points: &[Point2], grid: &PointGrid) -> f64 {
    let n = points.len();
    let stride = n.div_ceil(SPACING_SAMPLE);
    let mut d: Vec<f64> = (0..n)
        .step_by(stride)
        .map(|i| grid.nearest_sq(points, &points[i], Some(i)))
        .collect();
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    m.sqrt()
}

/// Outer boundary of the α-shape of `points` with the default radius.
pub fn extract_silhouette(points: &[Point2]) -> Result<Silhouette> {
    extract_silhouette_with(points, Alpha::default())
}

/// Outer boundary of the α-shape of `points`.
///
/// The boundary is traced by rolling a disc of radius α around the outside of
/// the point set: each step pivots the disc about the current boundary point
/// until it touches the next one. Vertices of the result are input points in
/// counter-clockwise order. If the trace does not close into one loop that
/// encloses the whole set (several components, or α too small), the convex
/// hull is returned instead.
pub fn extract_silhouette_with(points: &[Point2], alpha: Alpha) -> Result<Silhouette> {
    if points.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            found: points.len(),
        });
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::InvalidParameter("non-finite projected point".into()));
    }
    if collinear(points) {
        return Err(Error::DegenerateProjection);
    }
    let (lx, ly) = extents_of(points);
    let grid = density_grid(points);
    let a = match alpha {
        Alpha::Relative(k) if k.is_finite() && k > 0.0 => k * spacing_with(points, &grid),
        other => other.resolve(points)?,
    };
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha radius {a}")));
    }
    if let Some(loop_idx) = trace(points, &grid, a) {
        let outline: Vec<Point2> = loop_idx.iter().map(|&i| points[i]).collect();
        if outline.len() >= 3
            && signed_area(&outline) > DEGENERACY_EPS * lx * ly
            && covers(points, &outline, a)
        {
            return Ok(Silhouette::from_trusted(outline));
        }
    }
    let hull: Vec<Point2> = convex_hull(points).iter().map(|&i| points[i]).collect();
    Silhouette::new(hull).map_err(|_| Error::DegenerateProjection)
}

/// True when the points have (numerically) no spread across their principal direction.
fn collinear(points: &[Point2]) -> bool {
    let n = points.len() as f64;
    let o = points[0];
    let (mut sx, mut sy) = (0.0, 0.0);
    for p in points {
        sx += p.x - o.x;
        sy += p.y - o.y;
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - o.x - mx, p.y - o.y - my);
        cxx += dx * dx;
        cxy += dx * dy;
        cyy += dy * dy;
    }
    let tr = cxx + cyy;
    let det = cxx * cyy - cxy * cxy;
    !(tr > 0.0) || det <= 1e-24 * tr * tr
}

/// Monotone stand-in for the counter-clockwise angle from `u` to `v`, in `[0, 4)`.
fn pseudo_angle(u: (f64, f64), v: (f64, f64)) -> f64 {
    let a = u.0 * v.0 + u.1 * v.1;
    let b = u.0 * v.1 - u.1 * v.0;
    if b >= 0.0 {
        if a >= 0.0 {
            if a + b == 0.0 {
                0.0
            } else {
                b / (a + b)
            }
        } else {
            1.0 + (-a) / (b - a)
        }
    } else if a < 0.0 {
        2.0 + (-b) / (-a - b)
    } else {
        3.0 + a / (a - b)
    }
}

fn trace(points: &[Point2], grid: &PointGrid, alpha: f64) -> Option<Vec<usize>> {
    let n = points.len();
    let start = (0..n).min_by(|&i, &j| {
        let (p, q) = (points[i], points[j]);
        p.y.total_cmp(&q.y).then(p.x.total_cmp(&q.x)).then(i.cmp(&j))
    })?;
    let reach_sq = 4.0 * alpha * alpha;
    let tie = 1e-12;

    let mut pivot = start;
    let mut prev: Option<usize> = None;
    // Centre of the rolling disc relative to the pivot.
    let mut u = (0.0, -alpha);
    // Position in `out` of the tail of each directed edge taken so far. The start
    // disc is only a guess, so the walk may enter the loop after a short tail.
    let mut seen: FnvHashMap<(usize, usize), usize> = FnvHashMap::default();
    let mut out = vec![start];
    let max_steps = 2 * n + 16;

    for _ in 0..max_steps {
        let p = points[pivot];
        let mut best: Option<(f64, f64, usize, (f64, f64))> = None;
        let consider = |i: usize, best: &mut Option<(f64, f64, usize, (f64, f64))>| {
            let dx = points[i].x - p.x;
            let dy = points[i].y - p.y;
            let l2 = dx * dx + dy * dy;
            if l2 == 0.0 || l2 > reach_sq {
                return;
            }
            let h = (alpha * alpha - 0.25 * l2).max(0.0).sqrt();
            let l = l2.sqrt();
            // Entry centre: on the clockwise side of the chord pivot -> i.
            let c = (0.5 * dx + h * dy / l, 0.5 * dy - h * dx / l);
            let mut ang = pseudo_angle(u, c);
            if Some(i) == prev && ang < tie {
                // Chord of length 2α: the disc already rests on it.
                ang = 4.0;
            }
            let better = match best {
                None => true,
                Some((ba, bl, bi, _)) => {
                    if ang < *ba - tie {
                        true
                    } else if ang <= *ba + tie {
                        l2 < *bl || (l2 == *bl && i < *bi)
                    } else {
                        false
                    }
                }
            };
            if better {
                *best = Some((ang, l2, i, c));
            }
        };
        // The previous point stays a candidate: pivoting all the way round to it
        // walks back along a dangling edge.
        grid.for_each_near(&p, 2.0 * alpha, |i| {
            if i != pivot {
                consider(i, &mut best);
            }
        });
        let (_, _, next, c) = best?;
        if let Some(&from) = seen.get(&(pivot, next)) {
            out.pop();
            out.drain(..from);
            return Some(out);
        }
        seen.insert((pivot, next), out.len() - 1);
        out.push(next);
        let q = points[next];
        u = (p.x + c.0 - q.x, p.y + c.1 - q.y);
        prev = Some(pivot);
        pivot = next;
    }
    None
}

/// Checks that a strided sample of the points lies inside or on the outline.
fn covers(points: &[Point2], outline: &[Point2], alpha: f64) -> bool {
    let stride = points.len().div_ceil(COVERAGE_SAMPLE).max(1);
    let tol = 1e-9 * alpha;
    points
        .iter()
        .step_by(stride)
        .all(|p| winding_inside(outline, p) || distance_to_outline(outline, p) <= tol)
}

fn winding_inside(poly: &[Point2], p: &Point2) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn distance_to_outline(poly: &[Point2], p: &Point2) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            let ab = b - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared().max(f64::MIN_POSITIVE)).clamp(0.0, 1.0);
            (p - (a + ab * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}
