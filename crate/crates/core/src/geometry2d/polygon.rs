use super::{Point2, Silhouette};

/// Signed shoelace area of a closed vertex list; positive for counter-clockwise order.
///
/// Coordinates are taken relative to the first vertex to limit cancellation
/// for outlines far from the origin.
pub fn signed_area(points: &[Point2]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let o = points[0];
    let mut twice = 0.0;
    for i in 1..n - 1 {
        let a = points[i] - o;
        let b = points[i + 1] - o;
        twice += a.x * b.y - a.y * b.x;
    }
    0.5 * twice
}

/// Enclosed area, independent of traversal direction.
pub fn polygon_area(sil: &Silhouette) -> f64 {
    signed_area(sil.points()).abs()
}

/// Area-weighted centroid of the enclosed region.
pub fn polygon_centroid(sil: &Silhouette) -> Point2 {
    let pts = sil.points();
    let o = pts[0];
    let (mut twice_area, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 1..pts.len() - 1 {
        let a = pts[i] - o;
        let b = pts[i + 1] - o;
        let cross = a.x * b.y - a.y * b.x;
        twice_area += cross;
        cx += (a.x + b.x) * cross;
        cy += (a.y + b.y) * cross;
    }
    // Triangle (o, a, b) has centroid (a + b) / 3 relative to o.
    let k = 1.0 / (3.0 * twice_area);
    Point2::new(o.x + cx * k, o.y + cy * k)
}

/// Plain mean of the vertices. Sensitive to uneven boundary sampling; kept for cross-checks.
pub fn vertex_mean(sil: &Silhouette) -> Point2 {
    let n = sil.len() as f64;
    let sum = sil
        .points()
        .iter()
        .fold(nalgebra::Vector2::zeros(), |acc, p| acc + p.coords);
    Point2::from(sum / n)
}

/// Axis-aligned extents `(Lx, Ly)` of the vertex set.
pub fn extents(sil: &Silhouette) -> (f64, f64) {
    extents_of(sil.points())
}

pub fn extents_of(points: &[Point2]) -> (f64, f64) {
    let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    if points.is_empty() {
        return (0.0, 0.0);
    }
    (max.x - min.x, max.y - min.y)
}

/// `max(Lx, Ly) / min(Lx, Ly)`; the coarse aspect-ratio surrogate used when an
/// ellipse cannot be fitted.
pub fn bbox_aspect_ratio(sil: &Silhouette) -> f64 {
    let (lx, ly) = extents(sil);
    lx.max(ly) / lx.min(ly)
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, without collinear vertices.
/// Returns indices into `points`.
pub fn convex_hull(points: &[Point2]) -> Vec<usize> {
    let mut idx = octagon_survivors(points);
    idx.sort_by(|&a, &b| {
        let (p, q) = (points[a], points[b]);
        p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)).then(a.cmp(&b))
    });
    idx.dedup_by(|a, b| points[*a] == points[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let cross = |o: usize, a: usize, b: usize| {
        let (o, a, b) = (points[o], points[a], points[b]);
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for &i in &idx {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0 {
            hull.pop();
        }
        hull.push(i);
    }
    let lower = hull.len() + 1;
    for &i in idx.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0 {
            hull.pop();
        }
        hull.push(i);
    }
    hull.pop();
    hull
}

/// Drops points strictly inside the octagon spanned by the extreme points in
/// the axis and diagonal directions; they cannot be hull vertices.
fn octagon_survivors(points: &[Point2]) -> Vec<usize> {
    let all = || (0..points.len()).collect();
    if points.len() < 16 {
        return all();
    }
    let keys: [fn(&Point2) -> f64; 8] = [
        |p| -p.y,
        |p| p.x - p.y,
        |p| p.x,
        |p| p.x + p.y,
        |p| p.y,
        |p| p.y - p.x,
        |p| -p.x,
        |p| -p.x - p.y,
    ];
    let mut oct: Vec<usize> = keys
        .iter()
        .map(|k| {
            (0..points.len())
                .max_by(|&a, &b| k(&points[a]).total_cmp(&k(&points[b])).then(b.cmp(&a)))
                .expect("non-empty")
        })
        .collect();
    oct.dedup_by(|a, b| points[*a] == points[*b]);
    while oct.len() > 1 && points[oct[0]] == points[*oct.last().expect("non-empty")] {
        oct.pop();
    }
    if oct.len() < 3 {
        return all();
    }
    let m = oct.len();
    (0..points.len())
        .filter(|&i| {
            let p = points[i];
            !(0..m).all(|e| {
                let a = points[oct[e]];
                let b = points[oct[(e + 1) % m]];
                (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) > 0.0
            })
        })
        .collect()
}
