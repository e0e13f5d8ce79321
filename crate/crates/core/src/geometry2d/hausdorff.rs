use super::{Point2, Silhouette};

/// Directed Hausdorff distance `max_{a in A} min_{b in B} |a - b|` over vertex sets.
///
/// The inner loop stops as soon as a point of `b` closer than the running
/// maximum is found: such an `a` cannot raise the maximum. The result is the
/// same squared distance the exhaustive double loop would select, so the value
/// is bit-identical to brute force.
pub fn directed_hausdorff(a: &[Point2], b: &[Point2]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut cmax = 0.0f64;
    for p in a {
        let mut cmin = f64::INFINITY;
        for q in b {
            let dx = p.x - q.x;
            let dy = p.y - q.y;
            let d = dx * dx + dy * dy;
            if d < cmin {
                cmin = d;
                if cmin < cmax {
                    break;
                }
            }
        }
        if cmin > cmax {
            cmax = cmin;
        }
    }
    cmax.sqrt()
}

/// Symmetric Hausdorff distance between two vertex sets.
pub fn hausdorff_points(a: &[Point2], b: &[Point2]) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

/// Symmetric Hausdorff distance between the vertex sets of two silhouettes.
pub fn hausdorff(a: &Silhouette, b: &Silhouette) -> f64 {
    hausdorff_points(a.points(), b.points())
}
