//! Analytic template meshes.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::projection::TriangleMesh;

/// Axis-aligned box between `lo` and `hi` as 8 vertices / 12 outward-facing triangles.
pub fn cuboid_between(lo: Vector3<f64>, hi: Vector3<f64>) -> TriangleMesh {
    let (vs, fs) = box_parts(lo, hi);
    TriangleMesh::new(vs, fs).expect("box with positive extents")
}

fn box_parts(lo: Vector3<f64>, hi: Vector3<f64>) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let v = |i: usize| {
        Vector3::new(
            if i & 1 == 0 { lo.x } else { hi.x },
            if i & 2 == 0 { lo.y } else { hi.y },
            if i & 4 == 0 { lo.z } else { hi.z },
        )
    };
    let vertices = (0..8).map(v).collect();
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    (vertices, faces)
}

/// Box of size `a × b × c` centred at the origin.
pub fn cuboid(a: f64, b: f64, c: f64) -> TriangleMesh {
    let h = Vector3::new(a, b, c) * 0.5;
    cuboid_between(-h, h)
}

/// Cube of edge 1 centred at the origin.
pub fn unit_cube() -> TriangleMesh {
    cuboid(1.0, 1.0, 1.0)
}

/// Elongated box used as a low-symmetry convex template.
pub fn elongated_box() -> TriangleMesh {
    cuboid(1.0, 0.4, 0.2)
}

/// Chiral L-shaped prism with a raised tab, centred on its bounding box, largest dimension 1.
///
/// No proper or improper symmetry maps it to itself, so every orthographic
/// view pose is identifiable up to the unavoidable depth-reflection pairs.
pub fn l_prism() -> TriangleMesh {
    let parts = [
        (Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.3, 0.5)),
        (Vector3::new(0.0, 0.3, 0.0), Vector3::new(0.25, 0.7, 0.5)),
        (Vector3::new(0.7, 0.0, 0.5), Vector3::new(1.0, 0.3, 0.9)),
    ];
    let centre = Vector3::new(0.5, 0.35, 0.45);
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lo, hi) in parts {
        let (vs, fs) = box_parts(lo - centre, hi - centre);
        let base = vertices.len();
        vertices.extend(vs);
        faces.extend(fs.into_iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
    }
    TriangleMesh::new(vertices, faces).expect("valid prism")
}

/// Geodesic sphere: icosahedron subdivided `level` times and pushed to radius `radius`.
pub fn icosphere(radius: f64, level: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vs: &mut Vec<Vector3<f64>>| {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                vs.push(((vs[a] + vs[b]) * 0.5).normalize());
                vs.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    TriangleMesh::new(vertices, faces).expect("valid sphere")
}

/// Unit-radius sphere with enough facets for percent-level silhouette accuracy.
pub fn unit_sphere() -> TriangleMesh {
    icosphere(1.0, 4)
}

/// Looks up a built-in template by name.
pub fn by_name(name: &str) -> Option<TriangleMesh> {
    match name {
        "lprism" | "l_prism" | "l-prism" => Some(l_prism()),
        "cube" => Some(unit_cube()),
        "sphere" => Some(unit_sphere()),
        "box" => Some(elongated_box()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_faces_point_outward() {
        let m = unit_cube();
        assert_eq!(m.vertices().len(), 8);
        assert_eq!(m.faces().len(), 12);
        for f in m.faces() {
            let v = m.vertices();
            let n = (v[f[1]] - v[f[0]]).cross(&(v[f[2]] - v[f[0]]));
            let c = (v[f[0]] + v[f[1]] + v[f[2]]) / 3.0;
            assert!(n.dot(&c) > 0.0);
        }
        assert!((m.surface_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn icosphere_area_converges() {
        let s = unit_sphere();
        let a = s.surface_area();
        assert!((a - 4.0 * std::f64::consts::PI).abs() / (4.0 * std::f64::consts::PI) < 0.01);
        for v in s.vertices() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn l_prism_is_centred_with_unit_extent() {
        let m = l_prism();
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in m.vertices() {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        assert!(((hi - lo).max() - 1.0).abs() < 1e-15);
        assert!((hi + lo).norm() < 1e-15);
    }
}
