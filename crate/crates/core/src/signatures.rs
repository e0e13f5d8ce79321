//! Signature fields over the Postel disc: projected area (PAL) and fitted-ellipse
//! aspect ratio (PEARL), their bilinear interpolation and iso-contours.

use std::f64::consts::PI;

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry2d::{bbox_aspect_ratio, fit_ellipse, polygon_area, Alpha, Silhouette};
use crate::projection::{silhouette_of, PointCloud, ProjectionMode};
use crate::rotations::{DiscPoint, RigidTransform, DISC_TOL};

/// Default grid resolution.
pub const DEFAULT_RESOLUTION: usize = 96;
/// Snapping tolerance, in cell units, for queries that sit on grid lines.
const SNAP: f64 = 1e-9;

/// Regular `N × N` grid over `[-pi, pi]^2` with a mask of the nodes inside the disc.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct DiscGrid {
    n: usize,
    mask: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    resolution: usize,
}

impl TryFrom<GridRepr> for DiscGrid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        DiscGrid::new(r.resolution)
    }
}

impl From<DiscGrid> for GridRepr {
    fn from(g: DiscGrid) -> Self {
        GridRepr { resolution: g.n }
    }
}

impl DiscGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::InvalidParameter(format!(
                "grid resolution must be at least 8, got {n}"
            )));
        }
        let mut mask = vec![false; n * n];
        for j in 0..n {
            for i in 0..n {
                mask[j * n + i] = node_coords(n, i, j).norm() <= PI + DISC_TOL;
            }
        }
        Ok(Self { n, mask })
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    /// Node spacing in disc units.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / (self.n - 1) as f64
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn node(&self, i: usize, j: usize) -> Vector2<f64> {
        node_coords(self.n, i, j)
    }

    pub fn node_point(&self, i: usize, j: usize) -> DiscPoint {
        DiscPoint {
            d: self.node(i, j),
        }
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.mask[self.index(i, j)]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// True when all four corners of cell `(i, j)` (lower-left corner at node `(i, j)`) are masked.
    pub fn cell_masked(&self, i: usize, j: usize) -> bool {
        i + 1 < self.n
            && j + 1 < self.n
            && self.is_masked(i, j)
            && self.is_masked(i + 1, j)
            && self.is_masked(i, j + 1)
            && self.is_masked(i + 1, j + 1)
    }

    /// True when node `(i, j)` is a corner of at least one fully masked cell.
    pub fn node_in_masked_cell(&self, i: usize, j: usize) -> bool {
        let (i, j) = (i as isize, j as isize);
        [(i - 1, j - 1), (i, j - 1), (i - 1, j), (i, j)]
            .iter()
            .any(|&(a, b)| a >= 0 && b >= 0 && self.cell_masked(a as usize, b as usize))
    }

    /// Continuous grid coordinates of a disc point.
    fn grid_coords(&self, d: &Vector2<f64>) -> (f64, f64) {
        let h = self.spacing();
        ((d.x + PI) / h, (d.y + PI) / h)
    }
}

fn node_coords(n: usize, i: usize, j: usize) -> Vector2<f64> {
    let h = 2.0 * PI / (n - 1) as f64;
    Vector2::new(-PI + h * i as f64, -PI + h * j as f64)
}

/// Which signature a field stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// Projected silhouette area.
    Pal,
    /// Aspect ratio of the ellipse fitted to the silhouette.
    Pearl,
}

/// Provenance of a precomputed field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub fingerprint: u64,
    pub point_count: usize,
    pub mode: ProjectionMode,
    pub alpha: Alpha,
    pub seed: u64,
}

/// Scalar field sampled on the masked nodes of a [`DiscGrid`].
///
/// Values are stored row-major (`index = j * N + i`); unmasked entries hold NaN.
#[derive(Debug, Clone)]
pub struct SignatureField {
    pub grid: DiscGrid,
    pub kind: FieldKind,
    pub meta: FieldMeta,
    values: Vec<f64>,
}

impl PartialEq for SignatureField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.kind == other.kind
            && self.meta == other.meta
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl SignatureField {
    /// Wraps a full `N²` value array; entries at unmasked nodes are ignored.
    pub fn from_values(
        grid: DiscGrid,
        kind: FieldKind,
        meta: FieldMeta,
        mut values: Vec<f64>,
    ) -> Result<Self> {
        let n2 = grid.n * grid.n;
        if values.len() != n2 {
            return Err(Error::InvalidParameter(format!(
                "expected {n2} field values, got {}",
                values.len()
            )));
        }
        for (k, v) in values.iter_mut().enumerate() {
            if !grid.mask[k] {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite value at node {k}")));
            }
        }
        Ok(Self {
            grid,
            kind,
            meta,
            values,
        })
    }

    /// Builds a field by evaluating `f` at every masked node.
    pub fn from_fn(
        grid: DiscGrid,
        kind: FieldKind,
        meta: FieldMeta,
        f: impl Fn(&Vector2<f64>) -> f64,
    ) -> Result<Self> {
        let n = grid.n;
        let values = (0..n * n)
            .map(|k| {
                if grid.mask[k] {
                    f(&grid.node(k % n, k / n))
                } else {
                    f64::NAN
                }
            })
            .collect();
        Self::from_values(grid, kind, meta, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        let k = self.grid.index(i, j);
        self.grid.mask[k].then(|| self.values[k])
    }

    /// Values at masked nodes in row-major order.
    pub fn masked_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.grid.mask)
            .filter_map(|(v, &m)| m.then_some(*v))
    }

    pub fn min(&self) -> f64 {
        self.masked_values().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.masked_values().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Area and aspect-ratio signatures of one silhouette. The aspect ratio falls
/// back to the bounding-box ratio when no ellipse can be fitted.
pub fn signature_values(sil: &Silhouette) -> (f64, f64) {
    let area = polygon_area(sil);
    let ar = match fit_ellipse(sil) {
        Ok(e) if e.aspect_ratio().is_finite() => e.aspect_ratio(),
        _ => bbox_aspect_ratio(sil),
    };
    (area, ar)
}

/// Silhouette of the template at the rotation encoded by `d`, placed at the
/// mode's reference position.
pub fn disc_silhouette(
    q: &PointCloud,
    d: &DiscPoint,
    mode: &ProjectionMode,
    alpha: Alpha,
) -> Result<Silhouette> {
    let pose = RigidTransform::new(d.rotation(), mode.reference_translation());
    silhouette_of(q, &pose, mode, alpha)
}

/// PAL and PEARL fields from a single silhouette extraction per node.
///
/// Nodes are evaluated in parallel; results are gathered by index, so the
/// output does not depend on scheduling.
pub fn precompute_fields(
    q: &PointCloud,
    grid: &DiscGrid,
    mode: &ProjectionMode,
    alpha: Alpha,
    seed: u64,
) -> Result<(SignatureField, SignatureField)> {
    let n = grid.n;
    let per_node: Vec<Result<(f64, f64)>> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            if !grid.mask[k] {
                return Ok((f64::NAN, f64::NAN));
            }
            let sil = disc_silhouette(q, &grid.node_point(k % n, k / n), mode, alpha)?;
            Ok(signature_values(&sil))
        })
        .collect();
    let mut area = Vec::with_capacity(n * n);
    let mut ar = Vec::with_capacity(n * n);
    for r in per_node {
        let (a, e) = r?;
        area.push(a);
        ar.push(e);
    }
    let meta = FieldMeta {
        fingerprint: q.fingerprint(),
        point_count: q.len(),
        mode: *mode,
        alpha,
        seed,
    };
    Ok((
        SignatureField::from_values(grid.clone(), FieldKind::Pal, meta, area)?,
        SignatureField::from_values(grid.clone(), FieldKind::Pearl, meta, ar)?,
    ))
}

/// One signature field; see [`precompute_fields`].
pub fn precompute_field(
    q: &PointCloud,
    grid: &DiscGrid,
    kind: FieldKind,
    mode: &ProjectionMode,
    alpha: Alpha,
    seed: u64,
) -> Result<SignatureField> {
    let (pal, pearl) = precompute_fields(q, grid, mode, alpha, seed)?;
    Ok(match kind {
        FieldKind::Pal => pal,
        FieldKind::Pearl => pearl,
    })
}

/// Bilinear interpolation inside the grid cell containing `d`.
///
/// Corners with zero weight are not consulted, so queries on grid lines next
/// to the disc rim succeed as long as the nodes they actually use are masked.
pub fn interpolate(field: &SignatureField, d: &DiscPoint) -> Result<f64> {
    let outside = || Error::OutsideField { x: d.d.x, y: d.d.y };
    let g = &field.grid;
    let n = g.n;
    let (gx, gy) = g.grid_coords(&d.d);
    let max = (n - 1) as f64;
    if !(gx >= -SNAP && gy >= -SNAP && gx <= max + SNAP && gy <= max + SNAP) {
        return Err(outside());
    }
    let split = |c: f64| {
        let c = c.clamp(0.0, max);
        let mut i = c.floor() as usize;
        let mut t = c - i as f64;
        if t > 1.0 - SNAP {
            i += 1;
            t = 0.0;
        } else if t < SNAP {
            t = 0.0;
        }
        if i >= n - 1 {
            i = n - 1;
            t = 0.0;
        }
        (i, t)
    };
    let (i, tx) = split(gx);
    let (j, ty) = split(gy);
    let mut acc = 0.0;
    for (di, wx) in [(0, 1.0 - tx), (1, tx)] {
        for (dj, wy) in [(0, 1.0 - ty), (1, ty)] {
            let w = wx * wy;
            if w == 0.0 {
                continue;
            }
            let v = field.value(i + di, j + dj).ok_or_else(outside)?;
            acc += w * v;
        }
    }
    Ok(acc)
}

/// Level-set sample points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IsoContourSet {
    pub points: Vec<DiscPoint>,
}

impl IsoContourSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Where a contour point came from on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContourSite {
    /// Node whose value equals the level exactly.
    Node(usize),
    /// Crossing on the edge between two node indices (lower index first).
    Edge(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourHit {
    pub point: DiscPoint,
    pub site: ContourSite,
}

/// Marching-squares crossings of `{value = level}` on edges of fully masked
/// cells, each edge reported once, plus masked-cell nodes that equal the level
/// exactly. Points are ordered by a row-major scan of the grid.
pub fn contour_hits(field: &SignatureField, level: f64) -> Vec<ContourHit> {
    let g = &field.grid;
    let n = g.n;
    let mut out = Vec::new();
    if !(level >= field.min() && level <= field.max()) {
        return out;
    }
    let val = |i: usize, j: usize| field.values[g.index(i, j)];
    let crossing = |a: (usize, usize), b: (usize, usize)| -> Option<ContourHit> {
        let (va, vb) = (val(a.0, a.1), val(b.0, b.1));
        if !((va - level) * (vb - level) < 0.0) {
            return None;
        }
        let t = (level - va) / (vb - va);
        let (pa, pb) = (g.node(a.0, a.1), g.node(b.0, b.1));
        Some(ContourHit {
            point: DiscPoint {
                d: pa + (pb - pa) * t,
            },
            site: ContourSite::Edge(g.index(a.0, a.1), g.index(b.0, b.1)),
        })
    };
    for j in 0..n {
        for i in 0..n {
            if !g.is_masked(i, j) {
                continue;
            }
            if val(i, j) == level && g.node_in_masked_cell(i, j) {
                out.push(ContourHit {
                    point: g.node_point(i, j),
                    site: ContourSite::Node(g.index(i, j)),
                });
            }
            let h_active = i + 1 < n && ((j > 0 && g.cell_masked(i, j - 1)) || g.cell_masked(i, j));
            if h_active {
                out.extend(crossing((i, j), (i + 1, j)));
            }
            let v_active = j + 1 < n && ((i > 0 && g.cell_masked(i - 1, j)) || g.cell_masked(i, j));
            if v_active {
                out.extend(crossing((i, j), (i, j + 1)));
            }
        }
    }
    out
}

/// Iso-contour point set at `level`; empty when the level is outside the field range.
pub fn iso_contour(field: &SignatureField, level: f64) -> IsoContourSet {
    IsoContourSet {
        points: contour_hits(field, level).into_iter().map(|h| h.point).collect(),
    }
}

/// Marching-squares line segments of the level set, one or two per crossed cell.
/// Ambiguous saddle cells are split according to the mean of the four corners.
pub fn iso_segments(field: &SignatureField, level: f64) -> Vec<[DiscPoint; 2]> {
    let g = &field.grid;
    let n = g.n;
    let mut out = Vec::new();
    for j in 0..n.saturating_sub(1) {
        for i in 0..n - 1 {
            if !g.cell_masked(i, j) {
                continue;
            }
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let v: Vec<f64> = corners
                .iter()
                .map(|&(a, b)| field.values[g.index(a, b)])
                .collect();
            let above: Vec<bool> = v.iter().map(|&x| x >= level).collect();
            let edge_point = |e: usize| -> Option<DiscPoint> {
                let (a, b) = (e, (e + 1) % 4);
                if above[a] == above[b] {
                    return None;
                }
                let t = (level - v[a]) / (v[b] - v[a]);
                let pa = g.node(corners[a].0, corners[a].1);
                let pb = g.node(corners[b].0, corners[b].1);
                Some(DiscPoint {
                    d: pa + (pb - pa) * t,
                })
            };
            let pts: Vec<(usize, DiscPoint)> =
                (0..4).filter_map(|e| edge_point(e).map(|p| (e, p))).collect();
            match pts.len() {
                2 => out.push([pts[0].1, pts[1].1]),
                4 => {
                    let centre_above = v.iter().sum::<f64>() / 4.0 >= level;
                    let p = |e: usize| pts[e].1;
                    if centre_above == above[0] {
                        out.push([p(0), p(1)]);
                        out.push([p(2), p(3)]);
                    } else {
                        out.push([p(3), p(0)]);
                        out.push([p(1), p(2)]);
                    }
                }
                _ => {}
            }
        }
    }
    out
}
