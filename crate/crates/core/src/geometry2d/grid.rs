use super::Point2;

/// Uniform bucket grid over a 2D point set, built with a counting sort.
#[derive(Debug, Clone)]
pub struct PointGrid {
    origin: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
    start: Vec<u32>,
    items: Vec<u32>,
}

/// Hard cap on the number of buckets relative to the number of points.
const MAX_CELLS_PER_POINT: usize = 4;

impl PointGrid {
    /// Builds a grid with cells of at least `cell` on a side. The cell size is
    /// enlarged if the requested one would create too many buckets.
    pub fn new(points: &[Point2], cell: f64) -> Self {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        if points.is_empty() {
            min = Point2::origin();
            max = Point2::origin();
        }
        let span = (max.x - min.x).max(max.y - min.y).max(f64::MIN_POSITIVE);
        let mut cell = if cell.is_finite() && cell > 0.0 { cell } else { span };
        cell = cell.max(span * 1e-9);
        let cap = MAX_CELLS_PER_POINT * points.len().max(1) + 64;
        let dims = |c: f64| {
            (
                ((max.x - min.x) / c).floor() as usize + 1,
                ((max.y - min.y) / c).floor() as usize + 1,
            )
        };
        let (mut nx, mut ny) = dims(cell);
        while nx.saturating_mul(ny) > cap {
            cell *= 1.5;
            (nx, ny) = dims(cell);
        }

        let mut grid = Self {
            origin: min,
            cell,
            nx,
            ny,
            start: vec![0; nx * ny + 1],
            items: vec![0; points.len()],
        };
        let keys: Vec<usize> = points.iter().map(|p| grid.key(p)).collect();
        for &k in &keys {
            grid.start[k + 1] += 1;
        }
        for k in 0..nx * ny {
            grid.start[k + 1] += grid.start[k];
        }
        let mut fill = grid.start.clone();
        for (i, &k) in keys.iter().enumerate() {
            grid.items[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        grid
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    fn coord(&self, v: f64, o: f64, n: usize) -> usize {
        let c = ((v - o) / self.cell).floor();
        if c <= 0.0 {
            0
        } else {
            (c as usize).min(n - 1)
        }
    }

    fn key(&self, p: &Point2) -> usize {
        self.coord(p.y, self.origin.y, self.ny) * self.nx + self.coord(p.x, self.origin.x, self.nx)
    }

    fn cell_items(&self, cx: usize, cy: usize) -> &[u32] {
        let k = cy * self.nx + cx;
        &self.items[self.start[k] as usize..self.start[k + 1] as usize]
    }

    /// Calls `f` with the index of every point whose bucket intersects the
    /// axis-aligned square of half-width `r` around `p`. The callback may see
    /// points farther than `r`; callers filter by distance.
    pub fn for_each_near(&self, p: &Point2, r: f64, mut f: impl FnMut(usize)) {
        let x0 = self.coord(p.x - r, self.origin.x, self.nx);
        let x1 = self.coord(p.x + r, self.origin.x, self.nx);
        let y0 = self.coord(p.y - r, self.origin.y, self.ny);
        let y1 = self.coord(p.y + r, self.origin.y, self.ny);
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                for &i in self.cell_items(cx, cy) {
                    f(i as usize);
                }
            }
        }
    }

    /// Squared distance from `p` to its nearest point in the grid, skipping index `skip`.
    pub fn nearest_sq(&self, points: &[Point2], p: &Point2, skip: Option<usize>) -> f64 {
        let cx = self.coord(p.x, self.origin.x, self.nx) as isize;
        let cy = self.coord(p.y, self.origin.y, self.ny) as isize;
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let mut best = f64::INFINITY;
        let max_ring = nx.max(ny);
        for r in 0..=max_ring {
            for y in (cy - r)..=(cy + r) {
                if y < 0 || y >= ny {
                    continue;
                }
                let on_edge_row = y == cy - r || y == cy + r;
                let mut x = cx - r;
                while x <= cx + r {
                    if x >= 0 && x < nx {
                        for &i in self.cell_items(x as usize, y as usize) {
                            if Some(i as usize) == skip {
                                continue;
                            }
                            let q = points[i as usize];
                            let d = (q.x - p.x).powi(2) + (q.y - p.y).powi(2);
                            if d < best {
                                best = d;
                            }
                        }
                    }
                    x += if on_edge_row || r == 0 { 1 } else { 2 * r };
                }
            }
            // Everything beyond ring r lies at least r cells away.
            let reach = r as f64 * self.cell;
            if best <= reach * reach {
                break;
            }
        }
        best
    }
}
