//! Uniform bucket grid for nearest-point queries.

use crate::geom::Vec2;

#[derive(Debug, Clone)]
pub struct PointGrid {
    points: Vec<Vec2>,
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl PointGrid {
    /// Grid with roughly `per_cell` points per occupied cell.
    pub fn new(points: Vec<Vec2>, per_cell: f64) -> PointGrid {
        let (mut lo, mut hi) = (
            Vec2::new(f64::INFINITY, f64::INFINITY),
            Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for p in &points {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let span = (hi - lo).x.max((hi - lo).y);
        let cells_wanted = (points.len() as f64 / per_cell).max(1.0);
        let area = ((hi - lo).x.max(span * 1e-3)) * ((hi - lo).y.max(span * 1e-3));
        let mut cell = (area / cells_wanted).sqrt();
        if !(cell > 0.0) || !cell.is_finite() {
            cell = 1.0;
        }
        PointGrid::with_cell(points, cell)
    }

    pub fn with_cell(points: Vec<Vec2>, cell: f64) -> PointGrid {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &points {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if points.is_empty() {
            lo = Vec2::ZERO;
            hi = Vec2::ZERO;
        }
        let cell = cell.max((hi.x - lo.x) / 4000.0).max((hi.y - lo.y) / 4000.0);
        let nx = ((hi.x - lo.x) / cell).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as usize + 1;
        let mut grid = PointGrid {
            points,
            origin: lo,
            cell,
            nx,
            ny,
            starts: Vec::new(),
            items: Vec::new(),
        };
        let mut counts = vec![0u32; nx * ny + 1];
        let keys: Vec<usize> = grid.points.iter().map(|&p| grid.key(p)).collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; grid.points.len()];
        for (i, &k) in keys.iter().enumerate() {
            items[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        grid.starts = counts;
        grid.items = items;
        grid
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    fn coords(&self, p: Vec2) -> (usize, usize) {
        let fx = ((p.x - self.origin.x) / self.cell).floor();
        let fy = ((p.y - self.origin.y) / self.cell).floor();
        let cx = if fx.is_nan() {
            0.0
        } else {
            fx.clamp(0.0, (self.nx - 1) as f64)
        };
        let cy = if fy.is_nan() {
            0.0
        } else {
            fy.clamp(0.0, (self.ny - 1) as f64)
        };
        (cx as usize, cy as usize)
    }

    fn key(&self, p: Vec2) -> usize {
        let (cx, cy) = self.coords(p);
        cy * self.nx + cx
    }

    fn cell_items(&self, cx: usize, cy: usize) -> &[u32] {
        let k = cy * self.nx + cx;
        &self.items[self.starts[k] as usize..self.starts[k + 1] as usize]
    }

    /// Index and squared distance of the nearest point to `p`, skipping
    /// indices for which `skip` returns true. Ties go to the lower index.
    pub fn nearest_filtered(&self, p: Vec2, skip: impl Fn(usize) -> bool) -> Option<(usize, f64)> {
        let (cx, cy) = self.coords(p);
        let mut best: Option<(usize, f64)> = None;
        let max_r = self.nx.max(self.ny);
        for r in 0..=max_r {
            let x0 = cx as isize - r as isize;
            let x1 = cx as isize + r as isize;
            let y0 = cy as isize - r as isize;
            let y1 = cy as isize + r as isize;
            for y in y0.max(0)..=y1.min(self.ny as isize - 1) {
                let on_edge_row = y == y0 || y == y1;
                let mut x = x0.max(0);
                while x <= x1.min(self.nx as isize - 1) {
                    if on_edge_row || x == x0 || x == x1 {
                        for &i in self.cell_items(x as usize, y as usize) {
                            let i = i as usize;
                            if skip(i) {
                                continue;
                            }
                            let d = (self.points[i] - p).norm_sq();
                            let better = match best {
                                None => true,
                                Some((bi, bd)) => d < bd || (d == bd && i < bi),
                            };
                            if better {
                                best = Some((i, d));
                            }
                        }
                        x += 1;
                    } else {
                        // Interior of the ring was visited at smaller radii.
                        x = x1;
                    }
                }
            }
            // Anything unvisited lies beyond one of the ring's open sides.
            let xlo = self.origin.x + x0 as f64 * self.cell;
            let xhi = self.origin.x + (x1 + 1) as f64 * self.cell;
            let ylo = self.origin.y + y0 as f64 * self.cell;
            let yhi = self.origin.y + (y1 + 1) as f64 * self.cell;
            let mut bound = f64::INFINITY;
            if x0 > 0 {
                bound = bound.min((p.x - xlo).max(0.0));
            }
            if x1 < self.nx as isize - 1 {
                bound = bound.min((xhi - p.x).max(0.0));
            }
            if y0 > 0 {
                bound = bound.min((p.y - ylo).max(0.0));
            }
            if y1 < self.ny as isize - 1 {
                bound = bound.min((yhi - p.y).max(0.0));
            }
            if bound == f64::INFINITY {
                break;
            }
            if let Some((_, bd)) = best {
                if bd < bound * bound {
                    break;
                }
            }
        }
        best
    }

    pub fn nearest(&self, p: Vec2) -> Option<(usize, f64)> {
        self.nearest_filtered(p, |_| false)
    }

    /// Indices of points within distance `r` of `p` (requires `r ≤ cell`
    /// for a single 3×3 sweep; larger radii sweep more cells).
    pub fn within(&self, p: Vec2, r: f64, out: &mut Vec<usize>) {
        out.clear();
        let reach = (r / self.cell).ceil() as isize;
        let (cx, cy) = self.coords(p);
        let r2 = r * r;
        for y in (cy as isize - reach).max(0)..=(cy as isize + reach).min(self.ny as isize - 1) {
            for x in (cx as isize - reach).max(0)..=(cx as isize + reach).min(self.nx as isize - 1)
            {
                for &i in self.cell_items(x as usize, y as usize) {
                    if (self.points[i as usize] - p).norm_sq() < r2 {
                        out.push(i as usize);
                    }
                }
            }
        }
    }
}
