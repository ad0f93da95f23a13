//! Built-in term kinds. Every distance is divided by the objective's
//! normalisation length before squaring, so term values are dimensionless.

use super::assign::{self, AssignMode};
use super::dual::{Dual, Scalar};
use super::grid::PointGrid;
use super::region::{sigmoid, sigmoid_slope, Region};
use super::Term;
use crate::geom::{invariant_sum, Vec2};

/// Mean of per-particle values, independent of particle order.
fn mean(mut v: Vec<f64>) -> f64 {
    let n = v.len().max(1) as f64;
    invariant_sum(&mut v) / n
}

fn centroid(x: &[Vec2]) -> Vec2 {
    let mut xs: Vec<f64> = x.iter().map(|p| p.x).collect();
    let mut ys: Vec<f64> = x.iter().map(|p| p.y).collect();
    let n = x.len().max(1) as f64;
    Vec2::new(invariant_sum(&mut xs) / n, invariant_sum(&mut ys) / n)
}

/// Mean squared distance to the nearest arc-length sample.
#[derive(Debug)]
pub struct CurveTerm {
    grid: PointGrid,
    inv_l2: f64,
}

impl CurveTerm {
    pub fn new(samples: Vec<Vec2>, norm_length: f64) -> CurveTerm {
        CurveTerm {
            grid: PointGrid::new(samples, 4.0),
            inv_l2: 1.0 / (norm_length * norm_length),
        }
    }

    pub fn samples(&self) -> &[Vec2] {
        self.grid.points()
    }
}

impl Term for CurveTerm {
    fn eval(&self, x: &[Vec2], grad: Option<&mut [Vec2]>) -> f64 {
        let n = x.len() as f64;
        let near: Vec<(usize, f64)> = x
            .iter()
            .map(|&p| self.grid.nearest(p).expect("samples"))
            .collect();
        if let Some(g) = grad {
            let pts = self.grid.points();
            for ((gi, &p), &(j, _)) in g.iter_mut().zip(x).zip(&near) {
                *gi = (p - pts[j]) * (2.0 * self.inv_l2 / n);
            }
        }
        mean(near.iter().map(|&(_, d)| d * self.inv_l2).collect())
    }

    fn structure(&self, x: &[Vec2]) -> Vec<usize> {
        x.iter()
            .map(|&p| self.grid.nearest(p).expect("samples").0)
            .collect()
    }
}

/// Mean squared distance to assigned targets.
#[derive(Debug)]
pub struct PointsTerm {
    pub targets: Vec<Vec2>,
    pub mode: AssignMode,
    inv_l2: f64,
}

impl PointsTerm {
    pub fn new(targets: Vec<Vec2>, mode: AssignMode, norm_length: f64) -> PointsTerm {
        PointsTerm {
            targets,
            mode,
            inv_l2: 1.0 / (norm_length * norm_length),
        }
    }

    fn mapping(&self, x: &[Vec2]) -> Vec<usize> {
        assign::assign(x, &self.targets, self.mode)
            .expect("target count checked at compile time")
            .map
    }
}

impl Term for PointsTerm {
    fn eval(&self, x: &[Vec2], grad: Option<&mut [Vec2]>) -> f64 {
        let map = self.mapping(x);
        let n = x.len() as f64;
        if let Some(g) = grad {
            for ((gi, &p), &j) in g.iter_mut().zip(x).zip(&map) {
                *gi = (p - self.targets[j]) * (2.0 * self.inv_l2 / n);
            }
        }
        mean(
            x.iter()
                .zip(&map)
                .map(|(&p, &j)| (p - self.targets[j]).norm_sq() * self.inv_l2)
                .collect(),
        )
    }

    fn structure(&self, x: &[Vec2]) -> Vec<usize> {
        self.mapping(x)
    }
}

/// Relational square cost of four points already in cyclic order:
/// side variance over squared mean side, squared cosines of the interior
/// angles, and the normalised diagonal mismatch.
pub fn square_cost<S: Scalar>(p: [[S; 2]; 4]) -> S {
    let c = [
        (p[0][0] + p[1][0] + p[2][0] + p[3][0]) / S::cst(4.0),
        (p[0][1] + p[1][1] + p[2][1] + p[3][1]) / S::cst(4.0),
    ];
    let mut spread = S::cst(0.0);
    for q in &p {
        let (dx, dy) = (q[0] - c[0], q[1] - c[1]);
        spread = spread + dx * dx + dy * dy;
    }
    // Scale-relative smoothing keeps norms away from zero without
    // breaking scale invariance.
    let delta2 = spread * S::cst(1e-18) + S::cst(f64::MIN_POSITIVE);
    let sub = |a: [S; 2], b: [S; 2]| [a[0] - b[0], a[1] - b[1]];
    let norm = |v: [S; 2]| (v[0] * v[0] + v[1] * v[1] + delta2).sqrt();

    let sides: Vec<S> = (0..4).map(|k| norm(sub(p[(k + 1) % 4], p[k]))).collect();
    let m = (sides[0] + sides[1] + sides[2] + sides[3]) / S::cst(4.0);
    let mut var = S::cst(0.0);
    for &s in &sides {
        var = var + (s - m) * (s - m);
    }
    let side_term = var / S::cst(4.0) / (m * m);

    let mut angle_term = S::cst(0.0);
    for k in 0..4 {
        let a = sub(p[(k + 3) % 4], p[k]);
        let b = sub(p[(k + 1) % 4], p[k]);
        let cos = (a[0] * b[0] + a[1] * b[1]) / (norm(a) * norm(b));
        angle_term = angle_term + cos * cos;
    }

    let d1 = norm(sub(p[2], p[0]));
    let d2 = norm(sub(p[3], p[1]));
    let r = (d1 - d2) / (d1 + d2);
    side_term + angle_term + r * r
}

/// Indices of `x` sorted by angle about the centroid, ties by position.
pub fn perimeter_order(x: &[Vec2]) -> Vec<usize> {
    let c = centroid(x);
    let mut idx: Vec<usize> = (0..x.len()).collect();
    let key = |i: usize| ((x[i] - c).angle(), x[i].x, x[i].y);
    idx.sort_by(|&a, &b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(ka.2.total_cmp(&kb.2))
    });
    idx
}

/// Squared distance of `p` from the point a fraction `t` along `a -> b`,
/// over the squared mean side of the corner quad `q`.
fn side_cost<S: Scalar>(p: [S; 2], q: [[S; 2]; 4], side: usize, t: f64) -> S {
    let (a, b) = (q[side], q[(side + 1) % 4]);
    let w = [
        a[0] * S::cst(1.0 - t) + b[0] * S::cst(t),
        a[1] * S::cst(1.0 - t) + b[1] * S::cst(t),
    ];
    let mut mean = S::cst(0.0);
    for k in 0..4 {
        let (u, v) = (q[k], q[(k + 1) % 4]);
        let (dx, dy) = (v[0] - u[0], v[1] - u[1]);
        mean = mean + (dx * dx + dy * dy + S::cst(f64::MIN_POSITIVE)).sqrt();
    }
    mean = mean / S::cst(4.0);
    let (dx, dy) = (p[0] - w[0], p[1] - w[1]);
    (dx * dx + dy * dy) / (mean * mean)
}

/// Square perimeter of `4k` particles: every k-th particle in angular
/// order is a corner of a relational square and the rest sit evenly
/// spaced along the sides. The corner phase minimising the cost wins.
/// For four particles this is the plain relational square.
#[derive(Debug)]
pub struct SquareTerm;

impl SquareTerm {
    /// (cost, corner phase) for points already in angular order.
    fn best_phase(p: &[Vec2]) -> (f64, usize) {
        let k = p.len() / 4;
        (0..k)
            .map(|j| (Self::cost(p, j), j))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("at least four points")
    }

    fn corners(p: &[Vec2], j: usize) -> [[f64; 2]; 4] {
        let k = p.len() / 4;
        [0, 1, 2, 3].map(|q| {
            let c = p[j + q * k];
            [c.x, c.y]
        })
    }

    fn cost(p: &[Vec2], j: usize) -> f64 {
        let (m, k) = (p.len(), p.len() / 4);
        let q = Self::corners(p, j);
        let mut v = square_cost(q);
        if k > 1 {
            let mut sides = Vec::with_capacity(m - 4);
            for s in 0..4 {
                for r in 1..k {
                    let x = p[(j + s * k + r) % m];
                    sides.push(side_cost([x.x, x.y], q, s, r as f64 / k as f64));
                }
            }
            v += mean(sides);
        }
        v
    }
}

/// Relational square term value for `4k` points in any order.
pub fn square_value(x: &[Vec2]) -> f64 {
    let o = perimeter_order(x);
    let p: Vec<Vec2> = o.iter().map(|&i| x[i]).collect();
    SquareTerm::best_phase(&p).0
}

impl Term for SquareTerm {
    fn eval(&self, x: &[Vec2], grad: Option<&mut [Vec2]>) -> f64 {
        let o = perimeter_order(x);
        let p: Vec<Vec2> = o.iter().map(|&i| x[i]).collect();
        let (v, j) = Self::best_phase(&p);
        let Some(g) = grad else { return v };
        let (m, k) = (p.len(), p.len() / 4);
        g.fill(Vec2::ZERO);
        let corner = |q: usize| o[j + q * k];
        let mut cq = [[Dual::<8>::cst(0.0); 2]; 4];
        for (q, c) in cq.iter_mut().enumerate() {
            let pt = p[j + q * k];
            *c = [Dual::var(pt.x, 2 * q), Dual::var(pt.y, 2 * q + 1)];
        }
        let d = square_cost(cq);
        for q in 0..4 {
            g[corner(q)] += Vec2::new(d.d[2 * q], d.d[2 * q + 1]);
        }
        if k > 1 {
            let w = 1.0 / (m - 4) as f64;
            let mut q10 = [[Dual::<10>::cst(0.0); 2]; 4];
            for (q, c) in q10.iter_mut().enumerate() {
                let pt = p[j + q * k];
                *c = [Dual::var(pt.x, 2 + 2 * q), Dual::var(pt.y, 3 + 2 * q)];
            }
            for s in 0..4 {
                for r in 1..k {
                    let pos = (j + s * k + r) % m;
                    let x = p[pos];
                    let e = side_cost([Dual::var(x.x, 0), Dual::var(x.y, 1)], q10, s, r as f64 / k as f64);
                    g[o[pos]] += Vec2::new(e.d[0], e.d[1]) * w;
                    for q in 0..4 {
                        g[corner(q)] += Vec2::new(e.d[2 + 2 * q], e.d[3 + 2 * q]) * w;
                    }
                }
            }
        }
        v
    }

    fn structure(&self, x: &[Vec2]) -> Vec<usize> {
        let o = perimeter_order(x);
        let p: Vec<Vec2> = o.iter().map(|&i| x[i]).collect();
        let mut s = o;
        s.push(Self::best_phase(&p).1);
        s
    }
}

/// Soft barrier on nearest-neighbour distances.
#[derive(Debug)]
pub struct RepelTerm {
    pub d0: f64,
}

impl RepelTerm {
    /// Nearest neighbour within `d0` for each particle, ties broken by the
    /// neighbour's position so relabelling cannot change the choice.
    fn neighbours(&self, x: &[Vec2]) -> Vec<Option<(usize, f64)>> {
        let grid = PointGrid::with_cell(x.to_vec(), self.d0);
        let mut near = Vec::new();
        x.iter()
            .enumerate()
            .map(|(i, &p)| {
                grid.within(p, self.d0, &mut near);
                let mut best: Option<(usize, f64)> = None;
                for &j in &near {
                    if j == i {
                        continue;
                    }
                    let d = (x[j] - p).norm_sq();
                    let better = match best {
                        None => true,
                        Some((bj, bd)) => {
                            d < bd
                                || (d == bd
                                    && (x[j].x, x[j].y).partial_cmp(&(x[bj].x, x[bj].y))
                                        == Some(std::cmp::Ordering::Less))
                        }
                    };
                    if better {
                        best = Some((j, d));
                    }
                }
                best.map(|(j, d2)| (j, d2.sqrt()))
            })
            .collect()
    }
}

impl Term for RepelTerm {
    fn eval(&self, x: &[Vec2], grad: Option<&mut [Vec2]>) -> f64 {
        let nb = self.neighbours(x);
        let n = x.len() as f64;
        let h = |d: f64| {
            let t = (1.0 - d / self.d0).max(0.0);
            t * t
        };
        if let Some(g) = grad {
            // Collect every contribution, then reduce per particle with an
            // order-independent sum.
            let mut parts: Vec<Vec<Vec2>> = vec![Vec::new(); x.len()];
            for (i, item) in nb.iter().enumerate() {
                if let Some((j, d)) = *item {
                    if d > 0.0 {
                        let slope = -2.0 * (1.0 - d / self.d0).max(0.0) / self.d0 / n;
                        let u = (x[i] - x[j]) / d;
                        parts[i].push(u * slope);
                        parts[j].push(u * -slope);
                    }
                }
            }
            for (gi, p) in g.iter_mut().zip(parts) {
                let mut xs: Vec<f64> = p.iter().map(|v| v.x).collect();
                let mut ys: Vec<f64> = p.iter().map(|v| v.y).collect();
                *gi = Vec2::new(invariant_sum(&mut xs), invariant_sum(&mut ys));
            }
        }
        mean(nb.iter().map(|o| o.map_or(0.0, |(_, d)| h(d))).collect())
    }

    fn structure(&self, x: &[Vec2]) -> Vec<usize> {
        self.neighbours(x)
            .iter()
            .map(|o| o.map_or(usize::MAX, |(j, _)| j))
            .collect()
    }
}

/// One minus the mean soft membership of a region.
#[derive(Debug)]
pub struct DensityTerm {
    pub region: Region,
}

impl Term for DensityTerm {
    fn eval(&self, x: &[Vec2], grad: Option<&mut [Vec2]>) -> f64 {
        let n = x.len() as f64;
        let w = self.region.w;
        let sds: Vec<_> = x.iter().map(|&p| self.region.signed_distance(p)).collect();
        if let Some(g) = grad {
            for (gi, sd) in g.iter_mut().zip(&sds) {
                *gi = sd.grad * (sigmoid_slope(-sd.d / w) / (w * n));
            }
        }
        1.0 - mean(sds.iter().map(|sd| sigmoid(-sd.d / w)).collect())
    }

    fn structure(&self, x: &[Vec2]) -> Vec<usize> {
        x.iter()
            .map(|&p| self.region.signed_distance(p).piece)
            .collect()
    }
}

/// Interior subset into the region, the rest onto a ring about the region
/// center.
#[derive(Debug)]
pub struct PeripheryTerm {
    pub region: Region,
    /// Membership flag per particle of the term.
    pub interior: Vec<bool>,
    pub ring_radius: f64,
    inv_l2: f64,
}

impl PeripheryTerm {
    pub fn new(region: Region, interior: Vec<bool>, ring_radius: f64, norm_length: f64) -> Self {
        PeripheryTerm {
            region,
            interior,
            ring_radius,
            inv_l2: 1.0 / (norm_length * norm_length),
        }
    }
}

impl Term for PeripheryTerm {
    fn eval(&self, x: &[Vec2], mut grad: Option<&mut [Vec2]>) -> f64 {
        let n = x.len() as f64;
        let w = self.region.w;
        let c = self.region.center();
        let mut vals = Vec::with_capacity(x.len());
        for (i, &p) in x.iter().enumerate() {
            if self.interior[i] {
                let sd = self.region.signed_distance(p);
                vals.push(1.0 - sigmoid(-sd.d / w));
                if let Some(g) = grad.as_deref_mut() {
                    g[i] = sd.grad * (sigmoid_slope(-sd.d / w) / (w * n));
                }
            } else {
                let q = p - c;
                let r = q.norm();
                let e = r - self.ring_radius;
                vals.push(e * e * self.inv_l2);
                if let Some(g) = grad.as_deref_mut() {
                    g[i] = if r > 0.0 {
                        q * (2.0 * e * self.inv_l2 / (r * n))
                    } else {
                        Vec2::ZERO
                    };
                }
            }
        }
        mean(vals)
    }

    fn structure(&self, x: &[Vec2]) -> Vec<usize> {
        x.iter()
            .zip(&self.interior)
            .map(|(&p, &inside)| {
                if inside {
                    self.region.signed_distance(p).piece
                } else {
                    0
                }
            })
            .collect()
    }
}

/// Quadratic pull of the centroid.
#[derive(Debug)]
pub struct CenterTerm {
    pub center: Vec2,
    inv_l2: f64,
}

impl CenterTerm {
    pub fn new(center: Vec2, norm_length: f64) -> Self {
        CenterTerm {
            center,
            inv_l2: 1.0 / (norm_length * norm_length),
        }
    }
}

impl Term for CenterTerm {
    fn eval(&self, x: &[Vec2], grad: Option<&mut [Vec2]>) -> f64 {
        let e = centroid(x) - self.center;
        if let Some(g) = grad {
            let gi = e * (2.0 * self.inv_l2 / x.len() as f64);
            g.fill(gi);
        }
        e.norm_sq() * self.inv_l2
    }
}

/// Quadratic pull of the RMS radius about the centroid.
#[derive(Debug)]
pub struct ScaleTerm {
    pub radius: f64,
    inv_l2: f64,
}

impl ScaleTerm {
    pub fn new(radius: f64, norm_length: f64) -> Self {
        ScaleTerm {
            radius,
            inv_l2: 1.0 / (norm_length * norm_length),
        }
    }
}

impl Term for ScaleTerm {
    fn eval(&self, x: &[Vec2], grad: Option<&mut [Vec2]>) -> f64 {
        let c = centroid(x);
        let n = x.len() as f64;
        let rms = mean(x.iter().map(|&p| (p - c).norm_sq()).collect()).sqrt();
        let e = rms - self.radius;
        if let Some(g) = grad {
            for (gi, &p) in g.iter_mut().zip(x) {
                *gi = if rms > 0.0 {
                    (p - c) * (2.0 * e * self.inv_l2 / (n * rms))
                } else {
                    Vec2::ZERO
                };
            }
        }
        e * e * self.inv_l2
    }
}
