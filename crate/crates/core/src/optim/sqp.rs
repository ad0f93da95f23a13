//! Sequential quadratic programming for
//!
//! minimise f(x) subject to c(x) ≥ 0 and lower ≤ x ≤ upper.
//!
//! Damped BFGS Hessian, dual active-set QP subproblems (elastic when the
//! linearisation is infeasible), ℓ1 merit with Armijo backtracking by
//! quadratic interpolation. Bounds are kept exactly.

use super::linalg::{dot, identity, inf_norm, mat_vec};
use super::qp::{solve_qp, QpError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub trait Problem {
    fn dim(&self) -> usize;
    fn n_constraints(&self) -> usize;
    fn value(&mut self, x: &[f64]) -> f64;
    /// Value and gradient.
    fn gradient(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
    /// Constraint values; feasible means every entry ≥ 0.
    fn constraints(&mut self, x: &[f64], c: &mut [f64]);
    /// Row i is ∇c_i.
    fn jacobian(&mut self, x: &[f64], jac: &mut [Vec<f64>]);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Bounds {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.max(*lo).min(*hi);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((v, lo), hi)| v >= lo && v <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SqpOptions {
    /// KKT residual at which the solver stops.
    pub tol: f64,
    pub max_iters: usize,
    /// Largest constraint violation accepted as feasible.
    pub feas_tol: f64,
    /// Random starts of the feasibility phase.
    pub feasibility_starts: usize,
    pub seed: u64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        SqpOptions {
            tol: 1e-6,
            max_iters: 200,
            feas_tol: 1e-6,
            feasibility_starts: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqpResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// max(‖∇L‖∞, max |λ_i c_i|, max violation) at `x`.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub max_violation: f64,
    /// Multipliers of the general constraints.
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SqpError {
    #[error("no feasible point found from {starts} starts (smallest violation {best_violation:e})")]
    Infeasible { best_violation: f64, starts: usize },
    #[error("objective or constraints not finite at the start point")]
    NonFinite,
    #[error("QP subproblem failed: {0}")]
    Qp(QpError),
    #[error("bad problem dimensions")]
    Dimensions,
}

fn violation(c: &[f64]) -> f64 {
    c.iter().fold(0.0f64, |m, v| m.max(-v))
}

fn l1_violation(c: &[f64]) -> f64 {
    c.iter().map(|v| (-v).max(0.0)).sum()
}

/// Minimise from `x0` (projected onto the bounds). If the main solve ends
/// infeasible, a multi-start feasibility phase looks for a feasible point
/// and the solve restarts from it; failing that, the smallest violation
/// found is returned as the infeasibility certificate.
pub fn minimize_constrained(
    prob: &mut impl Problem,
    x0: &[f64],
    bounds: &Bounds,
    opts: &SqpOptions,
) -> Result<SqpResult, SqpError> {
    let n = prob.dim();
    if x0.len() != n || bounds.lower.len() != n || bounds.upper.len() != n {
        return Err(SqpError::Dimensions);
    }
    let mut x = x0.to_vec();
    bounds.clamp(&mut x);
    let first = solve(prob, &x, bounds, opts)?;
    if first.max_violation <= opts.feas_tol {
        return Ok(first);
    }
    let starts = feasibility_starts(&x, &first.x, bounds, opts);
    let mut best = first.max_violation;
    for s in &starts {
        let mut feas = Feasibility { inner: prob };
        let Ok(r) = solve(&mut feas, s, bounds, opts) else {
            continue;
        };
        let mut c = vec![0.0; prob.n_constraints()];
        prob.constraints(&r.x, &mut c);
        let v = violation(&c);
        best = best.min(v);
        if v <= opts.feas_tol {
            let again = solve(prob, &r.x, bounds, opts)?;
            if again.max_violation <= opts.feas_tol {
                return Ok(again);
            }
            best = best.min(again.max_violation);
        }
    }
    Err(SqpError::Infeasible {
        best_violation: best,
        starts: starts.len() + 1,
    })
}

fn feasibility_starts(x0: &[f64], last: &[f64], bounds: &Bounds, opts: &SqpOptions) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xFEA5_1B1E);
    let mut out = vec![last.to_vec(), x0.to_vec()];
    for _ in 0..opts.feasibility_starts {
        out.push(
            (0..x0.len())
                .map(|i| {
                    let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
                    let span = 1.0 + x0[i].abs();
                    let lo = if lo.is_finite() { lo } else { x0[i] - 10.0 * span };
                    let hi = if hi.is_finite() { hi } else { x0[i] + 10.0 * span };
                    if hi > lo {
                        rng.gen_range(lo..=hi)
                    } else {
                        lo
                    }
                })
                .collect(),
        );
    }
    out
}

/// ½‖max(0, −c)‖² subject to the bounds only.
struct Feasibility<'a, P: Problem> {
    inner: &'a mut P,
}

impl<P: Problem> Problem for Feasibility<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn n_constraints(&self) -> usize {
        0
    }
    fn value(&mut self, x: &[f64]) -> f64 {
        let mut c = vec![0.0; self.inner.n_constraints()];
        self.inner.constraints(x, &mut c);
        0.5 * c.iter().map(|v| v.min(0.0).powi(2)).sum::<f64>()
    }
    fn gradient(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let m = self.inner.n_constraints();
        let mut c = vec![0.0; m];
        let mut jac = vec![vec![0.0; x.len()]; m];
        self.inner.constraints(x, &mut c);
        self.inner.jacobian(x, &mut jac);
        grad.fill(0.0);
        for (ci, row) in c.iter().zip(&jac) {
            if *ci < 0.0 {
                for (g, r) in grad.iter_mut().zip(row) {
                    *g += ci * r;
                }
            }
        }
        0.5 * c.iter().map(|v| v.min(0.0).powi(2)).sum::<f64>()
    }
    fn constraints(&mut self, _x: &[f64], _c: &mut [f64]) {}
    fn jacobian(&mut self, _x: &[f64], _jac: &mut [Vec<f64>]) {}
}

struct Subproblem {
    d: Vec<f64>,
    /// Multipliers of the general rows.
    lambda: Vec<f64>,
    /// Multipliers of the bound rows, paired with (variable, sign).
    bound_lambda: Vec<(usize, f64, f64)>,
}

fn subproblem(
    b: &[f64],
    g: &[f64],
    c: &[f64],
    jac: &[Vec<f64>],
    x: &[f64],
    bounds: &Bounds,
    penalty: f64,
) -> Result<Subproblem, QpError> {
    let n = g.len();
    let m = c.len();
    let mut rows: Vec<Vec<f64>> = jac.to_vec();
    let mut rhs: Vec<f64> = c.iter().map(|v| -v).collect();
    let mut bound_rows = Vec::new();
    for j in 0..n {
        let mut e = vec![0.0; n];
        if bounds.lower[j].is_finite() {
            e[j] = 1.0;
            rows.push(e.clone());
            rhs.push(bounds.lower[j] - x[j]);
            bound_rows.push((j, 1.0));
        }
        if bounds.upper[j].is_finite() {
            e[j] = -1.0;
            rows.push(e);
            rhs.push(x[j] - bounds.upper[j]);
            bound_rows.push((j, -1.0));
        }
    }
    let pack = |lam: &[f64], d: Vec<f64>| Subproblem {
        d,
        lambda: lam[..m].to_vec(),
        bound_lambda: bound_rows
            .iter()
            .zip(&lam[m..m + bound_rows.len()])
            .map(|(&(j, s), &l)| (j, s, l))
            .collect(),
    };
    match solve_qp(b, g, &rows, &rhs) {
        Ok(s) => return Ok(pack(&s.lambda, s.x)),
        Err(QpError::Infeasible { .. }) | Err(QpError::IterationLimit) if m > 0 => {}
        Err(e) => return Err(e),
    }
    // Elastic mode: one slack t ≥ 0 relaxes every general row, priced at
    // `penalty` per unit.
    let ne = n + 1;
    let mut be = vec![0.0; ne * ne];
    for i in 0..n {
        for j in 0..n {
            be[i * ne + j] = b[i * n + j];
        }
    }
    be[ne * ne - 1] = 1.0;
    let mut ge = g.to_vec();
    ge.push(penalty);
    let mut erows: Vec<Vec<f64>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut e = r.clone();
            e.push(if i < m { 1.0 } else { 0.0 });
            e
        })
        .collect();
    let mut t_row = vec![0.0; ne];
    t_row[n] = 1.0;
    erows.push(t_row);
    let mut erhs = rhs;
    erhs.push(0.0);
    let s = solve_qp(&be, &ge, &erows, &erhs)?;
    Ok(pack(&s.lambda, s.x[..n].to_vec()))
}

fn solve(
    prob: &mut impl Problem,
    x0: &[f64],
    bounds: &Bounds,
    opts: &SqpOptions,
) -> Result<SqpResult, SqpError> {
    let n = prob.dim();
    let m = prob.n_constraints();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = prob.gradient(&x, &mut g);
    let mut c = vec![0.0; m];
    let mut jac = vec![vec![0.0; n]; m];
    prob.constraints(&x, &mut c);
    prob.jacobian(&x, &mut jac);
    if !f.is_finite() || g.iter().chain(&c).any(|v| !v.is_finite()) {
        return Err(SqpError::NonFinite);
    }
    let mut b = identity(n);
    let mut fresh = true;
    let mut penalty = 0.0f64;
    let mut iterations = 0;
    let mut converged = false;
    let mut kkt;
    let mut lambda;
    let (mut xt, mut ct) = (vec![0.0; n], vec![0.0; m]);

    loop {
        let sub = match subproblem(&b, &g, &c, &jac, &x, bounds, penalty.max(1.0) * 10.0) {
            Ok(s) => s,
            Err(QpError::NotConvex) if !fresh => {
                b = identity(n);
                fresh = true;
                continue;
            }
            Err(e) => return Err(SqpError::Qp(e)),
        };
        lambda = sub.lambda.clone();
        // KKT residual at x with the subproblem multipliers.
        let mut grad_l = g.clone();
        for (row, l) in jac.iter().zip(&lambda) {
            for (gl, r) in grad_l.iter_mut().zip(row) {
                *gl -= l * r;
            }
        }
        let mut compl = 0.0f64;
        for &(j, s, l) in &sub.bound_lambda {
            grad_l[j] -= s * l;
            let slack = if s > 0.0 {
                x[j] - bounds.lower[j]
            } else {
                bounds.upper[j] - x[j]
            };
            compl = compl.max((l * slack).abs());
        }
        for (l, ci) in lambda.iter().zip(&c) {
            compl = compl.max((l * ci).abs());
        }
        kkt = inf_norm(&grad_l).max(compl).max(violation(&c));
        if kkt <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }
        let d = sub.d;
        penalty = penalty.max(2.0 * inf_norm(&lambda));
        let merit = |fv: f64, cv: &[f64]| fv + penalty * l1_violation(cv);
        let phi0 = merit(f, &c);
        let lin: Vec<f64> = c
            .iter()
            .zip(&jac)
            .map(|(ci, row)| ci + dot(row, &d))
            .collect();
        let slope = dot(&g, &d) + penalty * (l1_violation(&lin) - l1_violation(&c));
        let tiny = inf_norm(&d) <= 1e-15 * (1.0 + inf_norm(&x));
        if !(slope < 0.0) || tiny {
            if fresh || tiny {
                break;
            }
            b = identity(n);
            fresh = true;
            continue;
        }
        // Largest step keeping the bounds.
        let mut alpha_max = f64::INFINITY;
        for j in 0..n {
            if d[j] > 0.0 && bounds.upper[j].is_finite() {
                alpha_max = alpha_max.min((bounds.upper[j] - x[j]) / d[j]);
            } else if d[j] < 0.0 && bounds.lower[j].is_finite() {
                alpha_max = alpha_max.min((bounds.lower[j] - x[j]) / d[j]);
            }
        }
        let alpha_max = alpha_max.max(1.0).min(10.0);
        let mut trial = |alpha: f64, xt: &mut Vec<f64>, ct: &mut Vec<f64>| {
            for ((t, xi), di) in xt.iter_mut().zip(&x).zip(&d) {
                *t = xi + alpha * di;
            }
            bounds.clamp(xt);
            let ft = prob.value(xt);
            prob.constraints(xt, ct);
            (ft, merit(ft, ct))
        };
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let (ft, phi) = trial(alpha, &mut xt, &mut ct);
            if phi.is_finite() && phi <= phi0 + 1e-4 * alpha * slope {
                accepted = Some((alpha, ft, phi));
                break;
            }
            let curv = phi - phi0 - slope * alpha;
            alpha = if phi.is_finite() && curv > 0.0 {
                (-slope * alpha * alpha / (2.0 * curv)).clamp(0.1 * alpha, 0.5 * alpha)
            } else {
                0.1 * alpha
            };
        }
        let Some((alpha, mut ft, phi)) = accepted else {
            if fresh {
                break;
            }
            b = identity(n);
            fresh = true;
            continue;
        };
        // One interpolation step towards the merit minimiser along d.
        let curv = phi - phi0 - slope * alpha;
        if curv > 0.0 {
            let star = (-slope * alpha * alpha / (2.0 * curv)).min(alpha_max);
            if star > 0.0 && (star - alpha).abs() > 1e-3 * alpha {
                let mut xs = vec![0.0; n];
                let mut cs = vec![0.0; m];
                let (fs, ps) = trial(star, &mut xs, &mut cs);
                if ps.is_finite() && ps < phi {
                    ft = fs;
                    xt = xs;
                    ct = cs;
                }
            }
        }
        let mut gn = vec![0.0; n];
        let fg = prob.gradient(&xt, &mut gn);
        debug_assert!(!fg.is_finite() || (fg - ft).abs() <= 1e-10 * ft.abs().max(1e-300));
        let mut jn = vec![vec![0.0; n]; m];
        prob.jacobian(&xt, &mut jn);
        // Damped BFGS on the Lagrangian gradient.
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let mut y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        for ((rn, ro), l) in jn.iter().zip(&jac).zip(&lambda) {
            for ((yi, a), b) in y.iter_mut().zip(rn).zip(ro) {
                *yi -= l * (a - b);
            }
        }
        let sy = dot(&s, &y);
        if fresh && sy > 0.0 {
            let scale = dot(&y, &y) / sy;
            for v in b.iter_mut() {
                *v *= scale;
            }
        }
        let mut bs = vec![0.0; n];
        mat_vec(&b, n, &s, &mut bs);
        let sbs = dot(&s, &bs);
        if sbs > 0.0 {
            let theta = if sy >= 0.2 * sbs {
                1.0
            } else {
                0.8 * sbs / (sbs - sy)
            };
            let r: Vec<f64> = y
                .iter()
                .zip(&bs)
                .map(|(yi, bi)| theta * yi + (1.0 - theta) * bi)
                .collect();
            let sr = dot(&s, &r);
            if sr > 0.0 {
                for i in 0..n {
                    for j in 0..n {
                        b[i * n + j] += r[i] * r[j] / sr - bs[i] * bs[j] / sbs;
                    }
                }
                fresh = false;
            }
        }
        x.clone_from(&xt);
        f = fg;
        g = gn;
        c.clone_from(&ct);
        jac = jn;
        iterations += 1;
    }
    Ok(SqpResult {
        max_violation: violation(&c),
        x,
        f,
        kkt_residual: kkt,
        iterations,
        converged,
        multipliers: lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Problem from closures over plain vectors.
    pub struct Closure<F, C> {
        pub n: usize,
        pub m: usize,
        pub f: F,
        pub c: C,
    }

    impl<F, C> Problem for Closure<F, C>
    where
        F: FnMut(&[f64], Option<&mut [f64]>) -> f64,
        C: FnMut(&[f64], &mut [f64], Option<&mut [Vec<f64>]>),
    {
        fn dim(&self) -> usize {
            self.n
        }
        fn n_constraints(&self) -> usize {
            self.m
        }
        fn value(&mut self, x: &[f64]) -> f64 {
            (self.f)(x, None)
        }
        fn gradient(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
            (self.f)(x, Some(g))
        }
        fn constraints(&mut self, x: &[f64], c: &mut [f64]) {
            (self.c)(x, c, None)
        }
        fn jacobian(&mut self, x: &[f64], j: &mut [Vec<f64>]) {
            let mut c = vec![0.0; self.m];
            (self.c)(x, &mut c, Some(j))
        }
    }

    #[test]
    fn linear_constraints_hand_solution() {
        let mut p = Closure {
            n: 2,
            m: 3,
            f: |x: &[f64], g: Option<&mut [f64]>| {
                if let Some(g) = g {
                    g[0] = 2.0 * (x[0] - 1.0);
                    g[1] = 2.0 * (x[1] - 2.5);
                }
                (x[0] - 1.0).powi(2) + (x[1] - 2.5).powi(2)
            },
            c: |x: &[f64], c: &mut [f64], j: Option<&mut [Vec<f64>]>| {
                c[0] = x[0] - 2.0 * x[1] + 2.0;
                c[1] = -x[0] - 2.0 * x[1] + 6.0;
                c[2] = -x[0] + 2.0 * x[1] + 2.0;
                if let Some(j) = j {
                    j[0] = vec![1.0, -2.0];
                    j[1] = vec![-1.0, -2.0];
                    j[2] = vec![-1.0, 2.0];
                }
            },
        };
        let bounds = Bounds {
            lower: vec![0.0, 0.0],
            upper: vec![f64::INFINITY; 2],
        };
        let r = minimize_constrained(&mut p, &[2.0, 0.0], &bounds, &SqpOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.4).abs() < 1e-6 && (r.x[1] - 1.7).abs() < 1e-6, "{:?}", r.x);
        assert!((r.f - 0.8).abs() < 1e-6);
        assert!(r.kkt_residual <= 1e-6);
    }

    #[test]
    fn bounded_rosenbrock() {
        let mut p = Closure {
            n: 2,
            m: 0,
            f: |x: &[f64], g: Option<&mut [f64]>| {
                if let Some(g) = g {
                    g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
                    g[1] = 200.0 * (x[1] - x[0] * x[0]);
                }
                (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
            },
            c: |_: &[f64], _: &mut [f64], _: Option<&mut [Vec<f64>]>| {},
        };
        let bounds = Bounds {
            lower: vec![-2.0; 2],
            upper: vec![2.0; 2],
        };
        let opts = SqpOptions {
            tol: 1e-10,
            ..SqpOptions::default()
        };
        let r = minimize_constrained(&mut p, &[-1.2, 1.0], &bounds, &opts).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn quadratic_terminates_quickly() {
        let q = [
            [4.0, 1.0, 0.5, 0.0],
            [1.0, 3.0, 0.2, 0.1],
            [0.5, 0.2, 2.0, 0.3],
            [0.0, 0.1, 0.3, 1.5],
        ];
        let target = [0.3, -0.7, 1.1, 0.4];
        let mut p = Closure {
            n: 4,
            m: 0,
            f: |x: &[f64], g: Option<&mut [f64]>| {
                let d: Vec<f64> = x.iter().zip(&target).map(|(a, b)| a - b).collect();
                let qd: Vec<f64> = q.iter().map(|r| dot(r, &d)).collect();
                if let Some(g) = g {
                    g.copy_from_slice(&qd);
                }
                0.5 * dot(&d, &qd)
            },
            c: |_: &[f64], _: &mut [f64], _: Option<&mut [Vec<f64>]>| {},
        };
        let bounds = Bounds {
            lower: vec![-5.0; 4],
            upper: vec![5.0; 4],
        };
        let r = minimize_constrained(&mut p, &[0.0; 4], &bounds, &SqpOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 4 + 5, "{}", r.iterations);
        for i in 0..4 {
            assert!((r.x[i] - target[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn infeasible_set_is_reported() {
        let mut p = Closure {
            n: 1,
            m: 2,
            f: |x: &[f64], g: Option<&mut [f64]>| {
                if let Some(g) = g {
                    g[0] = 2.0 * x[0];
                }
                x[0] * x[0]
            },
            c: |x: &[f64], c: &mut [f64], j: Option<&mut [Vec<f64>]>| {
                c[0] = x[0] - 2.0;
                c[1] = 1.0 - x[0];
                if let Some(j) = j {
                    j[0] = vec![1.0];
                    j[1] = vec![-1.0];
                }
            },
        };
        let err = minimize_constrained(&mut p, &[0.0], &Bounds::unbounded(1), &SqpOptions::default())
            .unwrap_err();
        match err {
            SqpError::Infeasible { best_violation, .. } => assert!(best_violation >= 0.5 - 1e-9),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn nonlinear_constraint_circle() {
        // min x + y on the unit disk: (−1/√2, −1/√2).
        let mut p = Closure {
            n: 2,
            m: 1,
            f: |x: &[f64], g: Option<&mut [f64]>| {
                if let Some(g) = g {
                    g[0] = 1.0;
                    g[1] = 1.0;
                }
                x[0] + x[1]
            },
            c: |x: &[f64], c: &mut [f64], j: Option<&mut [Vec<f64>]>| {
                c[0] = 1.0 - x[0] * x[0] - x[1] * x[1];
                if let Some(j) = j {
                    j[0] = vec![-2.0 * x[0], -2.0 * x[1]];
                }
            },
        };
        let r = minimize_constrained(&mut p, &[3.0, 0.5], &Bounds::unbounded(2), &SqpOptions::default())
            .unwrap();
        let h = -(0.5f64).sqrt();
        assert!((r.x[0] - h).abs() < 1e-6 && (r.x[1] - h).abs() < 1e-6, "{r:?}");
        assert!(r.max_violation <= 1e-6);
    }
}
