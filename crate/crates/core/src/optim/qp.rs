//! Strictly convex inequality-constrained QP by the Goldfarb–Idnani dual
//! active-set method:
//!
//! minimise ½ xᵀHx + gᵀx subject to a_iᵀx ≥ b_i.
//!
//! The active-set projections are recomputed densely at every step, which
//! is plenty at the sizes the planner uses (tens of variables).

use super::linalg::{chol_solve, cholesky, dot};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("Hessian is not positive definite")]
    NotConvex,
    #[error("constraints are infeasible (row {row})")]
    Infeasible { row: usize },
    #[error("active-set iteration limit reached")]
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multiplier of every row (zero when inactive).
    pub lambda: Vec<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
}

pub fn solve_qp(
    h: &[f64],
    g: &[f64],
    rows: &[Vec<f64>],
    b: &[f64],
) -> Result<QpSolution, QpError> {
    let n = g.len();
    let l = cholesky(h, n).ok_or(QpError::NotConvex)?;
    let hinv = |v: &[f64]| {
        let mut w = v.to_vec();
        chol_solve(&l, n, &mut w);
        w
    };
    let row_norm: Vec<f64> = rows.iter().map(|a| dot(a, a).sqrt().max(1e-300)).collect();
    let mut x: Vec<f64> = hinv(g).into_iter().map(|v| -v).collect();
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let slack = |x: &[f64], i: usize| dot(&rows[i], x) - b[i];
    let tol = 1e-12;
    let limit = 20 * (rows.len() + n) + 50;
    let mut iterations = 0;

    loop {
        // Most violated row, scaled by its norm.
        let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..rows.len() {
            if active.contains(&i) {
                continue;
            }
            let s = slack(&x, i) / row_norm[i];
            if s < -tol * scale && pick.map_or(true, |(_, best)| s < best) {
                pick = Some((i, s));
            }
        }
        let Some((p, _)) = pick else {
            let mut lambda = vec![0.0; rows.len()];
            for (k, &i) in active.iter().enumerate() {
                lambda[i] = u[k];
            }
            return Ok(QpSolution {
                x,
                lambda,
                active,
                iterations,
            });
        };
        let np = &rows[p];
        let mut plus = 0.0;
        loop {
            iterations += 1;
            if iterations > limit {
                return Err(QpError::IterationLimit);
            }
            let k = active.len();
            let w: Vec<Vec<f64>> = active.iter().map(|&i| hinv(&rows[i])).collect();
            let hnp = hinv(np);
            let mut r = vec![0.0; k];
            if k > 0 {
                let mut m = vec![0.0; k * k];
                for i in 0..k {
                    for j in 0..k {
                        m[i * k + j] = dot(&rows[active[i]], &w[j]);
                    }
                    r[i] = dot(&w[i], np);
                }
                let lm = cholesky(&m, k).ok_or(QpError::NotConvex)?;
                chol_solve(&lm, k, &mut r);
            }
            let hnp_norm = dot(&hnp, &hnp).sqrt();
            let mut z = hnp;
            for (j, wj) in w.iter().enumerate() {
                for (zi, wi) in z.iter_mut().zip(wj) {
                    *zi -= r[j] * wi;
                }
            }
            // Largest dual step keeping active multipliers nonnegative.
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for j in 0..k {
                if r[j] > 0.0 {
                    let t = u[j] / r[j];
                    if t < t1 {
                        t1 = t;
                        drop = Some(j);
                    }
                }
            }
            let zn = dot(&z, np);
            if dot(&z, &z).sqrt() <= 1e-10 * hnp_norm {
                // No primal progress possible along this row.
                let Some(j) = drop else {
                    return Err(QpError::Infeasible { row: p });
                };
                for (uj, rj) in u.iter_mut().zip(&r) {
                    *uj -= t1 * rj;
                }
                plus += t1;
                active.remove(j);
                u.remove(j);
                continue;
            }
            let t2 = -slack(&x, p) / zn;
            let t = t1.min(t2);
            for (xi, zi) in x.iter_mut().zip(&z) {
                *xi += t * zi;
            }
            for (uj, rj) in u.iter_mut().zip(&r) {
                *uj -= t * rj;
            }
            plus += t;
            if t2 <= t1 {
                active.push(p);
                u.push(plus);
                break;
            }
            let j = drop.expect("finite t1 has a blocking row");
            active.remove(j);
            u.remove(j);
        }
    }
}
