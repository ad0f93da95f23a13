//! Direct minimisation of f(A) over particle positions.
//!
//! L-BFGS with Armijo backtracking. Every reduction over particles goes
//! through [`invariant_sum`] so that relabelling the particles relabels the
//! iterates and nothing else.

use crate::geom::{invariant_sum, Rect, Vec2};
use crate::terms::CompiledObjective;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Stop when ‖∇f‖∞ · norm_length falls below this.
    pub tolerance: f64,
    /// Stop when f decreased by less than `ftol · max(f, 1e-300)` over the
    /// last `stall_window` iterations.
    pub ftol: f64,
    pub stall_window: usize,
    pub seed: u64,
    pub restarts: usize,
    /// L-BFGS memory.
    pub memory: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Largest particle displacement of the first trial step, in units of
    /// norm_length.
    pub first_step: f64,
    /// Record positions every this many iterations (0 = final only).
    pub record_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 2000,
            tolerance: 1e-6,
            ftol: 1e-12,
            stall_window: 10,
            seed: 0,
            restarts: 3,
            memory: 10,
            armijo_c: 1e-4,
            first_step: 0.1,
            record_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub iter: usize,
    pub objective: f64,
    pub positions: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    /// f after every accepted iteration, starting with the initial value.
    pub values: Vec<f64>,
    pub initial: Vec<Vec2>,
    pub final_positions: Vec<Vec2>,
    pub converged: bool,
    pub iterations: usize,
    /// Restart that produced this trace.
    pub restart: usize,
    pub frames: Vec<Frame>,
}

impl SolveTrace {
    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("trace has the initial value")
    }

    pub fn initial_value(&self) -> f64 {
        self.values[0]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("objective expects {expected} particles, solver asked for {actual}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("objective is not finite at {attempts} random initialisations")]
    NonFinite { attempts: usize },
    #[error("invalid options: {0}")]
    Options(&'static str),
    #[error("field of view has no area")]
    Fov,
}

fn dot(a: &[f64], b: &[f64], buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend(a.iter().zip(b).map(|(x, y)| x * y));
    invariant_sum(buf)
}

fn flat(x: &[Vec2]) -> Vec<f64> {
    x.iter().flat_map(|p| [p.x, p.y]).collect()
}

fn unflat(v: &[f64], out: &mut [Vec2]) {
    for (p, c) in out.iter_mut().zip(v.chunks_exact(2)) {
        *p = Vec2::new(c[0], c[1]);
    }
}

struct Problem<'a> {
    obj: &'a CompiledObjective,
    pos: Vec<Vec2>,
    grad: Vec<Vec2>,
}

impl Problem<'_> {
    fn eval(&mut self, v: &[f64], g: &mut [f64]) -> f64 {
        unflat(v, &mut self.pos);
        let f = self.obj.value_grad(&self.pos, &mut self.grad);
        for (gi, p) in g.chunks_exact_mut(2).zip(&self.grad) {
            gi[0] = p.x;
            gi[1] = p.y;
        }
        f
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// One L-BFGS descent from `init`.
pub fn descend(obj: &CompiledObjective, init: &[Vec2], opts: &SolveOptions) -> SolveTrace {
    assert_eq!(init.len(), obj.n, "configuration size");
    let dim = 2 * init.len();
    let l = obj.norm_length;
    let mut prob = Problem {
        obj,
        pos: init.to_vec(),
        grad: vec![Vec2::ZERO; init.len()],
    };
    let mut x = flat(init);
    let mut g = vec![0.0; dim];
    let mut f = prob.eval(&x, &mut g);
    let mut values = vec![f];
    let mut frames = Vec::new();
    let record = |frames: &mut Vec<Frame>, iter: usize, f: f64, x: &[f64]| {
        let mut positions = vec![Vec2::ZERO; x.len() / 2];
        unflat(x, &mut positions);
        frames.push(Frame {
            iter,
            objective: f,
            positions,
        });
    };
    if opts.record_every > 0 {
        record(&mut frames, 0, f, &x);
    }

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho: Vec<f64> = Vec::new();
    let mut buf = Vec::with_capacity(dim);
    let mut d = vec![0.0; dim];
    let mut xn = vec![0.0; dim];
    let mut gn = vec![0.0; dim];
    let mut alpha = vec![0.0; opts.memory];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        if !f.is_finite() {
            break;
        }
        if inf_norm(&g) * l < opts.tolerance {
            converged = true;
            break;
        }
        // Two-loop recursion.
        d.copy_from_slice(&g);
        let k = s_hist.len();
        for i in (0..k).rev() {
            alpha[i] = rho[i] * dot(&s_hist[i], &d, &mut buf);
            for (dj, yj) in d.iter_mut().zip(&y_hist[i]) {
                *dj -= alpha[i] * yj;
            }
        }
        let gamma = if k > 0 {
            dot(&s_hist[k - 1], &y_hist[k - 1], &mut buf)
                / dot(&y_hist[k - 1], &y_hist[k - 1], &mut buf)
        } else {
            opts.first_step * l / inf_norm(&g)
        };
        for dj in d.iter_mut() {
            *dj *= gamma;
        }
        for i in 0..k {
            let b = rho[i] * dot(&y_hist[i], &d, &mut buf);
            for (dj, sj) in d.iter_mut().zip(&s_hist[i]) {
                *dj += (alpha[i] - b) * sj;
            }
        }
        for dj in d.iter_mut() {
            *dj = -*dj;
        }
        let mut slope = dot(&g, &d, &mut buf);
        if !(slope < 0.0) || !slope.is_finite() {
            // Lost descent: fall back to a scaled gradient step and forget.
            s_hist.clear();
            y_hist.clear();
            rho.clear();
            let scale = opts.first_step * l / inf_norm(&g);
            for (dj, gj) in d.iter_mut().zip(&g) {
                *dj = -gj * scale;
            }
            slope = dot(&g, &d, &mut buf);
        }

        let mut t = 1.0;
        let mut fnew = f64::NAN;
        let mut accepted = false;
        for _ in 0..60 {
            for ((xi, &x0), &di) in xn.iter_mut().zip(&x).zip(&d) {
                *xi = x0 + t * di;
            }
            fnew = prob.eval(&xn, &mut gn);
            if fnew.is_finite() && fnew <= f + opts.armijo_c * t * slope {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            if s_hist.is_empty() {
                // Even a tiny gradient step fails: numerically stationary.
                converged = true;
                break;
            }
            s_hist.clear();
            y_hist.clear();
            rho.clear();
            continue;
        }
        iterations += 1;

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y, &mut buf);
        if sy > 1e-12 * dot(&y, &y, &mut buf).sqrt() * dot(&s, &s, &mut buf).sqrt() && sy > 0.0 {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
            rho.push(1.0 / sy);
        }
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut g, &mut gn);
        f = fnew;
        values.push(f);
        if opts.record_every > 0 && iterations % opts.record_every == 0 {
            record(&mut frames, iterations, f, &x);
        }
        if values.len() > opts.stall_window {
            let old = values[values.len() - 1 - opts.stall_window];
            if old - f <= opts.ftol * f.abs().max(1e-300) {
                converged = true;
                break;
            }
        }
    }
    let mut final_positions = vec![Vec2::ZERO; init.len()];
    unflat(&x, &mut final_positions);
    if opts.record_every > 0 && frames.last().map(|fr| fr.iter) != Some(iterations) {
        record(&mut frames, iterations, f, &x);
    }
    SolveTrace {
        values,
        initial: init.to_vec(),
        final_positions,
        converged,
        iterations,
        restart: 0,
        frames,
    }
}

/// Seed of restart `r`.
pub fn restart_seed(seed: u64, r: usize) -> u64 {
    seed ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Uniform random configuration inside `fov`.
pub fn uniform_config(n: usize, fov: &Rect, rng: &mut impl Rng) -> Vec<Vec2> {
    (0..n)
        .map(|_| {
            Vec2::new(
                rng.gen_range(fov.min.x..=fov.max.x),
                rng.gen_range(fov.min.y..=fov.max.y),
            )
        })
        .collect()
}

/// Random initialisation for restart `r`, resampled while f is not finite.
pub fn initial_config(
    obj: &CompiledObjective,
    fov: &Rect,
    seed: u64,
    r: usize,
) -> Result<Vec<Vec2>, SolveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(seed, r));
    for _ in 0..10 {
        let x = uniform_config(obj.n, fov, &mut rng);
        if obj.evaluate(&x).map_or(false, f64::is_finite) {
            return Ok(x);
        }
    }
    Err(SolveError::NonFinite { attempts: 10 })
}

/// Minimise from `opts.restarts` uniform-random starts in `fov` and keep
/// the best final value (ties go to the lower restart index).
pub fn solve_potential(
    obj: &CompiledObjective,
    n: usize,
    fov: &Rect,
    opts: &SolveOptions,
) -> Result<SolveTrace, SolveError> {
    if obj.n != n {
        return Err(SolveError::CountMismatch {
            expected: obj.n,
            actual: n,
        });
    }
    if opts.max_iters == 0 {
        return Err(SolveError::Options("max_iters must be at least 1"));
    }
    if !(opts.tolerance > 0.0) {
        return Err(SolveError::Options("tolerance must be positive"));
    }
    if !(fov.is_valid() && fov.area() > 0.0) {
        return Err(SolveError::Fov);
    }
    let restarts = opts.restarts.max(1);
    let inits = (0..restarts)
        .map(|r| initial_config(obj, fov, opts.seed, r))
        .collect::<Result<Vec<_>, _>>()?;
    let traces: Vec<SolveTrace> = std::thread::scope(|scope| {
        let handles: Vec<_> = inits
            .iter()
            .enumerate()
            .map(|(r, init)| {
                scope.spawn(move || {
                    let mut t = descend(obj, init, opts);
                    t.restart = r;
                    t
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("restart thread panicked"))
            .collect()
    });
    Ok(traces
        .into_iter()
        .min_by(|a, b| {
            a.final_value()
                .total_cmp(&b.final_value())
                .then(a.restart.cmp(&b.restart))
        })
        .expect("at least one restart"))
}
