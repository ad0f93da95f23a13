//! Run diagnostics: squareness index, density ratio and the binomial tail
//! probability of a density at least as high arising by chance.

use crate::geom::{Rect, Vec2};
use crate::terms::region::Region;
use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("need at least {need} particles, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("all particles coincide")]
    Degenerate,
    #[error("region has no area inside the field of view")]
    ZeroArea,
}

/// Distance from `q` (in the square's frame) to the perimeter of the
/// axis-aligned square of half-side `s` centered at the origin.
pub fn perimeter_distance(q: Vec2, s: f64) -> f64 {
    let (ax, ay) = (q.x.abs(), q.y.abs());
    if ax <= s && ay <= s {
        s - ax.max(ay)
    } else {
        Vec2::new((ax - s).max(0.0), (ay - s).max(0.0)).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareFit {
    pub center: Vec2,
    /// In [0, π/2).
    pub angle: f64,
    pub half_side: f64,
    /// RMS perimeter distance over the half-side.
    pub index: f64,
}

/// RMS perimeter distance over the half-side for pose (cx, cy, θ, ln s).
fn pose_cost(x: &[Vec2], p: &[f64]) -> f64 {
    let c = Vec2::new(p[0], p[1]);
    let s = p[3].exp();
    let ms = x
        .iter()
        .map(|&pt| perimeter_distance((pt - c).rotate(-p[2]), s).powi(2))
        .sum::<f64>()
        / x.len() as f64;
    ms.sqrt() / s
}

struct PoseCost<'a> {
    x: &'a [Vec2],
}

impl CostFunction for PoseCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        Ok(pose_cost(self.x, p))
    }
}

fn nelder_mead(x: &[Vec2], start: &[f64]) -> (Vec<f64>, f64) {
    let steps = [0.05, 0.05, 0.05, 0.05];
    let mut simplex = vec![start.to_vec()];
    for (i, h) in steps.iter().enumerate() {
        let mut v = start.to_vec();
        v[i] += h;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-15)
        .expect("tolerance is positive");
    let res = Executor::new(PoseCost { x }, solver)
        .configure(|s| s.max_iters(4000))
        .run()
        .expect("pose cost is infallible");
    let state = res.state();
    let best = state.get_best_param().cloned().unwrap_or_else(|| start.to_vec());
    let cost = pose_cost(x, &best);
    (best, cost)
}

/// Best-fitting square by a 16-angle × 5-scale grid about the centroid,
/// refined by Nelder–Mead from the five best grid poses (each refined
/// twice). Coordinates are first moved to the centroid, scaled by the RMS
/// radius and turned so the farthest particle lies on +x, so the search
/// does not depend on the configuration's pose or size.
pub fn fit_square(a: &[Vec2]) -> Result<SquareFit, MetricError> {
    if a.len() < 4 {
        return Err(MetricError::TooFew {
            need: 4,
            got: a.len(),
        });
    }
    let n = a.len() as f64;
    let centroid = a.iter().fold(Vec2::ZERO, |s, p| s + *p) * (1.0 / n);
    let spread = (a.iter().map(|p| (*p - centroid).norm_sq()).sum::<f64>() / n).sqrt();
    if !(spread > 1e-12 * (1.0 + centroid.norm())) {
        return Err(MetricError::Degenerate);
    }
    let far = a
        .iter()
        .map(|p| *p - centroid)
        .fold(Vec2::ZERO, |m, q| if q.norm_sq() > m.norm_sq() { q } else { m });
    let phi = far.angle();
    let x: Vec<Vec2> = a
        .iter()
        .map(|p| ((*p - centroid) * (1.0 / spread)).rotate(-phi))
        .collect();
    let mut grid: Vec<(f64, Vec<f64>)> = Vec::with_capacity(80);
    for i in 0..16 {
        let theta = i as f64 * FRAC_PI_2 / 16.0;
        for scale in [0.6, 0.75, 0.9, 1.05, 1.2] {
            let p = vec![0.0, 0.0, theta, f64::ln(scale)];
            grid.push((pose_cost(&x, &p), p));
        }
    }
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (_, start) in grid.iter().take(5) {
        let (p1, _) = nelder_mead(&x, start);
        let (p2, c2) = nelder_mead(&x, &p1);
        if best.as_ref().map_or(true, |(_, c)| c2 < *c) {
            best = Some((p2, c2));
        }
    }
    let (p, index) = best.expect("five grid poses");
    Ok(SquareFit {
        center: centroid + Vec2::new(p[0], p[1]).rotate(phi) * spread,
        angle: (p[2] + phi).rem_euclid(FRAC_PI_2),
        half_side: p[3].exp() * spread,
        index,
    })
}

pub fn squareness_index(a: &[Vec2]) -> Result<f64, MetricError> {
    fit_square(a).map(|f| f.index)
}

/// (k/n)/α with k the hard count inside `region` and α its area fraction
/// of the field of view.
pub fn density_ratio(a: &[Vec2], region: &Region, fov: &Rect) -> Result<f64, MetricError> {
    let alpha = region.area() / fov.area();
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(MetricError::ZeroArea);
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let k = a.iter().filter(|p| region.contains(**p)).count();
    Ok(k as f64 / a.len() as f64 / alpha)
}

/// P(K ≥ k) for K ~ Binomial(n, α), summed in log space.
pub fn spontaneous_probability(n: u64, k: u64, alpha: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let (la, lb) = (alpha.ln(), (-alpha).ln_1p());
    // ln C(n, k) as a sum of ln((n − k + i)/i).
    let mut lc: f64 = (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum();
    let mut logs = Vec::with_capacity((n - k + 1) as usize);
    for j in k..=n {
        logs.push(lc + j as f64 * la + (n - j) as f64 * lb);
        if j < n {
            lc += ((n - j) as f64).ln() - ((j + 1) as f64).ln();
        }
    }
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logs.iter().map(|l| (l - m).exp()).sum();
    (m + s.ln()).exp().min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use num_rational::BigRational;
    use num_traits::{One, ToPrimitive, Zero};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn on_square(c: Vec2, s: f64, angle: f64, m: usize) -> Vec<Vec2> {
        (0..m)
            .map(|i| {
                let t = i as f64 / m as f64 * 8.0;
                let side = (t / 2.0).floor();
                let u = t - 2.0 * side - 1.0;
                let q = match side as i32 {
                    0 => Vec2::new(u, -1.0),
                    1 => Vec2::new(1.0, u),
                    2 => Vec2::new(-u, 1.0),
                    _ => Vec2::new(-1.0, -u),
                };
                c + (q * s).rotate(angle)
            })
            .collect()
    }

    #[test]
    fn square_perimeter_scores_zero() {
        for (c, s, a) in [
            (Vec2::new(0.0, 0.0), 1.0, 0.0),
            (Vec2::new(13.0, -4.0), 7.5, 0.4),
            (Vec2::new(-2.0, 9.0), 0.3, 2.0),
        ] {
            let idx = squareness_index(&on_square(c, s, a, 12)).unwrap();
            assert!(idx < 1e-6, "{idx}");
        }
        let corners = on_square(Vec2::new(1.0, 2.0), 3.0, 0.3, 4);
        assert!(squareness_index(&corners).unwrap() < 1e-6);
    }

    #[test]
    fn index_is_pose_and_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base: Vec<Vec2> = (0..9)
            .map(|_| Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
            .collect();
        let i0 = squareness_index(&base).unwrap();
        for k in 0..4 {
            let (t, r, s) = (
                Vec2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)),
                rng.gen_range(0.0..6.3),
                rng.gen_range(0.2..5.0),
            );
            let moved: Vec<Vec2> = base.iter().map(|p| p.rotate(r) * s + t).collect();
            let i1 = squareness_index(&moved).unwrap();
            assert!((i1 - i0).abs() < 1e-6, "case {k}: {i0} vs {i1}");
        }
    }

    /// Dense pose grid, independent of the fitting code.
    fn brute_force_index(x: &[Vec2]) -> f64 {
        let cost = |cx: f64, cy: f64, th: f64, s: f64| {
            let (sn, cs) = th.sin_cos();
            let ms: f64 = x
                .iter()
                .map(|p| {
                    let (dx, dy) = (p.x - cx, p.y - cy);
                    let (u, v) = ((cs * dx + sn * dy).abs(), (-sn * dx + cs * dy).abs());
                    let d = if u <= s && v <= s {
                        s - u.max(v)
                    } else {
                        ((u - s).max(0.0).powi(2) + (v - s).max(0.0).powi(2)).sqrt()
                    };
                    d * d
                })
                .sum::<f64>()
                / x.len() as f64;
            ms.sqrt() / s
        };
        // 5 × 5 centers × 200 angles × 200 half-sides = 10⁶ poses.
        let mut best = f64::INFINITY;
        for ix in 0..5 {
            for iy in 0..5 {
                let (cx, cy) = (-0.02 + 0.01 * ix as f64, -0.02 + 0.01 * iy as f64);
                for it in 0..200 {
                    let th = it as f64 * FRAC_PI_2 / 200.0;
                    for is in 0..200 {
                        let s = 0.80 + 0.0015 * is as f64;
                        best = best.min(cost(cx, cy, th, s));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn circle_matches_dense_pose_grid() {
        let x: Vec<Vec2> = (0..12)
            .map(|k| Vec2::from_angle(k as f64 * std::f64::consts::TAU / 12.0))
            .collect();
        let fit = fit_square(&x).unwrap();
        assert!(fit.center.norm() < 1e-6);
        let oracle = brute_force_index(&x);
        assert!(fit.index <= oracle + 1e-12, "{} vs {oracle}", fit.index);
        assert!((oracle - fit.index) / oracle < 1e-3, "{} vs {oracle}", fit.index);
    }

    #[test]
    fn squareness_errors() {
        assert!(matches!(
            squareness_index(&[Vec2::ZERO; 3]),
            Err(MetricError::TooFew { .. })
        ));
        assert_eq!(squareness_index(&[Vec2::new(1.0, 1.0); 5]), Err(MetricError::Degenerate));
    }

    #[test]
    fn density_ratio_examples() {
        let fov = Rect::centered(40.0, 40.0);
        let whole = Region {
            shape: crate::terms::region::Shape::Rect {
                center: Vec2::ZERO,
                half: Vec2::new(40.0, 40.0),
            },
            w: 1.0,
        };
        let pts = vec![Vec2::new(1.0, 1.0), Vec2::new(-30.0, 20.0)];
        assert!((density_ratio(&pts, &whole, &fov).unwrap() - 1.0).abs() < 1e-12);

        let r = (64.0 / std::f64::consts::PI).sqrt();
        let disk = Region::disk(Vec2::ZERO, r, 1.0);
        let mut a: Vec<Vec2> = (0..15).map(|i| Vec2::from_angle(i as f64) * 2.0).collect();
        a.extend((0..85).map(|i| Vec2::new(-35.0 + 0.8 * i as f64, 30.0)));
        assert!((density_ratio(&a, &disk, &fov).unwrap() - 15.0).abs() < 1e-9);
        let empty: Vec<Vec2> = (0..10).map(|i| Vec2::new(20.0, i as f64)).collect();
        assert_eq!(density_ratio(&empty, &disk, &fov).unwrap(), 0.0);
        let none = Region::disk(Vec2::ZERO, 0.0, 1.0);
        assert_eq!(density_ratio(&a, &none, &fov), Err(MetricError::ZeroArea));
    }

    /// Exact upper tail with α = p/q rational.
    pub(crate) fn exact_tail(n: u64, k: u64, p: u64, q: u64) -> f64 {
        let a = BigRational::new(p.into(), q.into());
        let b = BigRational::one() - &a;
        let mut sum = BigRational::zero();
        let mut c = BigUint::one();
        for j in 0..=n {
            if j >= k {
                let term = BigRational::from_integer(c.clone().into())
                    * num_traits::pow(a.clone(), j as usize)
                    * num_traits::pow(b.clone(), (n - j) as usize);
                sum += term;
            }
            c = c * BigUint::from(n - j) / BigUint::from(j + 1);
        }
        sum.to_f64().unwrap()
    }

    #[test]
    fn binomial_tail_matches_exact_rationals() {
        assert_eq!(spontaneous_probability(10, 0, 0.3), 1.0);
        let p = spontaneous_probability(10, 10, 0.5);
        assert!((p - 9.765625e-4).abs() < 1e-9 * 9.765625e-4);
        for (n, k, num, den) in [(10, 3, 1, 4), (20, 7, 3, 10), (40, 1, 1, 100), (60, 30, 1, 2)] {
            let exact = exact_tail(n, k, num, den);
            let got = spontaneous_probability(n, k, num as f64 / den as f64);
            assert!(((got - exact) / exact).abs() < 1e-9, "{n} {k}: {got} vs {exact}");
        }
        let exact = exact_tail(100, 15, 1, 100);
        let got = spontaneous_probability(100, 15, 0.01);
        assert!(got < 1e-10);
        assert!(((got - exact) / exact).abs() < 1e-9, "{got} vs {exact}");
    }
}
