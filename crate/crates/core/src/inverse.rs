//! One control cycle of the inverse problem: choose N placed primitives so
//! that the objective is smallest at the predicted post-advection
//! positions, under bounds and constraints.

use crate::flow::{FlowModel, Placement, Primitive, PrimitiveKind, ScanPlan};
use crate::geom::{Rect, Vec2};
use crate::optim::{minimize_constrained, Bounds, Problem, SqpError, SqpOptions};
use crate::terms::CompiledObjective;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cell::Cell;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keepout {
    pub center: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintSet {
    /// Minimum distance between primitive centers (µm).
    pub d_min: f64,
    /// Box the primitive centers must stay in.
    pub centers: Rect,
    pub keepout: Vec<Keepout>,
    /// Amplitude bounds, used when amplitudes are free.
    pub amplitude: [f64; 2],
    /// Largest particle displacement per cycle (µm).
    pub displacement_cap: Option<f64>,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        ConstraintSet {
            d_min: 4.0,
            centers: Rect::centered(40.0, 40.0),
            keepout: Vec::new(),
            amplitude: [0.0, 1.0],
            displacement_cap: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeMode {
    /// Every primitive runs at this amplitude; 3 decision variables each.
    Fixed(f64),
    /// Amplitude is a fourth decision variable within the bounds.
    Free,
}

/// How LUT primitives are differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LutGradient {
    /// Forward tangents through the bilinear cell gradient (one pass).
    Tangent,
    /// Central differences, two advections per decision variable.
    Differences,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub n_paths: usize,
    pub kind: PrimitiveKind,
    pub amplitude: AmplitudeMode,
    /// Advection time per cycle; `None` picks the kind's default.
    pub dt: Option<f64>,
    pub substeps: usize,
    /// Particle field of view.
    pub fov: Rect,
    pub sqp: SqpOptions,
    pub lut_gradient: LutGradient,
    /// Finite-difference step for LUT primitives, as a fraction of the
    /// scan length.
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            n_paths: 7,
            kind: PrimitiveKind::LinearLut,
            amplitude: AmplitudeMode::Fixed(1.0),
            dt: None,
            substeps: 4,
            fov: Rect::centered(40.0, 40.0),
            sqp: SqpOptions::default(),
            lut_gradient: LutGradient::Tangent,
            fd_step: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedKind {
    Warm,
    Informed,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub plan: ScanPlan,
    /// Decision vector (angles unwrapped).
    pub decision: Vec<f64>,
    pub predicted_cost: f64,
    pub current_cost: f64,
    pub predicted_positions: Vec<Vec2>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seeded_from: SeedKind,
    /// Forward advections spent on this cycle.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("objective expects {expected} particles, got {actual}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("every seed was infeasible (smallest violation {best_violation:e})")]
    Infeasible { best_violation: f64 },
    #[error("objective is not finite")]
    NonFinite,
    #[error("invalid planner settings: {0}")]
    Invalid(&'static str),
}

/// Planner bound to one objective, flow model and constraint set.
pub struct Planner<'a> {
    pub obj: &'a CompiledObjective,
    pub flow: &'a FlowModel,
    pub cfg: &'a PlannerConfig,
    pub cons: &'a ConstraintSet,
    evaluations: Cell<usize>,
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

impl<'a> Planner<'a> {
    pub fn new(
        obj: &'a CompiledObjective,
        flow: &'a FlowModel,
        cfg: &'a PlannerConfig,
        cons: &'a ConstraintSet,
    ) -> Planner<'a> {
        Planner {
            obj,
            flow,
            cfg,
            cons,
            evaluations: Cell::new(0),
        }
    }

    /// Forward advections performed so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations.get()
    }

    pub fn per_path(&self) -> usize {
        match self.cfg.amplitude {
            AmplitudeMode::Fixed(_) => 3,
            AmplitudeMode::Free => 4,
        }
    }

    pub fn dim(&self) -> usize {
        self.per_path() * self.cfg.n_paths
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt.unwrap_or_else(|| self.flow.default_dt(self.cfg.kind))
    }

    fn mid_amplitude(&self) -> f64 {
        match self.cfg.amplitude {
            AmplitudeMode::Fixed(a) => a,
            AmplitudeMode::Free => 0.5 * (self.cons.amplitude[0] + self.cons.amplitude[1]),
        }
    }

    /// Plan encoded by a decision vector; angles wrapped to (−π, π].
    pub fn decode(&self, theta: &[f64]) -> ScanPlan {
        let k = self.per_path();
        ScanPlan {
            primitives: theta
                .chunks_exact(k)
                .map(|c| Primitive {
                    kind: self.cfg.kind,
                    placement: Placement {
                        center: Vec2::new(c[0], c[1]),
                        angle: wrap_angle(c[2]),
                        amplitude: match self.cfg.amplitude {
                            AmplitudeMode::Fixed(a) => a,
                            AmplitudeMode::Free => c[3],
                        },
                    },
                })
                .collect(),
        }
    }

    pub fn encode(&self, plan: &ScanPlan) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        for p in &plan.primitives {
            v.extend([p.placement.center.x, p.placement.center.y, p.placement.angle]);
            if self.per_path() == 4 {
                v.push(p.placement.amplitude);
            }
        }
        v
    }

    pub fn bounds(&self) -> Bounds {
        let mut b = Bounds::unbounded(self.dim());
        let k = self.per_path();
        for j in 0..self.cfg.n_paths {
            b.lower[k * j] = self.cons.centers.min.x;
            b.upper[k * j] = self.cons.centers.max.x;
            b.lower[k * j + 1] = self.cons.centers.min.y;
            b.upper[k * j + 1] = self.cons.centers.max.y;
            if k == 4 {
                b.lower[k * j + 3] = self.cons.amplitude[0];
                b.upper[k * j + 3] = self.cons.amplitude[1];
            }
        }
        b
    }

    /// Predicted positions after one cycle (one evaluation).
    pub fn predict(&self, a: &[Vec2], theta: &[f64]) -> Vec<Vec2> {
        self.evaluations.set(self.evaluations.get() + 1);
        self.flow
            .advect(a, &self.decode(theta), self.dt(), self.cfg.substeps, &self.cfg.fov)
            .map(|r| r.positions)
            .unwrap_or_else(|_| vec![Vec2::new(f64::NAN, f64::NAN); a.len()])
    }

    /// d(position_i)/d(theta_c), indexed [i][c]. Forward tangents count as
    /// one evaluation, central differences as two per column.
    pub fn position_sensitivity(&self, a: &[Vec2], theta: &[f64]) -> Vec<Vec<Vec2>> {
        let k = self.per_path();
        if self.cfg.kind.is_analytic() || self.cfg.lut_gradient == LutGradient::Tangent {
            self.evaluations.set(self.evaluations.get() + 1);
            let Ok((_, s)) = self.flow.advect_with_sensitivity(
                a,
                &self.decode(theta),
                self.dt(),
                self.cfg.substeps,
                &self.cfg.fov,
            ) else {
                return vec![vec![Vec2::new(f64::NAN, f64::NAN); theta.len()]; a.len()];
            };
            // Columns come as (cx, cy, angle, amplitude) per path.
            return s
                .into_iter()
                .map(|row| {
                    row.chunks_exact(4)
                        .flat_map(|c| c[..k].to_vec())
                        .collect()
                })
                .collect();
        }
        let h = self.cfg.fd_step * self.flow.scan_length();
        let mut out = vec![vec![Vec2::ZERO; theta.len()]; a.len()];
        let mut t = theta.to_vec();
        for c in 0..theta.len() {
            let step = if c % k == 3 { self.cfg.fd_step } else { h };
            t[c] = theta[c] + step;
            let plus = self.predict(a, &t);
            t[c] = theta[c] - step;
            let minus = self.predict(a, &t);
            t[c] = theta[c];
            for i in 0..a.len() {
                out[i][c] = (plus[i] - minus[i]) / (2.0 * step);
            }
        }
        out
    }

    fn center(theta: &[f64], k: usize, j: usize) -> Vec2 {
        Vec2::new(theta[k * j], theta[k * j + 1])
    }

    fn center_ok(&self, c: Vec2, others: &[Vec2]) -> bool {
        let r = &self.cons.centers;
        r.contains(c)
            && others.iter().all(|o| o.dist(c) >= self.cons.d_min)
            && self
                .cons
                .keepout
                .iter()
                .all(|k| k.center.dist(c) >= k.radius)
    }

    /// Uniform random feasible-center seed.
    pub fn random_seed(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut centers: Vec<Vec2> = Vec::new();
        let r = self.cons.centers;
        for _ in 0..self.cfg.n_paths {
            let mut c = Vec2::ZERO;
            for _ in 0..1000 {
                c = Vec2::new(
                    rng.gen_range(r.min.x..=r.max.x),
                    rng.gen_range(r.min.y..=r.max.y),
                );
                if self.center_ok(c, &centers) {
                    break;
                }
            }
            centers.push(c);
        }
        let amp = self.mid_amplitude();
        let mut v = Vec::with_capacity(self.dim());
        for c in centers {
            v.extend([c.x, c.y, rng.gen_range(-PI..PI)]);
            if self.per_path() == 4 {
                v.push(amp);
            }
        }
        v
    }

    /// Local point q* and its distance scale for which the unit field
    /// points along +x; the primitive is placed so that the particle sits
    /// at q* with the field along its descent direction.
    fn drive_point(&self) -> Vec2 {
        let r = self.flow.radius / 2f64.sqrt();
        match self.cfg.kind {
            PrimitiveKind::LinearLut => Vec2::new(-self.flow.scan_length() / 2.0, 0.0),
            PrimitiveKind::Circular => Vec2::new(0.0, -r),
            PrimitiveKind::Saddle => Vec2::new(r, 0.0),
            PrimitiveKind::Shear => Vec2::new(0.0, r),
        }
    }

    /// Primitives at the particles with the largest gradient norm, each
    /// driving its particle down the gradient; d_min violations repaired
    /// by greedy jitter, with a random fallback after 50 failed repairs.
    pub fn informed_seed(&self, a: &[Vec2], rng: &mut impl Rng) -> Vec<f64> {
        let mut g = vec![Vec2::ZERO; a.len()];
        self.obj.value_grad(a, &mut g);
        let mut order: Vec<usize> = (0..a.len()).collect();
        order.sort_by(|&i, &j| g[j].norm().total_cmp(&g[i].norm()).then(i.cmp(&j)));
        let q = self.drive_point();
        let amp = self.mid_amplitude();
        let mut centers: Vec<Vec2> = Vec::new();
        let mut angles = Vec::new();
        let mut failures = 0;
        for j in 0..self.cfg.n_paths {
            let i = order[j % order.len()];
            let u = (-g[i]).normalized().unwrap_or(Vec2::new(1.0, 0.0));
            let angle = u.angle();
            let mut c = a[i] - q.rotate(angle);
            let clamp = |c: Vec2| self.cons.centers.clamp(c);
            c = clamp(c);
            let jitter = self.cons.d_min.max(1.0);
            while !self.center_ok(c, &centers) {
                failures += 1;
                if failures > 50 {
                    return self.random_seed(rng);
                }
                c = clamp(
                    c + Vec2::from_angle(rng.gen_range(0.0..TAU)) * (jitter * rng.gen_range(0.5..1.5)),
                );
            }
            centers.push(c);
            angles.push(angle);
        }
        let mut v = Vec::with_capacity(self.dim());
        for (c, t) in centers.iter().zip(angles) {
            v.extend([c.x, c.y, t]);
            if self.per_path() == 4 {
                v.push(amp);
            }
        }
        v
    }

    /// Best plan over the warm, informed and random seeds.
    pub fn plan_cycle(&self, a: &[Vec2], warm: Option<&[f64]>) -> Result<PlanResult, PlanError> {
        if a.len() != self.obj.n {
            return Err(PlanError::CountMismatch {
                expected: self.obj.n,
                actual: a.len(),
            });
        }
        if self.cfg.n_paths == 0 {
            return Err(PlanError::Invalid("n_paths must be at least 1"));
        }
        let start = self.evaluations();
        let current = self.obj.evaluate(a).map_err(|_| PlanError::NonFinite)?;
        if !current.is_finite() {
            return Err(PlanError::NonFinite);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let mut seeds: Vec<(SeedKind, Vec<f64>)> = Vec::new();
        if let Some(w) = warm.filter(|w| w.len() == self.dim()) {
            seeds.push((SeedKind::Warm, w.to_vec()));
        }
        seeds.push((SeedKind::Informed, self.informed_seed(a, &mut rng)));
        seeds.push((SeedKind::Random, self.random_seed(&mut rng)));
        let bounds = self.bounds();
        let mut best: Option<PlanResult> = None;
        let mut best_violation = f64::INFINITY;
        for (kind, x0) in seeds {
            let mut prob = CycleProblem::new(self, a);
            match minimize_constrained(&mut prob, &x0, &bounds, &self.cfg.sqp) {
                Ok(r) => {
                    let positions = prob.positions(&r.x);
                    let cost = self.obj.evaluate(&positions).unwrap_or(f64::NAN);
                    if !cost.is_finite() {
                        continue;
                    }
                    if best.as_ref().map_or(true, |b| cost < b.predicted_cost) {
                        best = Some(PlanResult {
                            plan: self.decode(&r.x),
                            decision: r.x,
                            predicted_cost: cost,
                            current_cost: current,
                            predicted_positions: positions,
                            kkt_residual: r.kkt_residual,
                            iterations: r.iterations,
                            converged: r.converged,
                            seeded_from: kind,
                            evaluations: 0,
                        });
                    }
                }
                Err(SqpError::Infeasible { best_violation: v, .. }) => {
                    best_violation = best_violation.min(v);
                }
                Err(_) => {}
            }
        }
        let mut out = best.ok_or(PlanError::Infeasible { best_violation })?;
        out.evaluations = self.evaluations() - start;
        Ok(out)
    }

    /// Constraint values at `theta` given predicted positions.
    fn constraint_values(&self, a: &[Vec2], theta: &[f64], pos: &[Vec2], c: &mut [f64]) {
        let k = self.per_path();
        let np = self.cfg.n_paths;
        let mut r = 0;
        if self.cons.d_min > 0.0 {
            let d2 = self.cons.d_min * self.cons.d_min;
            for i in 0..np {
                for j in i + 1..np {
                    let d = Self::center(theta, k, i) - Self::center(theta, k, j);
                    c[r] = (d.norm_sq() - d2) / d2;
                    r += 1;
                }
            }
        }
        for ko in &self.cons.keepout {
            let r2 = ko.radius * ko.radius;
            for i in 0..np {
                c[r] = ((Self::center(theta, k, i) - ko.center).norm_sq() - r2) / r2;
                r += 1;
            }
        }
        if let Some(cap) = self.cons.displacement_cap {
            for (p, q) in pos.iter().zip(a) {
                c[r] = 1.0 - (*p - *q).norm_sq() / (cap * cap);
                r += 1;
            }
        }
    }

    fn n_constraints(&self, n: usize) -> usize {
        let np = self.cfg.n_paths;
        let mut m = np * self.cons.keepout.len();
        if self.cons.d_min > 0.0 {
            m += np * (np - 1) / 2;
        }
        if self.cons.displacement_cap.is_some() {
            m += n;
        }
        m
    }
}

/// SQP view of one cycle, caching the last advection and sensitivity.
struct CycleProblem<'p, 'a> {
    planner: &'p Planner<'a>,
    a: &'p [Vec2],
    pos: Option<(Vec<f64>, Vec<Vec2>)>,
    sens: Option<(Vec<f64>, Vec<Vec<Vec2>>)>,
}

impl<'p, 'a> CycleProblem<'p, 'a> {
    fn new(planner: &'p Planner<'a>, a: &'p [Vec2]) -> Self {
        CycleProblem {
            planner,
            a,
            pos: None,
            sens: None,
        }
    }

    fn positions(&mut self, theta: &[f64]) -> Vec<Vec2> {
        if let Some((t, p)) = &self.pos {
            if t == theta {
                return p.clone();
            }
        }
        let p = self.planner.predict(self.a, theta);
        self.pos = Some((theta.to_vec(), p.clone()));
        p
    }

    fn sensitivity(&mut self, theta: &[f64]) -> Vec<Vec<Vec2>> {
        if let Some((t, s)) = &self.sens {
            if t == theta {
                return s.clone();
            }
        }
        let s = self.planner.position_sensitivity(self.a, theta);
        self.sens = Some((theta.to_vec(), s.clone()));
        s
    }
}

impl Problem for CycleProblem<'_, '_> {
    fn dim(&self) -> usize {
        self.planner.dim()
    }

    fn n_constraints(&self) -> usize {
        self.planner.n_constraints(self.a.len())
    }

    fn value(&mut self, theta: &[f64]) -> f64 {
        let p = self.positions(theta);
        self.planner.obj.evaluate(&p).unwrap_or(f64::NAN)
    }

    fn gradient(&mut self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.positions(theta);
        let s = self.sensitivity(theta);
        let mut gx = vec![Vec2::ZERO; p.len()];
        let f = self.planner.obj.value_grad(&p, &mut gx);
        for (c, gc) in grad.iter_mut().enumerate() {
            *gc = gx.iter().zip(&s).map(|(g, row)| g.dot(row[c])).sum();
        }
        f
    }

    fn constraints(&mut self, theta: &[f64], c: &mut [f64]) {
        let p = if self.planner.cons.displacement_cap.is_some() {
            self.positions(theta)
        } else {
            Vec::new()
        };
        self.planner.constraint_values(self.a, theta, &p, c);
    }

    fn jacobian(&mut self, theta: &[f64], jac: &mut [Vec<f64>]) {
        let pl = self.planner;
        let k = pl.per_path();
        let np = pl.cfg.n_paths;
        for row in jac.iter_mut() {
            row.fill(0.0);
        }
        let mut r = 0;
        if pl.cons.d_min > 0.0 {
            let d2 = pl.cons.d_min * pl.cons.d_min;
            for i in 0..np {
                for j in i + 1..np {
                    let d = Planner::center(theta, k, i) - Planner::center(theta, k, j);
                    jac[r][k * i] = 2.0 * d.x / d2;
                    jac[r][k * i + 1] = 2.0 * d.y / d2;
                    jac[r][k * j] = -2.0 * d.x / d2;
                    jac[r][k * j + 1] = -2.0 * d.y / d2;
                    r += 1;
                }
            }
        }
        for ko in &pl.cons.keepout {
            let r2 = ko.radius * ko.radius;
            for i in 0..np {
                let d = Planner::center(theta, k, i) - ko.center;
                jac[r][k * i] = 2.0 * d.x / r2;
                jac[r][k * i + 1] = 2.0 * d.y / r2;
                r += 1;
            }
        }
        if let Some(cap) = pl.cons.displacement_cap {
            let p = self.positions(theta);
            let s = self.sensitivity(theta);
            for (i, (pi, qi)) in p.iter().zip(self.a).enumerate() {
                let dx = *pi - *qi;
                for c in 0..theta.len() {
                    jac[r][c] = -2.0 * dx.dot(s[i][c]) / (cap * cap);
                }
                r += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::compile_text;

    fn circle(n: usize) -> CompiledObjective {
        compile_text(
            "(objective (term shape.curve :curve (circle :r 20)) (term spacing.repel :d0 4))",
            n,
        )
        .unwrap()
    }

    #[test]
    fn informed_seed_targets_outlier() {
        let flow = FlowModel::default();
        let obj = compile_text("(objective (term shape.curve :curve (circle :r 20)))", 8).unwrap();
        let mut a: Vec<Vec2> = (0..8)
            .map(|k| Vec2::from_angle(k as f64 * TAU / 8.0) * 20.0)
            .collect();
        a[3] = a[3] * 2.5; // 30 µm outside the circle
        let cfg = PlannerConfig {
            n_paths: 1,
            ..PlannerConfig::default()
        };
        let cons = ConstraintSet::default();
        let pl = Planner::new(&obj, &flow, &cfg, &cons);
        let seed = pl.informed_seed(&a, &mut ChaCha8Rng::seed_from_u64(0));
        let c = Vec2::new(seed[0], seed[1]);
        assert!(c.dist(a[3]) <= flow.scan_length());
        let toward = (Vec2::from_angle(3.0 * TAU / 8.0) * 20.0 - a[3]).angle();
        let diff = wrap_angle(seed[2] - toward).abs();
        assert!(diff < 15f64.to_radians(), "{diff}");
    }

    #[test]
    fn informed_seed_respects_spacing() {
        let flow = FlowModel::default();
        let obj = circle(20);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = crate::potential::uniform_config(20, &Rect::centered(30.0, 30.0), &mut rng);
        let cfg = PlannerConfig::default();
        let cons = ConstraintSet::default();
        let pl = Planner::new(&obj, &flow, &cfg, &cons);
        let s = pl.informed_seed(&a, &mut rng);
        assert_eq!(s.len(), 21);
        for i in 0..7 {
            for j in i + 1..7 {
                let d = Planner::center(&s, 3, i).dist(Planner::center(&s, 3, j));
                assert!(d >= cons.d_min);
            }
        }
    }

    #[test]
    fn no_outlier_seed_is_feasible() {
        let flow = FlowModel::default();
        let obj = compile_text("(objective (term shape.points :targets (points (0 0) (10 0))))", 2)
            .unwrap();
        let a = [Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)];
        let cfg = PlannerConfig {
            n_paths: 3,
            amplitude: AmplitudeMode::Free,
            ..PlannerConfig::default()
        };
        let cons = ConstraintSet::default();
        let pl = Planner::new(&obj, &flow, &cfg, &cons);
        let s = pl.informed_seed(&a, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(s.len(), 12);
        for j in 0..3 {
            assert_eq!(s[4 * j + 3], 0.5);
        }
        let mut c = vec![0.0; pl.n_constraints(2)];
        pl.constraint_values(&a, &s, &a, &mut c);
        assert!(c.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn plan_improves_and_is_deterministic() {
        let flow = FlowModel::default();
        let obj = circle(10);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = crate::potential::uniform_config(10, &Rect::centered(30.0, 30.0), &mut rng);
        let cfg = PlannerConfig {
            n_paths: 3,
            kind: PrimitiveKind::Circular,
            amplitude: AmplitudeMode::Free,
            ..PlannerConfig::default()
        };
        let cons = ConstraintSet {
            displacement_cap: Some(3.0),
            keepout: vec![Keepout {
                center: Vec2::new(0.0, 0.0),
                radius: 3.0,
            }],
            ..ConstraintSet::default()
        };
        let pl = Planner::new(&obj, &flow, &cfg, &cons);
        let r = pl.plan_cycle(&a, None).unwrap();
        assert!(r.predicted_cost < r.current_cost);
        let pl2 = Planner::new(&obj, &flow, &cfg, &cons);
        assert_eq!(pl2.plan_cycle(&a, None).unwrap(), r);
        let moved = flow
            .advect(&a, &r.plan, pl.dt(), cfg.substeps, &cfg.fov)
            .unwrap();
        assert!(moved.max_displacement <= 3.0 + 1e-6);
        // Warm start from the optimum is a fixed point.
        let w = pl.plan_cycle(&a, Some(&r.decision)).unwrap();
        assert!(w.predicted_cost <= r.predicted_cost);
        if w.seeded_from == SeedKind::Warm {
            assert!(w.iterations <= 2);
        }
    }
}
