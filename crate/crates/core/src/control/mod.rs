//! Closed-loop control: plan, advect and record, one cycle at a time, with
//! perturbations and run diagnostics.

pub mod archive;
pub mod baseline;
pub mod metrics;

pub use metrics::{
    density_ratio, fit_square, spontaneous_probability, squareness_index, MetricError, SquareFit,
};

use crate::flow::{FlowError, FlowModel, ScanPlan};
use crate::geom::{Rect, Vec2};
use crate::inverse::{ConstraintSet, PlanError, PlanResult, Planner, PlannerConfig, SeedKind};
use crate::potential::{descend, solve_potential, SolveError, SolveOptions};
use crate::terms::region::Region;
use crate::terms::{compile_text, CompiledObjective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, TAU};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PerturbKind {
    /// One displacement per selected particle.
    Displace { vectors: Vec<Vec2> },
    /// Random direction, length uniform in [0, magnitude].
    Scatter {
        #[serde(default)]
        magnitude: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
    /// Project onto the perimeter of the equilateral triangle inscribed in
    /// the subset's bounding circle about its centroid (apex up).
    #[serde(alias = "triangle")]
    CollapseToTriangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Affected particles; `None` selects all of them.
    #[serde(default)]
    pub indices: Option<Vec<usize>>,
    #[serde(flatten)]
    pub kind: PerturbKind,
}

impl Perturbation {
    pub fn all(kind: PerturbKind) -> Perturbation {
        Perturbation {
            indices: None,
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerturbError {
    #[error("particle index {index} out of range for n = {n}")]
    Index { index: usize, n: usize },
    #[error("{vectors} displacement vectors for {indices} particles")]
    Count { vectors: usize, indices: usize },
    #[error("displacement is not finite")]
    NonFinite,
}

/// Default scatter magnitude: 30% of the field-of-view diagonal.
pub fn default_magnitude(fov: &Rect) -> f64 {
    0.3 * fov.diagonal()
}

fn nearest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let d = b - a;
    let t = ((p - a).dot(d) / d.norm_sq()).clamp(0.0, 1.0);
    a + d * t
}

/// Apply a perturbation; results are clamped to `fov`.
pub fn perturb(a: &[Vec2], p: &Perturbation, fov: &Rect) -> Result<Vec<Vec2>, PerturbError> {
    let n = a.len();
    let idx: Vec<usize> = match &p.indices {
        Some(v) => v.clone(),
        None => (0..n).collect(),
    };
    if let Some(&index) = idx.iter().find(|&&i| i >= n) {
        return Err(PerturbError::Index { index, n });
    }
    let mut out = a.to_vec();
    if idx.is_empty() {
        return Ok(out);
    }
    match &p.kind {
        PerturbKind::Displace { vectors } => {
            if vectors.len() != idx.len() {
                return Err(PerturbError::Count {
                    vectors: vectors.len(),
                    indices: idx.len(),
                });
            }
            if !vectors.iter().all(|v| v.is_finite()) {
                return Err(PerturbError::NonFinite);
            }
            for (&i, v) in idx.iter().zip(vectors) {
                out[i] = fov.clamp(a[i] + *v);
            }
        }
        PerturbKind::Scatter { magnitude, seed } => {
            let m = magnitude.unwrap_or_else(|| default_magnitude(fov));
            if !m.is_finite() || m < 0.0 {
                return Err(PerturbError::NonFinite);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for &i in &idx {
                let dir = Vec2::from_angle(rng.gen_range(0.0..TAU));
                out[i] = fov.clamp(a[i] + dir * (m * rng.gen::<f64>()));
            }
        }
        PerturbKind::CollapseToTriangle => {
            let c = idx.iter().fold(Vec2::ZERO, |s, &i| s + a[i]) / idx.len() as f64;
            let r = idx.iter().fold(0.0f64, |m, &i| m.max(a[i].dist(c)));
            if r == 0.0 {
                return Ok(out);
            }
            let v: Vec<Vec2> = (0..3)
                .map(|k| c + Vec2::from_angle(FRAC_PI_2 + k as f64 * TAU / 3.0) * r)
                .collect();
            for &i in &idx {
                let best = (0..3)
                    .map(|k| nearest_on_segment(a[i], v[k], v[(k + 1) % 3]))
                    .min_by(|x, y| x.dist(a[i]).total_cmp(&y.dist(a[i])))
                    .expect("three edges");
                out[i] = fov.clamp(best);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Event {
    Perturbation { perturbation: Perturbation },
    /// The first plan was rejected or failed; a fresh seed was tried.
    Reseed { reason: String },
    /// No acceptable plan this cycle; particles did not move.
    Stall,
    Infeasible { message: String },
    TargetReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scheduled {
    pub cycle: usize,
    pub perturbation: Perturbation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub cycles: usize,
    /// Stop once the objective is at or below this.
    pub target: Option<f64>,
    /// A plan is applied only if it predicts at least this relative
    /// decrease.
    pub accept_rel: f64,
    /// Consecutive stalls that end the run (0 = never).
    pub stall_limit: usize,
    pub planner: PlannerConfig,
    pub constraints: ConstraintSet,
    pub perturbations: Vec<Scheduled>,
    /// Region for the density-ratio trace.
    pub metric_region: Option<Region>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            cycles: 60,
            target: None,
            accept_rel: 1e-3,
            stall_limit: 3,
            planner: PlannerConfig::default(),
            constraints: ConstraintSet::default(),
            perturbations: Vec::new(),
            metric_region: None,
        }
    }
}

/// State after one cycle (cycle 0 is the initial state).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub cycle: usize,
    pub positions: Vec<Vec2>,
    /// Applied plan, if one was accepted.
    pub plan: Option<ScanPlan>,
    pub objective: f64,
    pub squareness: Option<f64>,
    pub density_ratio: Option<f64>,
    pub events: Vec<Event>,
    /// Forward advections spent by the planner so far.
    pub evaluations: usize,
    pub seeded_from: Option<SeedKind>,
    /// Set on the last frame of a run.
    pub converged: Option<bool>,
}

impl Frame {
    pub fn perturbed(&self) -> bool {
        self.events
            .iter()
            .any(|e| matches!(e, Event::Perturbation { .. }))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoopError {
    #[error("objective expects {expected} particles, got {actual}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("objective is not finite")]
    NonFinite,
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("invalid loop settings: {0}")]
    Invalid(&'static str),
}

fn metrics(a: &[Vec2], region: Option<&Region>, fov: &Rect) -> (Option<f64>, Option<f64>) {
    let sq = if a.len() >= 4 {
        squareness_index(a).ok()
    } else {
        None
    };
    let dr = region.and_then(|r| density_ratio(a, r, fov).ok());
    (sq, dr)
}

/// Seed of the re-seed attempt in `cycle`.
fn reseed_seed(seed: u64, cycle: usize) -> u64 {
    seed ^ (cycle as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Stepper for one closed-loop run.
pub struct ClosedLoop<'a> {
    obj: &'a CompiledObjective,
    flow: &'a FlowModel,
    cfg: &'a LoopConfig,
    positions: Vec<Vec2>,
    objective: f64,
    warm: Option<Vec<f64>>,
    cycle: usize,
    evaluations: usize,
    stalls: usize,
    converged: Option<bool>,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(
        obj: &'a CompiledObjective,
        flow: &'a FlowModel,
        cfg: &'a LoopConfig,
        initial: &[Vec2],
    ) -> Result<ClosedLoop<'a>, LoopError> {
        if initial.len() != obj.n {
            return Err(LoopError::CountMismatch {
                expected: obj.n,
                actual: initial.len(),
            });
        }
        if cfg.cycles == 0 {
            return Err(LoopError::Invalid("cycles must be at least 1"));
        }
        if cfg.planner.n_paths == 0 {
            return Err(LoopError::Invalid("n_paths must be at least 1"));
        }
        let objective = obj.evaluate(initial).map_err(|_| LoopError::NonFinite)?;
        if !objective.is_finite() {
            return Err(LoopError::NonFinite);
        }
        Ok(ClosedLoop {
            obj,
            flow,
            cfg,
            positions: initial.to_vec(),
            objective,
            warm: None,
            cycle: 0,
            evaluations: 0,
            stalls: 0,
            converged: None,
        })
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    pub fn is_finished(&self) -> bool {
        self.converged.is_some()
    }

    fn frame(&self, plan: Option<ScanPlan>, events: Vec<Event>, seeded: Option<SeedKind>) -> Frame {
        let (squareness, density_ratio) = metrics(
            &self.positions,
            self.cfg.metric_region.as_ref(),
            &self.cfg.planner.fov,
        );
        Frame {
            cycle: self.cycle,
            positions: self.positions.clone(),
            plan,
            objective: self.objective,
            squareness,
            density_ratio,
            events,
            evaluations: self.evaluations,
            seeded_from: seeded,
            converged: self.converged,
        }
    }

    /// Frame of the initial state; ends the run if the target already holds.
    pub fn initial_frame(&mut self) -> Frame {
        let mut events = Vec::new();
        if self.cfg.target.is_some_and(|t| self.objective <= t) {
            events.push(Event::TargetReached);
            self.converged = Some(true);
        }
        self.frame(None, events, None)
    }

    fn try_plan(&mut self, cfg: &PlannerConfig, warm: Option<&[f64]>) -> Result<PlanResult, PlanError> {
        let planner = Planner::new(self.obj, self.flow, cfg, &self.cfg.constraints);
        let r = planner.plan_cycle(&self.positions, warm);
        self.evaluations += planner.evaluations();
        r
    }

    fn acceptable(&self, r: &PlanResult) -> bool {
        r.predicted_cost <= self.objective * (1.0 - self.cfg.accept_rel)
    }

    /// Run one cycle: scheduled then `live` perturbations, plan (re-seeding
    /// once on rejection), advect, record.
    pub fn step(&mut self, live: &[Perturbation]) -> Result<Frame, LoopError> {
        if self.is_finished() {
            return Err(LoopError::Invalid("run already finished"));
        }
        self.cycle += 1;
        let mut events = Vec::new();
        let scheduled: Vec<Perturbation> = self
            .cfg
            .perturbations
            .iter()
            .filter(|s| s.cycle == self.cycle)
            .map(|s| s.perturbation.clone())
            .collect();
        for p in scheduled.iter().chain(live) {
            self.positions = perturb(&self.positions, p, &self.cfg.planner.fov)?;
            events.push(Event::Perturbation {
                perturbation: p.clone(),
            });
        }
        self.objective = self
            .obj
            .evaluate(&self.positions)
            .map_err(|_| LoopError::NonFinite)?;

        let warm = self.warm.take();
        let first = self.try_plan(&self.cfg.planner, warm.as_deref());
        let accepted = match first {
            Ok(r) if self.acceptable(&r) => Some(r),
            other => {
                events.push(match &other {
                    Ok(r) => Event::Reseed {
                        reason: format!(
                            "predicted {:e} is not below {:e}",
                            r.predicted_cost, self.objective
                        ),
                    },
                    Err(e) => Event::Reseed {
                        reason: e.to_string(),
                    },
                });
                let mut cfg = self.cfg.planner.clone();
                cfg.seed = reseed_seed(cfg.seed, self.cycle);
                match self.try_plan(&cfg, None) {
                    Ok(r) if self.acceptable(&r) => Some(r),
                    Ok(_) => {
                        events.push(Event::Stall);
                        None
                    }
                    Err(e) => {
                        events.push(Event::Infeasible {
                            message: e.to_string(),
                        });
                        events.push(Event::Stall);
                        None
                    }
                }
            }
        };

        let (plan, seeded) = match accepted {
            Some(r) => {
                let moved = self.flow.advect(
                    &self.positions,
                    &r.plan,
                    self.cfg.planner.dt.unwrap_or_else(|| self.flow.default_dt(self.cfg.planner.kind)),
                    self.cfg.planner.substeps,
                    &self.cfg.planner.fov,
                )?;
                self.positions = moved.positions;
                self.objective = self
                    .obj
                    .evaluate(&self.positions)
                    .map_err(|_| LoopError::NonFinite)?;
                self.warm = Some(r.decision);
                self.stalls = 0;
                (Some(r.plan), Some(r.seeded_from))
            }
            None => {
                self.stalls += 1;
                (None, None)
            }
        };

        if self.cfg.target.is_some_and(|t| self.objective <= t) {
            events.push(Event::TargetReached);
            self.converged = Some(true);
        } else if self.cfg.stall_limit > 0 && self.stalls >= self.cfg.stall_limit {
            self.converged = Some(self.cfg.target.is_none());
        } else if self.cycle >= self.cfg.cycles {
            self.converged = Some(false);
        }
        Ok(self.frame(plan, events, seeded))
    }
}

/// Run the loop to completion from `initial`; returns every frame,
/// starting with the initial state.
pub fn run_closed_loop(
    initial: &[Vec2],
    obj: &CompiledObjective,
    flow: &FlowModel,
    cfg: &LoopConfig,
) -> Result<Vec<Frame>, LoopError> {
    let mut lp = ClosedLoop::new(obj, flow, cfg, initial)?;
    let mut frames = vec![lp.initial_frame()];
    while !lp.is_finished() {
        frames.push(lp.step(&[])?);
    }
    Ok(frames)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Direct minimisation over positions.
    Potential,
    /// Closed loop through the flow model.
    Inverse,
}

/// Everything a run depends on; replaying it reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub spec_text: String,
    pub n: usize,
    pub mode: RunMode,
    pub seed: u64,
    /// Box of the uniform random start.
    pub init_box: Rect,
    /// Explicit start, overriding `init_box`.
    pub initial: Option<Vec<Vec2>>,
    pub control: LoopConfig,
    pub potential: SolveOptions,
    /// Last cycle produced (set when a run is stopped early).
    pub stop_after: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            spec_text: String::new(),
            n: 20,
            mode: RunMode::Inverse,
            seed: 0,
            init_box: Rect::centered(30.0, 30.0),
            initial: None,
            control: LoopConfig::default(),
            potential: SolveOptions {
                record_every: 10,
                ..SolveOptions::default()
            },
            stop_after: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Traces {
    pub objective: Vec<f64>,
    pub squareness: Vec<Option<f64>>,
    pub density_ratio: Vec<Option<f64>>,
}

impl RunRecord {
    pub fn traces(&self) -> Traces {
        Traces {
            objective: self.frames.iter().map(|f| f.objective).collect(),
            squareness: self.frames.iter().map(|f| f.squareness).collect(),
            density_ratio: self.frames.iter().map(|f| f.density_ratio).collect(),
        }
    }

    pub fn converged(&self) -> Option<bool> {
        self.frames.last().and_then(|f| f.converged)
    }

    pub fn final_positions(&self) -> &[Vec2] {
        self.frames.last().map_or(&[], |f| &f.positions)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("spec does not compile: {0}")]
    Spec(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Loop(#[from] LoopError),
}

/// What the caller wants after seeing a frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Steer {
    /// Applied at the start of the next cycle.
    pub perturb: Vec<Perturbation>,
    pub stop: bool,
}

/// Execute a run, calling `hook` after every frame. Live perturbations
/// and early stops are folded back into the returned config so that
/// [`replay`] reproduces the run.
pub fn execute(
    cfg: &RunConfig,
    flow: &FlowModel,
    mut hook: impl FnMut(&Frame) -> Steer,
) -> Result<RunRecord, RunError> {
    let obj = compile_text(&cfg.spec_text, cfg.n).map_err(RunError::Spec)?;
    let mut config = cfg.clone();
    let mut frames = Vec::new();
    match cfg.mode {
        RunMode::Potential => {
            let mut opts = cfg.potential.clone();
            opts.seed = cfg.seed;
            opts.record_every = opts.record_every.max(1);
            let trace = match &cfg.initial {
                Some(init) => {
                    if init.len() != obj.n {
                        return Err(LoopError::CountMismatch {
                            expected: obj.n,
                            actual: init.len(),
                        }
                        .into());
                    }
                    descend(&obj, init, &opts)
                }
                None => solve_potential(&obj, cfg.n, &cfg.init_box, &opts)?,
            };
            let last = trace.frames.len() - 1;
            let region = cfg.control.metric_region.as_ref();
            for (k, fr) in trace.frames.iter().enumerate() {
                let stop_here = cfg.stop_after == Some(k);
                let (squareness, density_ratio) = metrics(&fr.positions, region, &cfg.control.planner.fov);
                let frame = Frame {
                    cycle: k,
                    positions: fr.positions.clone(),
                    plan: None,
                    objective: fr.objective,
                    squareness,
                    density_ratio,
                    events: Vec::new(),
                    evaluations: fr.iter,
                    seeded_from: None,
                    converged: (k == last).then_some(trace.converged),
                };
                let steer = hook(&frame);
                frames.push(frame);
                if stop_here {
                    break;
                }
                if steer.stop && k != last {
                    config.stop_after = Some(k);
                    break;
                }
            }
        }
        RunMode::Inverse => {
            let initial = match &cfg.initial {
                Some(init) => init.clone(),
                None => crate::potential::initial_config(&obj, &cfg.init_box, cfg.seed, 0)?,
            };
            let control = cfg.control.clone();
            let mut lp = ClosedLoop::new(&obj, flow, &control, &initial)?;
            let first = lp.initial_frame();
            let mut steer = hook(&first);
            frames.push(first);
            while !lp.is_finished() && cfg.stop_after != Some(lp.cycle()) {
                if steer.stop {
                    config.stop_after = Some(lp.cycle());
                    break;
                }
                let next = lp.cycle() + 1;
                for p in &steer.perturb {
                    config.control.perturbations.push(Scheduled {
                        cycle: next,
                        perturbation: p.clone(),
                    });
                }
                let frame = lp.step(&steer.perturb)?;
                steer = hook(&frame);
                frames.push(frame);
            }
        }
    }
    Ok(RunRecord { config, frames })
}

/// Re-run a record's config.
pub fn replay(record: &RunRecord, flow: &FlowModel) -> Result<RunRecord, RunError> {
    execute(&record.config, flow, |_| Steer::default())
}

/// Total distance travelled by all particles, summed over frames.
pub fn path_length(frames: &[Frame]) -> f64 {
    frames
        .windows(2)
        .map(|w| {
            w[0].positions
                .iter()
                .zip(&w[1].positions)
                .map(|(a, b)| a.dist(*b))
                .sum::<f64>()
        })
        .sum()
}
