//! Random search over single primitives: draw one placement uniformly and
//! keep its advection only if the objective drops by a threshold fraction.

use super::LoopError;
use crate::flow::{FlowModel, Placement, Primitive, PrimitiveKind, ScanPlan};
use crate::geom::{Rect, Vec2};
use crate::terms::CompiledObjective;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Forward advections to spend.
    pub budget: usize,
    /// Required relative decrease for acceptance.
    pub threshold: f64,
    pub kind: PrimitiveKind,
    pub amplitude: f64,
    pub dt: Option<f64>,
    pub substeps: usize,
    pub fov: Rect,
    /// Box the primitive center is drawn from.
    pub centers: Rect,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            budget: 50_000,
            threshold: 0.005,
            kind: PrimitiveKind::LinearLut,
            amplitude: 1.0,
            dt: None,
            substeps: 4,
            fov: Rect::centered(40.0, 40.0),
            centers: Rect::centered(40.0, 40.0),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    /// (evaluations so far, objective): the start and every acceptance.
    pub trace: Vec<(usize, f64)>,
    pub final_positions: Vec<Vec2>,
    pub evaluations: usize,
}

impl BaselineRun {
    pub fn final_value(&self) -> f64 {
        self.trace.last().expect("trace starts with the initial value").1
    }

    /// Evaluations after which the objective first was at or below `level`.
    pub fn evaluations_to_reach(&self, level: f64) -> Option<usize> {
        self.trace.iter().find(|(_, f)| *f <= level).map(|(e, _)| *e)
    }
}

pub fn random_search(
    initial: &[Vec2],
    obj: &CompiledObjective,
    flow: &FlowModel,
    cfg: &BaselineConfig,
) -> Result<BaselineRun, LoopError> {
    if initial.len() != obj.n {
        return Err(LoopError::CountMismatch {
            expected: obj.n,
            actual: initial.len(),
        });
    }
    let dt = cfg.dt.unwrap_or_else(|| flow.default_dt(cfg.kind));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut a = initial.to_vec();
    let mut f = obj.evaluate(&a).map_err(|_| LoopError::NonFinite)?;
    let mut trace = vec![(0, f)];
    let r = cfg.centers;
    for e in 1..=cfg.budget {
        let placement = Placement {
            center: Vec2::new(rng.gen_range(r.min.x..=r.max.x), rng.gen_range(r.min.y..=r.max.y)),
            angle: rng.gen_range(-PI..PI),
            amplitude: cfg.amplitude,
        };
        let plan = ScanPlan {
            primitives: vec![Primitive {
                kind: cfg.kind,
                placement,
            }],
        };
        let b = flow.advect(&a, &plan, dt, cfg.substeps, &cfg.fov)?.positions;
        let fb = obj.evaluate(&b).map_err(|_| LoopError::NonFinite)?;
        if fb <= f * (1.0 - cfg.threshold) {
            a = b;
            f = fb;
            trace.push((e, f));
        }
    }
    Ok(BaselineRun {
        trace,
        final_positions: a,
        evaluations: cfg.budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::compile_text;

    #[test]
    fn accepts_only_threshold_decreases() {
        let flow = FlowModel::default();
        let obj = compile_text("(objective (term shape.curve :curve (circle :r 10)))", 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = crate::potential::uniform_config(6, &Rect::centered(20.0, 20.0), &mut rng);
        let cfg = BaselineConfig {
            budget: 400,
            centers: Rect::centered(20.0, 20.0),
            ..BaselineConfig::default()
        };
        let run = random_search(&a, &obj, &flow, &cfg).unwrap();
        assert!(run.trace.len() > 1);
        for w in run.trace.windows(2) {
            assert!(w[1].0 > w[0].0);
            assert!(w[1].1 <= w[0].1 * (1.0 - cfg.threshold));
        }
        assert_eq!(obj.evaluate(&run.final_positions).unwrap(), run.final_value());
        assert_eq!(run.evaluations_to_reach(run.final_value()), Some(run.trace.last().unwrap().0));
        assert_eq!(run, random_search(&a, &obj, &flow, &cfg).unwrap());
    }
}
