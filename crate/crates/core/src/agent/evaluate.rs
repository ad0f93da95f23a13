//! Catalogue evaluation harness: synthesis success and geometric score as
//! a function of the example budget. Reports numbers, gates nothing.

use super::{score_geometric, synthesize, Catalogue, LlmClient, SynthError, SynthOptions};
use crate::geom::Rect;
use crate::potential::{solve_potential, SolveOptions};
use crate::terms::compile;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub prompt: String,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub budgets: Vec<usize>,
    /// Score at or above which an outcome counts as a success.
    pub success_score: f64,
    pub fov: Rect,
    pub solve: SolveOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            budgets: vec![0, 5, 10, 20],
            success_score: 0.5,
            fov: Rect::centered(40.0, 40.0),
            solve: SolveOptions {
                max_iters: 500,
                restarts: 1,
                ..SolveOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub prompt: String,
    pub budget: usize,
    /// Valid spec on the first reply.
    pub first_shot: bool,
    pub synthesized: bool,
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub budget: usize,
    pub cases: usize,
    pub first_shot_rate: f64,
    pub success_rate: f64,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub outcomes: Vec<CaseOutcome>,
    pub summary: Vec<BudgetSummary>,
}

fn run_case(case: &EvalCase, budget: usize, cat: &Catalogue, client: &dyn LlmClient, cfg: &EvalConfig) -> CaseOutcome {
    let mut out = CaseOutcome {
        prompt: case.prompt.clone(),
        budget,
        first_shot: false,
        synthesized: false,
        score: None,
        error: None,
    };
    let opts = SynthOptions { budget, attempts: 2 };
    let s = match synthesize(&case.prompt, cat, client, &opts) {
        Ok(s) => s,
        Err(e) => {
            out.error = Some(match e {
                SynthError::Failed { reason, .. } => reason,
                e => e.to_string(),
            });
            return out;
        }
    };
    out.synthesized = true;
    out.first_shot = s.provenance.repair_rounds == 0;
    let obj = match compile(&s.spec, case.n) {
        Ok(o) => o,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    match solve_potential(&obj, case.n, &cfg.fov, &cfg.solve) {
        Ok(t) => out.score = Some(score_geometric(&t.final_positions, &obj)),
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

/// Evaluate every case at every budget. Failed syntheses land in the
/// catalogue as DONTs, as in normal use, so run against a scratch copy
/// when that matters.
pub fn evaluate_catalogue(cases: &[EvalCase], cat: &Catalogue, client: &dyn LlmClient, cfg: &EvalConfig) -> EvalReport {
    let mut outcomes = Vec::new();
    let mut summary = Vec::new();
    for &budget in &cfg.budgets {
        let batch: Vec<CaseOutcome> = cases.iter().map(|c| run_case(c, budget, cat, client, cfg)).collect();
        let k = batch.len().max(1) as f64;
        summary.push(BudgetSummary {
            budget,
            cases: batch.len(),
            first_shot_rate: batch.iter().filter(|o| o.first_shot).count() as f64 / k,
            success_rate: batch
                .iter()
                .filter(|o| o.score.map_or(false, |s| s >= cfg.success_score))
                .count() as f64
                / k,
            mean_score: batch.iter().map(|o| o.score.unwrap_or(0.0)).sum::<f64>() / k,
        });
        outcomes.extend(batch);
    }
    EvalReport {
        model_id: client.model_id().into(),
        outcomes,
        summary,
    }
}
