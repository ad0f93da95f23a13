//! Run requests and the worker that executes one run, archives it cycle
//! by cycle and fans frames out to subscribers.

use crate::error::ApiError;
use flowscribe_core::agent::score_geometric;
use flowscribe_core::control::archive::{ArchiveWriter, Manifest};
use flowscribe_core::control::{execute, Frame, LoopConfig, Perturbation, RunConfig, RunMode, Scheduled, Steer};
use flowscribe_core::dsl::{self, print_canonical, ObjectiveSpec};
use flowscribe_core::flow::{FlowModel, PrimitiveKind};
use flowscribe_core::inverse::{AmplitudeMode, PlannerConfig};
use flowscribe_core::optim::SqpOptions;
use flowscribe_core::terms::compile;
use flowscribe_core::{Rect, Vec2};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use tokio::sync::watch;

pub const MAX_SPEC_BYTES: usize = 64 * 1024;
pub const MAX_N: usize = 2000;
pub const MAX_CYCLES: usize = 10_000;
pub const MAX_PATHS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunRequest {
    pub spec_text: String,
    pub mode: RunMode,
    pub n: usize,
    pub n_paths: usize,
    pub primitive: String,
    /// Fixed primitive amplitude; `null` leaves it free in [0, 1].
    pub amplitude: Option<f64>,
    pub seed: u64,
    pub cycles: usize,
    /// Stop once the objective reaches this.
    pub target: Option<f64>,
    /// Half-width of the random start box (µm).
    pub init_half: f64,
    pub initial: Option<Vec<Vec2>>,
    pub perturbations: Vec<Scheduled>,
    /// SQP iterations per cycle (inverse mode).
    pub sqp_iters: Option<usize>,
    /// Descent iterations (potential mode).
    pub max_iters: Option<usize>,
    /// Request text recorded with feedback.
    pub prompt: Option<String>,
}

impl Default for RunRequest {
    fn default() -> Self {
        RunRequest {
            spec_text: String::new(),
            mode: RunMode::Inverse,
            n: 20,
            n_paths: 7,
            primitive: PrimitiveKind::LinearLut.name().into(),
            amplitude: Some(1.0),
            seed: 0,
            cycles: 60,
            target: None,
            init_half: 30.0,
            initial: None,
            perturbations: Vec::new(),
            sqp_iters: None,
            max_iters: None,
            prompt: None,
        }
    }
}

/// Parse, validate and compile spec text for `n` particles. Only the DSL
/// compiler ever sees the text.
pub fn check_spec(text: &str, n: usize) -> Result<ObjectiveSpec, ApiError> {
    if text.len() > MAX_SPEC_BYTES {
        return Err(ApiError::unprocessable(format!("spec_text exceeds {MAX_SPEC_BYTES} bytes")));
    }
    let (spec, diags) = dsl::parse_with_warnings(text);
    let Some(spec) = spec else {
        return Err(ApiError::Unprocessable {
            message: "spec does not parse".into(),
            diagnostics: diags,
        });
    };
    compile(&spec, n).map_err(|e| ApiError::unprocessable(format!("spec does not compile for n = {n}: {e}")))?;
    Ok(spec)
}

impl RunRequest {
    /// Validated run configuration, with the spec in canonical form.
    pub fn to_config(&self) -> Result<RunConfig, ApiError> {
        let bad = |m: String| Err(ApiError::unprocessable(m));
        if self.n == 0 || self.n > MAX_N {
            return bad(format!("n must be in 1..={MAX_N}"));
        }
        if self.cycles > MAX_CYCLES {
            return bad(format!("cycles must be at most {MAX_CYCLES}"));
        }
        if self.n_paths == 0 || self.n_paths > MAX_PATHS {
            return bad(format!("n_paths must be in 1..={MAX_PATHS}"));
        }
        if !(self.init_half.is_finite() && self.init_half > 0.0) {
            return bad("init_half must be positive".into());
        }
        let Some(kind) = PrimitiveKind::from_name(&self.primitive) else {
            let names: Vec<&str> = PrimitiveKind::ALL.iter().map(|k| k.name()).collect();
            return bad(format!("unknown primitive {:?}; expected one of {}", self.primitive, names.join(", ")));
        };
        let amplitude = match self.amplitude {
            Some(a) if a.is_finite() => AmplitudeMode::Fixed(a),
            Some(_) => return bad("amplitude must be finite".into()),
            None => AmplitudeMode::Free,
        };
        if let Some(init) = &self.initial {
            if init.len() != self.n || init.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
                return bad(format!("initial must hold {} finite positions", self.n));
            }
        }
        let spec = check_spec(&self.spec_text, self.n)?;
        let mut cfg = RunConfig {
            spec_text: print_canonical(&spec),
            n: self.n,
            mode: self.mode,
            seed: self.seed,
            init_box: Rect::centered(self.init_half, self.init_half),
            initial: self.initial.clone(),
            control: LoopConfig {
                cycles: self.cycles,
                target: self.target,
                perturbations: self.perturbations.clone(),
                planner: PlannerConfig {
                    n_paths: self.n_paths,
                    kind,
                    amplitude,
                    seed: self.seed,
                    sqp: SqpOptions {
                        max_iters: self.sqp_iters.unwrap_or(20),
                        ..SqpOptions::default()
                    },
                    ..PlannerConfig::default()
                },
                ..LoopConfig::default()
            },
            ..RunConfig::default()
        };
        if let Some(m) = self.max_iters {
            cfg.potential.max_iters = m.max(1);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// "complete", "stopped" or "error".
    pub reason: String,
    pub converged: Option<bool>,
    pub frames: usize,
    pub final_objective: Option<f64>,
    /// Geometric score of the final configuration.
    pub score: Option<f64>,
    pub error: Option<String>,
}

/// Who asked for the run, for catalogue entries made from feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub prompt: String,
    pub model_id: String,
}

/// Perturbations waiting for the next hook call, and the cycle they will
/// land on.
struct Pending {
    queue: Vec<Perturbation>,
    applies_at: usize,
}

pub struct RunHandle {
    pub id: String,
    pub session: String,
    pub config: RunConfig,
    pub attribution: Attribution,
    pub archive: PathBuf,
    frames: RwLock<Vec<Frame>>,
    outcome: RwLock<Option<Outcome>>,
    /// Bumped on every new frame and on completion.
    notify: watch::Sender<u64>,
    pending: Mutex<Pending>,
    stop: AtomicBool,
    /// Catalogue entry created by the first feedback.
    pub entry: Mutex<Option<String>>,
}

impl RunHandle {
    pub fn new(id: String, session: String, config: RunConfig, attribution: Attribution, archive: PathBuf) -> Self {
        RunHandle {
            id,
            session,
            config,
            attribution,
            archive,
            frames: RwLock::new(Vec::new()),
            outcome: RwLock::new(None),
            notify: watch::channel(0).0,
            pending: Mutex::new(Pending {
                queue: Vec::new(),
                applies_at: 1,
            }),
            stop: AtomicBool::new(false),
            entry: Mutex::new(None),
        }
    }

    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.notify.subscribe()
    }

    pub fn frame_count(&self) -> usize {
        self.frames.read().expect("frames lock").len()
    }

    pub fn frame(&self, k: usize) -> Option<Frame> {
        self.frames.read().expect("frames lock").get(k).cloned()
    }

    pub fn last_frame(&self) -> Option<Frame> {
        self.frames.read().expect("frames lock").last().cloned()
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome.read().expect("outcome lock").clone()
    }

    pub fn is_finished(&self) -> bool {
        self.outcome.read().expect("outcome lock").is_some()
    }

    /// Queue a perturbation for the next cycle. Returns that cycle.
    pub fn perturb(&self, p: Perturbation) -> usize {
        let mut pending = self.pending.lock().expect("pending lock");
        pending.queue.push(p);
        pending.applies_at
    }

    pub fn request_stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    fn push(&self, f: &Frame) {
        self.frames.write().expect("frames lock").push(f.clone());
        self.notify.send_modify(|v| *v += 1);
    }

    fn finish(&self, o: Outcome) {
        *self.outcome.write().expect("outcome lock") = Some(o);
        self.notify.send_modify(|v| *v += 1);
    }

    /// Execute the run on the calling thread.
    pub fn run(&self, flow: &FlowModel) {
        let manifest = Manifest::new(&self.id, &flow.lut.generator, self.config.clone());
        let mut writer = match ArchiveWriter::create(&self.archive, &manifest) {
            Ok(w) => Some(w),
            Err(e) => {
                log::error!("run {}: cannot create archive {}: {e}", self.id, self.archive.display());
                None
            }
        };
        let result = execute(&self.config, flow, |frame| {
            if let Some(w) = writer.as_mut() {
                if let Err(e) = w.append(frame) {
                    log::error!("run {}: archive write failed: {e}", self.id);
                }
            }
            self.push(frame);
            let mut pending = self.pending.lock().expect("pending lock");
            // Drained after frame k, the queue lands on cycle k + 1;
            // anything queued from now on waits for cycle k + 2.
            pending.applies_at = frame.cycle + 2;
            Steer {
                perturb: std::mem::take(&mut pending.queue),
                stop: self.stop.load(Ordering::SeqCst),
            }
        });
        let outcome = match result {
            Ok(rec) => {
                let last = rec.frames.last();
                let score = last.and_then(|f| {
                    compile_config(&self.config).map(|obj| score_geometric(&f.positions, &obj))
                });
                Outcome {
                    reason: if rec.config.stop_after.is_some() { "stopped" } else { "complete" }.into(),
                    converged: rec.converged(),
                    frames: rec.frames.len(),
                    final_objective: last.map(|f| f.objective),
                    score,
                    error: None,
                }
            }
            Err(e) => Outcome {
                reason: "error".into(),
                converged: None,
                frames: self.frame_count(),
                final_objective: self.last_frame().map(|f| f.objective),
                score: None,
                error: Some(e.to_string()),
            },
        };
        if let Some(w) = writer {
            if let Err(e) = w.finish(&outcome.reason) {
                log::error!("run {}: archive finish failed: {e}", self.id);
            }
        }
        self.finish(outcome);
    }
}

fn compile_config(cfg: &RunConfig) -> Option<flowscribe_core::terms::CompiledObjective> {
    flowscribe_core::terms::compile_text(&cfg.spec_text, cfg.n).ok()
}

/// Start a run on its own thread.
pub fn spawn(handle: Arc<RunHandle>, flow: Arc<FlowModel>) -> std::thread::JoinHandle<()> {
    std::thread::Builder::new()
        .name(format!("run-{}", &handle.id[..8.min(handle.id.len())]))
        .spawn(move || handle.run(&flow))
        .expect("spawn run worker")
}
