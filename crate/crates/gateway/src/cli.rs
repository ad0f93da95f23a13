//! Command-line front end.

use crate::config::{Config, Layer};
use crate::runs::RunRequest;
use crate::server::{self, AppState};
use clap::{Args, Parser, Subcommand};
use flowscribe_core::agent::evaluate::{evaluate_catalogue, EvalCase, EvalConfig};
use flowscribe_core::agent::{Catalogue, Rating, Verdict};
use flowscribe_core::control::archive::{read_archive, ArchiveWriter, Manifest};
use flowscribe_core::control::{execute, replay, PerturbKind, Perturbation, RunMode, Scheduled, Steer};
use flowscribe_core::flow::lut::{sidecar_path, FlowLut, LutParams};
use flowscribe_core::flow::{FlowModel, PrimitiveKind};
use flowscribe_core::inverse::{AmplitudeMode, ConstraintSet, Planner, PlannerConfig};
use flowscribe_core::terms::compile_text;
use flowscribe_core::Vec2;
use serde::Deserialize;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Parser)]
#[command(name = "flowscribe", version, about = "Language-to-objective microassembly")]
pub struct Cli {
    /// TOML config file (flags override environment, environment overrides file).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// FLUT lookup table for linear-lut primitives (default: synthetic).
    #[arg(long, global = true)]
    pub lut: Option<PathBuf>,
    #[arg(long, global = true)]
    pub llm_endpoint: Option<String>,
    #[arg(long, global = true)]
    pub llm_model: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
    },
    /// Minimise a spec directly over particle positions.
    Simulate(SimulateArgs),
    /// Plan one cycle of scan paths for a given state.
    Plan(PlanArgs),
    /// Closed-loop run through the flow model.
    Run(RunArgs),
    /// Generate, inspect or sample flow lookup tables.
    Lut {
        #[command(subcommand)]
        action: LutAction,
    },
    /// Inspect and rate catalogue entries.
    Catalogue {
        #[command(subcommand)]
        action: CatalogueAction,
    },
    /// Synthesis success and score versus example budget.
    EvaluateCatalogue(EvaluateArgs),
    /// Re-run an archived run and compare frames.
    Replay {
        archive: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Half-width of the random start box (µm).
    #[arg(long, default_value_t = 30.0)]
    pub init_half: f64,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Frames as newline-delimited JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// JSON positions: `[[x, y], ...]` or `[{"x": .., "y": ..}, ...]`.
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub n_paths: usize,
    #[arg(long, default_value = "linear-lut")]
    pub primitive: String,
    /// JSON constraint set; fields left out keep their defaults.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Fixed amplitude; omit for free amplitudes.
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 60)]
    pub cycles: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 7)]
    pub n_paths: usize,
    #[arg(long, default_value = "linear-lut")]
    pub primitive: String,
    /// Fixed amplitude; omit for the default of 1, pass `--free-amplitude` to optimise it.
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub free_amplitude: bool,
    #[arg(long)]
    pub target: Option<f64>,
    #[arg(long, default_value_t = 30.0)]
    pub init_half: f64,
    /// `CYCLE:KIND`, KIND one of triangle, scatter. Repeatable.
    #[arg(long = "perturb-at", value_parser = parse_perturb_at)]
    pub perturb_at: Vec<Scheduled>,
    #[arg(long)]
    pub record: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum LutAction {
    /// Write a synthetic LUT and its JSON sidecar.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        spacing: Option<f64>,
        #[arg(long)]
        half_extent: Option<f64>,
        #[arg(long)]
        scan_length: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        screen: Option<f64>,
    },
    /// Print the header of a LUT.
    Info { lut: PathBuf },
    /// Quiver-plot data: `x,y,vx,vy` rows on a regular grid.
    Render {
        lut: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        step: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum CatalogueAction {
    List {
        #[arg(long)]
        verdict: Option<String>,
    },
    Show {
        id: String,
    },
    /// Rate an entry 1-5, or DO / DONT.
    Rate {
        id: String,
        rating: String,
        #[arg(long, default_value = "")]
        comment: String,
    },
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// JSON list of `{"prompt": .., "n": ..}` cases.
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0, 5, 10, 20])]
    pub budgets: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_perturb_at(s: &str) -> Result<Scheduled, String> {
    let (cycle, kind) = s.split_once(':').ok_or("expected CYCLE:KIND")?;
    let cycle: usize = cycle.trim().parse().map_err(|_| format!("bad cycle {cycle:?}"))?;
    if cycle == 0 {
        return Err("perturbations apply from cycle 1".into());
    }
    let kind = match kind.trim() {
        "triangle" | "collapse-to-triangle" => PerturbKind::CollapseToTriangle,
        "scatter" => PerturbKind::Scatter {
            magnitude: None,
            seed: cycle as u64,
        },
        k => return Err(format!("unknown perturbation {k:?}; expected triangle or scatter")),
    };
    Ok(Scheduled {
        cycle,
        perturbation: Perturbation::all(kind),
    })
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Point {
    Pair([f64; 2]),
    Xy(Vec2),
}

pub fn read_positions(path: &Path) -> Result<Vec<Vec2>, String> {
    let text = read(path)?;
    let pts: Vec<Point> = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(pts
        .into_iter()
        .map(|p| match p {
            Point::Pair([x, y]) => Vec2::new(x, y),
            Point::Xy(v) => v,
        })
        .collect())
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<(), String> {
    let text = serde_json::to_string_pretty(v).map_err(|e| e.to_string())?;
    std::fs::write(path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))
}

fn kind(name: &str) -> Result<PrimitiveKind, String> {
    PrimitiveKind::from_name(name).ok_or_else(|| format!("unknown primitive {name:?}"))
}

fn flow(cfg: &Config) -> Result<FlowModel, String> {
    match &cfg.lut_path {
        Some(p) => Ok(FlowModel::new(Arc::new(
            FlowLut::load(p).map_err(|e| format!("{}: {e}", p.display()))?,
        ))),
        None => Ok(FlowModel::default()),
    }
}

impl Cli {
    pub fn layer(&self) -> Layer {
        Layer {
            data_dir: self.data_dir.clone(),
            lut_path: self.lut.clone(),
            port: match &self.command {
                Command::Serve { port, .. } => *port,
                _ => None,
            },
            llm_endpoint: self.llm_endpoint.clone(),
            llm_model: self.llm_model.clone(),
            ..Layer::default()
        }
    }
}

/// Run a parsed command line; the error is printed by the caller.
pub fn run(cli: Cli) -> Result<(), String> {
    let env = Layer::from_env(|k| std::env::var(k).ok()).map_err(|e| e.to_string())?;
    let cfg = Config::resolve(cli.layer(), env, cli.config.as_deref()).map_err(|e| e.to_string())?;
    match cli.command {
        Command::Serve { bind, .. } => serve(cfg, &bind),
        Command::Simulate(a) => simulate(&cfg, a),
        Command::Plan(a) => plan(&cfg, a),
        Command::Run(a) => run_loop(&cfg, a),
        Command::Lut { action } => lut(action),
        Command::Catalogue { action } => catalogue(&cfg, action),
        Command::EvaluateCatalogue(a) => evaluate(&cfg, a),
        Command::Replay { archive } => replay_archive(&cfg, &archive),
    }
}

fn serve(cfg: Config, bind: &str) -> Result<(), String> {
    let addr = format!("{bind}:{}", cfg.port);
    let state = Arc::new(AppState::open(cfg).map_err(|e| e.to_string())?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| format!("bind {addr}: {e}"))?;
        log::info!("listening on {addr}");
        server::serve(state, listener, shutdown_signal()).await.map_err(|e| e.to_string())
    })
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("install SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

fn simulate(cfg: &Config, a: SimulateArgs) -> Result<(), String> {
    let req = RunRequest {
        spec_text: read(&a.spec)?,
        mode: RunMode::Potential,
        n: a.n,
        seed: a.seed,
        init_half: a.init_half,
        max_iters: a.max_iters,
        ..RunRequest::default()
    };
    let run_cfg = req.to_config().map_err(|e| e.body().to_string())?;
    let mut out = BufWriter::new(std::fs::File::create(&a.out).map_err(|e| format!("{}: {e}", a.out.display()))?);
    let mut err = None;
    let rec = execute(&run_cfg, &flow(cfg)?, |f| {
        if let Err(e) = serde_json::to_writer(&mut out, f).map_err(std::io::Error::from).and_then(|_| out.write_all(b"\n")) {
            err.get_or_insert(e);
        }
        Steer::default()
    })
    .map_err(|e| e.to_string())?;
    out.flush().map_err(|e| e.to_string())?;
    if let Some(e) = err {
        return Err(e.to_string());
    }
    let last = rec.frames.last().expect("at least one frame");
    println!(
        "{} frames, final objective {:.6e}, converged {}",
        rec.frames.len(),
        last.objective,
        rec.converged().unwrap_or(false)
    );
    Ok(())
}

fn plan(cfg: &Config, a: PlanArgs) -> Result<(), String> {
    let state = read_positions(&a.state)?;
    let obj = compile_text(&read(&a.spec)?, state.len())?;
    let cons: ConstraintSet = match &a.constraints {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))?,
        None => ConstraintSet::default(),
    };
    let pc = PlannerConfig {
        n_paths: a.n_paths,
        kind: kind(&a.primitive)?,
        amplitude: a.amplitude.map_or(AmplitudeMode::Free, AmplitudeMode::Fixed),
        seed: a.seed,
        ..PlannerConfig::default()
    };
    let flow = flow(cfg)?;
    let r = Planner::new(&obj, &flow, &pc, &cons)
        .plan_cycle(&state, None)
        .map_err(|e| e.to_string())?;
    write_json(&a.out, &r)?;
    println!(
        "objective {:.6e} -> predicted {:.6e} ({} iterations, kkt {:.2e})",
        r.current_cost, r.predicted_cost, r.iterations, r.kkt_residual
    );
    Ok(())
}

fn run_loop(cfg: &Config, a: RunArgs) -> Result<(), String> {
    let req = RunRequest {
        spec_text: read(&a.spec)?,
        mode: RunMode::Inverse,
        n: a.n,
        n_paths: a.n_paths,
        primitive: a.primitive.clone(),
        amplitude: if a.free_amplitude { None } else { Some(a.amplitude.unwrap_or(1.0)) },
        seed: a.seed,
        cycles: a.cycles,
        target: a.target,
        init_half: a.init_half,
        perturbations: a.perturb_at.clone(),
        ..RunRequest::default()
    };
    let run_cfg = req.to_config().map_err(|e| e.body().to_string())?;
    let flow = flow(cfg)?;
    let run_id = uuid::Uuid::new_v4().to_string();
    let manifest = Manifest::new(&run_id, &flow.lut.generator, run_cfg.clone());
    let mut w = ArchiveWriter::create(&a.record, &manifest).map_err(|e| format!("{}: {e}", a.record.display()))?;
    let mut err = None;
    let rec = execute(&run_cfg, &flow, |f| {
        if let Err(e) = w.append(f) {
            err.get_or_insert(e);
        }
        println!(
            "cycle {:>4}  objective {:.6e}  squareness {}{}",
            f.cycle,
            f.objective,
            f.squareness.map_or("-".into(), |s| format!("{s:.4}")),
            if f.perturbed() { "  [perturbed]" } else { "" }
        );
        Steer::default()
    })
    .map_err(|e| e.to_string())?;
    if let Some(e) = err {
        return Err(e.to_string());
    }
    w.finish("complete").map_err(|e| e.to_string())?;
    println!("converged {}; archive {}", rec.converged().unwrap_or(false), a.record.display());
    Ok(())
}

fn lut(action: LutAction) -> Result<(), String> {
    match action {
        LutAction::Generate {
            out,
            spacing,
            half_extent,
            scan_length,
            epsilon,
            screen,
        } => {
            let d = LutParams::default();
            let p = LutParams {
                spacing: spacing.unwrap_or(d.spacing),
                half_extent: half_extent.unwrap_or(d.half_extent),
                scan_length: scan_length.unwrap_or(d.scan_length),
                epsilon: epsilon.unwrap_or(d.epsilon),
                screen: screen.unwrap_or(d.screen),
            };
            let lut = FlowLut::generate(&p).map_err(|e| e.to_string())?;
            lut.save(&out).map_err(|e| e.to_string())?;
            println!("{} ({} x {} nodes), sidecar {}", out.display(), lut.nx, lut.ny, sidecar_path(&out).display());
            Ok(())
        }
        LutAction::Info { lut } => {
            let l = FlowLut::load(&lut).map_err(|e| format!("{}: {e}", lut.display()))?;
            let mut info = serde_json::to_value(l.sidecar()).map_err(|e| e.to_string())?;
            info["max_speed"] = l.max_speed().into();
            println!("{}", serde_json::to_string_pretty(&info).map_err(|e| e.to_string())?);
            Ok(())
        }
        LutAction::Render { lut, out, step } => {
            if !(step.is_finite() && step > 0.0) {
                return Err("step must be positive".into());
            }
            let l = FlowLut::load(&lut).map_err(|e| format!("{}: {e}", lut.display()))?;
            let mut w = BufWriter::new(std::fs::File::create(&out).map_err(|e| format!("{}: {e}", out.display()))?);
            let mut rows = 0;
            let io = |e: std::io::Error| e.to_string();
            writeln!(w, "x,y,vx,vy").map_err(io)?;
            let (nx, ny) = (
                ((l.max.x - l.min.x) / step).floor() as usize,
                ((l.max.y - l.min.y) / step).floor() as usize,
            );
            for j in 0..=ny {
                for i in 0..=nx {
                    let p = Vec2::new(l.min.x + i as f64 * step, l.min.y + j as f64 * step);
                    let v = l.velocity(p);
                    writeln!(w, "{},{},{},{}", p.x, p.y, v.x, v.y).map_err(io)?;
                    rows += 1;
                }
            }
            w.flush().map_err(io)?;
            println!("{rows} arrows -> {}", out.display());
            Ok(())
        }
    }
}

fn open_catalogue(cfg: &Config) -> Result<Catalogue, String> {
    let path = cfg.catalogue_path();
    let (cat, skipped) = Catalogue::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    for (line, why) in skipped {
        eprintln!("warning: {} line {line} skipped: {why}", path.display());
    }
    Ok(cat)
}

fn catalogue(cfg: &Config, action: CatalogueAction) -> Result<(), String> {
    let cat = open_catalogue(cfg)?;
    match action {
        CatalogueAction::List { verdict } => {
            let v = match verdict.as_deref() {
                None => None,
                Some(s) => Some(Verdict::parse(s).ok_or_else(|| format!("unknown verdict {s:?}"))?),
            };
            for e in cat.page(v, 0, usize::MAX) {
                let score = e.score.map_or("-".to_string(), |s| format!("{s:.3}"));
                println!("{}  {:<4}  {score:>5}  {}", e.id, e.verdict.as_str(), e.prompt);
            }
            Ok(())
        }
        CatalogueAction::Show { id } => {
            let e = cat.get(&id).ok_or_else(|| format!("no entry {id}"))?;
            println!("{}", serde_json::to_string_pretty(&e).map_err(|e| e.to_string())?);
            Ok(())
        }
        CatalogueAction::Rate { id, rating, comment } => {
            let r = match rating.parse::<u8>() {
                Ok(s) => Rating::Stars(s),
                Err(_) => Rating::Verdict(Verdict::parse(&rating).ok_or_else(|| format!("bad rating {rating:?}"))?),
            };
            let e = cat.record_feedback(&id, r, &comment).map_err(|e| e.to_string())?;
            println!("{} -> {}", e.id, e.verdict.as_str());
            Ok(())
        }
    }
}

fn evaluate(cfg: &Config, a: EvaluateArgs) -> Result<(), String> {
    let cases: Vec<EvalCase> = serde_json::from_str(&read(&a.cases)?).map_err(|e| format!("{}: {e}", a.cases.display()))?;
    // Failed syntheses add DONT entries; keep them out of the real file.
    let scratch = Catalogue::in_memory();
    for e in open_catalogue(cfg)?.entries() {
        scratch.append(e).map_err(|e| e.to_string())?;
    }
    let client = crate::llm::make_client(&cfg.llm);
    let ecfg = EvalConfig {
        budgets: a.budgets,
        ..EvalConfig::default()
    };
    let report = evaluate_catalogue(&cases, &scratch, &*client, &ecfg);
    for s in &report.summary {
        println!(
            "budget {:>3}: {} cases, first-shot {:.2}, success {:.2}, mean score {:.3}",
            s.budget, s.cases, s.first_shot_rate, s.success_rate, s.mean_score
        );
    }
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}

fn replay_archive(cfg: &Config, path: &Path) -> Result<(), String> {
    let a = read_archive(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let flow = flow(cfg)?;
    if flow.lut.generator != a.manifest.lut_generator {
        eprintln!(
            "warning: archive used LUT {:?}, replaying with {:?}",
            a.manifest.lut_generator, flow.lut.generator
        );
    }
    let rec = a.record();
    let again = replay(&rec, &flow).map_err(|e| e.to_string())?;
    match rec.frames.iter().zip(&again.frames).position(|(x, y)| x != y) {
        None if rec.frames.len() == again.frames.len() => {
            println!("replay matches: {} frames{}", rec.frames.len(), if a.truncated() { " (archive truncated)" } else { "" });
            Ok(())
        }
        None if a.truncated() && again.frames.len() > rec.frames.len() => {
            println!("replay matches the {} archived frames of a truncated archive", rec.frames.len());
            Ok(())
        }
        None => Err(format!("frame count differs: archive {}, replay {}", rec.frames.len(), again.frames.len())),
        Some(k) => Err(format!("replay diverges at frame {k}")),
    }
}
