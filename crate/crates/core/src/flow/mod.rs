//! Actuation primitives, their linear superposition and particle advection.

pub mod lut;

use crate::geom::{Rect, Vec2};
use lut::{FlowLut, LutParams};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

pub use lut::LutError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrimitiveKind {
    LinearLut,
    Circular,
    Saddle,
    Shear,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 4] = [
        PrimitiveKind::LinearLut,
        PrimitiveKind::Circular,
        PrimitiveKind::Saddle,
        PrimitiveKind::Shear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::LinearLut => "linear-lut",
            PrimitiveKind::Circular => "circular",
            PrimitiveKind::Saddle => "saddle",
            PrimitiveKind::Shear => "shear",
        }
    }

    pub fn from_name(s: &str) -> Option<PrimitiveKind> {
        PrimitiveKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_analytic(self) -> bool {
        self != PrimitiveKind::LinearLut
    }

    /// Local linear map A with v₀(q) = g(q)·A·q.
    fn matrix(self) -> M2 {
        match self {
            PrimitiveKind::Circular => [[0.0, -1.0], [1.0, 0.0]],
            PrimitiveKind::Saddle => [[1.0, 0.0], [0.0, -1.0]],
            PrimitiveKind::Shear => [[0.0, 1.0], [0.0, 0.0]],
            PrimitiveKind::LinearLut => unreachable!("LUT primitive has no local matrix"),
        }
    }
}

impl std::fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub center: Vec2,
    /// Radians.
    pub angle: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    #[serde(flatten)]
    pub placement: Placement,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    pub primitives: Vec<Primitive>,
}

impl ScanPlan {
    pub fn is_analytic(&self) -> bool {
        self.primitives.iter().all(|p| p.kind.is_analytic())
    }

    /// Same plan with every amplitude multiplied by `c`.
    pub fn scaled(&self, c: f64) -> ScanPlan {
        ScanPlan {
            primitives: self
                .primitives
                .iter()
                .map(|p| {
                    let mut q = *p;
                    q.placement.amplitude *= c;
                    q
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("non-finite velocity at particle {0}")]
    NonFinite(usize),
    #[error("invalid advection settings: {0}")]
    Invalid(&'static str),
}

type M2 = [[f64; 2]; 2];

fn mv(m: &M2, v: Vec2) -> Vec2 {
    Vec2::new(m[0][0] * v.x + m[0][1] * v.y, m[1][0] * v.x + m[1][1] * v.y)
}

fn mm(a: &M2, b: &M2) -> M2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn rot(theta: f64) -> M2 {
    let (s, c) = theta.sin_cos();
    [[c, -s], [s, c]]
}

fn transpose(m: &M2) -> M2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

/// Velocity of one primitive and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    pub v: Vec2,
    /// ∂v/∂p (row i = component i).
    pub jac: [[f64; 2]; 2],
    /// ∂v/∂(center.x, center.y, angle, amplitude).
    pub dparam: [Vec2; 4],
}

/// Peak speed of an analytic primitive at unit amplitude: the maximum of
/// (r/R)·exp(−r²/R²) at r = R/√2.
pub fn analytic_peak_speed() -> f64 {
    (-0.5f64).exp() / 2f64.sqrt()
}

/// Velocity fields for all primitive kinds.
#[derive(Debug, Clone)]
pub struct FlowModel {
    pub lut: Arc<FlowLut>,
    /// Locality radius R of the analytic kinds.
    pub radius: f64,
}

pub const DEFAULT_RADIUS: f64 = 5.0;
/// Largest per-cycle displacement the default time step allows.
pub const DEFAULT_MAX_STEP: f64 = 2.0;

impl Default for FlowModel {
    fn default() -> Self {
        FlowModel::new(Arc::new(
            FlowLut::generate(&LutParams::default()).expect("default LUT parameters are valid"),
        ))
    }
}

impl FlowModel {
    pub fn new(lut: Arc<FlowLut>) -> FlowModel {
        FlowModel {
            lut,
            radius: DEFAULT_RADIUS,
        }
    }

    pub fn scan_length(&self) -> f64 {
        self.lut.scan_length
    }

    /// Peak unit-amplitude speed of one primitive of `kind`.
    pub fn peak_speed(&self, kind: PrimitiveKind) -> f64 {
        match kind {
            PrimitiveKind::LinearLut => self.lut.max_speed(),
            _ => analytic_peak_speed(),
        }
    }

    /// Time step at which one unit-amplitude primitive moves a particle at
    /// most [`DEFAULT_MAX_STEP`].
    pub fn default_dt(&self, kind: PrimitiveKind) -> f64 {
        DEFAULT_MAX_STEP / self.peak_speed(kind)
    }

    fn local(&self, kind: PrimitiveKind, q: Vec2) -> (Vec2, M2) {
        if kind == PrimitiveKind::LinearLut {
            return self.lut.velocity_jacobian(q);
        }
        let r2 = self.radius * self.radius;
        let g = (-q.norm_sq() / r2).exp() / self.radius;
        let a = kind.matrix();
        let aq = mv(&a, q);
        let mut j = a;
        for (r, row) in j.iter_mut().enumerate() {
            let aqr = if r == 0 { aq.x } else { aq.y };
            row[0] = g * (row[0] - 2.0 * aqr * q.x / r2);
            row[1] = g * (row[1] - 2.0 * aqr * q.y / r2);
        }
        (aq * g, j)
    }

    pub fn primitive_velocity(&self, prim: &Primitive, p: Vec2) -> Vec2 {
        let pl = &prim.placement;
        if pl.amplitude == 0.0 {
            return Vec2::ZERO;
        }
        let q = (p - pl.center).rotate(-pl.angle);
        let v0 = match prim.kind {
            PrimitiveKind::LinearLut => self.lut.velocity(q),
            kind => self.local(kind, q).0,
        };
        v0.rotate(pl.angle) * pl.amplitude
    }

    /// Velocity, spatial Jacobian and placement derivatives of one
    /// primitive. For the LUT the Jacobian is the bilinear cell gradient,
    /// so it jumps across cell edges.
    pub fn sensitivity(&self, prim: &Primitive, p: Vec2) -> Sensitivity {
        let pl = &prim.placement;
        let r = rot(pl.angle);
        let rt = transpose(&r);
        let q = mv(&rt, p - pl.center);
        let (v0, j0) = self.local(prim.kind, q);
        let a = pl.amplitude;
        let rv0 = mv(&r, v0);
        let mut jac = mm(&mm(&r, &j0), &rt);
        for row in &mut jac {
            row[0] *= a;
            row[1] *= a;
        }
        let s: M2 = [[0.0, -1.0], [1.0, 0.0]];
        let d_theta = (mv(&mm(&r, &s), v0) - mv(&mm(&r, &j0), mv(&s, q))) * a;
        Sensitivity {
            v: rv0 * a,
            jac,
            dparam: [
                Vec2::new(-jac[0][0], -jac[1][0]),
                Vec2::new(-jac[0][1], -jac[1][1]),
                d_theta,
                rv0,
            ],
        }
    }

    pub fn superpose(&self, plan: &ScanPlan, p: Vec2) -> Vec2 {
        plan.primitives
            .iter()
            .fold(Vec2::ZERO, |acc, prim| acc + self.primitive_velocity(prim, p))
    }

    /// Explicit Euler advection over `dt` in `substeps` steps, clamped to
    /// `fov`.
    pub fn advect(
        &self,
        x: &[Vec2],
        plan: &ScanPlan,
        dt: f64,
        substeps: usize,
        fov: &Rect,
    ) -> Result<Advected, FlowError> {
        check(dt, substeps)?;
        let h = dt / substeps as f64;
        let mut pos = x.to_vec();
        for _ in 0..substeps {
            for (i, p) in pos.iter_mut().enumerate() {
                let v = self.superpose(plan, *p);
                if !v.is_finite() {
                    return Err(FlowError::NonFinite(i));
                }
                *p = fov.clamp(*p + v * h);
            }
        }
        Ok(Advected::new(x, pos))
    }

    /// Advection together with the forward
    /// sensitivities d x_i / d(placement parameter). Column `4k + j` holds
    /// parameter j (center x, center y, angle, amplitude) of primitive k.
    pub fn advect_with_sensitivity(
        &self,
        x: &[Vec2],
        plan: &ScanPlan,
        dt: f64,
        substeps: usize,
        fov: &Rect,
    ) -> Result<(Advected, Vec<Vec<Vec2>>), FlowError> {
        check(dt, substeps)?;
        let h = dt / substeps as f64;
        let np = 4 * plan.primitives.len();
        let mut pos = x.to_vec();
        // sens[i][c]: particle i, parameter column c.
        let mut sens = vec![vec![Vec2::ZERO; np]; x.len()];
        for _ in 0..substeps {
            for (i, p) in pos.iter_mut().enumerate() {
                let mut v = Vec2::ZERO;
                let mut jac = [[0.0; 2]; 2];
                let mut direct = vec![Vec2::ZERO; np];
                for (k, prim) in plan.primitives.iter().enumerate() {
                    let s = self.sensitivity(prim, *p);
                    v += s.v;
                    for r in 0..2 {
                        for c in 0..2 {
                            jac[r][c] += s.jac[r][c];
                        }
                    }
                    direct[4 * k..4 * k + 4].copy_from_slice(&s.dparam);
                }
                if !v.is_finite() {
                    return Err(FlowError::NonFinite(i));
                }
                let raw = *p + v * h;
                let clamped = fov.clamp(raw);
                let keep = (clamped.x == raw.x, clamped.y == raw.y);
                for (c, d) in sens[i].iter_mut().enumerate() {
                    let nd = *d + (mv(&jac, *d) + direct[c]) * h;
                    *d = Vec2::new(
                        if keep.0 { nd.x } else { 0.0 },
                        if keep.1 { nd.y } else { 0.0 },
                    );
                }
                *p = clamped;
            }
        }
        Ok((Advected::new(x, pos), sens))
    }
}

fn check(dt: f64, substeps: usize) -> Result<(), FlowError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FlowError::Invalid("dt must be positive"));
    }
    if substeps == 0 {
        return Err(FlowError::Invalid("substeps must be at least 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advected {
    pub positions: Vec<Vec2>,
    pub max_displacement: f64,
}

impl Advected {
    fn new(start: &[Vec2], positions: Vec<Vec2>) -> Advected {
        let max_displacement = start
            .iter()
            .zip(&positions)
            .fold(0.0f64, |m, (a, b)| m.max(a.dist(*b)));
        Advected {
            positions,
            max_displacement,
        }
    }
}
