//! Differentiable objective terms and the compiler from [`ObjectiveSpec`]
//! to an evaluable [`CompiledObjective`].

pub mod assign;
pub mod curves;
pub mod dual;
pub mod font;
pub mod grid;
pub mod kinds;
pub mod region;
pub mod shapes;

use crate::dsl::{ObjectiveSpec, TermKind, Value};
use crate::geom::Vec2;
use assign::AssignMode;
use curves::{CurveDef, ShapeError};
use region::Region;
use std::fmt;
use thiserror::Error;

/// One term of an objective, evaluated on the particles it applies to.
pub trait Term: Send + Sync + fmt::Debug {
    /// Term value; when `grad` is given (same length as `x`) it is
    /// overwritten with the gradient.
    fn eval(&self, x: &[Vec2], grad: Option<&mut [Vec2]>) -> f64;

    /// Combinatorial state the value depends on (nearest samples,
    /// assignment, vertex order). The term is smooth wherever this is
    /// locally constant.
    fn structure(&self, _x: &[Vec2]) -> Vec<usize> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("spec declares :n {declared} but {actual} particles were given")]
    CountMismatch { declared: usize, actual: usize },
    #[error("term {term} ({kind}): particle index {index} is out of range for n = {n}")]
    IndexOutOfRange {
        term: usize,
        kind: TermKind,
        index: usize,
        n: usize,
    },
    #[error("term {term} ({kind}): {message}")]
    Invalid {
        term: usize,
        kind: TermKind,
        message: String,
    },
    #[error("term {term} ({kind}): {source}")]
    Shape {
        term: usize,
        kind: TermKind,
        source: ShapeError,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("configuration has {actual} particles, objective expects {expected}")]
pub struct ShapeMismatch {
    pub expected: usize,
    pub actual: usize,
}

#[derive(Debug)]
pub struct CompiledTerm {
    pub kind: TermKind,
    pub weight: f64,
    /// Particles the term sees, in order; `None` means all.
    pub subset: Option<Vec<usize>>,
    pub term: Box<dyn Term>,
}

impl CompiledTerm {
    fn gather(&self, x: &[Vec2]) -> Option<Vec<Vec2>> {
        self.subset
            .as_ref()
            .map(|s| s.iter().map(|&i| x[i]).collect())
    }
}

/// f(A) = Σ weight_t · term_t(A). Immutable; safe to share across threads.
#[derive(Debug)]
pub struct CompiledObjective {
    pub name: String,
    pub n: usize,
    pub norm_length: f64,
    pub tolerance: f64,
    pub terms: Vec<CompiledTerm>,
}

impl CompiledObjective {
    fn check(&self, x: &[Vec2]) -> Result<(), ShapeMismatch> {
        if x.len() == self.n {
            Ok(())
        } else {
            Err(ShapeMismatch {
                expected: self.n,
                actual: x.len(),
            })
        }
    }

    pub fn evaluate(&self, x: &[Vec2]) -> Result<f64, ShapeMismatch> {
        self.check(x)?;
        let mut f = 0.0;
        for t in self.terms.iter().filter(|t| t.weight != 0.0) {
            let v = match t.gather(x) {
                Some(sub) => t.term.eval(&sub, None),
                None => t.term.eval(x, None),
            };
            f += t.weight * v;
        }
        Ok(f)
    }

    pub fn gradient(&self, x: &[Vec2]) -> Result<Vec<Vec2>, ShapeMismatch> {
        self.check(x)?;
        let mut g = vec![Vec2::ZERO; self.n];
        self.value_grad(x, &mut g);
        Ok(g)
    }

    /// Value and gradient in one pass. Panics if `x` or `grad` has the
    /// wrong length.
    pub fn value_grad(&self, x: &[Vec2], grad: &mut [Vec2]) -> f64 {
        assert_eq!(x.len(), self.n, "configuration size");
        assert_eq!(grad.len(), self.n, "gradient size");
        grad.fill(Vec2::ZERO);
        let mut f = 0.0;
        let mut buf = Vec::new();
        for t in self.terms.iter().filter(|t| t.weight != 0.0) {
            match t.gather(x) {
                Some(sub) => {
                    buf.clear();
                    buf.resize(sub.len(), Vec2::ZERO);
                    f += t.weight * t.term.eval(&sub, Some(&mut buf));
                    for (k, &i) in t.subset.as_ref().unwrap().iter().enumerate() {
                        grad[i] += buf[k] * t.weight;
                    }
                }
                None => {
                    buf.clear();
                    buf.resize(self.n, Vec2::ZERO);
                    f += t.weight * t.term.eval(x, Some(&mut buf));
                    for (gi, b) in grad.iter_mut().zip(&buf) {
                        *gi += *b * t.weight;
                    }
                }
            }
        }
        f
    }

    /// Unweighted value of every term, in spec order.
    pub fn term_values(&self, x: &[Vec2]) -> Result<Vec<(TermKind, f64, f64)>, ShapeMismatch> {
        self.check(x)?;
        Ok(self
            .terms
            .iter()
            .map(|t| {
                let v = match t.gather(x) {
                    Some(sub) => t.term.eval(&sub, None),
                    None => t.term.eval(x, None),
                };
                (t.kind, t.weight, v)
            })
            .collect())
    }

    /// Combinatorial state of all terms (see [`Term::structure`]).
    pub fn structure(&self, x: &[Vec2]) -> Vec<Vec<usize>> {
        self.terms
            .iter()
            .map(|t| match t.gather(x) {
                Some(sub) => t.term.structure(&sub),
                None => t.term.structure(x),
            })
            .collect()
    }
}

fn point_param(v: Option<&Value>) -> Option<Vec2> {
    v.and_then(Value::as_point).map(|[x, y]| Vec2::new(x, y))
}

/// Compile a validated spec for `n` particles.
pub fn compile(spec: &ObjectiveSpec, n: usize) -> Result<CompiledObjective, CompileError> {
    if let Some(declared) = spec.n_expected {
        if declared != n {
            return Err(CompileError::CountMismatch {
                declared,
                actual: n,
            });
        }
    }
    let l = spec.norm_length;
    let mut terms = Vec::with_capacity(spec.terms.len());
    for (ti, node) in spec.terms.iter().enumerate() {
        let kind = node.kind;
        let invalid = |message: String| CompileError::Invalid {
            term: ti,
            kind,
            message,
        };
        let shape = |source: ShapeError| CompileError::Shape {
            term: ti,
            kind,
            source,
        };
        let subset = node.subset();
        if let Some(s) = &subset {
            if let Some(&bad) = s.iter().find(|&&i| i >= n) {
                return Err(CompileError::IndexOutOfRange {
                    term: ti,
                    kind,
                    index: bad,
                    n,
                });
            }
        }
        let m = subset.as_ref().map_or(n, Vec::len);
        if m == 0 {
            return Err(invalid("term applies to no particles".into()));
        }
        let form = |key: &str| node.param(key).and_then(Value::as_form);
        let term: Box<dyn Term> = match kind {
            TermKind::ShapeCurve => {
                let curve = CurveDef::from_form(
                    form("curve").ok_or_else(|| invalid("missing :curve".into()))?,
                )
                .map_err(shape)?;
                let count = node
                    .param("samples")
                    .and_then(Value::as_f64)
                    .map_or(16 * m, |c| c as usize);
                let samples = curve.sample(count).map_err(shape)?;
                Box::new(kinds::CurveTerm::new(samples, l))
            }
            TermKind::ShapePoints => {
                let targets = shapes::targets_from_form(
                    form("targets").ok_or_else(|| invalid("missing :targets".into()))?,
                    m,
                )
                .map_err(shape)?;
                let mode = match node.param("assign").and_then(Value::as_str) {
                    Some("nearest") => AssignMode::Nearest,
                    _ => AssignMode::Balanced,
                };
                if targets.is_empty() {
                    return Err(invalid("empty target set".into()));
                }
                if mode == AssignMode::Balanced && targets.len() < m {
                    return Err(invalid(format!(
                        "balanced assignment needs at least {m} targets, got {}",
                        targets.len()
                    )));
                }
                Box::new(kinds::PointsTerm::new(targets, mode, l))
            }
            TermKind::ShapeSquare => {
                if m == 0 || m % 4 != 0 {
                    return Err(invalid(format!("needs a positive multiple of 4 particles, got {m}")));
                }
                Box::new(kinds::SquareTerm)
            }
            TermKind::SpacingRepel => Box::new(kinds::RepelTerm {
                d0: node
                    .param("d0")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| invalid("missing :d0".into()))?,
            }),
            TermKind::SpacingSites => {
                let curve = CurveDef::from_form(
                    form("curve").ok_or_else(|| invalid("missing :curve".into()))?,
                )
                .map_err(shape)?;
                let sites = if m == 1 {
                    curve.chains[0].sample(1).map_err(shape)?
                } else {
                    curve.sample(m).map_err(shape)?
                };
                Box::new(kinds::PointsTerm::new(sites, AssignMode::Balanced, l))
            }
            TermKind::RegionDensity => Box::new(kinds::DensityTerm {
                region: Region::from_form(
                    form("region").ok_or_else(|| invalid("missing :region".into()))?,
                )
                .map_err(shape)?,
            }),
            TermKind::RegionPeriphery => {
                let region = Region::from_form(
                    form("region").ok_or_else(|| invalid("missing :region".into()))?,
                )
                .map_err(shape)?;
                let interior_idx = node
                    .param("interior")
                    .and_then(Value::as_indices)
                    .ok_or_else(|| invalid("missing :interior".into()))?;
                let mut interior = vec![false; n];
                for &i in &interior_idx {
                    if i >= n {
                        return Err(CompileError::IndexOutOfRange {
                            term: ti,
                            kind,
                            index: i,
                            n,
                        });
                    }
                    interior[i] = true;
                }
                let ring = node
                    .param("ring-radius")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| invalid("missing :ring-radius".into()))?;
                Box::new(kinds::PeripheryTerm::new(region, interior, ring, l))
            }
            TermKind::AnchorCenter => Box::new(kinds::CenterTerm::new(
                point_param(node.param("center"))
                    .ok_or_else(|| invalid("missing :center".into()))?,
                l,
            )),
            TermKind::AnchorScale => Box::new(kinds::ScaleTerm::new(
                node.param("radius")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| invalid("missing :radius".into()))?,
                l,
            )),
        };
        terms.push(CompiledTerm {
            kind,
            weight: node.weight,
            subset,
            term,
        });
    }
    Ok(CompiledObjective {
        name: spec.name.clone(),
        n,
        norm_length: l,
        tolerance: spec.tolerance,
        terms,
    })
}

/// Parse and compile in one step, for callers holding DSL text.
pub fn compile_text(src: &str, n: usize) -> Result<CompiledObjective, String> {
    let spec = crate::dsl::parse(src).map_err(|d| crate::dsl::render_diagnostics(src, &d))?;
    compile(&spec, n).map_err(|e| e.to_string())
}
