//! The objective-specification language.
//!
//! Objectives are written as s-expressions with keyword parameters:
//!
//! ```text
//! (objective :name "ring" :n 20 :norm-length 10
//!   (term shape.curve :curve (circle :r 20) :weight 1)
//!   (term spacing.repel :d0 4 :weight 0.2))
//! ```
//!
//! Text is never executed; it is parsed, validated against the term
//! registry in [`schema`], and compiled by [`crate::terms::compile`].

mod extract;
mod parse;
mod print;
pub mod schema;
pub mod sexpr;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

pub use extract::{extract_fenced, ExtractError};
pub use parse::{parse, parse_with_warnings};
pub use print::print_canonical;

/// Byte range into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub span: Span,
    pub message: String,
}

impl Diagnostic {
    pub fn error(span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            span,
            message: message.into(),
        }
    }

    pub fn warning(span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            span,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{sev} at {}..{}: {}",
            self.span.start, self.span.end, self.message
        )
    }
}

/// Render diagnostics one per line, with the offending source excerpt.
pub fn render_diagnostics(src: &str, diags: &[Diagnostic]) -> String {
    let mut out = String::new();
    for d in diags {
        let excerpt = src.get(d.span.start..d.span.end).unwrap_or("");
        let excerpt: String = excerpt.chars().take(60).collect();
        out.push_str(&format!("{d} (near `{excerpt}`)\n"));
    }
    out
}

/// A parameter value. Forms are lists headed by a symbol, e.g. `(circle :r 20)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    Num(f64),
    Str(String),
    Sym(String),
    Bool(bool),
    List(Vec<Value>),
    Form(Form),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Form {
    pub head: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub args: Vec<Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub kwargs: BTreeMap<String, Value>,
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) | Value::Sym(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_form(&self) -> Option<&Form> {
        match self {
            Value::Form(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(l) => Some(l),
            _ => None,
        }
    }

    /// `(x y)` as a coordinate pair.
    pub fn as_point(&self) -> Option<[f64; 2]> {
        match self.as_list()? {
            [a, b] => Some([a.as_f64()?, b.as_f64()?]),
            _ => None,
        }
    }

    pub fn as_points(&self) -> Option<Vec<[f64; 2]>> {
        self.as_list()?.iter().map(Value::as_point).collect()
    }

    pub fn as_indices(&self) -> Option<Vec<usize>> {
        self.as_list()?
            .iter()
            .map(|v| v.as_f64().map(|x| x as usize))
            .collect()
    }
}

impl Form {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.kwargs.get(key)
    }

    pub fn num(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(Value::as_f64)
    }
}

/// Registered term kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TermKind {
    #[serde(rename = "shape.curve")]
    ShapeCurve,
    #[serde(rename = "shape.points")]
    ShapePoints,
    #[serde(rename = "shape.square")]
    ShapeSquare,
    #[serde(rename = "spacing.repel")]
    SpacingRepel,
    #[serde(rename = "spacing.sites")]
    SpacingSites,
    #[serde(rename = "region.density")]
    RegionDensity,
    #[serde(rename = "region.periphery")]
    RegionPeriphery,
    #[serde(rename = "anchor.center")]
    AnchorCenter,
    #[serde(rename = "anchor.scale")]
    AnchorScale,
}

impl TermKind {
    pub const ALL: [TermKind; 9] = [
        TermKind::ShapeCurve,
        TermKind::ShapePoints,
        TermKind::ShapeSquare,
        TermKind::SpacingRepel,
        TermKind::SpacingSites,
        TermKind::RegionDensity,
        TermKind::RegionPeriphery,
        TermKind::AnchorCenter,
        TermKind::AnchorScale,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TermKind::ShapeCurve => "shape.curve",
            TermKind::ShapePoints => "shape.points",
            TermKind::ShapeSquare => "shape.square",
            TermKind::SpacingRepel => "spacing.repel",
            TermKind::SpacingSites => "spacing.sites",
            TermKind::RegionDensity => "region.density",
            TermKind::RegionPeriphery => "region.periphery",
            TermKind::AnchorCenter => "anchor.center",
            TermKind::AnchorScale => "anchor.scale",
        }
    }

    pub fn from_name(name: &str) -> Option<TermKind> {
        TermKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for TermKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermNode {
    pub kind: TermKind,
    pub params: BTreeMap<String, Value>,
    pub weight: f64,
}

impl TermNode {
    pub fn param(&self, key: &str) -> Option<&Value> {
        self.params.get(key)
    }

    pub fn subset(&self) -> Option<Vec<usize>> {
        self.params.get("subset").and_then(Value::as_indices)
    }
}

pub const DEFAULT_NORM_LENGTH: f64 = 10.0;
pub const DEFAULT_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub name: String,
    pub terms: Vec<TermNode>,
    pub n_expected: Option<usize>,
    /// Length (µm) dividing every distance before it is squared.
    pub norm_length: f64,
    /// Objective scale for the geometric score `exp(-f / tolerance)`.
    pub tolerance: f64,
}

impl ObjectiveSpec {
    /// JSON export, one object per term.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("spec is always serialisable")
    }
}
