//! Term registry: machine-readable parameter schemas for every term kind
//! and every nested form (curves, regions, target sets).

use super::sexpr::{Sexp, SexpKind};
use super::{Diagnostic, Form, Span, TermKind, Value};
use serde_json::json;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy)]
pub enum FormClass {
    Curve,
    Region,
    Targets,
}

#[derive(Debug, Clone, Copy)]
pub enum ParamType {
    Number { min: f64, exclusive: bool },
    Count { min: usize },
    Bool,
    Symbol(&'static [&'static str]),
    Point,
    Points { min: usize },
    Indices,
    Form(FormClass),
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub key: &'static str,
    pub ty: ParamType,
    pub required: bool,
    pub doc: &'static str,
}

#[derive(Debug, Clone, Copy)]
pub enum Positional {
    None,
    Str,
    Points { min: usize },
    Form(FormClass),
}

#[derive(Debug, Clone, Copy)]
pub struct FormSpec {
    pub head: &'static str,
    pub positional: Positional,
    pub params: &'static [ParamSpec],
    pub doc: &'static str,
}

const ANY: ParamType = ParamType::Number {
    min: f64::NEG_INFINITY,
    exclusive: false,
};
const POSITIVE: ParamType = ParamType::Number {
    min: 0.0,
    exclusive: true,
};
const NONNEG: ParamType = ParamType::Number {
    min: 0.0,
    exclusive: false,
};

const fn req(key: &'static str, ty: ParamType, doc: &'static str) -> ParamSpec {
    ParamSpec {
        key,
        ty,
        required: true,
        doc,
    }
}

const fn opt(key: &'static str, ty: ParamType, doc: &'static str) -> ParamSpec {
    ParamSpec {
        key,
        ty,
        required: false,
        doc,
    }
}

const CENTER: ParamSpec = opt("center", ParamType::Point, "translation (µm)");
const ROTATION: ParamSpec = opt("rotation", ANY, "rotation about the center (degrees)");
const COUNT: ParamSpec = opt(
    "count",
    ParamType::Count { min: 1 },
    "number of target points (defaults to the particle count)",
);
const SUBSET: ParamSpec = opt(
    "subset",
    ParamType::Indices,
    "particle indices this term applies to (default: all)",
);
const SHARED: ParamSpec = opt(
    "shared",
    ParamType::Bool,
    "allow the subset to overlap other terms' subsets",
);

pub const CURVES: &[FormSpec] = &[
    FormSpec {
        head: "circle",
        positional: Positional::None,
        params: &[req("r", POSITIVE, "radius (µm)"), CENTER, ROTATION],
        doc: "circle of radius r",
    },
    FormSpec {
        head: "ellipse",
        positional: Positional::None,
        params: &[
            req("rx", POSITIVE, "semi-axis along x (µm)"),
            req("ry", POSITIVE, "semi-axis along y (µm)"),
            CENTER,
            ROTATION,
        ],
        doc: "axis-aligned ellipse before rotation",
    },
    FormSpec {
        head: "sinusoid",
        positional: Positional::None,
        params: &[
            req("amplitude", NONNEG, "peak deflection (µm)"),
            req("period", POSITIVE, "wavelength (µm)"),
            req("length", POSITIVE, "extent along x, centered (µm)"),
            CENTER,
            ROTATION,
        ],
        doc: "open sine wave y = A sin(2πx/period)",
    },
    FormSpec {
        head: "spiral",
        positional: Positional::None,
        params: &[
            req("a", NONNEG, "start radius (µm)"),
            req("b", POSITIVE, "radial growth per radian (µm)"),
            req("turns", POSITIVE, "number of turns"),
            CENTER,
            ROTATION,
        ],
        doc: "Archimedean spiral r = a + bφ",
    },
    FormSpec {
        head: "heart",
        positional: Positional::None,
        params: &[
            req("size", POSITIVE, "overall width (µm)"),
            CENTER,
            ROTATION,
        ],
        doc: "classic parametric heart",
    },
    FormSpec {
        head: "polygon",
        positional: Positional::None,
        params: &[
            req("sides", ParamType::Count { min: 3 }, "vertex count"),
            req("r", POSITIVE, "circumradius (µm)"),
            CENTER,
            ROTATION,
        ],
        doc: "regular polygon, first vertex on +y",
    },
    FormSpec {
        head: "star",
        positional: Positional::None,
        params: &[
            req("points", ParamType::Count { min: 3 }, "number of tips"),
            req("outer", POSITIVE, "tip radius (µm)"),
            req("inner", POSITIVE, "notch radius (µm)"),
            CENTER,
            ROTATION,
        ],
        doc: "star polygon alternating outer and inner vertices",
    },
    FormSpec {
        head: "segment",
        positional: Positional::None,
        params: &[
            req("from", ParamType::Point, "start point (µm)"),
            req("to", ParamType::Point, "end point (µm)"),
            CENTER,
            ROTATION,
        ],
        doc: "straight segment",
    },
    FormSpec {
        head: "segment-chain",
        positional: Positional::None,
        params: &[
            req(
                "points",
                ParamType::Points { min: 2 },
                "polyline vertices (µm)",
            ),
            opt("closed", ParamType::Bool, "join last vertex to first"),
            CENTER,
            ROTATION,
        ],
        doc: "polyline through the given vertices",
    },
    FormSpec {
        head: "text",
        positional: Positional::Str,
        params: &[
            opt("height", POSITIVE, "cap height (µm, default 20)"),
            CENTER,
            ROTATION,
        ],
        doc: "stroke-font lettering as a set of open segment chains",
    },
];

pub const REGIONS: &[FormSpec] = &[
    FormSpec {
        head: "disk",
        positional: Positional::None,
        params: &[
            req("r", POSITIVE, "radius (µm)"),
            req("w", POSITIVE, "soft edge width (µm)"),
            CENTER,
        ],
        doc: "disk region",
    },
    FormSpec {
        head: "rect",
        positional: Positional::None,
        params: &[
            req("size", ParamType::Point, "width and height (µm)"),
            req("w", POSITIVE, "soft edge width (µm)"),
            CENTER,
        ],
        doc: "axis-aligned rectangle",
    },
    FormSpec {
        head: "polygon-mask",
        positional: Positional::None,
        params: &[
            req(
                "points",
                ParamType::Points { min: 3 },
                "polygon vertices (µm)",
            ),
            req("w", POSITIVE, "soft edge width (µm)"),
        ],
        doc: "simple polygon region",
    },
];

pub const TARGETS: &[FormSpec] = &[
    FormSpec {
        head: "points",
        positional: Positional::Points { min: 1 },
        params: &[],
        doc: "explicit target coordinates",
    },
    FormSpec {
        head: "sample",
        positional: Positional::Form(FormClass::Curve),
        params: &[COUNT],
        doc: "points equally spaced in arc length along a curve",
    },
    FormSpec {
        head: "polygon",
        positional: Positional::None,
        params: &[
            req("sides", ParamType::Count { min: 3 }, "vertex count"),
            req("r", POSITIVE, "circumradius (µm)"),
            COUNT,
            CENTER,
            ROTATION,
        ],
        doc: "perimeter of a regular polygon, balanced per edge",
    },
    FormSpec {
        head: "star",
        positional: Positional::None,
        params: &[
            req("points", ParamType::Count { min: 3 }, "number of tips"),
            req("outer", POSITIVE, "tip radius (µm)"),
            req("inner", POSITIVE, "notch radius (µm)"),
            COUNT,
            CENTER,
            ROTATION,
        ],
        doc: "perimeter of a star polygon, balanced per edge",
    },
    FormSpec {
        head: "hexagon-trio",
        positional: Positional::None,
        params: &[
            req("side", POSITIVE, "hexagon side length (µm)"),
            COUNT,
            CENTER,
            ROTATION,
        ],
        doc: "three edge-sharing hexagons",
    },
    FormSpec {
        head: "text",
        positional: Positional::Str,
        params: &[
            opt("height", POSITIVE, "cap height (µm, default 20)"),
            COUNT,
            CENTER,
            ROTATION,
        ],
        doc: "stroke-font lettering (A-Z, 0-9, space)",
    },
];

const SHAPE_CURVE_PARAMS: &[ParamSpec] = &[
    req("curve", ParamType::Form(FormClass::Curve), "target curve"),
    opt(
        "samples",
        ParamType::Count { min: 2 },
        "arc-length samples (default 16 per particle)",
    ),
    SUBSET,
    SHARED,
];
const SHAPE_POINTS_PARAMS: &[ParamSpec] = &[
    req("targets", ParamType::Form(FormClass::Targets), "target set"),
    opt(
        "assign",
        ParamType::Symbol(&["balanced", "nearest"]),
        "assignment mode (default balanced)",
    ),
    SUBSET,
    SHARED,
];
const SHAPE_SQUARE_PARAMS: &[ParamSpec] = &[SUBSET, SHARED];
const SPACING_REPEL_PARAMS: &[ParamSpec] =
    &[req("d0", POSITIVE, "barrier range (µm)"), SUBSET, SHARED];
const SPACING_SITES_PARAMS: &[ParamSpec] = &[
    req(
        "curve",
        ParamType::Form(FormClass::Curve),
        "curve carrying one site per particle",
    ),
    SUBSET,
    SHARED,
];
const REGION_DENSITY_PARAMS: &[ParamSpec] = &[
    req(
        "region",
        ParamType::Form(FormClass::Region),
        "target region",
    ),
    SUBSET,
    SHARED,
];
const REGION_PERIPHERY_PARAMS: &[ParamSpec] = &[
    req(
        "region",
        ParamType::Form(FormClass::Region),
        "interior region",
    ),
    req(
        "interior",
        ParamType::Indices,
        "particles steered into the region",
    ),
    req(
        "ring-radius",
        POSITIVE,
        "radius of the ring for the remaining particles (µm)",
    ),
];
const ANCHOR_CENTER_PARAMS: &[ParamSpec] = &[
    req("center", ParamType::Point, "desired centroid (µm)"),
    SUBSET,
    SHARED,
];
const ANCHOR_SCALE_PARAMS: &[ParamSpec] = &[
    req(
        "radius",
        POSITIVE,
        "desired RMS radius about the centroid (µm)",
    ),
    SUBSET,
    SHARED,
];

pub fn term_params(kind: TermKind) -> &'static [ParamSpec] {
    match kind {
        TermKind::ShapeCurve => SHAPE_CURVE_PARAMS,
        TermKind::ShapePoints => SHAPE_POINTS_PARAMS,
        TermKind::ShapeSquare => SHAPE_SQUARE_PARAMS,
        TermKind::SpacingRepel => SPACING_REPEL_PARAMS,
        TermKind::SpacingSites => SPACING_SITES_PARAMS,
        TermKind::RegionDensity => REGION_DENSITY_PARAMS,
        TermKind::RegionPeriphery => REGION_PERIPHERY_PARAMS,
        TermKind::AnchorCenter => ANCHOR_CENTER_PARAMS,
        TermKind::AnchorScale => ANCHOR_SCALE_PARAMS,
    }
}

pub fn term_doc(kind: TermKind) -> &'static str {
    match kind {
        TermKind::ShapeCurve => "mean squared distance to the nearest arc-length sample of a curve",
        TermKind::ShapePoints => "mean squared distance to assigned target points",
        TermKind::ShapeSquare => {
            "relational square: equal sides, right angles, equal diagonals; with 4k particles the others sit evenly along the sides"
        }
        TermKind::SpacingRepel => "soft barrier max(0, 1 - d/d0)^2 on nearest-neighbour distances",
        TermKind::SpacingSites => "one particle per equally spaced site on a curve",
        TermKind::RegionDensity => "one minus the mean soft membership of the region",
        TermKind::RegionPeriphery => "interior subset into the region, the rest onto a ring",
        TermKind::AnchorCenter => "quadratic pull of the centroid",
        TermKind::AnchorScale => "quadratic pull of the RMS radius",
    }
}

pub fn forms(class: FormClass) -> &'static [FormSpec] {
    match class {
        FormClass::Curve => CURVES,
        FormClass::Region => REGIONS,
        FormClass::Targets => TARGETS,
    }
}

fn class_name(class: FormClass) -> &'static str {
    match class {
        FormClass::Curve => "curve",
        FormClass::Region => "region",
        FormClass::Targets => "target set",
    }
}

/// Convert a keyword/value run (`:k v :k v`) into a map, checking each value
/// against `specs`. Unknown keys, duplicates and missing required keys are
/// reported against `owner` (the enclosing form's span).
pub fn convert_kwargs(
    items: &[Sexp],
    specs: &[ParamSpec],
    owner: Span,
    context: &str,
    diags: &mut Vec<Diagnostic>,
) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut i = 0;
    while i < items.len() {
        let key_sexp = &items[i];
        let SexpKind::Kw(key) = &key_sexp.kind else {
            diags.push(Diagnostic::error(
                key_sexp.span,
                format!(
                    "expected a :keyword in {context}, found {}",
                    key_sexp.describe()
                ),
            ));
            i += 1;
            continue;
        };
        let Some(val) = items.get(i + 1) else {
            diags.push(Diagnostic::error(
                key_sexp.span,
                format!(":{key} is missing a value"),
            ));
            break;
        };
        i += 2;
        let Some(spec) = specs.iter().find(|s| s.key == key) else {
            let known: Vec<_> = specs.iter().map(|s| format!(":{}", s.key)).collect();
            diags.push(Diagnostic::error(
                key_sexp.span,
                format!(
                    "unknown parameter :{key} for {context} (expected one of {})",
                    if known.is_empty() {
                        "none".to_string()
                    } else {
                        known.join(" ")
                    }
                ),
            ));
            continue;
        };
        if !seen.insert(key.clone()) {
            diags.push(Diagnostic::error(
                key_sexp.span,
                format!("duplicate parameter :{key}"),
            ));
            continue;
        }
        if let Some(v) = convert_value(val, spec.ty, key, diags) {
            out.insert(key.clone(), v);
        }
    }
    for spec in specs.iter().filter(|s| s.required) {
        if !seen.contains(spec.key) {
            diags.push(Diagnostic::error(
                owner,
                format!("{context} requires :{}", spec.key),
            ));
        }
    }
    out
}

fn as_num(s: &Sexp) -> Option<f64> {
    match s.kind {
        SexpKind::Num(v) => Some(v),
        _ => None,
    }
}

fn convert_point(s: &Sexp, key: &str, diags: &mut Vec<Diagnostic>) -> Option<Value> {
    match s.as_list() {
        Some([a, b]) => match (as_num(a), as_num(b)) {
            (Some(x), Some(y)) => Some(Value::List(vec![Value::Num(x), Value::Num(y)])),
            _ => {
                diags.push(Diagnostic::error(
                    s.span,
                    format!(":{key} point must hold two numbers"),
                ));
                None
            }
        },
        _ => {
            diags.push(Diagnostic::error(
                s.span,
                format!(":{key} expects a point (x y), found {}", s.describe()),
            ));
            None
        }
    }
}

fn convert_points(s: &Sexp, min: usize, key: &str, diags: &mut Vec<Diagnostic>) -> Option<Value> {
    let Some(items) = s.as_list() else {
        diags.push(Diagnostic::error(
            s.span,
            format!(":{key} expects a list of points, found {}", s.describe()),
        ));
        return None;
    };
    convert_point_items(items, s.span, min, key, diags)
}

fn convert_point_items(
    items: &[Sexp],
    span: Span,
    min: usize,
    key: &str,
    diags: &mut Vec<Diagnostic>,
) -> Option<Value> {
    if items.len() < min {
        diags.push(Diagnostic::error(
            span,
            format!(":{key} needs at least {min} points, found {}", items.len()),
        ));
        return None;
    }
    let before = diags.len();
    let pts: Vec<Value> = items
        .iter()
        .filter_map(|p| convert_point(p, key, diags))
        .collect();
    (diags.len() == before).then_some(Value::List(pts))
}

pub fn convert_value(
    s: &Sexp,
    ty: ParamType,
    key: &str,
    diags: &mut Vec<Diagnostic>,
) -> Option<Value> {
    match ty {
        ParamType::Number { min, exclusive } => {
            let Some(v) = as_num(s) else {
                diags.push(Diagnostic::error(
                    s.span,
                    format!(":{key} expects a number, found {}", s.describe()),
                ));
                return None;
            };
            let ok = if exclusive { v > min } else { v >= min };
            if !ok {
                let rel = if exclusive { ">" } else { "≥" };
                diags.push(Diagnostic::error(
                    s.span,
                    format!(":{key} must be {rel} {min}"),
                ));
                return None;
            }
            Some(Value::Num(v))
        }
        ParamType::Count { min } => match as_num(s) {
            Some(v) if v.fract() == 0.0 && v >= min as f64 && v <= 1e7 => Some(Value::Num(v)),
            Some(_) => {
                diags.push(Diagnostic::error(
                    s.span,
                    format!(":{key} must be an integer ≥ {min}"),
                ));
                None
            }
            None => {
                diags.push(Diagnostic::error(
                    s.span,
                    format!(":{key} expects an integer, found {}", s.describe()),
                ));
                None
            }
        },
        ParamType::Bool => match s.as_sym() {
            Some("true") => Some(Value::Bool(true)),
            Some("false") => Some(Value::Bool(false)),
            _ => {
                diags.push(Diagnostic::error(
                    s.span,
                    format!(":{key} expects true or false"),
                ));
                None
            }
        },
        ParamType::Symbol(choices) => match s.as_sym() {
            Some(sym) if choices.contains(&sym) => Some(Value::Sym(sym.to_string())),
            _ => {
                diags.push(Diagnostic::error(
                    s.span,
                    format!(":{key} expects one of {}", choices.join("|")),
                ));
                None
            }
        },
        ParamType::Point => convert_point(s, key, diags),
        ParamType::Points { min } => convert_points(s, min, key, diags),
        ParamType::Indices => {
            let Some(items) = s.as_list() else {
                diags.push(Diagnostic::error(
                    s.span,
                    format!(":{key} expects a list of particle indices"),
                ));
                return None;
            };
            let mut seen = std::collections::BTreeSet::new();
            let mut out = Vec::new();
            for it in items {
                match as_num(it) {
                    Some(v) if v.fract() == 0.0 && (0.0..1e7).contains(&v) => {
                        if !seen.insert(v as u64) {
                            diags.push(Diagnostic::error(it.span, format!("duplicate index {v}")));
                            return None;
                        }
                        out.push(Value::Num(v));
                    }
                    _ => {
                        diags.push(Diagnostic::error(
                            it.span,
                            "particle index must be a non-negative integer",
                        ));
                        return None;
                    }
                }
            }
            if out.is_empty() {
                diags.push(Diagnostic::error(
                    s.span,
                    format!(":{key} must not be empty"),
                ));
                return None;
            }
            Some(Value::List(out))
        }
        ParamType::Form(class) => convert_form(s, class, diags),
    }
}

pub fn convert_form(s: &Sexp, class: FormClass, diags: &mut Vec<Diagnostic>) -> Option<Value> {
    let items = match s.as_list() {
        Some(items) if !items.is_empty() => items,
        _ => {
            diags.push(Diagnostic::error(
                s.span,
                format!("expected a {} form like (circle :r 10)", class_name(class)),
            ));
            return None;
        }
    };
    let Some(head) = items[0].as_sym() else {
        diags.push(Diagnostic::error(
            items[0].span,
            format!("{} form must start with a name", class_name(class)),
        ));
        return None;
    };
    let Some(spec) = forms(class).iter().find(|f| f.head == head) else {
        let known: Vec<_> = forms(class).iter().map(|f| f.head).collect();
        diags.push(Diagnostic::error(
            items[0].span,
            format!(
                "unknown {} '{head}' (expected one of {})",
                class_name(class),
                known.join(", ")
            ),
        ));
        return None;
    };
    let rest = &items[1..];
    let split = rest
        .iter()
        .position(|x| matches!(x.kind, SexpKind::Kw(_)))
        .unwrap_or(rest.len());
    let (positional, kw) = rest.split_at(split);
    let before = diags.len();
    let args = match spec.positional {
        Positional::None => {
            if let Some(p) = positional.first() {
                diags.push(Diagnostic::error(
                    p.span,
                    format!("({head} ...) takes only keyword parameters"),
                ));
            }
            Vec::new()
        }
        Positional::Str => match positional {
            [one] => match &one.kind {
                SexpKind::Str(text) => vec![Value::Str(text.clone())],
                _ => {
                    diags.push(Diagnostic::error(
                        one.span,
                        format!("({head} ...) expects a string"),
                    ));
                    Vec::new()
                }
            },
            _ => {
                diags.push(Diagnostic::error(
                    s.span,
                    format!("({head} ...) expects exactly one string"),
                ));
                Vec::new()
            }
        },
        Positional::Points { min } => {
            match convert_point_items(positional, s.span, min, head, diags) {
                Some(Value::List(pts)) => pts,
                _ => Vec::new(),
            }
        }
        Positional::Form(inner) => match positional {
            [one] => convert_form(one, inner, diags).into_iter().collect(),
            _ => {
                diags.push(Diagnostic::error(
                    s.span,
                    format!(
                        "({head} ...) expects exactly one {} form",
                        class_name(inner)
                    ),
                ));
                Vec::new()
            }
        },
    };
    let kwargs = convert_kwargs(kw, spec.params, s.span, &format!("({head} ...)"), diags);
    (diags.len() == before).then(|| {
        Value::Form(Form {
            head: head.to_string(),
            args,
            kwargs,
        })
    })
}

fn param_type_json(ty: ParamType) -> serde_json::Value {
    match ty {
        ParamType::Number { min, exclusive } => {
            if min.is_finite() {
                if exclusive {
                    json!({"type": "number", "exclusiveMinimum": min})
                } else {
                    json!({"type": "number", "minimum": min})
                }
            } else {
                json!({"type": "number"})
            }
        }
        ParamType::Count { min } => json!({"type": "integer", "minimum": min}),
        ParamType::Bool => json!({"type": "boolean"}),
        ParamType::Symbol(choices) => json!({"enum": choices}),
        ParamType::Point => {
            json!({"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2})
        }
        ParamType::Points { min } => json!({
            "type": "array",
            "minItems": min,
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
        }),
        ParamType::Indices => {
            json!({"type": "array", "items": {"type": "integer", "minimum": 0}, "uniqueItems": true})
        }
        ParamType::Form(class) => {
            json!({"$ref": format!("#/forms/{}", class_name(class).replace(' ', "-"))})
        }
    }
}

fn params_json(specs: &[ParamSpec]) -> serde_json::Value {
    let mut props = serde_json::Map::new();
    let mut required = Vec::new();
    for p in specs {
        let mut v = param_type_json(p.ty);
        v["description"] = json!(p.doc);
        props.insert(p.key.to_string(), v);
        if p.required {
            required.push(p.key);
        }
    }
    json!({"type": "object", "properties": props, "required": required})
}

/// JSON schema fragment for one term kind, used for form hints.
pub fn kind_schema_json(kind: TermKind) -> serde_json::Value {
    let mut params = params_json(term_params(kind));
    params["properties"]["weight"] =
        json!({"type": "number", "minimum": 0, "description": "non-negative pre-factor"});
    json!({
        "kind": kind.name(),
        "description": term_doc(kind),
        "params": params,
    })
}

/// The complete registry: every kind plus every nested form.
pub fn registry_json() -> serde_json::Value {
    let form_list = |class: FormClass| -> serde_json::Value {
        forms(class)
            .iter()
            .map(|f| {
                json!({
                    "head": f.head,
                    "description": f.doc,
                    "params": params_json(f.params),
                })
            })
            .collect()
    };
    json!({
        "terms": TermKind::ALL.iter().map(|k| kind_schema_json(*k)).collect::<Vec<_>>(),
        "forms": {
            "curve": form_list(FormClass::Curve),
            "region": form_list(FormClass::Region),
            "target-set": form_list(FormClass::Targets),
        }
    })
}

fn type_text(ty: ParamType) -> String {
    match ty {
        ParamType::Number { min, exclusive } if min.is_finite() => {
            format!("number {} {min}", if exclusive { ">" } else { ">=" })
        }
        ParamType::Number { .. } => "number".into(),
        ParamType::Count { min } => format!("integer >= {min}"),
        ParamType::Bool => "true|false".into(),
        ParamType::Symbol(opts) => opts.join("|"),
        ParamType::Point => "(x y)".into(),
        ParamType::Points { min } => format!("((x y) ...), at least {min}"),
        ParamType::Indices => "(i j ...)".into(),
        ParamType::Form(c) => format!("{} form", class_name(c)),
    }
}

fn params_text(out: &mut String, params: &[ParamSpec], indent: &str) {
    for p in params {
        let req = if p.required { "required" } else { "optional" };
        out.push_str(&format!("{indent}:{} <{}> {req}: {}\n", p.key, type_text(p.ty), p.doc));
    }
}

/// Plain-text rendering of the registry, used in prompts.
pub fn registry_text() -> String {
    let mut out = String::from("Term kinds (every term also takes :weight <number >= 0>):\n");
    for k in TermKind::ALL {
        out.push_str(&format!("- {}: {}\n", k.name(), term_doc(k)));
        params_text(&mut out, term_params(k), "    ");
    }
    for class in [FormClass::Curve, FormClass::Region, FormClass::Targets] {
        out.push_str(&format!("\n{} forms:\n", class_name(class)));
        for f in forms(class) {
            let pos = match f.positional {
                Positional::None => String::new(),
                Positional::Str => " \"text\"".into(),
                Positional::Points { .. } => " (x y) ...".into(),
                Positional::Form(c) => format!(" <{} form>", class_name(c)),
            };
            out.push_str(&format!("- ({}{pos} ...): {}\n", f.head, f.doc));
            params_text(&mut out, f.params, "    ");
        }
    }
    out
}
