use super::schema::{convert_kwargs, convert_value, term_params, ParamSpec, ParamType};
use super::sexpr::{read_all, Sexp, SexpKind};
use super::{Diagnostic, ObjectiveSpec, Span, TermKind, TermNode, Value};
use super::{DEFAULT_NORM_LENGTH, DEFAULT_TOLERANCE};
use crate::terms::font;
use std::collections::BTreeMap;

// :name is handled separately since it takes a string.
const META: &[ParamSpec] = &[
    ParamSpec {
        key: "n",
        ty: ParamType::Count { min: 1 },
        required: false,
        doc: "expected particle count",
    },
    ParamSpec {
        key: "norm-length",
        ty: ParamType::Number {
            min: 0.0,
            exclusive: true,
        },
        required: false,
        doc: "distance normalisation (µm)",
    },
    ParamSpec {
        key: "tolerance",
        ty: ParamType::Number {
            min: 0.0,
            exclusive: true,
        },
        required: false,
        doc: "objective scale of the geometric score",
    },
];

/// Parse and validate objective text.
pub fn parse(src: &str) -> Result<ObjectiveSpec, Vec<Diagnostic>> {
    match parse_with_warnings(src) {
        (Some(spec), _) => Ok(spec),
        (None, diags) => Err(diags),
    }
}

/// Like [`parse`], also returning warnings on success. On failure the
/// diagnostics contain at least one error.
pub fn parse_with_warnings(src: &str) -> (Option<ObjectiveSpec>, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let spec = parse_inner(src, &mut diags);
    debug_assert!(diags
        .iter()
        .all(|d| d.span.start <= d.span.end && d.span.end <= src.len()));
    if diags.iter().any(Diagnostic::is_error) {
        (None, diags)
    } else {
        (spec, diags)
    }
}

fn parse_inner(src: &str, diags: &mut Vec<Diagnostic>) -> Option<ObjectiveSpec> {
    let forms = match read_all(src) {
        Ok(f) => f,
        Err(d) => {
            diags.push(d);
            return None;
        }
    };
    let root = match forms.as_slice() {
        [one] => one,
        [] => {
            diags.push(Diagnostic::error(
                Span::new(0, src.len()),
                "expected an (objective ...) form",
            ));
            return None;
        }
        [_, second, ..] => {
            diags.push(Diagnostic::error(
                second.span,
                "only one (objective ...) form is allowed",
            ));
            return None;
        }
    };
    let items = match root.as_list() {
        Some(items) if items.first().and_then(Sexp::as_sym) == Some("objective") => items,
        _ => {
            diags.push(Diagnostic::error(
                root.span,
                "expected an (objective ...) form",
            ));
            return None;
        }
    };

    let mut meta_items = Vec::new();
    let mut term_sexps = Vec::new();
    let mut i = 1;
    while i < items.len() {
        let it = &items[i];
        match &it.kind {
            SexpKind::Kw(_) => {
                meta_items.push(it.clone());
                if let Some(v) = items.get(i + 1) {
                    meta_items.push(v.clone());
                }
                i += 2;
            }
            SexpKind::List(inner) if inner.first().and_then(Sexp::as_sym) == Some("term") => {
                term_sexps.push(it);
                i += 1;
            }
            _ => {
                diags.push(Diagnostic::error(
                    it.span,
                    format!("expected :keyword or (term ...), found {}", it.describe()),
                ));
                i += 1;
            }
        }
    }

    let meta = parse_meta(&meta_items, root.span, diags);
    let n_expected = meta.get("n").and_then(Value::as_f64).map(|v| v as usize);

    if term_sexps.is_empty() {
        diags.push(Diagnostic::error(root.span, "at least one term required"));
    }
    let mut terms = Vec::new();
    let mut claimed: BTreeMap<usize, usize> = BTreeMap::new();
    for (ti, t) in term_sexps.iter().enumerate() {
        if let Some(node) = parse_term(t, n_expected, diags) {
            check_subsets(&node, ti, t.span, &mut claimed, diags);
            terms.push(node);
        }
    }

    Some(ObjectiveSpec {
        name: meta
            .get("name")
            .and_then(Value::as_str)
            .unwrap_or("untitled")
            .to_string(),
        terms,
        n_expected,
        norm_length: meta
            .get("norm-length")
            .and_then(Value::as_f64)
            .unwrap_or(DEFAULT_NORM_LENGTH),
        tolerance: meta
            .get("tolerance")
            .and_then(Value::as_f64)
            .unwrap_or(DEFAULT_TOLERANCE),
    })
}

fn parse_meta(items: &[Sexp], owner: Span, diags: &mut Vec<Diagnostic>) -> BTreeMap<String, Value> {
    let mut rest = Vec::new();
    let mut name = None;
    let mut i = 0;
    while i < items.len() {
        if items[i].kind == SexpKind::Kw("name".into()) {
            match items.get(i + 1).map(|s| &s.kind) {
                Some(SexpKind::Str(s)) if name.is_none() => name = Some(s.clone()),
                Some(SexpKind::Str(_)) => diags.push(Diagnostic::error(
                    items[i].span,
                    "duplicate parameter :name",
                )),
                Some(_) => diags.push(Diagnostic::error(
                    items[i + 1].span,
                    ":name expects a string",
                )),
                None => diags.push(Diagnostic::error(items[i].span, ":name is missing a value")),
            }
            i += 2;
        } else {
            rest.extend(items[i..(i + 2).min(items.len())].iter().cloned());
            i += 2;
        }
    }
    let mut out = convert_kwargs(&rest, META, owner, "(objective ...)", diags);
    if let Some(n) = name {
        out.insert("name".into(), Value::Str(n));
    }
    out
}

fn parse_term(
    t: &Sexp,
    n_expected: Option<usize>,
    diags: &mut Vec<Diagnostic>,
) -> Option<TermNode> {
    let items = t.as_list().expect("caller checked");
    let Some(kind_sexp) = items.get(1) else {
        diags.push(Diagnostic::error(t.span, "(term ...) needs a kind"));
        return None;
    };
    let Some(kind_name) = kind_sexp.as_sym() else {
        diags.push(Diagnostic::error(
            kind_sexp.span,
            format!("term kind must be a symbol, found {}", kind_sexp.describe()),
        ));
        return None;
    };
    let Some(kind) = TermKind::from_name(kind_name) else {
        let known: Vec<_> = TermKind::ALL.iter().map(|k| k.name()).collect();
        diags.push(Diagnostic::error(
            kind_sexp.span,
            format!(
                "unknown term kind '{kind_name}' (expected one of {})",
                known.join(", ")
            ),
        ));
        return None;
    };

    // Pull :weight out before schema conversion.
    let rest = &items[2..];
    let mut kw = Vec::new();
    let mut weight = None;
    let mut i = 0;
    while i < rest.len() {
        if rest[i].kind == SexpKind::Kw("weight".into()) {
            match rest.get(i + 1) {
                Some(v) => {
                    let wty = ParamType::Number {
                        min: f64::NEG_INFINITY,
                        exclusive: false,
                    };
                    if let Some(Value::Num(w)) = convert_value(v, wty, "weight", diags) {
                        if weight.is_some() {
                            diags.push(Diagnostic::error(
                                rest[i].span,
                                "duplicate parameter :weight",
                            ));
                        } else if w < 0.0 {
                            diags.push(Diagnostic::error(v.span, "weight must be ≥ 0"));
                        } else {
                            weight = Some(w);
                        }
                    }
                }
                None => diags.push(Diagnostic::error(
                    rest[i].span,
                    ":weight is missing a value",
                )),
            }
            i += 2;
        } else {
            kw.push(rest[i].clone());
            i += 1;
        }
    }

    let before = diags.iter().filter(|d| d.is_error()).count();
    let params = convert_kwargs(
        &kw,
        term_params(kind),
        t.span,
        &format!("term {kind}"),
        diags,
    );
    check_semantics(kind, &params, n_expected, t.span, diags);
    if weight == Some(0.0) {
        diags.push(Diagnostic::warning(
            t.span,
            format!("term {kind} has zero weight"),
        ));
    }
    let weight = weight.unwrap_or_else(|| default_weight(kind));
    (diags.iter().filter(|d| d.is_error()).count() == before).then_some(TermNode {
        kind,
        params,
        weight,
    })
}

/// Anchors are soft pulls that stay off unless a weight is given.
pub fn default_weight(kind: TermKind) -> f64 {
    match kind {
        TermKind::AnchorCenter | TermKind::AnchorScale => 0.0,
        _ => 1.0,
    }
}

fn check_text(v: &Value, span: Span, diags: &mut Vec<Diagnostic>) {
    let Some(form) = v.as_form() else {
        return;
    };
    if form.head == "text" {
        if let Some(text) = form.args.first().and_then(Value::as_str) {
            if let Some(bad) = text.chars().find(|c| !font::supports(*c)) {
                diags.push(Diagnostic::error(
                    span,
                    format!("glyph '{bad}' is not in the stroke font (A-Z, 0-9, space)"),
                ));
            } else if text.chars().all(|c| c == ' ') {
                diags.push(Diagnostic::error(
                    span,
                    "text must contain at least one glyph",
                ));
            }
        }
    }
    for a in &form.args {
        check_text(a, span, diags);
    }
}

fn check_semantics(
    kind: TermKind,
    params: &BTreeMap<String, Value>,
    n_expected: Option<usize>,
    span: Span,
    diags: &mut Vec<Diagnostic>,
) {
    for key in ["subset", "interior"] {
        if let (Some(idx), Some(n)) = (params.get(key).and_then(Value::as_indices), n_expected) {
            if let Some(bad) = idx.iter().find(|&&i| i >= n) {
                diags.push(Diagnostic::error(
                    span,
                    format!(":{key} index {bad} is out of range for :n {n}"),
                ));
            }
        }
    }
    if kind == TermKind::ShapeSquare {
        let scope = params
            .get("subset")
            .and_then(Value::as_indices)
            .map(|s| s.len())
            .or(n_expected);
        if let Some(m) = scope {
            if m == 0 || m % 4 != 0 {
                diags.push(Diagnostic::error(
                    span,
                    format!("shape.square needs a positive multiple of 4 particles, got {m}"),
                ));
            }
        }
    }
    for v in params.values() {
        check_text(v, span, diags);
    }
}

fn check_subsets(
    node: &TermNode,
    term_index: usize,
    span: Span,
    claimed: &mut BTreeMap<usize, usize>,
    diags: &mut Vec<Diagnostic>,
) {
    let Some(subset) = node.subset() else {
        return;
    };
    let shared = node
        .param("shared")
        .and_then(Value::as_bool)
        .unwrap_or(false);
    for i in subset {
        if let Some(&other) = claimed.get(&i) {
            if !shared {
                diags.push(Diagnostic::error(
                    span,
                    format!(
                        "particle {i} is already claimed by term {} (mark :shared true to share)",
                        other + 1
                    ),
                ));
                return;
            }
        } else {
            claimed.insert(i, term_index);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_curve_term() {
        let spec =
            parse(r#"(objective :name "c" (term shape.curve :curve (circle :r 20) :weight 1))"#)
                .unwrap();
        assert_eq!(spec.name, "c");
        assert_eq!(spec.terms.len(), 1);
        assert_eq!(spec.terms[0].kind, TermKind::ShapeCurve);
        assert_eq!(spec.terms[0].weight, 1.0);
        let curve = spec.terms[0].param("curve").unwrap().as_form().unwrap();
        assert_eq!(curve.head, "circle");
        assert_eq!(curve.num("r"), Some(20.0));
        assert_eq!(spec.norm_length, DEFAULT_NORM_LENGTH);
    }

    #[test]
    fn empty_objective_is_an_error() {
        let err = parse("(objective)").unwrap_err();
        assert!(err
            .iter()
            .any(|d| d.message == "at least one term required"));
    }

    #[test]
    fn negative_weight_is_an_error() {
        let err =
            parse("(objective (term shape.curve :weight -1 :curve (circle :r 3)))").unwrap_err();
        assert!(err.iter().any(|d| d.message == "weight must be ≥ 0"));
    }

    #[test]
    fn unknown_kind_and_bad_params() {
        let src = "(objective (term shape.blob :r 1))";
        let err = parse(src).unwrap_err();
        assert!(err[0].message.contains("unknown term kind"));
        assert_eq!(&src[err[0].span.start..err[0].span.end], "shape.blob");

        let err = parse("(objective (term spacing.repel :d0 (1 2)))").unwrap_err();
        assert!(err[0].message.contains("expects a number"));

        let err = parse("(objective (term spacing.repel))").unwrap_err();
        assert!(err[0].message.contains("requires :d0"));

        let err = parse("(objective (term spacing.repel :d0 1 :d0 2))").unwrap_err();
        assert!(err[0].message.contains("duplicate"));
    }

    #[test]
    fn subset_rules() {
        let err =
            parse("(objective :n 4 (term anchor.center :center (0 0) :subset (1 7)))").unwrap_err();
        assert!(err[0].message.contains("out of range"));

        let overlapping = "(objective :n 4 (term anchor.center :center (0 0) :subset (0 1)) \
                           (term anchor.scale :radius 3 :subset (1 2)))";
        assert!(parse(overlapping).is_err());
        let shared = "(objective :n 4 (term anchor.center :center (0 0) :subset (0 1)) \
                      (term anchor.scale :radius 3 :subset (1 2) :shared true))";
        assert!(parse(shared).is_ok());
    }

    #[test]
    fn square_needs_four() {
        assert!(parse("(objective :n 5 (term shape.square))").is_err());
        assert!(parse("(objective :n 4 (term shape.square))").is_ok());
        assert!(parse("(objective :n 12 (term shape.square))").is_ok());
        assert!(parse("(objective :n 9 (term shape.square :subset (0 1 2 3)))").is_ok());
    }

    #[test]
    fn unsupported_glyph() {
        let err = parse(r#"(objective (term shape.points :targets (text "K#T")))"#).unwrap_err();
        assert!(err[0].message.contains("glyph"));
    }

    #[test]
    fn anchors_default_off() {
        let spec =
            parse("(objective (term anchor.center :center (0 0)) (term spacing.repel :d0 2))")
                .unwrap();
        assert_eq!(spec.terms[0].weight, 0.0);
        assert_eq!(spec.terms[1].weight, 1.0);
    }

    #[test]
    fn zero_weight_warns() {
        let (spec, diags) = parse_with_warnings("(objective (term spacing.repel :d0 2 :weight 0))");
        assert!(spec.is_some());
        assert_eq!(diags.len(), 1);
        assert!(!diags[0].is_error());
    }
}
