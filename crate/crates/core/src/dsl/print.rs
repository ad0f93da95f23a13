use super::{Form, ObjectiveSpec, Value};
use std::fmt::Write;

/// Deterministic text for a spec: keys sorted, shortest round-trip floats,
/// one term per line.
pub fn print_canonical(spec: &ObjectiveSpec) -> String {
    let mut out = String::from("(objective");
    if let Some(n) = spec.n_expected {
        write!(out, " :n {n}").unwrap();
    }
    out.push_str(" :name ");
    write_str(&mut out, &spec.name);
    out.push_str(" :norm-length ");
    write_num(&mut out, spec.norm_length);
    out.push_str(" :tolerance ");
    write_num(&mut out, spec.tolerance);
    for t in &spec.terms {
        write!(out, "\n  (term {}", t.kind).unwrap();
        let mut keys: Vec<(&str, Option<&Value>)> = t
            .params
            .iter()
            .map(|(k, v)| (k.as_str(), Some(v)))
            .collect();
        keys.push(("weight", None));
        keys.sort_by(|a, b| a.0.cmp(b.0));
        for (k, v) in keys {
            write!(out, " :{k} ").unwrap();
            match v {
                Some(v) => write_value(&mut out, v),
                None => write_num(&mut out, t.weight),
            }
        }
        out.push(')');
    }
    out.push_str(")\n");
    out
}

fn write_num(out: &mut String, v: f64) {
    // `Display` for f64 prints the shortest representation that parses back
    // to the same value.
    write!(out, "{v}").unwrap();
}

fn write_str(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Num(x) => write_num(out, *x),
        Value::Str(s) => write_str(out, s),
        Value::Sym(s) => out.push_str(s),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::List(items) => {
            out.push('(');
            for (i, it) in items.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write_value(out, it);
            }
            out.push(')');
        }
        Value::Form(f) => write_form(out, f),
    }
}

fn write_form(out: &mut String, f: &Form) {
    out.push('(');
    out.push_str(&f.head);
    for a in &f.args {
        out.push(' ');
        write_value(out, a);
    }
    for (k, v) in &f.kwargs {
        write!(out, " :{k} ").unwrap();
        write_value(out, v);
    }
    out.push(')');
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn canonical_is_stable_and_sorted() {
        let a = parse("(objective :name \"c\" (term shape.curve :weight 2 :samples 64 :curve (circle :center (1 2) :r 20)))").unwrap();
        let b = parse("(objective (term shape.curve :curve (circle :r 20 :center (1 2)) :samples 64 :weight 2) :name \"c\")").unwrap();
        let ta = print_canonical(&a);
        assert_eq!(ta, print_canonical(&a));
        assert_eq!(ta, print_canonical(&b));
        assert_eq!(
            ta,
            "(objective :name \"c\" :norm-length 10 :tolerance 0.05\n  (term shape.curve :curve (circle :center (1 2) :r 20) :samples 64 :weight 2))\n"
        );
        assert_eq!(parse(&ta).unwrap(), a);
    }

    #[test]
    fn floats_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456789.125, 2.5e17] {
            let mut s = String::new();
            write_num(&mut s, v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn strings_are_escaped() {
        let spec =
            parse("(objective :name \"a \\\"q\\\" \\\\ b\" (term spacing.repel :d0 1))").unwrap();
        let text = print_canonical(&spec);
        assert_eq!(parse(&text).unwrap(), spec);
    }
}
