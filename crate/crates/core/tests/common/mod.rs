#![allow(dead_code)]

use flowscribe_core::dsl::TermKind;
use flowscribe_core::terms::CompiledObjective;
use flowscribe_core::Vec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// (file stem, text) for every golden spec, sorted by name.
pub fn golden() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(golden_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().map_or(false, |x| x == "dsl"))
        .map(|p| {
            (
                p.file_stem().unwrap().to_string_lossy().into_owned(),
                std::fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

const TOKENS: &[&str] = &[
    "(", ")", "(", ")", "objective", "term", ":name", ":n", ":weight", ":curve", ":r", ":d0",
    ":region", ":targets", ":subset", ":shared", "circle", "disk", "star", "text", "points",
    "shape.curve", "spacing.repel", "shape.square", "region.density", "\"", "\"KIT\"", "\\",
    ";", "\n", " ", " ", "1", "-1", "1e308", "1e999", "NaN", "inf", "0.5", "-0", "#t",
    "true", "((", "))", ":", "é", "\u{1F980}", "\0", "\t",
];

/// Deterministic hostile inputs: raw bytes, token soup, and mutated
/// golden specs, in rotation.
pub struct Fuzzer {
    rng: ChaCha8Rng,
    corpus: Vec<String>,
    i: usize,
}

impl Fuzzer {
    pub fn new(seed: u64) -> Fuzzer {
        Fuzzer {
            rng: ChaCha8Rng::seed_from_u64(seed),
            corpus: golden().into_iter().map(|(_, t)| t).collect(),
            i: 0,
        }
    }

    pub fn next_input(&mut self) -> String {
        self.i += 1;
        match self.i % 3 {
            0 => {
                let len = self.rng.gen_range(0..64);
                let bytes: Vec<u8> = (0..len).map(|_| self.rng.gen()).collect();
                String::from_utf8_lossy(&bytes).into_owned()
            }
            1 => {
                let len = self.rng.gen_range(0..40);
                (0..len)
                    .map(|_| TOKENS[self.rng.gen_range(0..TOKENS.len())])
                    .collect::<Vec<_>>()
                    .join(if self.rng.gen_bool(0.5) { " " } else { "" })
            }
            _ => {
                let base = &self.corpus[self.rng.gen_range(0..self.corpus.len())];
                let mut chars: Vec<char> = base.chars().collect();
                for _ in 0..self.rng.gen_range(1..5) {
                    let at = self.rng.gen_range(0..=chars.len());
                    match self.rng.gen_range(0..3) {
                        0 if at < chars.len() => {
                            chars.remove(at);
                        }
                        1 => {
                            let t = TOKENS[self.rng.gen_range(0..TOKENS.len())];
                            for (k, c) in t.chars().enumerate() {
                                chars.insert(at + k, c);
                            }
                        }
                        _ if chars.len() > 1 => {
                            let b = self.rng.gen_range(0..chars.len());
                            let a = at.min(chars.len() - 1);
                            chars.swap(a, b);
                        }
                        _ => {}
                    }
                }
                chars.into_iter().collect()
            }
        }
    }
}

/// Parse one input; Err describes a contract violation. Panics propagate.
pub fn check_parse(src: &str) -> Result<bool, String> {
    let (spec, diags) = flowscribe_core::dsl::parse_with_warnings(src);
    for d in &diags {
        if d.span.start > d.span.end || d.span.end > src.len() {
            return Err(format!("span {:?} out of bounds for {src:?}", d.span));
        }
        if !src.is_char_boundary(d.span.start) || !src.is_char_boundary(d.span.end) {
            return Err(format!("span {:?} splits a character in {src:?}", d.span));
        }
    }
    match spec {
        Some(_) => Ok(true),
        None if diags.iter().any(|d| d.is_error()) => Ok(false),
        None => Err(format!("failure without an error diagnostic: {src:?}")),
    }
}

/// One fixture per term kind: (kind, spec text, particle count, box half-width).
pub fn fixtures() -> Vec<(TermKind, &'static str, usize, f64)> {
    vec![
        (
            TermKind::ShapeCurve,
            "(objective (term shape.curve :curve (circle :r 10)))",
            8,
            15.0,
        ),
        (
            TermKind::ShapePoints,
            "(objective (term shape.points :targets (polygon :sides 5 :r 10)))",
            5,
            15.0,
        ),
        (TermKind::ShapeSquare, "(objective (term shape.square))", 4, 10.0),
        (
            TermKind::SpacingRepel,
            "(objective (term spacing.repel :d0 6))",
            10,
            8.0,
        ),
        (
            TermKind::SpacingSites,
            "(objective (term spacing.sites :curve (circle :r 10)))",
            6,
            15.0,
        ),
        (
            TermKind::RegionDensity,
            "(objective (term region.density :region (disk :r 5 :w 2)))",
            10,
            10.0,
        ),
        (
            TermKind::RegionPeriphery,
            "(objective (term region.periphery :region (rect :size (8 8) :w 1) :interior (0 1 2) :ring-radius 12))",
            8,
            15.0,
        ),
        (
            TermKind::AnchorCenter,
            "(objective (term anchor.center :center (1 2) :weight 1))",
            6,
            10.0,
        ),
        (
            TermKind::AnchorScale,
            "(objective (term anchor.scale :radius 5 :weight 1))",
            6,
            10.0,
        ),
    ]
}

pub fn config(unit: &[(f64, f64)], n: usize, half: f64) -> Vec<Vec2> {
    unit[..n]
        .iter()
        .map(|&(x, y)| Vec2::new(x * half, y * half))
        .collect()
}

/// Central differences, or None when a ±h probe changes the term's
/// combinatorial structure (the function is only piecewise smooth).
pub fn central_differences(obj: &CompiledObjective, x: &[Vec2], h: f64) -> Option<Vec<f64>> {
    let s0 = obj.structure(x);
    let mut g = Vec::with_capacity(2 * x.len());
    let mut y = x.to_vec();
    for i in 0..x.len() {
        for axis in 0..2 {
            let mut probe = |d: f64| {
                y[i] = x[i];
                if axis == 0 {
                    y[i].x += d;
                } else {
                    y[i].y += d;
                }
                let same = obj.structure(&y) == s0;
                let f = obj.evaluate(&y).unwrap();
                y[i] = x[i];
                same.then_some(f)
            };
            let fp = probe(h)?;
            let fm = probe(-h)?;
            g.push((fp - fm) / (2.0 * h));
        }
    }
    Some(g)
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|p| p * p).sum::<f64>().sqrt().max(1e-6);
    diff / scale
}

