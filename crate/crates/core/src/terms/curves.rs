//! Curve definitions and arc-length sampling.

use super::font;
use crate::dsl::{Form, Value};
use crate::geom::Vec2;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapeError {
    #[error("curve has zero length")]
    Degenerate,
    #[error("need at least {0} samples")]
    TooFewSamples(usize),
    #[error("unknown shape '{0}'")]
    Unknown(String),
    #[error("glyph '{0}' is not in the stroke font")]
    UnsupportedGlyph(char),
    #[error("missing or invalid parameter :{0}")]
    BadParam(&'static str),
}

/// Points per smooth curve before reparameterisation. Divisible by 2..=8.
pub const DENSE: usize = 16_800;

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<Vec2>,
    pub closed: bool,
}

impl Polyline {
    fn segments(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.points.len();
        let m = if self.closed { n } else { n.saturating_sub(1) };
        (0..m).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| a.dist(b)).sum()
    }

    /// `m` points equally spaced in arc length. Closed chains skip the
    /// duplicate endpoint; open chains include both ends.
    pub fn sample(&self, m: usize) -> Result<Vec<Vec2>, ShapeError> {
        let total = self.length();
        if !(total > 0.0) {
            return Err(ShapeError::Degenerate);
        }
        if m == 0 {
            return Ok(Vec::new());
        }
        if m == 1 {
            return Ok(vec![self.at_lengths(&[total / 2.0])[0]]);
        }
        let step = if self.closed {
            total / m as f64
        } else {
            total / (m - 1) as f64
        };
        let targets: Vec<f64> = (0..m).map(|k| k as f64 * step).collect();
        Ok(self.at_lengths(&targets))
    }

    /// Points at the given (sorted) arc lengths.
    fn at_lengths(&self, lengths: &[f64]) -> Vec<Vec2> {
        let mut out = Vec::with_capacity(lengths.len());
        let mut segs = self.segments().peekable();
        let mut start = 0.0;
        let last = *self.points.last().unwrap();
        let end_point = if self.closed { self.points[0] } else { last };
        for &s in lengths {
            loop {
                let Some(&(a, b)) = segs.peek() else {
                    out.push(end_point);
                    break;
                };
                let len = a.dist(b);
                if s <= start + len || len == 0.0 && s <= start {
                    let t = if len > 0.0 {
                        ((s - start) / len).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    out.push(a + (b - a) * t);
                    break;
                }
                start += len;
                segs.next();
            }
        }
        out
    }
}

/// A curve is one or more polylines already placed in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveDef {
    pub chains: Vec<Polyline>,
}

fn param(form: &Form, key: &'static str) -> Result<f64, ShapeError> {
    form.num(key).ok_or(ShapeError::BadParam(key))
}

fn point(form: &Form, key: &'static str) -> Result<Vec2, ShapeError> {
    form.get(key)
        .and_then(Value::as_point)
        .map(|[x, y]| Vec2::new(x, y))
        .ok_or(ShapeError::BadParam(key))
}

/// Rotation (degrees) about the origin then translation by `:center`.
pub fn placement(form: &Form) -> impl Fn(Vec2) -> Vec2 {
    let rot = form.num("rotation").unwrap_or(0.0).to_radians();
    let center = point(form, "center").unwrap_or(Vec2::ZERO);
    move |p: Vec2| p.rotate(rot) + center
}

fn dense(f: impl Fn(f64) -> Vec2, closed: bool) -> Polyline {
    let n = if closed { DENSE } else { DENSE + 1 };
    Polyline {
        points: (0..n).map(|i| f(i as f64 / DENSE as f64)).collect(),
        closed,
    }
}

/// Regular polygon vertices, first vertex on +y, counter-clockwise.
pub fn polygon_vertices(sides: usize, r: f64) -> Vec<Vec2> {
    (0..sides)
        .map(|k| Vec2::from_angle(PI / 2.0 + TAU * k as f64 / sides as f64) * r)
        .collect()
}

/// Star vertices alternating tip and notch, first tip on +y.
pub fn star_vertices(points: usize, outer: f64, inner: f64) -> Vec<Vec2> {
    (0..2 * points)
        .map(|k| {
            let r = if k % 2 == 0 { outer } else { inner };
            Vec2::from_angle(PI / 2.0 + PI * k as f64 / points as f64) * r
        })
        .collect()
}

pub fn text_chains(text: &str, height: f64) -> Result<Vec<Polyline>, ShapeError> {
    let layout = font::layout(text, height).map_err(ShapeError::UnsupportedGlyph)?;
    Ok(layout
        .glyphs
        .into_iter()
        .flat_map(|g| g.strokes)
        .map(|points| Polyline {
            points,
            closed: false,
        })
        .collect())
}

impl CurveDef {
    pub fn from_form(form: &Form) -> Result<CurveDef, ShapeError> {
        let chains = match form.head.as_str() {
            "circle" => {
                let r = param(form, "r")?;
                vec![dense(|t| Vec2::from_angle(TAU * t) * r, true)]
            }
            "ellipse" => {
                let (rx, ry) = (param(form, "rx")?, param(form, "ry")?);
                vec![dense(
                    |t| Vec2::new(rx * (TAU * t).cos(), ry * (TAU * t).sin()),
                    true,
                )]
            }
            "sinusoid" => {
                let (a, period, len) = (
                    param(form, "amplitude")?,
                    param(form, "period")?,
                    param(form, "length")?,
                );
                vec![dense(
                    |t| {
                        let x = (t - 0.5) * len;
                        Vec2::new(x, a * (TAU * x / period).sin())
                    },
                    false,
                )]
            }
            "spiral" => {
                let (a, b, turns) = (param(form, "a")?, param(form, "b")?, param(form, "turns")?);
                vec![dense(
                    |t| {
                        let phi = TAU * turns * t;
                        Vec2::from_angle(phi) * (a + b * phi)
                    },
                    false,
                )]
            }
            "heart" => {
                let s = param(form, "size")? / 32.0;
                vec![dense(
                    |t| {
                        let p = TAU * t;
                        Vec2::new(
                            16.0 * p.sin().powi(3),
                            13.0 * p.cos()
                                - 5.0 * (2.0 * p).cos()
                                - 2.0 * (3.0 * p).cos()
                                - (4.0 * p).cos(),
                        ) * s
                    },
                    true,
                )]
            }
            "polygon" => vec![Polyline {
                points: polygon_vertices(param(form, "sides")? as usize, param(form, "r")?),
                closed: true,
            }],
            "star" => vec![Polyline {
                points: star_vertices(
                    param(form, "points")? as usize,
                    param(form, "outer")?,
                    param(form, "inner")?,
                ),
                closed: true,
            }],
            "segment" => vec![Polyline {
                points: vec![point(form, "from")?, point(form, "to")?],
                closed: false,
            }],
            "segment-chain" => vec![Polyline {
                points: form
                    .get("points")
                    .and_then(Value::as_points)
                    .ok_or(ShapeError::BadParam("points"))?
                    .into_iter()
                    .map(|[x, y]| Vec2::new(x, y))
                    .collect(),
                closed: form.get("closed").and_then(Value::as_bool).unwrap_or(false),
            }],
            "text" => {
                let text = form
                    .args
                    .first()
                    .and_then(Value::as_str)
                    .ok_or(ShapeError::BadParam("text"))?;
                text_chains(text, form.num("height").unwrap_or(20.0))?
            }
            other => return Err(ShapeError::Unknown(other.to_string())),
        };
        let place = placement(form);
        Ok(CurveDef {
            chains: chains
                .into_iter()
                .map(|c| Polyline {
                    points: c.points.into_iter().map(&place).collect(),
                    closed: c.closed,
                })
                .collect(),
        })
    }

    pub fn length(&self) -> f64 {
        self.chains.iter().map(Polyline::length).sum()
    }

    /// `m` points equally spaced in arc length. With several chains the
    /// count is split in proportion to chain length (largest remainder).
    pub fn sample(&self, m: usize) -> Result<Vec<Vec2>, ShapeError> {
        if m < 2 {
            return Err(ShapeError::TooFewSamples(2));
        }
        let lens: Vec<f64> = self.chains.iter().map(Polyline::length).collect();
        let total: f64 = lens.iter().sum();
        if !(total > 0.0) {
            return Err(ShapeError::Degenerate);
        }
        if self.chains.len() == 1 {
            return self.chains[0].sample(m);
        }
        let counts = split_counts(&lens, m);
        let mut out = Vec::with_capacity(m);
        for (chain, c) in self.chains.iter().zip(counts) {
            if c > 0 {
                out.extend(chain.sample(c)?);
            }
        }
        Ok(out)
    }
}

/// Split `m` items across weights by largest remainder; ties go to the
/// earlier index.
pub fn split_counts(weights: &[f64], m: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * m as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(m.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}
