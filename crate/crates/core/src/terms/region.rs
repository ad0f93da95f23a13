//! Regions with a soft edge, described by a signed distance (negative inside).

use super::curves::ShapeError;
use crate::dsl::{Form, Value};
use crate::geom::Vec2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    Disk { center: Vec2, r: f64 },
    Rect { center: Vec2, half: Vec2 },
    PolygonMask { points: Vec<Vec2> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub shape: Shape,
    /// Soft edge width (µm).
    pub w: f64,
}

/// Signed distance, its gradient, and which piece of the boundary is
/// closest (the distance is smooth while the piece stays the same).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedDistance {
    pub d: f64,
    pub grad: Vec2,
    pub piece: usize,
}

impl Region {
    pub fn from_form(form: &Form) -> Result<Region, ShapeError> {
        let w = form.num("w").ok_or(ShapeError::BadParam("w"))?;
        let center = form
            .get("center")
            .and_then(Value::as_point)
            .map(|[x, y]| Vec2::new(x, y))
            .unwrap_or(Vec2::ZERO);
        let shape = match form.head.as_str() {
            "disk" => Shape::Disk {
                center,
                r: form.num("r").ok_or(ShapeError::BadParam("r"))?,
            },
            "rect" => {
                let [sx, sy] = form
                    .get("size")
                    .and_then(Value::as_point)
                    .ok_or(ShapeError::BadParam("size"))?;
                Shape::Rect {
                    center,
                    half: Vec2::new(sx / 2.0, sy / 2.0),
                }
            }
            "polygon-mask" => Shape::PolygonMask {
                points: form
                    .get("points")
                    .and_then(Value::as_points)
                    .ok_or(ShapeError::BadParam("points"))?
                    .into_iter()
                    .map(|[x, y]| Vec2::new(x, y))
                    .collect(),
            },
            other => return Err(ShapeError::Unknown(other.to_string())),
        };
        let region = Region { shape, w };
        if !(region.area() > 0.0) {
            return Err(ShapeError::Degenerate);
        }
        Ok(region)
    }

    pub fn disk(center: Vec2, r: f64, w: f64) -> Region {
        Region {
            shape: Shape::Disk { center, r },
            w,
        }
    }

    pub fn area(&self) -> f64 {
        match &self.shape {
            Shape::Disk { r, .. } => std::f64::consts::PI * r * r,
            Shape::Rect { half, .. } => 4.0 * half.x * half.y,
            Shape::PolygonMask { points } => {
                let n = points.len();
                (0..n)
                    .map(|i| points[i].cross(points[(i + 1) % n]))
                    .sum::<f64>()
                    .abs()
                    / 2.0
            }
        }
    }

    /// Reference point: disk and rectangle center, polygon vertex mean.
    pub fn center(&self) -> Vec2 {
        match &self.shape {
            Shape::Disk { center, .. } | Shape::Rect { center, .. } => *center,
            Shape::PolygonMask { points } => {
                points.iter().fold(Vec2::ZERO, |a, &p| a + p) / points.len() as f64
            }
        }
    }

    /// Hard membership (boundary counts as inside).
    pub fn contains(&self, p: Vec2) -> bool {
        self.signed_distance(p).d <= 0.0
    }

    pub fn signed_distance(&self, p: Vec2) -> SignedDistance {
        match &self.shape {
            Shape::Disk { center, r } => {
                let q = p - *center;
                let len = q.norm();
                let grad = if len > 0.0 { q / len } else { Vec2::ZERO };
                SignedDistance {
                    d: len - r,
                    grad,
                    piece: 0,
                }
            }
            Shape::Rect { center, half } => {
                let q = p - *center;
                let (sx, sy) = (sign(q.x), sign(q.y));
                let dx = q.x.abs() - half.x;
                let dy = q.y.abs() - half.y;
                if dx > 0.0 || dy > 0.0 {
                    let o = Vec2::new(dx.max(0.0) * sx, dy.max(0.0) * sy);
                    let d = o.norm();
                    let piece = 1 + usize::from(dx > 0.0) + 2 * usize::from(dy > 0.0);
                    SignedDistance {
                        d,
                        grad: o / d,
                        piece,
                    }
                } else if dx > dy {
                    SignedDistance {
                        d: dx,
                        grad: Vec2::new(sx, 0.0),
                        piece: 5,
                    }
                } else {
                    SignedDistance {
                        d: dy,
                        grad: Vec2::new(0.0, sy),
                        piece: 6,
                    }
                }
            }
            Shape::PolygonMask { points } => polygon_sd(points, p),
        }
    }
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn polygon_sd(points: &[Vec2], p: Vec2) -> SignedDistance {
    let n = points.len();
    let mut best = (f64::INFINITY, Vec2::ZERO, 0usize);
    let mut inside = false;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        let e = b - a;
        let t = ((p - a).dot(e) / e.norm_sq()).clamp(0.0, 1.0);
        let c = a + e * t;
        let d2 = (p - c).norm_sq();
        // Pieces: 2i for the edge interior, 2i+1 for its start vertex.
        let piece = if t <= 0.0 {
            2 * i + 1
        } else if t >= 1.0 {
            2 * ((i + 1) % n) + 1
        } else {
            2 * i
        };
        if d2 < best.0 {
            best = (d2, c, piece);
        }
        if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x) {
            inside = !inside;
        }
    }
    let dist = best.0.sqrt();
    let s = if inside { -1.0 } else { 1.0 };
    let grad = if dist > 0.0 {
        (p - best.1) * (s / dist)
    } else {
        Vec2::ZERO
    };
    SignedDistance {
        d: s * dist,
        grad,
        piece: best.2 * 2 + usize::from(inside),
    }
}

/// Logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Derivative of [`sigmoid`].
pub fn sigmoid_slope(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(r: &Region, p: Vec2) {
        let h = 1e-6;
        let sd = r.signed_distance(p);
        let gx = (r.signed_distance(p + Vec2::new(h, 0.0)).d
            - r.signed_distance(p - Vec2::new(h, 0.0)).d)
            / (2.0 * h);
        let gy = (r.signed_distance(p + Vec2::new(0.0, h)).d
            - r.signed_distance(p - Vec2::new(0.0, h)).d)
            / (2.0 * h);
        assert!(
            (gx - sd.grad.x).abs() < 1e-6 && (gy - sd.grad.y).abs() < 1e-6,
            "{p:?}"
        );
    }

    #[test]
    fn shapes_agree_with_finite_differences() {
        let disk = Region::disk(Vec2::new(1.0, 2.0), 3.0, 1.0);
        let rect = Region {
            shape: Shape::Rect {
                center: Vec2::ZERO,
                half: Vec2::new(2.0, 1.0),
            },
            w: 1.0,
        };
        let tri = Region {
            shape: Shape::PolygonMask {
                points: vec![
                    Vec2::new(0.0, 0.0),
                    Vec2::new(4.0, 0.0),
                    Vec2::new(0.0, 3.0),
                ],
            },
            w: 1.0,
        };
        for p in [
            Vec2::new(0.3, 0.2),
            Vec2::new(5.0, -1.0),
            Vec2::new(-0.7, 4.1),
            Vec2::new(1.9, 0.1),
        ] {
            fd_check(&disk, p);
            fd_check(&rect, p);
            fd_check(&tri, p);
        }
        assert!((tri.area() - 6.0).abs() < 1e-12);
        assert!(tri.contains(Vec2::new(1.0, 1.0)));
        assert!(!tri.contains(Vec2::new(3.0, 3.0)));
        assert!((rect.signed_distance(Vec2::ZERO).d + 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.3) + sigmoid(-0.3) - 1.0).abs() < 1e-15);
        assert!((sigmoid_slope(0.0) - 0.25).abs() < 1e-15);
    }
}
