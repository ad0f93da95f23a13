//! Target point sets: explicit points, curve samples and the built-in
//! shapes (polygon, star, hexagon trio, text).

use super::curves::{
    placement, polygon_vertices, star_vertices, text_chains, CurveDef, ShapeError,
};
use crate::dsl::{Form, Value};
use crate::geom::Vec2;

/// Points along a closed polygon, `count / edges` per edge with the
/// remainder handed out one per edge in order. Each edge contributes its
/// start vertex and interior points, never its end vertex.
pub fn polygon_perimeter(vertices: &[Vec2], count: usize) -> Vec<Vec2> {
    edges_perimeter(
        &(0..vertices.len())
            .map(|i| (vertices[i], vertices[(i + 1) % vertices.len()]))
            .collect::<Vec<_>>(),
        count,
    )
}

fn edges_perimeter(edges: &[(Vec2, Vec2)], count: usize) -> Vec<Vec2> {
    let base = count / edges.len();
    let extra = count % edges.len();
    let mut out = Vec::with_capacity(count);
    for (k, &(a, b)) in edges.iter().enumerate() {
        let c = base + usize::from(k < extra);
        for j in 0..c {
            out.push(a + (b - a) * (j as f64 / c as f64));
        }
    }
    out
}

pub const HEX_TRIO_EDGES: usize = 18;

/// Hexagon centers of the trio for side `s`.
pub fn hexagon_trio_centers(s: f64) -> [Vec2; 3] {
    [
        Vec2::new(0.0, 0.0),
        Vec2::new(1.5 * s, 3f64.sqrt() / 2.0 * s),
        Vec2::new(3.0 * s, 0.0),
    ]
}

/// Three flat-topped hexagons of side `s`, perimeters sampled with
/// balanced per-edge counts, union recentered on the origin.
pub fn hexagon_trio(s: f64, count: usize) -> Vec<Vec2> {
    let mut edges = Vec::with_capacity(HEX_TRIO_EDGES);
    for c in hexagon_trio_centers(s) {
        let v: Vec<Vec2> = (0..6)
            .map(|k| c + Vec2::from_angle(std::f64::consts::PI / 3.0 * k as f64) * s)
            .collect();
        for k in 0..6 {
            edges.push((v[k], v[(k + 1) % 6]));
        }
    }
    let mut pts = edges_perimeter(&edges, count);
    let mean = pts.iter().fold(Vec2::ZERO, |a, &p| a + p) / pts.len().max(1) as f64;
    for p in &mut pts {
        *p -= mean;
    }
    pts
}

fn count(form: &Form, default: usize) -> usize {
    form.num("count").map(|c| c as usize).unwrap_or(default)
}

fn need(form: &Form, key: &'static str) -> Result<f64, ShapeError> {
    form.num(key).ok_or(ShapeError::BadParam(key))
}

/// Build the target set described by a target form. `default_count` is
/// used when the form has no `:count`.
pub fn targets_from_form(form: &Form, default_count: usize) -> Result<Vec<Vec2>, ShapeError> {
    let place = placement(form);
    let pts = match form.head.as_str() {
        "points" => {
            return form
                .args
                .iter()
                .map(|v| v.as_point().map(|[x, y]| Vec2::new(x, y)))
                .collect::<Option<Vec<_>>>()
                .ok_or(ShapeError::BadParam("points"))
        }
        "sample" => {
            let curve = form
                .args
                .first()
                .and_then(Value::as_form)
                .ok_or(ShapeError::BadParam("curve"))?;
            return CurveDef::from_form(curve)?.sample(count(form, default_count));
        }
        "polygon" => polygon_perimeter(
            &polygon_vertices(need(form, "sides")? as usize, need(form, "r")?),
            count(form, default_count),
        ),
        "star" => polygon_perimeter(
            &star_vertices(
                need(form, "points")? as usize,
                need(form, "outer")?,
                need(form, "inner")?,
            ),
            count(form, default_count),
        ),
        "hexagon-trio" => hexagon_trio(need(form, "side")?, count(form, default_count)),
        "text" => {
            let text = form
                .args
                .first()
                .and_then(Value::as_str)
                .ok_or(ShapeError::BadParam("text"))?;
            let chains = text_chains(text, form.num("height").unwrap_or(20.0))?;
            CurveDef { chains }.sample(count(form, default_count))?
        }
        other => return Err(ShapeError::Unknown(other.to_string())),
    };
    Ok(pts.into_iter().map(place).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hexagon_trio_ninety() {
        let s = 10.0;
        let c = hexagon_trio_centers(s);
        assert!((c[0].dist(c[1]) - 10.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!((c[1].dist(c[2]) - 10.0 * 3f64.sqrt()).abs() < 1e-12);
        let pts = hexagon_trio(s, 90);
        assert_eq!(pts.len(), 90);
        let mean = pts.iter().fold(Vec2::ZERO, |a, &p| a + p) / 90.0;
        assert!(mean.norm() < 1e-12);
    }

    #[test]
    fn balanced_edges_with_remainder() {
        let sq = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        let pts = polygon_perimeter(&sq, 6);
        // Edges 0 and 1 get two points, edges 2 and 3 one.
        assert_eq!(
            pts,
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(0.5, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 0.5),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.0, 1.0),
            ]
        );
    }

    #[test]
    fn star_five_fold() {
        let v = star_vertices(5, 20.0, 8.0);
        assert_eq!(v.len(), 10);
        let rot: Vec<Vec2> = v
            .iter()
            .map(|p| p.rotate(std::f64::consts::TAU / 5.0))
            .collect();
        for p in &rot {
            assert!(v.iter().any(|q| q.dist(*p) < 1e-9));
        }
        for (k, p) in v.iter().enumerate() {
            let r = if k % 2 == 0 { 20.0 } else { 8.0 };
            assert!((p.norm() - r).abs() < 1e-12);
        }
    }
}
