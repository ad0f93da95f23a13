//! Embedded stroke font. Glyphs live on a 4 × 6 unit cell (y up) and are
//! drawn as one to three open polylines.

use crate::geom::Vec2;

pub const CELL_WIDTH: f64 = 4.0;
pub const CELL_HEIGHT: f64 = 6.0;
/// Horizontal distance between glyph origins.
pub const ADVANCE: f64 = 6.0;

type Stroke = &'static [(i8, i8)];

const O_RING: Stroke = &[
    (1, 0),
    (0, 1),
    (0, 5),
    (1, 6),
    (3, 6),
    (4, 5),
    (4, 1),
    (3, 0),
    (1, 0),
];
const P_BOWL: Stroke = &[(0, 0), (0, 6), (3, 6), (4, 5), (4, 4), (3, 3), (0, 3)];

fn strokes(c: char) -> Option<&'static [Stroke]> {
    let g: &'static [Stroke] = match c {
        'A' => &[&[(0, 0), (0, 4), (2, 6), (4, 4), (4, 0)], &[(0, 3), (4, 3)]],
        'B' => &[
            &[(0, 0), (0, 6), (3, 6), (4, 5), (4, 4), (3, 3), (0, 3)],
            &[(3, 3), (4, 2), (4, 1), (3, 0), (0, 0)],
        ],
        'C' => &[&[
            (4, 5),
            (3, 6),
            (1, 6),
            (0, 5),
            (0, 1),
            (1, 0),
            (3, 0),
            (4, 1),
        ]],
        'D' => &[&[(0, 0), (0, 6), (2, 6), (4, 4), (4, 2), (2, 0), (0, 0)]],
        'E' => &[&[(4, 6), (0, 6), (0, 0), (4, 0)], &[(0, 3), (3, 3)]],
        'F' => &[&[(4, 6), (0, 6), (0, 0)], &[(0, 3), (3, 3)]],
        'G' => &[&[
            (4, 5),
            (3, 6),
            (1, 6),
            (0, 5),
            (0, 1),
            (1, 0),
            (3, 0),
            (4, 1),
            (4, 3),
            (2, 3),
        ]],
        'H' => &[&[(0, 0), (0, 6)], &[(4, 0), (4, 6)], &[(0, 3), (4, 3)]],
        'I' => &[&[(1, 6), (3, 6)], &[(2, 6), (2, 0)], &[(1, 0), (3, 0)]],
        'J' => &[&[(4, 6), (4, 1), (3, 0), (1, 0), (0, 1)]],
        'K' => &[&[(0, 0), (0, 6)], &[(4, 6), (0, 2)], &[(1, 3), (4, 0)]],
        'L' => &[&[(0, 6), (0, 0), (4, 0)]],
        'M' => &[&[(0, 0), (0, 6), (2, 3), (4, 6), (4, 0)]],
        'N' => &[&[(0, 0), (0, 6), (4, 0), (4, 6)]],
        'O' => &[O_RING],
        'P' => &[P_BOWL],
        'Q' => &[O_RING, &[(2, 2), (4, 0)]],
        'R' => &[P_BOWL, &[(2, 3), (4, 0)]],
        'S' => &[&[
            (4, 5),
            (3, 6),
            (1, 6),
            (0, 5),
            (0, 4),
            (1, 3),
            (3, 3),
            (4, 2),
            (4, 1),
            (3, 0),
            (1, 0),
            (0, 1),
        ]],
        'T' => &[&[(0, 6), (4, 6)], &[(2, 6), (2, 0)]],
        'U' => &[&[(0, 6), (0, 1), (1, 0), (3, 0), (4, 1), (4, 6)]],
        'V' => &[&[(0, 6), (2, 0), (4, 6)]],
        'W' => &[&[(0, 6), (1, 0), (2, 4), (3, 0), (4, 6)]],
        'X' => &[&[(0, 0), (4, 6)], &[(0, 6), (4, 0)]],
        'Y' => &[&[(0, 6), (2, 3), (4, 6)], &[(2, 3), (2, 0)]],
        'Z' => &[&[(0, 6), (4, 6), (0, 0), (4, 0)]],
        '0' => &[O_RING, &[(0, 1), (4, 5)]],
        '1' => &[&[(1, 5), (2, 6), (2, 0)], &[(1, 0), (3, 0)]],
        '2' => &[&[(0, 5), (1, 6), (3, 6), (4, 5), (4, 4), (0, 0), (4, 0)]],
        '3' => &[
            &[(0, 5), (1, 6), (3, 6), (4, 5), (4, 4), (3, 3), (1, 3)],
            &[(3, 3), (4, 2), (4, 1), (3, 0), (1, 0), (0, 1)],
        ],
        '4' => &[&[(3, 0), (3, 6), (0, 2), (4, 2)]],
        '5' => &[&[
            (4, 6),
            (0, 6),
            (0, 3),
            (3, 3),
            (4, 2),
            (4, 1),
            (3, 0),
            (0, 0),
        ]],
        '6' => &[&[
            (4, 5),
            (3, 6),
            (1, 6),
            (0, 5),
            (0, 1),
            (1, 0),
            (3, 0),
            (4, 1),
            (4, 2),
            (3, 3),
            (0, 3),
        ]],
        '7' => &[&[(0, 6), (4, 6), (1, 0)]],
        '8' => &[&[
            (1, 3),
            (0, 4),
            (0, 5),
            (1, 6),
            (3, 6),
            (4, 5),
            (4, 4),
            (3, 3),
            (1, 3),
            (0, 2),
            (0, 1),
            (1, 0),
            (3, 0),
            (4, 1),
            (4, 2),
            (3, 3),
        ]],
        '9' => &[&[
            (4, 3),
            (1, 3),
            (0, 4),
            (0, 5),
            (1, 6),
            (3, 6),
            (4, 5),
            (4, 1),
            (3, 0),
            (1, 0),
        ]],
        _ => return None,
    };
    Some(g)
}

/// True for characters the font can draw (space included).
pub fn supports(c: char) -> bool {
    c == ' ' || strokes(c).is_some()
}

/// Raw strokes of one glyph in cell units, or `None` if unsupported.
pub fn glyph(c: char) -> Option<Vec<Vec<Vec2>>> {
    strokes(c).map(|g| {
        g.iter()
            .map(|s| {
                s.iter()
                    .map(|&(x, y)| Vec2::new(x as f64, y as f64))
                    .collect()
            })
            .collect()
    })
}

/// Laid-out text: each glyph's strokes in µm, centered on the origin.
#[derive(Debug, Clone)]
pub struct Layout {
    pub glyphs: Vec<PlacedGlyph>,
}

#[derive(Debug, Clone)]
pub struct PlacedGlyph {
    pub ch: char,
    pub strokes: Vec<Vec<Vec2>>,
    /// Lower-left and upper-right corners of the glyph cell.
    pub cell: (Vec2, Vec2),
}

/// Lay out `text` with the given cap height. Errors with the first
/// unsupported character.
pub fn layout(text: &str, height: f64) -> Result<Layout, char> {
    let scale = height / CELL_HEIGHT;
    let count = text.chars().count();
    let width = if count == 0 {
        0.0
    } else {
        ADVANCE * (count - 1) as f64 + CELL_WIDTH
    };
    let origin = Vec2::new(-width / 2.0, -CELL_HEIGHT / 2.0);
    let mut glyphs = Vec::new();
    for (i, c) in text.chars().enumerate() {
        if c == ' ' {
            continue;
        }
        let raw = glyph(c).ok_or(c)?;
        let shift = origin + Vec2::new(ADVANCE * i as f64, 0.0);
        let place = |p: Vec2| (p + shift) * scale;
        glyphs.push(PlacedGlyph {
            ch: c,
            strokes: raw
                .into_iter()
                .map(|s| s.into_iter().map(place).collect())
                .collect(),
            cell: (place(Vec2::ZERO), place(Vec2::new(CELL_WIDTH, CELL_HEIGHT))),
        });
    }
    Ok(Layout { glyphs })
}
