//! Gridded velocity response of the canonical linear scan, its synthetic
//! generator and the FLUT file format.

use crate::geom::Vec2;
use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"FLUT";
pub const VERSION: u32 = 1;
pub const GENERATOR_ID: &str = "regularized-point-force";

#[derive(Debug, Error)]
pub enum LutError {
    #[error("grid spacing {spacing} is coarser than the regularisation length {epsilon}")]
    TooCoarse { spacing: f64, epsilon: f64 },
    #[error("invalid LUT parameters: {0}")]
    Invalid(String),
    #[error("not a FLUT file")]
    BadMagic,
    #[error("unsupported FLUT version {0}")]
    BadVersion(u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Synthetic generator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LutParams {
    pub scan_length: f64,
    /// Regularisation length of the point-force response.
    pub epsilon: f64,
    /// Screening length; the response is G_ε − G_H, which decays like
    /// 1/r² instead of growing logarithmically.
    pub screen: f64,
    pub spacing: f64,
    /// Half-width of the square grid extent.
    pub half_extent: f64,
}

impl Default for LutParams {
    fn default() -> Self {
        LutParams {
            scan_length: 10.0,
            epsilon: 1.0,
            screen: 10.0,
            spacing: 0.5,
            half_extent: 40.0,
        }
    }
}

/// Regular grid of node velocities at unit amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowLut {
    pub min: Vec2,
    pub max: Vec2,
    pub spacing: f64,
    pub scan_length: f64,
    pub generator: String,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, x fastest.
    pub velocities: Vec<Vec2>,
}

/// JSON mirror of the binary header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub magic: String,
    pub version: u32,
    pub extent: [f64; 4],
    pub spacing: f64,
    pub scan_length: f64,
    pub generator: String,
    pub nx: usize,
    pub ny: usize,
}

/// Segment integral of (G_ε(r) · e_x) over a force line of length `len`
/// centered at the origin along +x, in closed form.
fn segment_response(p: Vec2, len: f64, eps: f64) -> Vec2 {
    let (u0, u1) = (p.x - len / 2.0, p.x + len / 2.0);
    let c2 = p.y * p.y + eps * eps;
    let c = c2.sqrt();
    let f1 = |u: f64| u * (u * u + c2).ln() - 2.0 * u + 2.0 * c * (u / c).atan();
    let f2 = |u: f64| u - c * (u / c).atan();
    let f3 = |u: f64| 0.5 * p.y * (u * u + c2).ln();
    Vec2::new(
        -(f1(u1) - f1(u0)) + (f2(u1) - f2(u0)),
        f3(u1) - f3(u0),
    )
}

/// Unnormalised screened response at `p`.
pub fn raw_response(p: Vec2, params: &LutParams) -> Vec2 {
    segment_response(p, params.scan_length, params.epsilon)
        - segment_response(p, params.scan_length, params.screen)
}

pub fn generator_id(params: &LutParams) -> String {
    format!(
        "{GENERATOR_ID} eps={} screen={}",
        params.epsilon, params.screen
    )
}

impl FlowLut {
    pub fn generate(params: &LutParams) -> Result<FlowLut, LutError> {
        let p = params;
        if !(p.scan_length > 0.0 && p.epsilon > 0.0 && p.screen > p.epsilon) {
            return Err(LutError::Invalid(
                "need scan_length > 0 and screen > epsilon > 0".into(),
            ));
        }
        if !(p.spacing > 0.0) {
            return Err(LutError::Invalid("spacing must be positive".into()));
        }
        if p.spacing > p.epsilon {
            return Err(LutError::TooCoarse {
                spacing: p.spacing,
                epsilon: p.epsilon,
            });
        }
        if p.half_extent < 1.5 * p.scan_length {
            return Err(LutError::Invalid(
                "extent must cover three scan lengths".into(),
            ));
        }
        let cells = (2.0 * p.half_extent / p.spacing).round() as usize;
        let half = cells as f64 * p.spacing / 2.0;
        let norm = raw_response(Vec2::ZERO, p).x;
        let n = cells + 1;
        let mut velocities = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let q = Vec2::new(
                    -half + i as f64 * p.spacing,
                    -half + j as f64 * p.spacing,
                );
                velocities.push(raw_response(q, p) / norm);
            }
        }
        Ok(FlowLut {
            min: Vec2::new(-half, -half),
            max: Vec2::new(half, half),
            spacing: p.spacing,
            scan_length: p.scan_length,
            generator: generator_id(p),
            nx: n,
            ny: n,
            velocities,
        })
    }

    /// LUT of a constant field over the given extent (for tests and
    /// calibration).
    pub fn uniform(v: Vec2, half_extent: f64, spacing: f64) -> FlowLut {
        let n = (2.0 * half_extent / spacing).round() as usize + 1;
        let half = (n - 1) as f64 * spacing / 2.0;
        FlowLut {
            min: Vec2::new(-half, -half),
            max: Vec2::new(half, half),
            spacing,
            scan_length: 10.0,
            generator: "uniform".into(),
            nx: n,
            ny: n,
            velocities: vec![v; n * n],
        }
    }

    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        self.velocities[j * self.nx + i]
    }

    pub fn node_position(&self, i: usize, j: usize) -> Vec2 {
        self.min + Vec2::new(i as f64, j as f64) * self.spacing
    }

    /// Bilinear interpolation; zero outside the extent.
    pub fn velocity(&self, p: Vec2) -> Vec2 {
        if !(p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y) {
            return Vec2::ZERO;
        }
        let fx = (p.x - self.min.x) / self.spacing;
        let fy = (p.y - self.min.y) / self.spacing;
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let a = self.node(i, j);
        let b = self.node(i + 1, j);
        let c = self.node(i, j + 1);
        let d = self.node(i + 1, j + 1);
        (a * (1.0 - tx) + b * tx) * (1.0 - ty) + (c * (1.0 - tx) + d * tx) * ty
    }

    /// Bilinear velocity and its within-cell spatial Jacobian (row i =
    /// component i). Zero outside the grid.
    pub fn velocity_jacobian(&self, p: Vec2) -> (Vec2, [[f64; 2]; 2]) {
        if !(p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y) {
            return (Vec2::ZERO, [[0.0; 2]; 2]);
        }
        let fx = (p.x - self.min.x) / self.spacing;
        let fy = (p.y - self.min.y) / self.spacing;
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let a = self.node(i, j);
        let b = self.node(i + 1, j);
        let c = self.node(i, j + 1);
        let d = self.node(i + 1, j + 1);
        let v = (a * (1.0 - tx) + b * tx) * (1.0 - ty) + (c * (1.0 - tx) + d * tx) * ty;
        let dx = ((b - a) * (1.0 - ty) + (d - c) * ty) / self.spacing;
        let dy = ((c * (1.0 - tx) + d * tx) - (a * (1.0 - tx) + b * tx)) / self.spacing;
        (v, [[dx.x, dy.x], [dx.y, dy.y]])
    }

    /// Largest node speed.
    pub fn max_speed(&self) -> f64 {
        self.velocities.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            magic: "FLUT".into(),
            version: VERSION,
            extent: [self.min.x, self.max.x, self.min.y, self.max.y],
            spacing: self.spacing,
            scan_length: self.scan_length,
            generator: self.generator.clone(),
            nx: self.nx,
            ny: self.ny,
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for v in [self.min.x, self.max.x, self.min.y, self.max.y, self.spacing, self.scan_length] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.generator.len() as u32).to_le_bytes())?;
        w.write_all(self.generator.as_bytes())?;
        for v in &self.velocities {
            w.write_all(&v.x.to_le_bytes())?;
            w.write_all(&v.y.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<FlowLut, LutError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(LutError::BadMagic);
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(LutError::BadVersion(version));
        }
        let mut h = [0.0; 6];
        for v in &mut h {
            *v = read_f64(r)?;
        }
        let [x0, x1, y0, y1, spacing, scan_length] = h;
        let len = read_u32(r)? as usize;
        if len > 4096 {
            return Err(LutError::Invalid("generator id too long".into()));
        }
        let mut id = vec![0u8; len];
        r.read_exact(&mut id)?;
        let generator = String::from_utf8(id)
            .map_err(|_| LutError::Invalid("generator id is not UTF-8".into()))?;
        if !(spacing > 0.0 && x1 > x0 && y1 > y0 && h.iter().all(|v| v.is_finite())) {
            return Err(LutError::Invalid("bad extent or spacing".into()));
        }
        let nx = ((x1 - x0) / spacing).round() as usize + 1;
        let ny = ((y1 - y0) / spacing).round() as usize + 1;
        if nx < 2 || ny < 2 || nx.saturating_mul(ny) > 1 << 26 {
            return Err(LutError::Invalid("grid size out of range".into()));
        }
        let mut velocities = Vec::with_capacity(nx * ny);
        for _ in 0..nx * ny {
            let v = Vec2::new(read_f64(r)?, read_f64(r)?);
            if !v.is_finite() {
                return Err(LutError::Invalid("non-finite node velocity".into()));
            }
            velocities.push(v);
        }
        Ok(FlowLut {
            min: Vec2::new(x0, y0),
            max: Vec2::new(x1, y1),
            spacing,
            scan_length,
            generator,
            nx,
            ny,
            velocities,
        })
    }

    /// Write `path` and its JSON sidecar `path.json`.
    pub fn save(&self, path: &Path) -> Result<(), LutError> {
        let mut f = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        let side = serde_json::to_string_pretty(&self.sidecar())
            .map_err(|e| LutError::Invalid(e.to_string()))?;
        std::fs::write(sidecar_path(path), side)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<FlowLut, LutError> {
        let mut f = io::BufReader::new(std::fs::File::open(path)?);
        FlowLut::read_from(&mut f)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lut() -> FlowLut {
        FlowLut::generate(&LutParams::default()).unwrap()
    }

    /// Composite Gauss–Legendre quadrature of the screened kernel.
    fn quadrature(p: Vec2, prm: &LutParams) -> Vec2 {
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683,
            0.538_469_310_105_683,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
            0.236_926_885_056_189,
        ];
        let kernel = |r: Vec2| {
            let r2 = r.norm_sq();
            let (re, rh) = (r2 + prm.epsilon.powi(2), r2 + prm.screen.powi(2));
            Vec2::new(
                -(re / rh).ln() + r.x * r.x * (1.0 / re - 1.0 / rh),
                r.x * r.y * (1.0 / re - 1.0 / rh),
            )
        };
        let panels = 4000;
        let h = prm.scan_length / panels as f64;
        let mut acc = Vec2::ZERO;
        for k in 0..panels {
            let mid = -prm.scan_length / 2.0 + (k as f64 + 0.5) * h;
            for (x, w) in X.iter().zip(W) {
                let s = mid + x * h / 2.0;
                acc += kernel(p - Vec2::new(s, 0.0)) * (w * h / 2.0);
            }
        }
        acc
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let prm = LutParams::default();
        for p in [
            Vec2::ZERO,
            Vec2::new(3.0, 1.5),
            Vec2::new(-7.0, -4.0),
            Vec2::new(30.0, 0.0),
            Vec2::new(5.0, 0.0),
        ] {
            let a = raw_response(p, &prm);
            let b = quadrature(p, &prm);
            assert!((a - b).norm() < 1e-9 * b.norm().max(1.0), "{p:?} {a:?} {b:?}");
        }
    }

    #[test]
    fn midpoint_is_unit_plus_x() {
        let l = lut();
        let v = l.velocity(Vec2::ZERO);
        assert!((v.x - 1.0).abs() < 1e-12 && v.y.abs() < 1e-12);
    }

    #[test]
    fn mirror_symmetric() {
        let l = lut();
        for j in 0..l.ny {
            for i in 0..l.nx {
                let a = l.node(i, j);
                let b = l.node(i, l.ny - 1 - j);
                assert_eq!(a.x, b.x);
                assert_eq!(a.y, -b.y);
            }
        }
    }

    #[test]
    fn far_field_is_weak() {
        let prm = LutParams::default();
        let mid = quadrature(Vec2::ZERO, &prm).norm();
        for k in 0..16 {
            let dir = Vec2::from_angle(k as f64 * std::f64::consts::TAU / 16.0);
            let far = quadrature(dir * (3.0 * prm.scan_length), &prm).norm();
            assert!(far < 0.2 * mid, "{k}: {far} vs {mid}");
        }
    }

    #[test]
    fn bilinear_rules() {
        let l = lut();
        assert_eq!(l.velocity(l.node_position(37, 90)), l.node(37, 90));
        let c = l.node_position(10, 20) + Vec2::new(0.25, 0.25);
        let avg = (l.node(10, 20) + l.node(11, 20) + l.node(10, 21) + l.node(11, 21)) / 4.0;
        assert!((l.velocity(c) - avg).norm() < 1e-15);
        assert_eq!(l.velocity(Vec2::new(40.5, 0.0)), Vec2::ZERO);
        assert_eq!(l.velocity(Vec2::new(0.0, -41.0)), Vec2::ZERO);
    }

    #[test]
    fn refined_grid_agrees() {
        let prm = LutParams::default();
        let coarse = lut();
        let fine = FlowLut::generate(&LutParams {
            spacing: prm.spacing / 4.0,
            ..prm
        })
        .unwrap();
        let (mut err, mut mag) = (0.0, 0.0);
        for j in 0..coarse.ny - 1 {
            for i in 0..coarse.nx - 1 {
                let p = coarse.node_position(i, j) + Vec2::new(0.5, 0.5) * prm.spacing;
                let r = fine.velocity(p);
                err += (coarse.velocity(p) - r).norm_sq();
                mag += r.norm_sq();
            }
        }
        assert!((err / mag).sqrt() < 0.02, "{}", (err / mag).sqrt());
    }

    #[test]
    fn too_coarse_rejected() {
        let prm = LutParams {
            spacing: 2.0,
            ..LutParams::default()
        };
        assert!(matches!(
            FlowLut::generate(&prm),
            Err(LutError::TooCoarse { .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let l = FlowLut::generate(&LutParams {
            half_extent: 16.0,
            ..LutParams::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.flut");
        l.save(&path).unwrap();
        let back = FlowLut::load(&path).unwrap();
        assert_eq!(back, l);
        let side: Sidecar =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side, l.sidecar());
        let mut bytes = Vec::new();
        l.write_to(&mut bytes).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            FlowLut::read_from(&mut bytes.as_slice()),
            Err(LutError::BadMagic)
        ));
    }
}
