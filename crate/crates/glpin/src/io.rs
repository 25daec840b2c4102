//! Persistence: GLF1 binary fields, CSV exports, curve files and JSON reports.
//!
//! GLF1 layout (little endian): `b"GLF1"`, placement code `u32`, node dims
//! `3 x u64`, spacing `f64`, origin `3 x f64`, component count `u32`, then
//! each component as `dims[0]*dims[1]*dims[2]` `f64` values, x fastest.

use crate::error::{GlError, Result};
use crate::geometry::{FramedCurve, PolyCurve};
use crate::grid::{ComplexField, Grid, Placement, ScalarField, Vec3, VectorField};
use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"GLF1";

/// Raw field payload as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldData {
    pub grid: Grid,
    pub placement: Placement,
    pub comps: Vec<Vec<f64>>,
}

impl From<&ScalarField> for FieldData {
    fn from(f: &ScalarField) -> Self {
        FieldData { grid: f.grid, placement: f.placement, comps: vec![f.values.clone()] }
    }
}

impl From<&VectorField> for FieldData {
    fn from(f: &VectorField) -> Self {
        FieldData { grid: f.grid, placement: f.placement, comps: f.comps.to_vec() }
    }
}

impl From<&ComplexField> for FieldData {
    fn from(f: &ComplexField) -> Self {
        FieldData {
            grid: f.grid,
            placement: Placement::Node,
            comps: vec![f.values.iter().map(|z| z.re).collect(), f.values.iter().map(|z| z.im).collect()],
        }
    }
}

impl FieldData {
    pub fn into_scalar(self) -> Result<ScalarField> {
        let [values]: [Vec<f64>; 1] =
            self.comps.try_into().map_err(|_| GlError::Format("expected one component".into()))?;
        Ok(ScalarField { grid: self.grid, placement: self.placement, values })
    }

    pub fn into_vector(self) -> Result<VectorField> {
        let comps: [Vec<f64>; 3] =
            self.comps.try_into().map_err(|_| GlError::Format("expected three components".into()))?;
        Ok(VectorField { grid: self.grid, placement: self.placement, comps })
    }

    pub fn into_complex(self) -> Result<ComplexField> {
        let [re, im]: [Vec<f64>; 2] =
            self.comps.try_into().map_err(|_| GlError::Format("expected two components".into()))?;
        Ok(ComplexField { grid: self.grid, values: re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect() })
    }
}

pub fn encode_field(f: &FieldData) -> Vec<u8> {
    let n = f.grid.len();
    let mut out = Vec::with_capacity(64 + 8 * n * f.comps.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&f.placement.code().to_le_bytes());
    for d in f.grid.dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&f.grid.h.to_le_bytes());
    for o in f.grid.origin {
        out.extend_from_slice(&o.to_le_bytes());
    }
    out.extend_from_slice(&(f.comps.len() as u32).to_le_bytes());
    for c in &f.comps {
        for v in c {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let s = self.buf.get(self.at..self.at + N).ok_or_else(|| GlError::Format("truncated field file".into()))?;
        self.at += N;
        Ok(s.try_into().expect("slice length"))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn decode_field(buf: &[u8]) -> Result<FieldData> {
    let mut c = Cursor { buf, at: 0 };
    if &c.take::<4>()? != MAGIC {
        return Err(GlError::Format("bad magic, not a GLF1 file".into()));
    }
    let placement = Placement::from_code(c.u32()?)?;
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = usize::try_from(c.u64()?).map_err(|_| GlError::Format("dimension overflow".into()))?;
    }
    let h = c.f64()?;
    let origin = [c.f64()?, c.f64()?, c.f64()?];
    let grid = Grid::new(origin, h, dims)?;
    let ncomp = c.u32()? as usize;
    if ncomp == 0 || ncomp > 3 {
        return Err(GlError::Format(format!("bad component count {ncomp}")));
    }
    let n = grid.len();
    if buf.len() != c.at + 8 * n * ncomp {
        return Err(GlError::Format(format!("payload is {} bytes, expected {}", buf.len() - c.at, 8 * n * ncomp)));
    }
    let comps = (0..ncomp).map(|_| (0..n).map(|_| c.f64()).collect::<Result<Vec<f64>>>()).collect::<Result<_>>()?;
    Ok(FieldData { grid, placement, comps })
}

pub fn write_field(path: &Path, f: &FieldData) -> Result<()> {
    std::fs::File::create(path)?.write_all(&encode_field(f))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<FieldData> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_field(&buf)
}

/// CSV with one row per valid location: `comp,i,j,k,x,y,z,value`.
pub fn field_csv(f: &FieldData) -> String {
    let mut s = String::from("comp,i,j,k,x,y,z,value\n");
    for (c, vals) in f.comps.iter().enumerate() {
        let geom = if f.comps.len() == 3 { c } else { 0 };
        f.grid.for_each(f.placement, geom, |i, j, k, n| {
            let p = f.grid.position(f.placement, geom, i, j, k);
            let _ = writeln!(s, "{c},{i},{j},{k},{},{},{},{}", p.x, p.y, p.z, vals[n]);
        });
    }
    s
}

/// Curve CSV: `# closed=<bool>` then `s,x,y,z`, plus frame columns when given.
pub fn curve_csv(curve: &PolyCurve, frame: Option<&FramedCurve>) -> String {
    let mut s = format!("# closed={}\n", curve.closed);
    s.push_str("s,x,y,z");
    if frame.is_some() {
        s.push_str(",tx,ty,tz,e1x,e1y,e1z,e2x,e2y,e2z");
    }
    s.push('\n');
    for (i, (p, a)) in curve.points.iter().zip(curve.arclength()).enumerate() {
        let _ = write!(s, "{a},{},{},{}", p.x, p.y, p.z);
        if let Some(f) = frame {
            for v in [f.tangents[i], f.e1[i], f.e2[i]] {
                let _ = write!(s, ",{},{},{}", v.x, v.y, v.z);
            }
        }
        s.push('\n');
    }
    s
}

pub fn parse_curve_csv(text: &str) -> Result<PolyCurve> {
    let mut closed = None;
    let mut pts = Vec::new();
    let mut header_seen = false;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("closed=") {
                closed = Some(v.trim().parse::<bool>().map_err(|_| GlError::Format(format!("bad closed flag '{v}'")))?);
            }
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line.starts_with('s') {
                continue;
            }
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| GlError::Format(format!("line {}: {e}", ln + 1)))?;
        if cols.len() < 4 {
            return Err(GlError::Format(format!("line {}: expected s,x,y,z", ln + 1)));
        }
        pts.push(Vec3::new(cols[1], cols[2], cols[3]));
    }
    let closed = closed.ok_or_else(|| GlError::Format("missing '# closed=' header".into()))?;
    PolyCurve::new(pts, closed)
}

pub fn write_curve(path: &Path, curve: &PolyCurve, frame: Option<&FramedCurve>) -> Result<()> {
    std::fs::write(path, curve_csv(curve, frame))?;
    Ok(())
}

pub fn read_curve(path: &Path) -> Result<PolyCurve> {
    parse_curve_csv(&std::fs::read_to_string(path)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| GlError::Format(e.to_string()))?;
    std::fs::write(path, s + "\n")?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Write bytes and return their SHA-256.
pub fn write_hashed(path: &Path, bytes: &[u8]) -> Result<String> {
    std::fs::write(path, bytes)?;
    Ok(sha256_hex(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new([-0.5, 0.25, 1.0], 0.125, [4, 3, 5]).unwrap()
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let g = grid();
        let v = VectorField::from_fn(g, Placement::Face, |p| Vec3::new(p.x.sin(), p.y * 1e-300, -p.z / 3.0));
        let back = decode_field(&encode_field(&(&v).into())).unwrap().into_vector().unwrap();
        assert_eq!(back, v);
        let u = ComplexField::from_fn(g, |p| Complex64::new(p.x, -p.y));
        assert_eq!(decode_field(&encode_field(&(&u).into())).unwrap().into_complex().unwrap(), u);
    }

    #[test]
    fn header_layout() {
        let s = ScalarField::constant(grid(), Placement::Cell, 2.5);
        let b = encode_field(&(&s).into());
        assert_eq!(&b[..4], b"GLF1");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 4);
        assert_eq!(f64::from_le_bytes(b[32..40].try_into().unwrap()), 0.125);
        assert_eq!(b.len(), 4 + 4 + 24 + 8 + 24 + 4 + 8 * 60);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let s = ScalarField::constant(grid(), Placement::Node, 1.0);
        let mut b = encode_field(&(&s).into());
        assert!(decode_field(&b[..b.len() - 1]).is_err());
        b[0] = b'X';
        assert!(decode_field(&b).is_err());
    }

    #[test]
    fn curve_file_round_trip() {
        let c = PolyCurve::circle(Vec3::new(0.1, 0.0, 0.0), Vec3::z(), 0.5, 16).unwrap();
        let f = FramedCurve::parallel_transport(&c, None).unwrap();
        let back = parse_curve_csv(&curve_csv(&c, Some(&f))).unwrap();
        assert_eq!(back, c);
        assert!(parse_curve_csv("s,x,y,z\n0,0,0,0\n1,1,0,0\n").is_err());
    }

    #[test]
    fn csv_has_one_row_per_valid_location() {
        let g = grid();
        let v = VectorField::zeros(g, Placement::Edge);
        let rows = field_csv(&(&v).into()).lines().count() - 1;
        assert_eq!(rows, 3 * 3 * 5 + 4 * 2 * 5 + 4 * 3 * 4);
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
