//! Grid, mesh and primitive-list I/O, plus synthetic SDF generators.
//!
//! Binary SDF layout (`MPSF`, little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 0..4  | magic `MPSF` |
//! | 4..8  | `u32` version (1) |
//! | 8..20 | `u32` nx, ny, nz |
//! | 20..44 | `f64` origin x, y, z |
//! | 44..52 | `f64` spacing |
//! | 52..  | `nx*ny*nz` `f32` values, x fastest |
//!
//! The text variant has a header line `nx ny nz ox oy oz h` followed by one
//! value per line in the same order.

mod mesh;

pub use mesh::{mesh_to_sdf, TriangleMesh};

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::{Error, Point3, Result, Superquadric, VoxelGrid};

pub const MAGIC: [u8; 4] = *b"MPSF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 52;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfFileHeader {
    pub magic: [u8; 4],
    pub version: u32,
    pub dims: [usize; 3],
    pub origin: Point3,
    pub spacing: f64,
}

impl SdfFileHeader {
    pub fn of(grid: &VoxelGrid) -> Self {
        Self {
            magic: MAGIC,
            version: VERSION,
            dims: grid.dims(),
            origin: grid.origin(),
            spacing: grid.spacing(),
        }
    }

    pub fn n_values(&self) -> usize {
        self.dims.iter().product()
    }

    fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(&self.magic)?;
        out.write_all(&self.version.to_le_bytes())?;
        for d in self.dims {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for o in self.origin.iter() {
            out.write_all(&o.to_le_bytes())?;
        }
        out.write_all(&self.spacing.to_le_bytes())
    }

    fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(bytes.len(), format!("header needs {HEADER_LEN} bytes")));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::format(0, "bad magic"));
        }
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        let dims = [0, 1, 2].map(|a| u32_at(8 + 4 * a) as usize);
        if let Some(a) = (0..3).find(|&a| dims[a] < 2) {
            return Err(Error::format(8 + 4 * a, format!("dimension {} < 2", dims[a])));
        }
        let origin = Point3::new(f64_at(20), f64_at(28), f64_at(36));
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(20, "non-finite origin"));
        }
        let spacing = f64_at(44);
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::format(44, format!("spacing {spacing} must be > 0")));
        }
        Ok(Self {
            magic,
            version,
            dims,
            origin,
            spacing,
        })
    }
}

/// Encodes a grid in the binary format. Values are narrowed to `f32`.
pub fn encode_sdf(grid: &VoxelGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * grid.len());
    SdfFileHeader::of(grid).write_to(&mut out).expect("writing to a Vec");
    for &v in grid.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Decodes the binary format. The result is not truncated.
pub fn decode_sdf(bytes: &[u8]) -> Result<VoxelGrid> {
    let header = SdfFileHeader::parse(bytes)?;
    let n = header.n_values();
    let expected = HEADER_LEN + 4 * n;
    if bytes.len() != expected {
        return Err(Error::format(
            bytes.len().min(expected),
            format!("payload is {} bytes, dims imply {}", bytes.len() - HEADER_LEN, 4 * n),
        ));
    }
    let mut values = Vec::with_capacity(n);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(HEADER_LEN + 4 * i, "non-finite value"));
        }
        values.push(v as f64);
    }
    VoxelGrid::new(header.dims, header.origin, header.spacing, values)
}

pub fn store_sdf(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_sdf(grid))?;
    Ok(())
}

pub fn store_sdf_text(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    let [nx, ny, nz] = grid.dims();
    let o = grid.origin();
    writeln!(out, "{nx} {ny} {nz} {} {} {} {}", o.x, o.y, o.z, grid.spacing())?;
    for v in grid.values() {
        writeln!(out, "{v}")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses the text format; error offsets are byte positions in `text`.
pub fn parse_sdf_text(text: &str) -> Result<VoxelGrid> {
    let mut offset = 0;
    let mut lines = text.split_inclusive('\n').map(|l| {
        let at = offset;
        offset += l.len();
        (at, l.trim())
    });
    let (_, head) = lines
        .by_ref()
        .find(|(_, l)| !l.is_empty())
        .ok_or_else(|| Error::format(0, "empty file"))?;
    let fields: Vec<&str> = head.split_whitespace().collect();
    if fields.len() != 7 {
        return Err(Error::format(0, "header must be `nx ny nz ox oy oz h`"));
    }
    let mut dims = [0usize; 3];
    for a in 0..3 {
        dims[a] = fields[a]
            .parse()
            .map_err(|_| Error::format(0, format!("bad dimension `{}`", fields[a])))?;
        if dims[a] < 2 {
            return Err(Error::format(0, format!("dimension {} < 2", dims[a])));
        }
    }
    let mut reals = [0.0; 4];
    for k in 0..4 {
        reals[k] = fields[3 + k]
            .parse()
            .map_err(|_| Error::format(0, format!("bad number `{}`", fields[3 + k])))?;
    }
    let n: usize = dims.iter().product();
    let mut values = Vec::with_capacity(n);
    for (at, line) in lines {
        if line.is_empty() {
            continue;
        }
        if values.len() == n {
            return Err(Error::format(at, "more values than dims imply"));
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::format(at, format!("bad value `{line}`")))?;
        if !v.is_finite() {
            return Err(Error::format(at, "non-finite value"));
        }
        values.push(v);
    }
    if values.len() != n {
        return Err(Error::format(text.len(), format!("{} values, dims imply {n}", values.len())));
    }
    VoxelGrid::new(dims, Point3::new(reals[0], reals[1], reals[2]), reals[3], values)
}

/// Loads either format, detected from the magic bytes.
pub fn load_sdf(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(&MAGIC) {
        decode_sdf(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::format(e.valid_up_to(), "neither MPSF nor UTF-8 text"))?;
        parse_sdf_text(text)
    }
}

/// Untruncated union (pointwise minimum) of the primitives' signed
/// distances sampled on the grid.
pub fn gen_superquadric_sdf(
    prims: &[Superquadric],
    dims: [usize; 3],
    origin: Point3,
    spacing: f64,
) -> Result<VoxelGrid> {
    if prims.is_empty() {
        return Err(Error::Validation("at least one primitive is required".into()));
    }
    VoxelGrid::from_fn(dims, origin, spacing, |p| {
        prims.iter().map(|s| s.approx_sdf(p)).fold(f64::INFINITY, f64::min)
    })
}

pub fn parse_primitives(json: &str) -> Result<Vec<Superquadric>> {
    Ok(serde_json::from_str(json)?)
}

pub fn load_primitives(path: impl AsRef<Path>) -> Result<Vec<Superquadric>> {
    parse_primitives(&fs::read_to_string(path)?)
}

pub fn primitives_to_json(prims: &[Superquadric]) -> String {
    serde_json::to_string_pretty(prims).expect("primitives serialize")
}
