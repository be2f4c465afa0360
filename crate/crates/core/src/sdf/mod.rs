//! Signed-distance-field scene representation.
//!
//! The field is a dense voxel grid of signed distances (positive outside,
//! negative inside) sampled with trilinear interpolation, which keeps the
//! whole rendering chain exactly differentiable with respect to the voxel
//! values. Submodules add LiDAR volume rendering ([`render`]), gradient
//! fitting ([`fit`]), TSDF fusion ([`tsdf`]) and mesh extraction
//! ([`marching`]).

pub mod fit;
pub mod marching;
mod mc_tables;
pub mod render;
pub mod tsdf;

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Placement of a voxel grid: `dims` nodes per axis spaced `voxel_size`
/// apart starting at `origin`. Node (i,j,k) sits at
/// `origin + voxel_size * (i,j,k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Vec3,
    pub voxel_size: f64,
    pub dims: (usize, usize, usize),
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0) {
            return Err(Error::invalid("voxel_size must be positive"));
        }
        let (nx, ny, nz) = self.dims;
        if nx < 2 || ny < 2 || nz < 2 {
            return Err(Error::invalid("grid needs at least 2 nodes per axis"));
        }
        Ok(())
    }

    /// Smallest grid covering `lo..hi` padded by `padding` meters.
    pub fn from_bounds(lo: Vec3, hi: Vec3, voxel_size: f64, padding: f64) -> Result<GridSpec> {
        if !(voxel_size > 0.0) {
            return Err(Error::invalid("voxel_size must be positive"));
        }
        let lo = lo - Vec3::new(padding, padding, padding);
        let hi = hi + Vec3::new(padding, padding, padding);
        let count = |a: f64, b: f64| (((b - a) / voxel_size).ceil() as usize + 1).max(2);
        Ok(GridSpec {
            origin: lo,
            voxel_size,
            dims: (count(lo.x, hi.x), count(lo.y, hi.y), count(lo.z, hi.z)),
        })
    }

    pub fn node_count(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    /// Upper corner of the node lattice.
    pub fn max_corner(&self) -> Vec3 {
        self.origin
            + Vec3::new(
                (self.dims.0 - 1) as f64,
                (self.dims.1 - 1) as f64,
                (self.dims.2 - 1) as f64,
            ) * self.voxel_size
    }

    pub fn diagonal(&self) -> f64 {
        (self.max_corner() - self.origin).norm()
    }
}

/// Result of a single SDF query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfSample {
    pub value: f64,
    /// True when the query point lay outside the grid and the value is
    /// the clamped-boundary extension.
    pub extrapolated: bool,
}

/// Dense signed-distance grid; positive outside, negative inside.
///
/// Values are stored x-fastest: `index = x + nx * (y + ny * z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    pub origin: Vec3,
    pub voxel_size: f64,
    pub dims: (usize, usize, usize),
    pub values: Vec<f64>,
}

impl SdfGrid {
    pub fn new(spec: &GridSpec, fill: f64) -> Result<SdfGrid> {
        spec.validate()?;
        Ok(SdfGrid {
            origin: spec.origin,
            voxel_size: spec.voxel_size,
            dims: spec.dims,
            values: vec![fill; spec.node_count()],
        })
    }

    /// Build a grid by evaluating `f` at every node position.
    pub fn from_fn(spec: &GridSpec, f: impl Fn(Vec3) -> f64) -> Result<SdfGrid> {
        let mut grid = SdfGrid::new(spec, 0.0)?;
        let (nx, ny, nz) = grid.dims;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let p = grid.node_position(x, y, z);
                    grid.values[x + nx * (y + ny * z)] = f(p);
                }
            }
        }
        Ok(grid)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            origin: self.origin,
            voxel_size: self.voxel_size,
            dims: self.dims,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec().validate()?;
        if self.values.len() != self.spec().node_count() {
            return Err(Error::invalid("value array does not match grid dims"));
        }
        if !self.values.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("grid holds non-finite values"));
        }
        Ok(())
    }

    #[inline]
    pub fn node_index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    #[inline]
    pub fn node_position(&self, x: usize, y: usize, z: usize) -> Vec3 {
        self.origin + Vec3::new(x as f64, y as f64, z as f64) * self.voxel_size
    }

    #[inline]
    pub fn value_at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.node_index(x, y, z)]
    }

    /// Trilinear interpolation; outside the grid this returns the value at
    /// the clamped boundary point plus the distance to it.
    pub fn sample(&self, p: Vec3) -> f64 {
        self.sample_ext(p).value
    }

    /// As [`SdfGrid::sample`], with the extrapolation flag.
    pub fn sample_ext(&self, p: Vec3) -> SdfSample {
        let (sample, _) = self.sample_with_weights(p);
        sample
    }

    /// Sample plus the trilinear weights of the eight supporting nodes,
    /// for backpropagation. The boundary-distance term of extrapolated
    /// queries has no voxel dependence, so the weights stay valid there.
    pub fn sample_with_weights(&self, p: Vec3) -> (SdfSample, [(u32, f64); 8]) {
        let (nx, ny, nz) = self.dims;
        let h = self.voxel_size;
        let u = (p - self.origin) / h;

        let clamp = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64);
        let (ux, uy, uz) = (clamp(u.x, nx), clamp(u.y, ny), clamp(u.z, nz));
        let extrapolated = ux != u.x || uy != u.y || uz != u.z;
        let boundary_dist = if extrapolated {
            let d = Vec3::new(u.x - ux, u.y - uy, u.z - uz) * h;
            d.norm()
        } else {
            0.0
        };

        let cell = |v: f64, n: usize| (v.floor() as usize).min(n - 2);
        let (ix, iy, iz) = (cell(ux, nx), cell(uy, ny), cell(uz, nz));
        let (fx, fy, fz) = (ux - ix as f64, uy - iy as f64, uz - iz as f64);

        let mut weights = [(0u32, 0.0f64); 8];
        let mut value = 0.0;
        for (corner, slot) in weights.iter_mut().enumerate() {
            let (cx, cy, cz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            let w = (if cx == 1 { fx } else { 1.0 - fx })
                * (if cy == 1 { fy } else { 1.0 - fy })
                * (if cz == 1 { fz } else { 1.0 - fz });
            let idx = self.node_index(ix + cx, iy + cy, iz + cz);
            value += w * self.values[idx];
            *slot = (idx as u32, w);
        }

        (
            SdfSample {
                value: value + boundary_dist,
                extrapolated,
            },
            weights,
        )
    }

    /// Serialize: ascii header, then raw little-endian f64 values in
    /// x-fastest order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let mut out = BufWriter::new(std::fs::File::create(path.as_ref())?);
        write!(
            out,
            "sdfgrid 1\norigin {} {} {}\nvoxel_size {}\ndims {} {} {}\nsign positive-outside\nend_header\n",
            self.origin.x, self.origin.y, self.origin.z, self.voxel_size,
            self.dims.0, self.dims.1, self.dims.2
        )?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SdfGrid> {
        let path = path.as_ref();
        let mut data = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut data)?;

        let mut offset = 0usize;
        let mut line_no = 0usize;
        let mut origin = Vec3::ZERO;
        let mut voxel_size = 0.0;
        let mut dims = (0usize, 0usize, 0usize);
        let mut saw_magic = false;
        loop {
            let rest = &data[offset..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::parse(path, line_no + 1, "unterminated header"))?;
            let line = std::str::from_utf8(&rest[..end])
                .map_err(|_| Error::parse(path, line_no + 1, "non-utf8 header"))?;
            offset += end + 1;
            line_no += 1;
            let mut tok = line.split_whitespace();
            match tok.next() {
                Some("sdfgrid") => {
                    if tok.next() != Some("1") {
                        return Err(Error::parse(path, line_no, "unsupported sdfgrid version"));
                    }
                    saw_magic = true;
                }
                Some("origin") => {
                    let v: Vec<f64> = tok.filter_map(|t| t.parse().ok()).collect();
                    if v.len() != 3 {
                        return Err(Error::parse(path, line_no, "origin needs three values"));
                    }
                    origin = Vec3::new(v[0], v[1], v[2]);
                }
                Some("voxel_size") => {
                    voxel_size = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::parse(path, line_no, "bad voxel_size"))?;
                }
                Some("dims") => {
                    let v: Vec<usize> = tok.filter_map(|t| t.parse().ok()).collect();
                    if v.len() != 3 {
                        return Err(Error::parse(path, line_no, "dims needs three values"));
                    }
                    dims = (v[0], v[1], v[2]);
                }
                Some("sign") => {
                    if tok.next() != Some("positive-outside") {
                        return Err(Error::UnsupportedFormat(
                            "unsupported SDF sign convention".to_string(),
                        ));
                    }
                }
                Some("end_header") => break,
                other => {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("unknown header keyword {other:?}"),
                    ))
                }
            }
        }
        if !saw_magic {
            return Err(Error::parse(path, 1, "missing sdfgrid magic"));
        }

        let spec = GridSpec {
            origin,
            voxel_size,
            dims,
        };
        spec.validate()?;
        let n = spec.node_count();
        let body = &data[offset..];
        if body.len() != n * 8 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {} value bytes, found {}", n * 8, body.len()),
            ));
        }
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let grid = SdfGrid {
            origin,
            voxel_size,
            dims,
            values,
        };
        grid.validate()?;
        Ok(grid)
    }
}
