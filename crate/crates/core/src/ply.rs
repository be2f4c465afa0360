//! PLY 1.0 reader/writer for point clouds and triangle meshes.
//!
//! Clouds carry `x,y,z` as float64 plus optional `intensity` (float32),
//! `beam_id` (int32), `range`/`azimuth` (float64) and `source` (uint8,
//! 0 = top, 1 = side). Meshes carry `x,y,z` and triangular
//! `vertex_indices` lists. Both ascii and binary little-endian encodings
//! are supported; binary round-trips coordinates bit-exactly.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, PointSource, TriangleMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

/// What a PLY file parsed into: a mesh when a `face` element is present,
/// otherwise a point cloud.
#[derive(Debug, Clone)]
pub enum PlyContent {
    Cloud(PointCloud),
    Mesh(TriangleMesh),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    F64,
    F32,
    I32,
    U8,
}

impl ScalarType {
    fn parse(s: &str) -> Option<ScalarType> {
        match s {
            "double" | "float64" => Some(ScalarType::F64),
            "float" | "float32" => Some(ScalarType::F32),
            "int" | "int32" => Some(ScalarType::I32),
            "uchar" | "uint8" => Some(ScalarType::U8),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            ScalarType::F64 => 8,
            ScalarType::F32 => 4,
            ScalarType::I32 => 4,
            ScalarType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    ty: ScalarType,
    is_list: bool,
    list_count_ty: ScalarType,
}

#[derive(Debug, Clone)]
struct ElementDecl {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    encoding: PlyEncoding,
    elements: Vec<ElementDecl>,
    body_offset: usize,
}

fn parse_header(data: &[u8], path: &Path) -> Result<Header> {
    let mut line_no = 0usize;
    let mut offset = 0usize;
    let mut lines = Vec::new();
    // Header is ascii text terminated by an end_header line.
    loop {
        let rest = &data[offset..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(path, line_no + 1, "unterminated header"))?;
        let raw = &rest[..end];
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::parse(path, line_no + 1, "non-utf8 header line"))?
            .trim_end_matches('\r')
            .to_string();
        offset += end + 1;
        line_no += 1;
        let is_end = line.trim() == "end_header";
        lines.push((line_no, line));
        if is_end {
            break;
        }
        if line_no > 10_000 {
            return Err(Error::parse(path, line_no, "header too large"));
        }
    }

    let mut it = lines.iter();
    let (n, first) = it.next().unwrap();
    if first.trim() != "ply" {
        return Err(Error::parse(path, *n, "expected magic line 'ply'"));
    }

    let mut encoding = None;
    let mut elements: Vec<ElementDecl> = Vec::new();
    for (n, line) in it {
        let mut tok = line.split_whitespace();
        match tok.next() {
            None => continue,
            Some("comment") | Some("obj_info") => continue,
            Some("end_header") => break,
            Some("format") => {
                let kind = tok
                    .next()
                    .ok_or_else(|| Error::parse(path, *n, "format line missing encoding"))?;
                let version = tok.next().unwrap_or("");
                if version != "1.0" {
                    return Err(Error::parse(path, *n, format!("unsupported PLY version '{version}'")));
                }
                encoding = Some(match kind {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => {
                        return Err(Error::UnsupportedFormat(format!(
                            "PLY encoding '{other}' not supported"
                        )))
                    }
                });
            }
            Some("element") => {
                let name = tok
                    .next()
                    .ok_or_else(|| Error::parse(path, *n, "element line missing name"))?;
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::parse(path, *n, "element line missing count"))?;
                elements.push(ElementDecl {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let elem = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, *n, "property before any element"))?;
                let first = tok
                    .next()
                    .ok_or_else(|| Error::parse(path, *n, "property line missing type"))?;
                if first == "list" {
                    let count_ty = tok
                        .next()
                        .and_then(ScalarType::parse)
                        .ok_or_else(|| Error::parse(path, *n, "bad list count type"))?;
                    let ty = tok
                        .next()
                        .and_then(ScalarType::parse)
                        .ok_or_else(|| Error::parse(path, *n, "bad list element type"))?;
                    let name = tok
                        .next()
                        .ok_or_else(|| Error::parse(path, *n, "list property missing name"))?;
                    elem.properties.push(Property {
                        name: name.to_string(),
                        ty,
                        is_list: true,
                        list_count_ty: count_ty,
                    });
                } else {
                    let ty = ScalarType::parse(first).ok_or_else(|| {
                        Error::UnsupportedFormat(format!("property type '{first}' not supported"))
                    })?;
                    let name = tok
                        .next()
                        .ok_or_else(|| Error::parse(path, *n, "property line missing name"))?;
                    elem.properties.push(Property {
                        name: name.to_string(),
                        ty,
                        is_list: false,
                        list_count_ty: ScalarType::U8,
                    });
                }
            }
            Some(other) => {
                return Err(Error::parse(path, *n, format!("unknown header keyword '{other}'")));
            }
        }
    }

    let encoding =
        encoding.ok_or_else(|| Error::parse(path, line_no, "header missing format line"))?;
    Ok(Header {
        encoding,
        elements,
        body_offset: offset,
    })
}

/// Byte or token cursor over the PLY body.
enum Body<'a> {
    Ascii(std::str::SplitWhitespace<'a>),
    Binary(&'a [u8]),
}

impl<'a> Body<'a> {
    fn read_scalar(&mut self, ty: ScalarType, path: &Path) -> Result<f64> {
        match self {
            Body::Ascii(tokens) => {
                let tok = tokens
                    .next()
                    .ok_or_else(|| Error::parse(path, 0, "unexpected end of ascii body"))?;
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(path, 0, format!("bad numeric token '{tok}'")))
            }
            Body::Binary(bytes) => {
                let size = ty.size();
                if bytes.len() < size {
                    return Err(Error::parse(path, 0, "unexpected end of binary body"));
                }
                let (head, rest) = bytes.split_at(size);
                *bytes = rest;
                Ok(match ty {
                    ScalarType::F64 => f64::from_le_bytes(head.try_into().unwrap()),
                    ScalarType::F32 => f32::from_le_bytes(head.try_into().unwrap()) as f64,
                    ScalarType::I32 => i32::from_le_bytes(head.try_into().unwrap()) as f64,
                    ScalarType::U8 => head[0] as f64,
                })
            }
        }
    }
}

/// Read a PLY file as a cloud or mesh depending on the elements present.
pub fn read_ply(path: impl AsRef<Path>) -> Result<PlyContent> {
    let path = path.as_ref();
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let header = parse_header(&data, path)?;

    let body_bytes = &data[header.body_offset..];
    let mut body = match header.encoding {
        PlyEncoding::Ascii => Body::Ascii(
            std::str::from_utf8(body_bytes)
                .map_err(|_| Error::parse(path, 0, "non-utf8 ascii body"))?
                .split_whitespace(),
        ),
        PlyEncoding::BinaryLittleEndian => Body::Binary(body_bytes),
    };

    let mut cloud: Option<PointCloud> = None;
    let mut triangles: Option<Vec<[u32; 3]>> = None;

    for elem in &header.elements {
        match elem.name.as_str() {
            "vertex" => cloud = Some(read_vertices(elem, &mut body, path)?),
            "face" => triangles = Some(read_faces(elem, &mut body, path)?),
            other => {
                return Err(Error::UnsupportedFormat(format!(
                    "unsupported PLY element '{other}'"
                )))
            }
        }
    }

    let cloud = cloud.ok_or_else(|| {
        Error::UnsupportedFormat("PLY file has no vertex element".to_string())
    })?;

    match triangles {
        Some(tris) => {
            let mesh = TriangleMesh::new(cloud.points, tris)?;
            Ok(PlyContent::Mesh(mesh))
        }
        None => Ok(PlyContent::Cloud(cloud)),
    }
}

fn read_vertices(elem: &ElementDecl, body: &mut Body, path: &Path) -> Result<PointCloud> {
    #[derive(Clone, Copy)]
    enum Slot {
        X,
        Y,
        Z,
        Intensity,
        BeamId,
        Range,
        Azimuth,
        Source,
    }
    let mut slots = Vec::with_capacity(elem.properties.len());
    for p in &elem.properties {
        if p.is_list {
            return Err(Error::UnsupportedFormat(format!(
                "vertex property '{}' must be scalar",
                p.name
            )));
        }
        slots.push(match p.name.as_str() {
            "x" => Slot::X,
            "y" => Slot::Y,
            "z" => Slot::Z,
            "intensity" => Slot::Intensity,
            "beam_id" => Slot::BeamId,
            "range" => Slot::Range,
            "azimuth" => Slot::Azimuth,
            "source" => Slot::Source,
            other => {
                return Err(Error::UnsupportedFormat(format!(
                    "unknown vertex property '{other}'"
                )))
            }
        });
    }
    for required in ["x", "y", "z"] {
        if !elem.properties.iter().any(|p| p.name == required) {
            return Err(Error::UnsupportedFormat(format!(
                "vertex element missing required property '{required}'"
            )));
        }
    }

    let has = |name: &str| elem.properties.iter().any(|p| p.name == name);
    let n = elem.count;
    let mut cloud = PointCloud {
        points: Vec::with_capacity(n),
        intensity: has("intensity").then(|| Vec::with_capacity(n)),
        beam_id: has("beam_id").then(|| Vec::with_capacity(n)),
        range: has("range").then(|| Vec::with_capacity(n)),
        azimuth: has("azimuth").then(|| Vec::with_capacity(n)),
        source: has("source").then(|| Vec::with_capacity(n)),
    };

    for _ in 0..n {
        let mut p = Vec3::ZERO;
        for (prop, slot) in elem.properties.iter().zip(&slots) {
            let v = body.read_scalar(prop.ty, path)?;
            match slot {
                Slot::X => p.x = v,
                Slot::Y => p.y = v,
                Slot::Z => p.z = v,
                Slot::Intensity => cloud.intensity.as_mut().unwrap().push(v as f32),
                Slot::BeamId => cloud.beam_id.as_mut().unwrap().push(v as i32),
                Slot::Range => cloud.range.as_mut().unwrap().push(v),
                Slot::Azimuth => cloud.azimuth.as_mut().unwrap().push(v),
                Slot::Source => cloud
                    .source
                    .as_mut()
                    .unwrap()
                    .push(PointSource::from_u8(v as u8)?),
            }
        }
        cloud.points.push(p);
    }
    Ok(cloud)
}

fn read_faces(elem: &ElementDecl, body: &mut Body, path: &Path) -> Result<Vec<[u32; 3]>> {
    let list = match elem.properties.as_slice() {
        [p] if p.is_list && (p.name == "vertex_indices" || p.name == "vertex_index") => p,
        _ => {
            return Err(Error::UnsupportedFormat(
                "face element must have a single vertex_indices list".to_string(),
            ))
        }
    };
    let mut tris = Vec::with_capacity(elem.count);
    for _ in 0..elem.count {
        let count = body.read_scalar(list.list_count_ty, path)? as usize;
        if count != 3 {
            return Err(Error::UnsupportedFormat(format!(
                "only triangular faces supported, got {count} indices"
            )));
        }
        let mut t = [0u32; 3];
        for slot in &mut t {
            let v = body.read_scalar(list.ty, path)?;
            if v < 0.0 {
                return Err(Error::parse(path, 0, "negative vertex index"));
            }
            *slot = v as u32;
        }
        tris.push(t);
    }
    Ok(tris)
}

/// Format a float so ascii output parses back to the identical bits.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

struct BodyWriter<W: Write> {
    out: W,
    encoding: PlyEncoding,
    line: String,
}

impl<W: Write> BodyWriter<W> {
    fn new(out: W, encoding: PlyEncoding) -> Self {
        BodyWriter {
            out,
            encoding,
            line: String::new(),
        }
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        match self.encoding {
            PlyEncoding::Ascii => {
                if !self.line.is_empty() {
                    self.line.push(' ');
                }
                self.line.push_str(&fmt_f64(v));
            }
            PlyEncoding::BinaryLittleEndian => self.out.write_all(&v.to_le_bytes())?,
        }
        Ok(())
    }

    fn f32(&mut self, v: f32) -> Result<()> {
        match self.encoding {
            PlyEncoding::Ascii => {
                if !self.line.is_empty() {
                    self.line.push(' ');
                }
                self.line.push_str(&format!("{v}"));
            }
            PlyEncoding::BinaryLittleEndian => self.out.write_all(&v.to_le_bytes())?,
        }
        Ok(())
    }

    fn i32(&mut self, v: i32) -> Result<()> {
        match self.encoding {
            PlyEncoding::Ascii => {
                if !self.line.is_empty() {
                    self.line.push(' ');
                }
                self.line.push_str(&format!("{v}"));
            }
            PlyEncoding::BinaryLittleEndian => self.out.write_all(&v.to_le_bytes())?,
        }
        Ok(())
    }

    fn u8(&mut self, v: u8) -> Result<()> {
        match self.encoding {
            PlyEncoding::Ascii => {
                if !self.line.is_empty() {
                    self.line.push(' ');
                }
                self.line.push_str(&format!("{v}"));
            }
            PlyEncoding::BinaryLittleEndian => self.out.write_all(&[v])?,
        }
        Ok(())
    }

    fn end_row(&mut self) -> Result<()> {
        if self.encoding == PlyEncoding::Ascii {
            self.line.push('\n');
            self.out.write_all(self.line.as_bytes())?;
            self.line.clear();
        }
        Ok(())
    }
}

fn encoding_name(e: PlyEncoding) -> &'static str {
    match e {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    }
}

/// Write a point cloud with whatever optional attributes it carries.
pub fn write_ply_cloud(
    cloud: &PointCloud,
    path: impl AsRef<Path>,
    encoding: PlyEncoding,
) -> Result<()> {
    cloud.validate()?;
    let mut out = BufWriter::new(std::fs::File::create(path.as_ref())?);
    let mut header = String::new();
    header.push_str("ply\n");
    header.push_str(&format!("format {} 1.0\n", encoding_name(encoding)));
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.intensity.is_some() {
        header.push_str("property float intensity\n");
    }
    if cloud.beam_id.is_some() {
        header.push_str("property int beam_id\n");
    }
    if cloud.range.is_some() {
        header.push_str("property double range\n");
    }
    if cloud.azimuth.is_some() {
        header.push_str("property double azimuth\n");
    }
    if cloud.source.is_some() {
        header.push_str("property uchar source\n");
    }
    header.push_str("end_header\n");
    out.write_all(header.as_bytes())?;

    let mut w = BodyWriter::new(out, encoding);
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        w.f64(p.x)?;
        w.f64(p.y)?;
        w.f64(p.z)?;
        if let Some(v) = &cloud.intensity {
            w.f32(v[i])?;
        }
        if let Some(v) = &cloud.beam_id {
            w.i32(v[i])?;
        }
        if let Some(v) = &cloud.range {
            w.f64(v[i])?;
        }
        if let Some(v) = &cloud.azimuth {
            w.f64(v[i])?;
        }
        if let Some(v) = &cloud.source {
            w.u8(v[i].as_u8())?;
        }
        w.end_row()?;
    }
    w.out.flush()?;
    Ok(())
}

/// Write a triangle mesh (vertices plus `vertex_indices` face lists).
pub fn write_ply_mesh(
    mesh: &TriangleMesh,
    path: impl AsRef<Path>,
    encoding: PlyEncoding,
) -> Result<()> {
    mesh.validate()?;
    let mut out = BufWriter::new(std::fs::File::create(path.as_ref())?);
    let mut header = String::new();
    header.push_str("ply\n");
    header.push_str(&format!("format {} 1.0\n", encoding_name(encoding)));
    header.push_str(&format!("element vertex {}\n", mesh.vertices.len()));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    header.push_str(&format!("element face {}\n", mesh.triangles.len()));
    header.push_str("property list uchar int vertex_indices\n");
    header.push_str("end_header\n");
    out.write_all(header.as_bytes())?;

    let mut w = BodyWriter::new(out, encoding);
    for v in &mesh.vertices {
        w.f64(v.x)?;
        w.f64(v.y)?;
        w.f64(v.z)?;
        w.end_row()?;
    }
    for t in &mesh.triangles {
        w.u8(3)?;
        for &idx in t {
            w.i32(idx as i32)?;
        }
        w.end_row()?;
    }
    w.out.flush()?;
    Ok(())
}

pub fn write_ply(content: &PlyContent, path: impl AsRef<Path>, encoding: PlyEncoding) -> Result<()> {
    match content {
        PlyContent::Cloud(c) => write_ply_cloud(c, path, encoding),
        PlyContent::Mesh(m) => write_ply_mesh(m, path, encoding),
    }
}
