//! PLY container reading and writing.
//!
//! The reader accepts `ascii` and `binary_little_endian` files with a
//! `vertex` element carrying x/y/z and red/green/blue (or r/g/b). Other
//! vertex properties and other elements are skipped. The writer always emits
//! the canonical layout: `float x, y, z` followed by `uchar red, green, blue`,
//! which packs into 15-byte binary records.

use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::cloud::{Point, PointCloud};

/// Size of one canonical binary vertex record.
pub const RECORD_SIZE: usize = 15;

const MAX_HEADER_BYTES: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("malformed PLY header (line {line}): {message}")]
    Header { line: usize, message: String },
    #[error("unsupported PLY encoding `{0}`")]
    UnsupportedEncoding(String),
    #[error("vertex element lacks required property `{0}`")]
    MissingProperty(&'static str),
    #[error("vertex count mismatch: header declares {declared}, data holds {found}")]
    VertexCount { declared: u64, found: u64 },
    #[error("vertex {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("malformed data in {element} row {index}: {message}")]
    Row {
        element: String,
        index: u64,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

impl PlyEncoding {
    pub fn header_name(self) -> &'static str {
        match self {
            PlyEncoding::Ascii => "ascii",
            PlyEncoding::BinaryLittleEndian => "binary_little_endian",
        }
    }
}

impl fmt::Display for PlyEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.header_name())
    }
}

impl FromStr for PlyEncoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ascii" => Ok(PlyEncoding::Ascii),
            "binary" | "binary_little_endian" => Ok(PlyEncoding::BinaryLittleEndian),
            other => Err(format!("unknown PLY encoding `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    pub fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, ScalarType::F32 | ScalarType::F64)
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn parse_ascii(self, token: &str) -> Option<f64> {
        match self {
            ScalarType::F32 => token.parse::<f32>().ok().map(f64::from),
            ScalarType::F64 => token.parse::<f64>().ok(),
            _ => token.parse::<i64>().ok().map(|v| v as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyDef {
    pub name: String,
    pub kind: PropertyKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementDef {
    pub name: String,
    pub count: u64,
    pub properties: Vec<PropertyDef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyHeader {
    pub encoding: PlyEncoding,
    pub comments: Vec<String>,
    pub elements: Vec<ElementDef>,
    /// Byte offset of the first data byte.
    pub data_offset: usize,
}

impl PlyHeader {
    pub fn vertex_element(&self) -> Option<&ElementDef> {
        self.elements.iter().find(|e| e.name == "vertex")
    }

    pub fn vertex_count(&self) -> Option<u64> {
        self.vertex_element().map(|e| e.count)
    }
}

fn header_err(line: usize, message: impl Into<String>) -> PlyError {
    PlyError::Header {
        line,
        message: message.into(),
    }
}

/// Parses the header only.
pub fn read_header(bytes: &[u8]) -> Result<PlyHeader, PlyError> {
    let mut offset = 0usize;
    let mut line_no = 0usize;
    let mut encoding = None;
    let mut comments = Vec::new();
    let mut elements: Vec<ElementDef> = Vec::new();

    loop {
        if offset >= bytes.len() {
            return Err(header_err(
                line_no + 1,
                "unexpected end of input before end_header",
            ));
        }
        if offset > MAX_HEADER_BYTES {
            return Err(header_err(line_no + 1, "header exceeds 64 KiB"));
        }
        let rest = &bytes[offset..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| header_err(line_no + 1, "unterminated header line"))?;
        let raw = &rest[..end];
        offset += end + 1;
        line_no += 1;
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw)
            .map_err(|_| header_err(line_no, "header is not valid UTF-8"))?;

        if line_no == 1 {
            if line.trim_end() != "ply" {
                return Err(header_err(1, "missing `ply` magic"));
            }
            continue;
        }

        let mut words = line.split_ascii_whitespace();
        let Some(keyword) = words.next() else {
            continue;
        };
        match keyword {
            "format" => {
                let name = words
                    .next()
                    .ok_or_else(|| header_err(line_no, "format line lacks an encoding"))?;
                let enc = match name {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    "binary_big_endian" => {
                        return Err(PlyError::UnsupportedEncoding(name.to_string()))
                    }
                    other => return Err(header_err(line_no, format!("unknown format `{other}`"))),
                };
                match words.next() {
                    Some("1.0") => {}
                    Some(v) => {
                        return Err(header_err(line_no, format!("unsupported version `{v}`")))
                    }
                    None => return Err(header_err(line_no, "format line lacks a version")),
                }
                if encoding.replace(enc).is_some() {
                    return Err(header_err(line_no, "duplicate format line"));
                }
            }
            "comment" | "obj_info" => {
                let text = line[keyword.len()..].trim_start();
                comments.push(text.to_string());
            }
            "element" => {
                let name = words
                    .next()
                    .ok_or_else(|| header_err(line_no, "element line lacks a name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse::<u64>().ok())
                    .ok_or_else(|| header_err(line_no, "element count is not an integer"))?;
                if elements.iter().any(|e| e.name == name) {
                    return Err(header_err(line_no, format!("duplicate element `{name}`")));
                }
                elements.push(ElementDef {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| header_err(line_no, "property before any element"))?;
                let ty = words
                    .next()
                    .ok_or_else(|| header_err(line_no, "property lacks a type"))?;
                let kind = if ty == "list" {
                    let count = words.next().and_then(ScalarType::parse);
                    let item = words.next().and_then(ScalarType::parse);
                    match (count, item) {
                        (Some(count), Some(item)) if count.is_integer() => {
                            PropertyKind::List { count, item }
                        }
                        _ => return Err(header_err(line_no, "malformed list property")),
                    }
                } else {
                    PropertyKind::Scalar(ScalarType::parse(ty).ok_or_else(|| {
                        header_err(line_no, format!("unknown property type `{ty}`"))
                    })?)
                };
                let name = words
                    .next()
                    .ok_or_else(|| header_err(line_no, "property lacks a name"))?;
                if element.properties.iter().any(|p| p.name == name) {
                    return Err(header_err(line_no, format!("duplicate property `{name}`")));
                }
                element.properties.push(PropertyDef {
                    name: name.to_string(),
                    kind,
                });
            }
            "end_header" => break,
            other => return Err(header_err(line_no, format!("unknown keyword `{other}`"))),
        }
    }

    let encoding = encoding.ok_or_else(|| header_err(line_no, "missing format line"))?;
    Ok(PlyHeader {
        encoding,
        comments,
        elements,
        data_offset: offset,
    })
}

/// Column positions of the properties the reader needs.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: [usize; 3],
}

impl VertexLayout {
    fn resolve(element: &ElementDef) -> Result<Self, PlyError> {
        let find = |names: &[&str], label: &'static str, integer: bool| {
            element
                .properties
                .iter()
                .position(|p| names.contains(&p.name.as_str()))
                .filter(|&i| match element.properties[i].kind {
                    PropertyKind::Scalar(t) => !integer || t.is_integer(),
                    PropertyKind::List { .. } => false,
                })
                .ok_or(PlyError::MissingProperty(label))
        };
        Ok(VertexLayout {
            xyz: [
                find(&["x"], "x", false)?,
                find(&["y"], "y", false)?,
                find(&["z"], "z", false)?,
            ],
            rgb: [
                find(&["red", "r", "diffuse_red"], "red", true)?,
                find(&["green", "g", "diffuse_green"], "green", true)?,
                find(&["blue", "b", "diffuse_blue"], "blue", true)?,
            ],
        })
    }

    fn point(&self, values: &[f64], index: u64) -> Result<Point, PlyError> {
        let mut rgb = [0u8; 3];
        for (slot, &col) in rgb.iter_mut().zip(&self.rgb) {
            let v = values[col];
            if !(0.0..=255.0).contains(&v) {
                return Err(PlyError::Row {
                    element: "vertex".into(),
                    index,
                    message: format!("color value {v} outside 0..=255"),
                });
            }
            *slot = v as u8;
        }
        let p = Point::new(
            values[self.xyz[0]],
            values[self.xyz[1]],
            values[self.xyz[2]],
            rgb[0],
            rgb[1],
            rgb[2],
        );
        if !p.is_finite() {
            return Err(PlyError::NonFinite {
                index: index as usize,
            });
        }
        Ok(p)
    }
}

/// Reads a PLY document held in memory.
pub fn load_ply(bytes: &[u8]) -> Result<PointCloud, PlyError> {
    load_ply_with_header(bytes).map(|(_, cloud)| cloud)
}

/// Reads a PLY document, also returning its parsed header.
pub fn load_ply_with_header(bytes: &[u8]) -> Result<(PlyHeader, PointCloud), PlyError> {
    let header = read_header(bytes)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| header_err(0, "no vertex element"))?;
    let layout = VertexLayout::resolve(&header.elements[vertex_pos])?;
    let data = &bytes[header.data_offset..];
    let points = match header.encoding {
        PlyEncoding::Ascii => read_ascii(&header, vertex_pos, &layout, data)?,
        PlyEncoding::BinaryLittleEndian => read_binary(&header, vertex_pos, &layout, data)?,
    };
    Ok((header, PointCloud::from_valid(points)))
}

pub fn read_ply<R: Read>(mut reader: R) -> Result<PointCloud, PlyError> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    load_ply(&buf)
}

pub fn read_ply_file(path: impl AsRef<Path>) -> Result<PointCloud, PlyError> {
    load_ply(&fs::read(path)?)
}

fn read_ascii(
    header: &PlyHeader,
    vertex_pos: usize,
    layout: &VertexLayout,
    data: &[u8],
) -> Result<Vec<Point>, PlyError> {
    let text = std::str::from_utf8(data).map_err(|e| PlyError::Row {
        element: "vertex".into(),
        index: 0,
        message: format!("ASCII body is not valid UTF-8: {e}"),
    })?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());

    for element in &header.elements[..vertex_pos] {
        for row in 0..element.count {
            if lines.next().is_none() {
                return Err(PlyError::Row {
                    element: element.name.clone(),
                    index: row,
                    message: "unexpected end of data".into(),
                });
            }
        }
    }

    let element = &header.elements[vertex_pos];
    let declared = element.count;
    let mut points = Vec::with_capacity(declared.min(data.len() as u64 / 12) as usize);
    let mut values = vec![0.0f64; element.properties.len()];
    for index in 0..declared {
        let Some(line) = lines.next() else {
            return Err(PlyError::VertexCount {
                declared,
                found: index,
            });
        };
        let mut tokens = line.split_ascii_whitespace();
        let row_err = |message: String| PlyError::Row {
            element: "vertex".into(),
            index,
            message,
        };
        for (slot, prop) in values.iter_mut().zip(&element.properties) {
            match prop.kind {
                PropertyKind::Scalar(ty) => {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| row_err(format!("missing value for `{}`", prop.name)))?;
                    *slot = ty
                        .parse_ascii(tok)
                        .ok_or_else(|| row_err(format!("bad {} value `{tok}`", prop.name)))?;
                }
                PropertyKind::List { count, .. } => {
                    let n = tokens
                        .next()
                        .and_then(|t| count.parse_ascii(t))
                        .filter(|n| *n >= 0.0)
                        .ok_or_else(|| row_err(format!("bad list length for `{}`", prop.name)))?;
                    for _ in 0..n as u64 {
                        tokens
                            .next()
                            .ok_or_else(|| row_err(format!("short list `{}`", prop.name)))?;
                    }
                }
            }
        }
        if tokens.next().is_some() {
            return Err(row_err("trailing values".into()));
        }
        points.push(layout.point(&values, index)?);
    }

    let trailing_elements: u64 = header.elements[vertex_pos + 1..]
        .iter()
        .map(|e| e.count)
        .sum();
    if trailing_elements == 0 {
        let extra = lines.count() as u64;
        if extra > 0 {
            return Err(PlyError::VertexCount {
                declared,
                found: declared + extra,
            });
        }
    }
    Ok(points)
}

fn read_binary(
    header: &PlyHeader,
    vertex_pos: usize,
    layout: &VertexLayout,
    data: &[u8],
) -> Result<Vec<Point>, PlyError> {
    let mut cursor = 0usize;
    for element in &header.elements[..vertex_pos] {
        for row in 0..element.count {
            cursor = skip_binary_row(element, row, data, cursor)?;
        }
    }

    let element = &header.elements[vertex_pos];
    let declared = element.count;
    let fixed: Option<usize> = element
        .properties
        .iter()
        .map(|p| match p.kind {
            PropertyKind::Scalar(t) => Some(t.size()),
            PropertyKind::List { .. } => None,
        })
        .sum();

    let remaining = data.len() - cursor;
    if let Some(stride) = fixed {
        let available = remaining.checked_div(stride).map_or(u64::MAX, |n| n as u64);
        if available < declared {
            return Err(PlyError::VertexCount {
                declared,
                found: available,
            });
        }
    }

    let mut points = Vec::with_capacity(declared.min(remaining as u64) as usize);
    let mut values = vec![0.0f64; element.properties.len()];
    for index in 0..declared {
        for (slot, prop) in values.iter_mut().zip(&element.properties) {
            match prop.kind {
                PropertyKind::Scalar(ty) => {
                    let bytes =
                        data.get(cursor..cursor + ty.size())
                            .ok_or(PlyError::VertexCount {
                                declared,
                                found: index,
                            })?;
                    *slot = ty.read_le(bytes);
                    cursor += ty.size();
                }
                PropertyKind::List { count, item } => {
                    cursor = skip_list(count, item, data, cursor).ok_or(PlyError::VertexCount {
                        declared,
                        found: index,
                    })?;
                }
            }
        }
        points.push(layout.point(&values, index)?);
    }

    let trailing_elements: u64 = header.elements[vertex_pos + 1..]
        .iter()
        .map(|e| e.count)
        .sum();
    if trailing_elements == 0 && cursor < data.len() {
        if let Some(stride) = fixed.filter(|&s| s > 0) {
            return Err(PlyError::VertexCount {
                declared,
                found: declared + ((data.len() - cursor) / stride) as u64,
            });
        }
    }
    Ok(points)
}

fn skip_list(count: ScalarType, item: ScalarType, data: &[u8], cursor: usize) -> Option<usize> {
    let len_bytes = data.get(cursor..cursor + count.size())?;
    let n = count.read_le(len_bytes);
    if n < 0.0 {
        return None;
    }
    let end = (cursor + count.size()).checked_add((n as usize).checked_mul(item.size())?)?;
    (end <= data.len()).then_some(end)
}

fn skip_binary_row(
    element: &ElementDef,
    row: u64,
    data: &[u8],
    mut cursor: usize,
) -> Result<usize, PlyError> {
    let short = || PlyError::Row {
        element: element.name.clone(),
        index: row,
        message: "unexpected end of data".into(),
    };
    for prop in &element.properties {
        cursor = match prop.kind {
            PropertyKind::Scalar(t) => {
                let end = cursor + t.size();
                if end > data.len() {
                    return Err(short());
                }
                end
            }
            PropertyKind::List { count, item } => {
                skip_list(count, item, data, cursor).ok_or_else(short)?
            }
        };
    }
    Ok(cursor)
}

fn write_header<W: Write>(w: &mut W, count: usize, enc: PlyEncoding) -> io::Result<()> {
    write!(
        w,
        "ply\nformat {} 1.0\nelement vertex {count}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         end_header\n",
        enc.header_name()
    )
}

/// Writes the canonical PLY layout. Coordinates are narrowed to `f32`.
pub fn write_ply<W: Write>(w: &mut W, cloud: &PointCloud, enc: PlyEncoding) -> io::Result<()> {
    write_header(w, cloud.len(), enc)?;
    match enc {
        PlyEncoding::Ascii => {
            for p in cloud.points() {
                writeln!(
                    w,
                    "{} {} {} {} {} {}",
                    p.x as f32, p.y as f32, p.z as f32, p.r, p.g, p.b
                )?;
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            let mut buf = Vec::with_capacity(cloud.len() * RECORD_SIZE);
            for p in cloud.points() {
                encode_record(p, &mut buf);
            }
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

/// Appends one packed 15-byte little-endian record.
pub fn encode_record(p: &Point, out: &mut Vec<u8>) {
    out.extend_from_slice(&(p.x as f32).to_le_bytes());
    out.extend_from_slice(&(p.y as f32).to_le_bytes());
    out.extend_from_slice(&(p.z as f32).to_le_bytes());
    out.extend_from_slice(&[p.r, p.g, p.b]);
}

/// Decodes one packed record produced by [`encode_record`].
pub fn decode_record(b: &[u8; RECORD_SIZE]) -> Point {
    let f = |i: usize| f32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]) as f64;
    Point::new(f(0), f(4), f(8), b[12], b[13], b[14])
}

pub fn save_ply(cloud: &PointCloud, enc: PlyEncoding) -> Vec<u8> {
    let mut out = Vec::with_capacity(200 + cloud.len() * RECORD_SIZE);
    write_ply(&mut out, cloud, enc).expect("writing to a Vec cannot fail");
    out
}

pub fn write_ply_file(
    path: impl AsRef<Path>,
    cloud: &PointCloud,
    enc: PlyEncoding,
) -> io::Result<()> {
    fs::write(path, save_ply(cloud, enc))
}
