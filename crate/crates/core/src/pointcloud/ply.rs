//! Minimal PLY reader/writer for vertex clouds.
//!
//! Supports `ascii 1.0` and `binary_little_endian 1.0`. The `vertex` element
//! must carry `x`, `y`, `z` as float/double; `red`/`green`/`blue` as uchar
//! are read as colour. Any other property or element is skipped by size.

use thiserror::Error;

use super::PointCloud;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlyError {
    #[error("ply header line {line}: {message}")]
    Header { line: usize, message: String },
    #[error("ply body at byte {offset}: {message}")]
    Body { offset: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    line: usize,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    body_start: usize,
}

/// Indices of the vertex properties we care about.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
}

fn header_err(line: usize, message: impl Into<String>) -> PlyError {
    PlyError::Header {
        line,
        message: message.into(),
    }
}

fn body_err(offset: usize, message: impl Into<String>) -> PlyError {
    PlyError::Body {
        offset,
        message: message.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        line_no += 1;
        let end = bytes[pos..]
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| header_err(line_no, "unterminated header (no end_header)"))?;
        let raw = &bytes[pos..pos + end];
        pos += end + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| header_err(line_no, "header is not ascii"))?
            .trim_end_matches('\r');
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or("");
        if line_no == 1 {
            if line != "ply" {
                return Err(header_err(1, "missing `ply` magic"));
            }
            continue;
        }
        match keyword {
            "format" => {
                let kind = words.next().unwrap_or("");
                let version = words.next().unwrap_or("");
                if version != "1.0" {
                    return Err(header_err(
                        line_no,
                        format!("unsupported version `{version}`"),
                    ));
                }
                format = Some(match kind {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => {
                        return Err(header_err(line_no, format!("unsupported format `{other}`")))
                    }
                });
            }
            "comment" | "obj_info" | "" => {}
            "element" => {
                let name = words
                    .next()
                    .ok_or_else(|| header_err(line_no, "element without name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| header_err(line_no, "element without valid count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    line: line_no,
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| header_err(line_no, "property before any element"))?;
                let first = words.next().unwrap_or("");
                if first == "list" {
                    let count = words.next().and_then(Scalar::parse);
                    let item = words.next().and_then(Scalar::parse);
                    match (count, item, words.next()) {
                        (Some(count), Some(item), Some(_)) => {
                            el.properties.push(Property::List { count, item })
                        }
                        _ => return Err(header_err(line_no, "malformed list property")),
                    }
                } else {
                    let ty = Scalar::parse(first)
                        .ok_or_else(|| header_err(line_no, format!("unknown type `{first}`")))?;
                    let name = words
                        .next()
                        .ok_or_else(|| header_err(line_no, "property without name"))?;
                    el.properties.push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
                }
            }
            "end_header" => break,
            other => return Err(header_err(line_no, format!("unexpected keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| header_err(line_no, "missing format line"))?;
    Ok(Header {
        format,
        elements,
        body_start: pos,
    })
}

fn vertex_layout(el: &Element) -> Result<VertexLayout, String> {
    let find = |want: &str| {
        el.properties
            .iter()
            .position(|p| matches!(p, Property::Scalar { name, .. } if name == want))
    };
    let mut xyz = [0; 3];
    for (slot, axis) in xyz.iter_mut().zip(["x", "y", "z"]) {
        let i = find(axis).ok_or_else(|| format!("vertex element lacks `{axis}`"))?;
        if let Property::Scalar { ty, .. } = el.properties[i] {
            if !ty.is_float() {
                return Err(format!("vertex `{axis}` must be float or double"));
            }
        }
        *slot = i;
    }
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    Ok(VertexLayout { xyz, rgb })
}

pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud, PlyError> {
    let header = parse_header(bytes)?;
    let vi = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| header_err(1, "no vertex element"))?;
    let vertex = &header.elements[vi];
    let layout = vertex_layout(vertex).map_err(|m| header_err(vertex.line, m))?;
    let mut body = Body {
        bytes,
        pos: header.body_start,
    };
    let mut points = Vec::new();
    let mut colors = Vec::new();

    for (ei, el) in header.elements.iter().enumerate() {
        for _ in 0..el.count {
            let values = match header.format {
                PlyFormat::Ascii => body.ascii_record(el)?,
                PlyFormat::BinaryLittleEndian => body.binary_record(el)?,
            };
            if ei == vi {
                let p = [
                    values[layout.xyz[0]],
                    values[layout.xyz[1]],
                    values[layout.xyz[2]],
                ];
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(body_err(body.pos, "non-finite vertex coordinate"));
                }
                points.push(p);
                if let Some([r, g, b]) = layout.rgb {
                    colors.push([values[r] as u8, values[g] as u8, values[b] as u8]);
                }
            }
        }
    }
    let trailing_ok = match header.format {
        PlyFormat::Ascii => bytes[body.pos..].iter().all(u8::is_ascii_whitespace),
        PlyFormat::BinaryLittleEndian => body.pos == bytes.len(),
    };
    if !trailing_ok {
        return Err(body_err(body.pos, "trailing data after declared elements"));
    }
    Ok(PointCloud {
        points,
        colors: layout.rgb.map(|_| colors),
    })
}

struct Body<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Body<'_> {
    /// Parses one record; list properties contribute no value to the output.
    fn ascii_record(&mut self, el: &Element) -> Result<Vec<f64>, PlyError> {
        // Records are one per line; skip blank lines.
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        if start >= self.bytes.len() {
            return Err(body_err(
                start,
                format!("unexpected end of data in element `{}`", el.name),
            ));
        }
        let end = self.bytes[start..]
            .iter()
            .position(|b| *b == b'\n')
            .map_or(self.bytes.len(), |e| start + e);
        self.pos = end;
        let line = std::str::from_utf8(&self.bytes[start..end])
            .map_err(|_| body_err(start, "non-ascii record"))?;
        let mut tokens = line.split_whitespace();
        let mut next = |what: &str| -> Result<f64, PlyError> {
            let t = tokens
                .next()
                .ok_or_else(|| body_err(start, format!("record too short, missing {what}")))?;
            t.parse::<f64>()
                .map_err(|_| body_err(start, format!("bad number `{t}`")))
        };
        let mut out = Vec::with_capacity(el.properties.len());
        for p in &el.properties {
            match p {
                Property::Scalar { name, .. } => out.push(next(name)?),
                Property::List { .. } => {
                    let n = next("list count")?;
                    for _ in 0..n as usize {
                        next("list item")?;
                    }
                    out.push(f64::NAN);
                }
            }
        }
        if tokens.next().is_some() {
            return Err(body_err(start, "record has extra values"));
        }
        Ok(out)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8], PlyError> {
        if self.pos + n > self.bytes.len() {
            return Err(body_err(self.pos, format!("truncated {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn binary_record(&mut self, el: &Element) -> Result<Vec<f64>, PlyError> {
        let mut out = Vec::with_capacity(el.properties.len());
        for p in &el.properties {
            match p {
                Property::Scalar { ty, .. } => {
                    let ty = *ty;
                    out.push(ty.read_le(self.take(ty.size(), &el.name)?));
                }
                Property::List { count, item } => {
                    let count = *count;
                    let n = count.read_le(self.take(count.size(), &el.name)?);
                    if n < 0.0 {
                        return Err(body_err(self.pos, "negative list length"));
                    }
                    self.take(n as usize * item.size(), &el.name)?;
                    out.push(f64::NAN);
                }
            }
        }
        Ok(out)
    }
}

/// Writes `x y z` as doubles (binary) or shortest round-trip decimals
/// (ascii), with uchar colour when present.
pub fn write_ply(cloud: &PointCloud, format: PlyFormat) -> Vec<u8> {
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut out = format!(
        "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n",
        cloud.points.len()
    );
    if cloud.colors.is_some() {
        out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    out.push_str("end_header\n");
    let mut bytes = out.into_bytes();
    for (i, p) in cloud.points.iter().enumerate() {
        let rgb = cloud.colors.as_ref().map(|c| c[i]);
        match format {
            PlyFormat::Ascii => {
                let mut line = format!("{} {} {}", p[0], p[1], p[2]);
                if let Some([r, g, b]) = rgb {
                    line.push_str(&format!(" {r} {g} {b}"));
                }
                line.push('\n');
                bytes.extend_from_slice(line.as_bytes());
            }
            PlyFormat::BinaryLittleEndian => {
                for v in p {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                if let Some(c) = rgb {
                    bytes.extend_from_slice(&c);
                }
            }
        }
    }
    bytes
}
