//! Vertex-only PLY reader (ascii and binary) and an ascii writer.

use std::path::Path;

use nalgebra::Vector3;

use super::{read_file, write_file, IoError};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(name: &str) -> Result<Self, IoError> {
        Ok(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(IoError::Ply(format!("unknown scalar type '{other}'"))),
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

    fn read(self, bytes: &[u8], format: Format) -> f64 {
        macro_rules! num {
            ($t:ty) => {{
                let arr = bytes[..std::mem::size_of::<$t>()].try_into().unwrap();
                (if format == Format::BinaryBe { <$t>::from_be_bytes(arr) } else { <$t>::from_le_bytes(arr) }) as f64
            }};
        }
        match self {
            Scalar::I8 => num!(i8),
            Scalar::U8 => num!(u8),
            Scalar::I16 => num!(i16),
            Scalar::U16 => num!(u16),
            Scalar::I32 => num!(i32),
            Scalar::U32 => num!(u32),
            Scalar::F32 => num!(f32),
            Scalar::F64 => num!(f64),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, IoError> {
    let end = find(bytes, b"end_header").ok_or_else(|| IoError::Ply("missing end_header".into()))?;
    let mut body_offset = end + b"end_header".len();
    if bytes.get(body_offset) == Some(&b'\r') {
        body_offset += 1;
    }
    if bytes.get(body_offset) == Some(&b'\n') {
        body_offset += 1;
    }
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| IoError::Ply("header is not utf-8".into()))?;
    let mut lines = text.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(IoError::Ply("not a ply file".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, _] => {
                format = Some(match *f {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    "binary_big_endian" => Format::BinaryBe,
                    other => return Err(IoError::Ply(format!("unknown format '{other}'"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| IoError::Ply(format!("bad count in '{line}'")))?,
                props: Vec::new(),
            }),
            ["property", "list", c, t, _] => elements
                .last_mut()
                .ok_or_else(|| IoError::Ply("property before element".into()))?
                .props
                .push(Property::List(Scalar::parse(c)?, Scalar::parse(t)?)),
            ["property", t, name] => elements
                .last_mut()
                .ok_or_else(|| IoError::Ply("property before element".into()))?
                .props
                .push(Property::Scalar(name.to_string(), Scalar::parse(t)?)),
            _ => return Err(IoError::Ply(format!("unexpected header line '{line}'"))),
        }
    }
    Ok(Header {
        format: format.ok_or_else(|| IoError::Ply("missing format line".into()))?,
        elements,
        body_offset,
    })
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Parses the `vertex` element's x, y, z from PLY bytes. Other elements and
/// properties are skipped.
pub fn read_ply_str(bytes: &[u8]) -> Result<Vec<Vector3<f64>>, IoError> {
    let header = parse_header(bytes)?;
    let body = &bytes[header.body_offset..];
    let vertex_index = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| IoError::Ply("no vertex element".into()))?;
    let vertex = &header.elements[vertex_index];
    let coord = |axis: &str| {
        vertex
            .props
            .iter()
            .position(|p| matches!(p, Property::Scalar(n, _) if n == axis))
            .ok_or_else(|| IoError::Ply(format!("vertex has no '{axis}' property")))
    };
    let idx = [coord("x")?, coord("y")?, coord("z")?];

    let mut points = Vec::with_capacity(vertex.count);
    match header.format {
        Format::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| IoError::Ply("ascii body is not utf-8".into()))?;
            let mut tokens = text.split_whitespace();
            let mut next = || -> Result<f64, IoError> {
                tokens
                    .next()
                    .ok_or_else(|| IoError::Ply("unexpected end of data".into()))?
                    .parse::<f64>()
                    .map_err(|e| IoError::Ply(e.to_string()))
            };
            for (ei, element) in header.elements.iter().enumerate() {
                if ei > vertex_index {
                    break;
                }
                for _ in 0..element.count {
                    let mut values = Vec::with_capacity(element.props.len());
                    for prop in &element.props {
                        match prop {
                            Property::Scalar(..) => values.push(next()?),
                            Property::List(..) => {
                                let len = next()? as usize;
                                for _ in 0..len {
                                    next()?;
                                }
                                values.push(f64::NAN);
                            }
                        }
                    }
                    if ei == vertex_index {
                        points.push(Vector3::new(values[idx[0]], values[idx[1]], values[idx[2]]));
                    }
                }
            }
        }
        format => {
            let mut at = 0usize;
            let take = |at: &mut usize, s: Scalar| -> Result<f64, IoError> {
                let bytes = body
                    .get(*at..*at + s.size())
                    .ok_or_else(|| IoError::Ply("unexpected end of data".into()))?;
                *at += s.size();
                Ok(s.read(bytes, format))
            };
            for (ei, element) in header.elements.iter().enumerate() {
                if ei > vertex_index {
                    break;
                }
                for _ in 0..element.count {
                    let mut values = [0.0; 3];
                    for (pi, prop) in element.props.iter().enumerate() {
                        match prop {
                            Property::Scalar(_, s) => {
                                let v = take(&mut at, *s)?;
                                if let Some(k) = idx.iter().position(|&i| i == pi) {
                                    values[k] = v;
                                }
                            }
                            Property::List(c, t) => {
                                let len = take(&mut at, *c)? as usize;
                                at += len * t.size();
                            }
                        }
                    }
                    if ei == vertex_index {
                        points.push(Vector3::from(values));
                    }
                }
            }
        }
    }
    if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(IoError::Ply("non-finite vertex coordinate".into()));
    }
    Ok(points)
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<Vec<Vector3<f64>>, IoError> {
    let path = path.as_ref();
    read_ply_str(&read_file(path)?).map_err(|e| match e {
        IoError::Ply(m) => IoError::Ply(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_ply_ascii(path: impl AsRef<Path>, points: &[Vector3<f64>]) -> Result<(), IoError> {
    let mut out = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        points.len()
    );
    for p in points {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    write_file(path.as_ref(), out.as_bytes())
}
