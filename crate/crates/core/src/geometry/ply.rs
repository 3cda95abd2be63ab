//! PLY point-cloud reader (ASCII and binary little-endian) and writer.
//!
//! Only the `x`, `y`, `z` vertex properties are used; other properties and
//! elements are parsed and skipped. The grid resolution is read from a
//! `comment resolution N` header line when present, otherwise from the
//! caller's override, otherwise the smallest power of two that holds every
//! coordinate.

use std::fs;
use std::path::Path;

use super::PointCloud;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
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
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    resolution: Option<u32>,
    body_offset: usize,
    body_line: usize,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut resolution = None;
    loop {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| perr(line_no + 1, "header not terminated by end_header"))?;
        line_no += 1;
        let raw = &bytes[offset..offset + end];
        offset += end + 1;
        let line = std::str::from_utf8(raw).map_err(|_| perr(line_no, "header is not UTF-8"))?.trim();
        let tok: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if line != "ply" {
                return Err(perr(1, "missing 'ply' magic"));
            }
            continue;
        }
        match tok.first().copied() {
            Some("format") => {
                format = Some(match tok.get(1).copied() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    other => return Err(perr(line_no, format!("unsupported format {other:?}"))),
                });
            }
            Some("comment") => {
                if tok.get(1) == Some(&"resolution") {
                    let r = tok
                        .get(2)
                        .and_then(|v| v.parse::<u32>().ok())
                        .ok_or_else(|| perr(line_no, "bad resolution comment"))?;
                    resolution = Some(r);
                }
            }
            Some("obj_info") => {}
            Some("element") => {
                if tok.len() != 3 {
                    return Err(perr(line_no, "element needs a name and a count"));
                }
                let count = tok[2].parse().map_err(|_| perr(line_no, "bad element count"))?;
                elements.push(Element { name: tok[1].to_string(), count, props: Vec::new() });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| perr(line_no, "property before element"))?;
                let prop = if tok.get(1) == Some(&"list") {
                    if tok.len() != 5 {
                        return Err(perr(line_no, "malformed list property"));
                    }
                    let count = Scalar::parse(tok[2]).ok_or_else(|| perr(line_no, "unknown list count type"))?;
                    let item = Scalar::parse(tok[3]).ok_or_else(|| perr(line_no, "unknown list item type"))?;
                    Property::List { count, item }
                } else {
                    if tok.len() != 3 {
                        return Err(perr(line_no, "malformed property"));
                    }
                    let ty = Scalar::parse(tok[1]).ok_or_else(|| perr(line_no, format!("unknown type {}", tok[1])))?;
                    Property::Scalar { name: tok[2].to_string(), ty }
                };
                el.props.push(prop);
            }
            Some("end_header") => break,
            _ => return Err(perr(line_no, format!("unexpected header line '{line}'"))),
        }
    }
    let format = format.ok_or_else(|| perr(line_no, "missing format line"))?;
    Ok(Header { format, elements, resolution, body_offset: offset, body_line: line_no })
}

fn xyz_indices(el: &Element, line: usize) -> Result<[usize; 3]> {
    let find = |n: &str| {
        el.props
            .iter()
            .position(|p| matches!(p, Property::Scalar { name, .. } if name == n))
            .ok_or_else(|| perr(line, format!("vertex element lacks property {n}")))
    };
    Ok([find("x")?, find("y")?, find("z")?])
}

fn read_vertices(h: &Header, bytes: &[u8]) -> Result<Vec<[f64; 3]>> {
    let vi = h
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| perr(h.body_line, "no vertex element"))?;
    let xyz = xyz_indices(&h.elements[vi], h.body_line)?;
    let body = &bytes[h.body_offset..];
    let mut out = Vec::with_capacity(h.elements[vi].count);
    match h.format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| perr(h.body_line + 1, "body is not UTF-8"))?;
            let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
            for (ei, el) in h.elements.iter().enumerate() {
                for _ in 0..el.count {
                    let (i, l) = lines.next().ok_or_else(|| perr(h.body_line + 1, format!("{} data truncated", el.name)))?;
                    let line = h.body_line + i + 1;
                    if ei != vi {
                        continue;
                    }
                    let vals: Vec<f64> = l
                        .split_whitespace()
                        .map(|t| t.parse::<f64>().map_err(|_| perr(line, format!("bad number '{t}'"))))
                        .collect::<Result<_>>()?;
                    if vals.len() < el.props.len() {
                        return Err(perr(line, "too few vertex values"));
                    }
                    out.push(xyz.map(|k| vals[k]));
                }
                if ei == vi {
                    break;
                }
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut pos = 0usize;
            let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
                let s = body.get(*pos..*pos + n).ok_or_else(|| perr(h.body_line, "binary body truncated"))?;
                *pos += n;
                Ok(s)
            };
            for (ei, el) in h.elements.iter().enumerate() {
                for _ in 0..el.count {
                    let mut vals = Vec::with_capacity(el.props.len());
                    for p in &el.props {
                        match p {
                            Property::Scalar { ty, .. } => vals.push(ty.read_le(take(&mut pos, ty.size())?)),
                            Property::List { count, item } => {
                                let n = count.read_le(take(&mut pos, count.size())?) as usize;
                                take(&mut pos, n * item.size())?;
                                vals.push(f64::NAN);
                            }
                        }
                    }
                    if ei == vi {
                        out.push(xyz.map(|k| vals[k]));
                    }
                }
                if ei == vi {
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// Parses PLY bytes into an integer cloud. Coordinates are rounded to the
/// nearest integer.
pub fn parse_ply(bytes: &[u8], resolution_override: Option<u32>) -> Result<PointCloud> {
    let h = parse_header(bytes)?;
    let verts = read_vertices(&h, bytes)?;
    let mut pts = Vec::with_capacity(verts.len());
    let mut max = 0i64;
    for v in &verts {
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("PLY vertex".into()));
        }
        let q = v.map(|c| c.round() as i64);
        max = max.max(*q.iter().max().unwrap());
        pts.push(q);
    }
    let resolution = resolution_override
        .or(h.resolution)
        .unwrap_or_else(|| ((max + 1).max(1) as u64).next_power_of_two() as u32);
    if let Some(p) = pts.iter().find(|p| p.iter().any(|&c| c < 0 || c >= resolution as i64)) {
        return Err(Error::OutOfRange { coord: *p, resolution });
    }
    PointCloud::new(pts.into_iter().map(|p| p.map(|c| c as u32)).collect(), resolution)
}

pub fn load_point_cloud(path: &Path, resolution_override: Option<u32>) -> Result<PointCloud> {
    parse_ply(&fs::read(path)?, resolution_override)
}

/// Serializes a cloud with `float` x/y/z properties and a resolution comment.
pub fn write_ply(cloud: &PointCloud, format: PlyFormat) -> Vec<u8> {
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut out = format!(
        "ply\nformat {fmt} 1.0\ncomment resolution {}\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.resolution(),
        cloud.len()
    )
    .into_bytes();
    for p in cloud.points() {
        match format {
            PlyFormat::Ascii => out.extend_from_slice(format!("{} {} {}\n", p[0], p[1], p[2]).as_bytes()),
            PlyFormat::BinaryLittleEndian => {
                for c in p {
                    out.extend_from_slice(&(*c as f32).to_le_bytes());
                }
            }
        }
    }
    out
}
