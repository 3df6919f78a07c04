//! PLY reading and writing for vertex-only clouds.
//!
//! Supported: `format ascii 1.0` and `format binary_little_endian 1.0`, a
//! `vertex` element whose `x`/`y`/`z` properties are `float` or `double`, and
//! colors given either as 8-bit `red`/`green`/`blue` (or `r`/`g`/`b`) or as
//! `Y`/`U`/`V`. RGB input is converted to YUV on load. Other scalar vertex
//! properties are read and ignored.

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::{quantize_channel, rgb_to_yuv, CloudError, Point, PointCloud};

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed header at line {line}: {message}")]
    Header { line: usize, message: String },
    #[error("unsupported PLY feature at line {line}: {message}")]
    Unsupported { line: usize, message: String },
    #[error("vertex element lacks required property `{0}`")]
    MissingProperty(String),
    #[error("truncated body: header declares {expected} vertices, only {found} present (data ends at line {line})")]
    TruncatedAscii {
        expected: usize,
        found: usize,
        line: usize,
    },
    #[error("truncated body: header declares {expected} vertices, only {found} present (data ends at byte {offset})")]
    TruncatedBinary {
        expected: usize,
        found: usize,
        offset: usize,
    },
    #[error("bad value at line {line}: {message}")]
    BadValue { line: usize, message: String },
    #[error("invalid point: {0}")]
    Cloud(#[from] CloudError),
}

/// On-disk encoding of a PLY body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

impl fmt::Display for PlyFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlyFormat::Ascii => "ascii",
            PlyFormat::BinaryLittleEndian => "binary_little_endian",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
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
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Self::F32 | Self::F64)
    }

    fn read_le(self, bytes: &[u8]) -> f64 {
        match self {
            Self::I8 => bytes[0] as i8 as f64,
            Self::U8 => bytes[0] as f64,
            Self::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Self::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Self::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }

    fn parse_ascii(self, token: &str) -> Option<f64> {
        match self {
            Self::F32 => token.parse::<f32>().ok().map(f64::from),
            Self::F64 => token.parse::<f64>().ok(),
            _ => token.parse::<i64>().ok().map(|v| v as f64),
        }
    }
}

#[derive(Debug)]
struct Property {
    name: String,
    ty: ScalarType,
    line: usize,
}

#[derive(Debug, Clone, Copy)]
enum ColorLayout {
    Rgb([usize; 3]),
    Yuv([usize; 3]),
}

#[derive(Debug)]
struct Header {
    format: PlyFormat,
    vertex_count: usize,
    properties: Vec<Property>,
    label: String,
    /// Byte offset of the first body byte.
    body_offset: usize,
    /// 1-based line number of the first body line (ASCII only).
    body_line: usize,
}

struct Layout {
    position: [usize; 3],
    color: ColorLayout,
}

impl Header {
    fn find(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|p| p.name == name)
    }

    fn layout(&self) -> Result<Layout, PlyError> {
        let mut position = [0; 3];
        for (slot, name) in position.iter_mut().zip(["x", "y", "z"]) {
            let index = self
                .find(name)
                .ok_or_else(|| PlyError::MissingProperty(name.to_string()))?;
            let prop = &self.properties[index];
            if !prop.ty.is_float() {
                return Err(PlyError::Unsupported {
                    line: prop.line,
                    message: format!("position property `{name}` must be float or double"),
                });
            }
            *slot = index;
        }

        let lookup = |names: [&str; 3]| -> Option<[usize; 3]> {
            Some([self.find(names[0])?, self.find(names[1])?, self.find(names[2])?])
        };
        let color = if let Some(idx) =
            lookup(["red", "green", "blue"]).or_else(|| lookup(["r", "g", "b"]))
        {
            for &i in &idx {
                let prop = &self.properties[i];
                if prop.ty != ScalarType::U8 {
                    return Err(PlyError::Unsupported {
                        line: prop.line,
                        message: format!("RGB property `{}` must be uchar", prop.name),
                    });
                }
            }
            ColorLayout::Rgb(idx)
        } else if let Some(idx) = lookup(["Y", "U", "V"]) {
            for &i in &idx {
                let prop = &self.properties[i];
                if !(prop.ty == ScalarType::U8 || prop.ty.is_float()) {
                    return Err(PlyError::Unsupported {
                        line: prop.line,
                        message: format!(
                            "YUV property `{}` must be uchar, float or double",
                            prop.name
                        ),
                    });
                }
            }
            ColorLayout::Yuv(idx)
        } else {
            return Err(PlyError::MissingProperty(
                "red/green/blue or Y/U/V".to_string(),
            ));
        };
        Ok(Layout { position, color })
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut vertex_count = None;
    let mut properties = Vec::new();
    let mut label = String::new();
    // Name of the element whose properties are currently being declared.
    let mut current: Option<String> = None;

    loop {
        let rest = &bytes[offset..];
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return Err(PlyError::Header {
                line: line_no + 1,
                message: "missing `end_header`".into(),
            });
        };
        line_no += 1;
        let raw = &rest[..end];
        offset += end + 1;
        let text = std::str::from_utf8(raw)
            .map_err(|_| PlyError::Header {
                line: line_no,
                message: "header is not valid UTF-8".into(),
            })?
            .trim_end_matches('\r');
        let header_err = |message: String| PlyError::Header {
            line: line_no,
            message,
        };

        if line_no == 1 {
            if text.trim() != "ply" {
                return Err(header_err("first line must be `ply`".into()));
            }
            continue;
        }
        let mut tokens = text.split_whitespace();
        let Some(keyword) = tokens.next() else {
            continue;
        };
        match keyword {
            "format" => {
                let kind = tokens.next().unwrap_or_default();
                let version = tokens.next().unwrap_or_default();
                if version != "1.0" {
                    return Err(header_err(format!("unknown format version `{version}`")));
                }
                format = Some(match kind {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    "binary_big_endian" => {
                        return Err(PlyError::Unsupported {
                            line: line_no,
                            message: "big-endian bodies are not supported".into(),
                        })
                    }
                    other => return Err(header_err(format!("unknown format `{other}`"))),
                });
            }
            "comment" => {
                if let Some(rest) = text.trim_start().strip_prefix("comment label ") {
                    label = rest.to_string();
                }
            }
            "obj_info" => {}
            "element" => {
                let name = tokens
                    .next()
                    .ok_or_else(|| header_err("element without a name".into()))?;
                let count: usize = tokens
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| header_err(format!("element `{name}` has no valid count")))?;
                if name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(header_err("duplicate vertex element".into()));
                    }
                    vertex_count = Some(count);
                } else if count > 0 {
                    return Err(PlyError::Unsupported {
                        line: line_no,
                        message: format!("non-empty element `{name}`"),
                    });
                }
                current = Some(name.to_string());
            }
            "property" => {
                let Some(element) = current.as_deref() else {
                    return Err(header_err("property before any element".into()));
                };
                let ty_name = tokens.next().unwrap_or_default();
                if ty_name == "list" {
                    if element == "vertex" {
                        return Err(PlyError::Unsupported {
                            line: line_no,
                            message: "list properties on vertices".into(),
                        });
                    }
                    continue;
                }
                let ty = ScalarType::parse(ty_name).ok_or_else(|| PlyError::Unsupported {
                    line: line_no,
                    message: format!("property type `{ty_name}`"),
                })?;
                let name = tokens
                    .next()
                    .ok_or_else(|| header_err("property without a name".into()))?;
                if element == "vertex" {
                    if properties.iter().any(|p: &Property| p.name == name) {
                        return Err(header_err(format!("duplicate property `{name}`")));
                    }
                    properties.push(Property {
                        name: name.to_string(),
                        ty,
                        line: line_no,
                    });
                }
            }
            "end_header" => break,
            other => return Err(header_err(format!("unknown keyword `{other}`"))),
        }
    }

    let format = format.ok_or_else(|| PlyError::Header {
        line: line_no,
        message: "no `format` line".into(),
    })?;
    let vertex_count = vertex_count.ok_or_else(|| PlyError::Header {
        line: line_no,
        message: "no `element vertex` line".into(),
    })?;
    Ok(Header {
        format,
        vertex_count,
        properties,
        label,
        body_offset: offset,
        body_line: line_no + 1,
    })
}

fn make_point(values: &[f64], layout: &Layout) -> Point {
    let position = layout.position.map(|i| values[i]);
    let color = match layout.color {
        ColorLayout::Rgb([r, g, b]) => rgb_to_yuv(values[r], values[g], values[b]),
        ColorLayout::Yuv(idx) => idx.map(|i| values[i]),
    };
    Point::new(position, color)
}

fn read_ascii_body(bytes: &[u8], header: &Header, layout: &Layout) -> Result<Vec<Point>, PlyError> {
    let body = std::str::from_utf8(&bytes[header.body_offset..]).map_err(|e| {
        PlyError::BadValue {
            line: header.body_line,
            message: format!("body is not valid UTF-8 ({e})"),
        }
    })?;
    let mut points = Vec::with_capacity(header.vertex_count);
    let mut values = vec![0.0; header.properties.len()];
    let mut line = header.body_line - 1;
    let mut lines = body.lines();
    while points.len() < header.vertex_count {
        let Some(text) = lines.next() else {
            return Err(PlyError::TruncatedAscii {
                expected: header.vertex_count,
                found: points.len(),
                line,
            });
        };
        line += 1;
        let mut tokens = text.split_whitespace().peekable();
        if tokens.peek().is_none() {
            continue;
        }
        for (slot, prop) in values.iter_mut().zip(&header.properties) {
            let token = tokens.next().ok_or_else(|| PlyError::BadValue {
                line,
                message: format!("missing value for `{}`", prop.name),
            })?;
            *slot = prop.ty.parse_ascii(token).ok_or_else(|| PlyError::BadValue {
                line,
                message: format!("cannot parse `{token}` as {:?} for `{}`", prop.ty, prop.name),
            })?;
        }
        if tokens.next().is_some() {
            return Err(PlyError::BadValue {
                line,
                message: "more values than declared properties".into(),
            });
        }
        points.push(make_point(&values, layout));
    }
    Ok(points)
}

fn read_binary_body(bytes: &[u8], header: &Header, layout: &Layout) -> Vec<Point> {
    let record: usize = header.properties.iter().map(|p| p.ty.size()).sum();
    let mut values = vec![0.0; header.properties.len()];
    let body = &bytes[header.body_offset..];
    body.chunks_exact(record)
        .take(header.vertex_count)
        .map(|chunk| {
            let mut at = 0;
            for (slot, prop) in values.iter_mut().zip(&header.properties) {
                *slot = prop.ty.read_le(&chunk[at..]);
                at += prop.ty.size();
            }
            make_point(&values, layout)
        })
        .collect()
}

/// Parses a PLY document held in memory.
pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud, PlyError> {
    let header = parse_header(bytes)?;
    let layout = header.layout()?;
    let points = match header.format {
        PlyFormat::Ascii => read_ascii_body(bytes, &header, &layout)?,
        PlyFormat::BinaryLittleEndian => {
            let points = read_binary_body(bytes, &header, &layout);
            if points.len() < header.vertex_count {
                let record: usize = header.properties.iter().map(|p| p.ty.size()).sum();
                return Err(PlyError::TruncatedBinary {
                    expected: header.vertex_count,
                    found: points.len(),
                    offset: header.body_offset + points.len() * record,
                });
            }
            points
        }
    };
    Ok(PointCloud::new(points)?.with_label(header.label))
}

/// Reads a PLY file from disk.
pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud, PlyError> {
    parse_ply(&fs::read(path)?)
}

/// Serializes a cloud: `double` positions and `uchar` `Y`/`U`/`V` colors.
pub fn write_ply<W: Write>(cloud: &PointCloud, format: PlyFormat, out: W) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "ply")?;
    writeln!(out, "format {format} 1.0")?;
    if !cloud.label().is_empty() {
        writeln!(out, "comment label {}", cloud.label())?;
    }
    writeln!(out, "element vertex {}", cloud.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(out, "property double {axis}")?;
    }
    for channel in ["Y", "U", "V"] {
        writeln!(out, "property uchar {channel}")?;
    }
    writeln!(out, "end_header")?;
    for p in cloud.points() {
        let [y, u, v] = p.color.map(quantize_channel);
        match format {
            PlyFormat::Ascii => {
                let [px, py, pz] = p.position;
                writeln!(out, "{px} {py} {pz} {y} {u} {v}")?;
            }
            PlyFormat::BinaryLittleEndian => {
                for c in p.position {
                    out.write_all(&c.to_le_bytes())?;
                }
                out.write_all(&[y, u, v])?;
            }
        }
    }
    out.flush()
}

/// Writes a cloud to `path`. Colors are rounded to 8-bit codes.
pub fn save_ply(cloud: &PointCloud, path: impl AsRef<Path>, format: PlyFormat) -> Result<(), PlyError> {
    let file = fs::File::create(path)?;
    write_ply(cloud, format, file)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE_POINTS: &str = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n0 0 0 0 0 0\n1.5 2 3 255 255 255\n-4 5 6.25 255 0 0\n";

    fn binary_three_points() -> Vec<u8> {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n".to_vec();
        let rows: [([f32; 3], [u8; 3]); 3] = [
            ([0.0, 0.0, 0.0], [0, 0, 0]),
            ([1.5, 2.0, 3.0], [255, 255, 255]),
            ([-4.0, 5.0, 6.25], [255, 0, 0]),
        ];
        for (pos, rgb) in rows {
            for c in pos {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            bytes.extend_from_slice(&rgb);
        }
        bytes
    }

    #[test]
    fn ascii_points_in_order() {
        let cloud = parse_ply(THREE_POINTS.as_bytes()).unwrap();
        let pos: Vec<_> = cloud.positions().collect();
        assert_eq!(pos, vec![[0.0, 0.0, 0.0], [1.5, 2.0, 3.0], [-4.0, 5.0, 6.25]]);
        assert_eq!(cloud.points()[0].color, [0.0, 127.5, 127.5]);
        assert_eq!(cloud.points()[2].color, rgb_to_yuv(255.0, 0.0, 0.0));
    }

    #[test]
    fn binary_matches_ascii() {
        let ascii = parse_ply(THREE_POINTS.as_bytes()).unwrap();
        let binary = parse_ply(&binary_three_points()).unwrap();
        assert_eq!(ascii, binary);
    }

    #[test]
    fn short_rgb_aliases_and_crlf() {
        let text = THREE_POINTS
            .replace("red", "r")
            .replace("green", "g")
            .replace("blue", "b")
            .replace('\n', "\r\n");
        let cloud = parse_ply(text.as_bytes()).unwrap();
        assert_eq!(cloud, parse_ply(THREE_POINTS.as_bytes()).unwrap());
    }

    #[test]
    fn truncated_ascii_names_line() {
        let text = THREE_POINTS.replace("vertex 3", "vertex 5");
        match parse_ply(text.as_bytes()) {
            Err(PlyError::TruncatedAscii { expected: 5, found: 3, line }) => assert_eq!(line, 13),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_binary_names_offset() {
        let mut bytes = binary_three_points();
        let header_len = bytes.len() - 3 * 15;
        bytes.truncate(bytes.len() - 4);
        match parse_ply(&bytes) {
            Err(PlyError::TruncatedBinary { expected: 3, found: 2, offset }) => {
                assert_eq!(offset, header_len + 30)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_errors() {
        let no_magic = THREE_POINTS.replacen("ply", "plx", 1);
        assert!(matches!(
            parse_ply(no_magic.as_bytes()),
            Err(PlyError::Header { line: 1, .. })
        ));
        let no_end = "ply\nformat ascii 1.0\nelement vertex 1\n";
        assert!(matches!(parse_ply(no_end.as_bytes()), Err(PlyError::Header { .. })));
        let big_endian = THREE_POINTS.replace("ascii", "binary_big_endian");
        assert!(matches!(
            parse_ply(big_endian.as_bytes()),
            Err(PlyError::Unsupported { line: 2, .. })
        ));
        let int_positions = THREE_POINTS.replace("float x", "int x");
        assert!(matches!(
            parse_ply(int_positions.as_bytes()),
            Err(PlyError::Unsupported { line: 4, .. })
        ));
        let bad_type = THREE_POINTS.replace("float y", "quad y");
        assert!(matches!(
            parse_ply(bad_type.as_bytes()),
            Err(PlyError::Unsupported { line: 5, .. })
        ));
        let no_color = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
        assert!(matches!(
            parse_ply(no_color.as_bytes()),
            Err(PlyError::MissingProperty(_))
        ));
    }

    #[test]
    fn bad_ascii_value_names_line() {
        let text = THREE_POINTS.replace("1.5 2 3", "1.5 two 3");
        assert!(matches!(
            parse_ply(text.as_bytes()),
            Err(PlyError::BadValue { line: 12, .. })
        ));
    }

    #[test]
    fn extra_scalar_properties_and_empty_faces_are_skipped() {
        let text = "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nproperty float nx\nproperty uchar Y\nproperty uchar U\nproperty uchar V\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n1 2 3 0.5 10 20 30\n";
        let cloud = parse_ply(text.as_bytes()).unwrap();
        assert_eq!(cloud.points()[0], Point::new([1.0, 2.0, 3.0], [10.0, 20.0, 30.0]));
    }

    #[test]
    fn label_survives_write_and_read() {
        let cloud = PointCloud::new(vec![Point::new([0.1, 0.2, 0.3], [1.0, 2.0, 3.0])])
            .unwrap()
            .with_label("frame 0001");
        let mut buf = Vec::new();
        write_ply(&cloud, PlyFormat::Ascii, &mut buf).unwrap();
        assert_eq!(parse_ply(&buf).unwrap().label(), "frame 0001");
    }
}
