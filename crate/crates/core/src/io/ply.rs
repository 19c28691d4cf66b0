//! PLY reader (ascii and binary little-endian) and binary writer.

use crate::error::{Error, Result};
use crate::mesh::{TriangleMesh, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
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
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            other => return Err(Error::Parse(format!("ply: unknown scalar type {other:?}"))),
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
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Clone, Copy, PartialEq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

/// Sequential value source over either encoding.
trait Source {
    fn read(&mut self, ty: Scalar) -> Result<f64>;
}

struct Binary<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Source for Binary<'_> {
    fn read(&mut self, ty: Scalar) -> Result<f64> {
        let n = ty.size();
        let b = self
            .data
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Parse("ply: truncated body".into()))?;
        self.pos += n;
        Ok(match ty {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b.try_into().unwrap()),
        })
    }
}

struct Ascii<'a> {
    toks: std::str::SplitAsciiWhitespace<'a>,
}

impl Source for Ascii<'_> {
    fn read(&mut self, _ty: Scalar) -> Result<f64> {
        let t = self
            .toks
            .next()
            .ok_or_else(|| Error::Parse("ply: truncated body".into()))?;
        t.parse()
            .map_err(|_| Error::Parse(format!("ply: bad number {t:?}")))
    }
}

fn parse_header(bytes: &[u8]) -> Result<(Encoding, Vec<Element>, usize)> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::Parse("ply: no end_header".into()))?;
    let mut body = end + END.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) != Some(&b'\n') {
        return Err(Error::Parse("ply: end_header not followed by newline".into()));
    }
    body += 1;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Parse("ply: header not utf-8".into()))?;
    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::Parse("ply: missing magic".into()));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _ver] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    other => return Err(Error::Parse(format!("ply: unsupported format {other}"))),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| Error::Parse("ply: bad element count".into()))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Parse("ply: property before element".into()))?
                .props
                .push(Property::List(name.to_string(), Scalar::parse(ct)?, Scalar::parse(it)?)),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Parse("ply: property before element".into()))?
                .props
                .push(Property::Scalar(name.to_string(), Scalar::parse(ty)?)),
            _ => return Err(Error::Parse(format!("ply: bad header line {line:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::Parse("ply: missing format".into()))?;
    Ok((encoding, elements, body))
}

pub fn parse_ply(bytes: &[u8]) -> Result<TriangleMesh> {
    let (encoding, elements, body) = parse_header(bytes)?;
    let rest = &bytes[body..];
    // Every record takes at least one byte (binary) or token, which bounds
    // preallocation for hostile counts.
    let budget = rest.len();
    match encoding {
        Encoding::BinaryLe => read_body(&elements, &mut Binary { data: rest, pos: 0 }, budget),
        Encoding::Ascii => {
            let text = std::str::from_utf8(rest).map_err(|_| Error::Parse("ply: body not utf-8".into()))?;
            read_body(&elements, &mut Ascii { toks: text.split_ascii_whitespace() }, budget)
        }
    }
}

fn read_body(elements: &[Element], src: &mut dyn Source, budget: usize) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut faces = Vec::new();
    for el in elements {
        let cap = el.count.min(budget);
        match el.name.as_str() {
            "vertex" => {
                let find = |n: &str| {
                    el.props
                        .iter()
                        .position(|p| matches!(p, Property::Scalar(name, _) if name == n))
                };
                let (xi, yi, zi) = match (find("x"), find("y"), find("z")) {
                    (Some(x), Some(y), Some(z)) => (x, y, z),
                    _ => return Err(Error::Parse("ply: vertex lacks x/y/z".into())),
                };
                let rgb = match (find("red"), find("green"), find("blue")) {
                    (Some(r), Some(g), Some(b)) => Some((r, g, b)),
                    _ => None,
                };
                vertices.reserve(cap);
                let mut vals = vec![0.0; el.props.len()];
                for _ in 0..el.count {
                    for (k, p) in el.props.iter().enumerate() {
                        vals[k] = match p {
                            Property::Scalar(_, ty) => src.read(*ty)?,
                            Property::List(_, ct, it) => {
                                let n = src.read(*ct)? as usize;
                                for _ in 0..n {
                                    src.read(*it)?;
                                }
                                0.0
                            }
                        };
                    }
                    let v = Vec3::new(vals[xi], vals[yi], vals[zi]);
                    if !v.iter().all(|c| c.is_finite()) {
                        return Err(Error::Parse("ply: non-finite vertex".into()));
                    }
                    vertices.push(v);
                    if let Some((r, g, b)) = rgb {
                        let scale = |k: usize| match &el.props[k] {
                            Property::Scalar(_, Scalar::F32 | Scalar::F64) => vals[k],
                            _ => vals[k] / 255.0,
                        };
                        colors.push(Vec3::new(scale(r), scale(g), scale(b)));
                    }
                }
            }
            "face" => {
                faces.reserve(cap);
                for _ in 0..el.count {
                    let mut tri = None;
                    for p in &el.props {
                        match p {
                            Property::List(name, ct, it) if name == "vertex_indices" || name == "vertex_index" => {
                                let n = src.read(*ct)?;
                                if n != 3.0 {
                                    return Err(Error::Parse(format!("ply: only triangles are supported ({n} corners)")));
                                }
                                let mut f = [0usize; 3];
                                for slot in &mut f {
                                    let i = src.read(*it)?;
                                    if i < 0.0 || i.fract() != 0.0 {
                                        return Err(Error::Parse("ply: bad face index".into()));
                                    }
                                    *slot = i as usize;
                                }
                                tri = Some(f);
                            }
                            Property::List(_, ct, it) => {
                                let n = src.read(*ct)? as usize;
                                for _ in 0..n {
                                    src.read(*it)?;
                                }
                            }
                            Property::Scalar(_, ty) => {
                                src.read(*ty)?;
                            }
                        }
                    }
                    faces.push(tri.ok_or_else(|| Error::Parse("ply: face lacks vertex_indices".into()))?);
                }
            }
            _ => {
                for _ in 0..el.count {
                    for p in &el.props {
                        match p {
                            Property::Scalar(_, ty) => {
                                src.read(*ty)?;
                            }
                            Property::List(_, ct, it) => {
                                let n = src.read(*ct)? as usize;
                                for _ in 0..n {
                                    src.read(*it)?;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let mesh = TriangleMesh::new(vertices, faces)?;
    if !colors.is_empty() {
        mesh.with_colors(colors)
    } else {
        Ok(mesh)
    }
}

/// Binary little-endian PLY with double positions and uchar colors.
pub fn write_ply(mesh: &TriangleMesh) -> Vec<u8> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", mesh.vertices.len()));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if mesh.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str(&format!("element face {}\n", mesh.faces.len()));
    header.push_str("property list uchar int vertex_indices\nend_header\n");
    let mut out = header.into_bytes();
    for (i, v) in mesh.vertices.iter().enumerate() {
        for c in v.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(cols) = &mesh.colors {
            for c in cols[i].iter() {
                out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    for f in &mesh.faces {
        out.push(3);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let m = crate::scenes::icosphere(2)
            .with_colors(vec![Vec3::new(0.2, 0.4, 0.6); 162])
            .unwrap();
        let back = parse_ply(&write_ply(&m)).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.faces, m.faces);
        for c in back.colors.unwrap() {
            assert!((c - Vec3::new(0.2, 0.4, 0.6)).amax() <= 0.5 / 255.0);
        }
    }

    #[test]
    fn ascii_with_float_positions() {
        let text = "ply\nformat ascii 1.0\ncomment x\nelement vertex 3\nproperty float x\nproperty float y\n\
                    property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n\
                    element face 1\nproperty list uchar int vertex_indices\nend_header\n\
                    0 0 0 255 0 0\n1 0 0 0 255 0\n0 1 0 0 0 255\n3 0 1 2\n";
        let m = parse_ply(text.as_bytes()).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
        assert_eq!(m.colors.unwrap()[2], Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn rejects_quads_truncation_and_hostile_counts() {
        let quad = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n\
                    element face 1\nproperty list uchar int vertex_indices\nend_header\n\
                    0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        assert!(parse_ply(quad.as_bytes()).is_err());
        let mut bin = write_ply(&crate::scenes::tetrahedron());
        bin.truncate(bin.len() - 3);
        assert!(parse_ply(&bin).is_err());
        let huge = "ply\nformat binary_little_endian 1.0\nelement vertex 4000000000\nproperty float x\n\
                    property float y\nproperty float z\nend_header\n";
        assert!(parse_ply(huge.as_bytes()).is_err());
        assert!(parse_ply(b"ply\nformat binary_big_endian 1.0\nend_header\n").is_err());
    }
}
