//! Wavefront OBJ subset: `v x y z [r g b]` and triangular `f` records.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::mesh::{TriangleMesh, Vec3};

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64> {
    let t = tok.ok_or_else(|| Error::Parse(format!("line {line}: missing coordinate")))?;
    let v: f64 = t
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad number {t:?}")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("line {line}: non-finite value")));
    }
    Ok(v)
}

fn parse_index(tok: &str, count: usize, line: usize) -> Result<usize> {
    let head = tok.split('/').next().unwrap_or("");
    let i: i64 = head
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad face index {tok:?}")))?;
    let resolved = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        -1
    };
    if resolved < 0 || resolved >= count as i64 {
        return Err(Error::Parse(format!("line {line}: face index {i} out of range")));
    }
    Ok(resolved as usize)
}

/// Parses OBJ text. Vertex colors are kept only when every vertex has them.
pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut faces = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), line)?;
                let y = parse_f64(toks.next(), line)?;
                let z = parse_f64(toks.next(), line)?;
                vertices.push(Vec3::new(x, y, z));
                let rest: Vec<&str> = toks.collect();
                match rest.len() {
                    0 => {}
                    3 | 4 => {
                        let r = parse_f64(Some(rest[0]), line)?;
                        let g = parse_f64(Some(rest[1]), line)?;
                        let b = parse_f64(Some(rest[2]), line)?;
                        colors.push((vertices.len() - 1, Vec3::new(r, g, b)));
                    }
                    _ => return Err(Error::Parse(format!("line {line}: malformed vertex"))),
                }
            }
            Some("f") => {
                let idx: Vec<&str> = toks.collect();
                if idx.len() != 3 {
                    return Err(Error::Parse(format!(
                        "line {line}: only triangles are supported ({} corners)",
                        idx.len()
                    )));
                }
                let mut f = [0usize; 3];
                for (k, t) in idx.iter().enumerate() {
                    f[k] = parse_index(t, vertices.len(), line)?;
                }
                faces.push(f);
            }
            _ => {}
        }
    }
    let mesh = TriangleMesh::new(vertices, faces)?;
    if !colors.is_empty() && colors.len() == mesh.vertices.len() {
        mesh.with_colors(colors.into_iter().map(|(_, c)| c).collect())
    } else {
        Ok(mesh)
    }
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for (i, v) in mesh.vertices.iter().enumerate() {
        match &mesh.colors {
            Some(c) => {
                let c = c[i];
                writeln!(s, "v {:?} {:?} {:?} {:?} {:?} {:?}", v.x, v.y, v.z, c.x, c.y, c.z).unwrap()
            }
            None => writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z).unwrap(),
        }
    }
    for f in &mesh.faces {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    s
}
