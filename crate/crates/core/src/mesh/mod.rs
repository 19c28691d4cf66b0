//! Indexed triangle meshes.
//!
//! A [`TriangleMesh`] is a plain indexed face set. Connectivity queries go
//! through an [`Adjacency`] that is rebuilt from the face list whenever it is
//! needed; nothing is cached inside the mesh, so edits can never leave a stale
//! cache behind.

mod edit;
mod query;

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use edit::{remesh_pass, RemeshStats, RemeshTarget};
pub use query::{nearest_point_brute_force, closest_point_on_triangle, SurfaceIndex, SurfacePoint};

pub type Vec3 = Vector3<f64>;

/// Normal assigned to vertices whose incident faces all have zero area.
pub const FALLBACK_NORMAL: Vec3 = Vector3::new(0.0, 0.0, 1.0);

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    /// Counter-clockwise (seen from outside) vertex index triples.
    pub faces: Vec<[usize; 3]>,
    /// Optional per-vertex RGB in `[0, 1]`.
    pub colors: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            faces,
            colors: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_colors(mut self, colors: Vec<Vec3>) -> Result<Self> {
        if colors.len() != self.vertices.len() {
            return Err(Error::InvalidMesh(format!(
                "{} colors for {} vertices",
                colors.len(),
                self.vertices.len()
            )));
        }
        self.colors = Some(colors);
        Ok(self)
    }

    /// Checks index bounds, degenerate index triples and finiteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {i} references a vertex out of range ({n} vertices)"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {i} is degenerate")));
            }
        }
        if let Some(i) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        if let Some(c) = &self.colors {
            if c.len() != n {
                return Err(Error::InvalidMesh("color count mismatch".into()));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn ensure_nonempty(&self) -> Result<()> {
        if self.faces.is_empty() || self.vertices.is_empty() {
            Err(Error::EmptyMesh)
        } else {
            Ok(())
        }
    }

    /// Unnormalized face normal; its length is twice the face area.
    pub fn face_cross(&self, f: usize) -> Vec3 {
        face_cross(&self.vertices, &self.faces[f])
    }

    /// Unit face normal, or zero for a zero-area face.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let c = self.face_cross(f);
        let n = c.norm();
        if n > 0.0 {
            c / n
        } else {
            Vec3::zeros()
        }
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * self.face_cross(f).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn face_normals(&self) -> Vec<Vec3> {
        (0..self.faces.len()).map(|f| self.face_normal(f)).collect()
    }

    /// Area-weighted unit vertex normals.
    pub fn vertex_normals(&self) -> Result<Vec<Vec3>> {
        self.ensure_nonempty()?;
        Ok(vertex_normals(&self.vertices, &self.faces))
    }

    /// Axis-aligned bounds `(min, max)` of all vertices.
    pub fn bbox(&self) -> (Vec3, Vec3) {
        bounds(&self.vertices)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bbox();
        (hi - lo).norm()
    }

    pub fn bbox_center(&self) -> Vec3 {
        let (lo, hi) = self.bbox();
        (lo + hi) * 0.5
    }

    /// Area-weighted centroid of the surface.
    pub fn surface_centroid(&self) -> Vec3 {
        let mut acc = Vec3::zeros();
        let mut total = 0.0;
        for (i, f) in self.faces.iter().enumerate() {
            let a = self.face_area(i);
            acc += a * (self.vertices[f[0]] + self.vertices[f[1]] + self.vertices[f[2]]) / 3.0;
            total += a;
        }
        if total > 0.0 {
            acc / total
        } else {
            self.bbox_center()
        }
    }

    pub fn adjacency(&self) -> Adjacency {
        Adjacency::build(self.vertices.len(), &self.faces)
    }

    /// `V - E + F`, counting only vertices referenced by a face.
    pub fn euler_characteristic(&self) -> i64 {
        let adj = self.adjacency();
        let used = adj.vertex_faces.iter().filter(|f| !f.is_empty()).count();
        used as i64 - adj.edges.len() as i64 + self.faces.len() as i64
    }

    pub fn is_watertight(&self) -> bool {
        self.adjacency().edges.iter().all(|e| e.faces.len() == 2)
    }

    pub fn boundary_loops(&self) -> Vec<Vec<usize>> {
        self.adjacency().boundary_loops(&self.faces)
    }

    /// Component id per vertex (faces connect vertices); ids follow the
    /// smallest vertex index of each component.
    pub fn connected_components(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for f in &self.faces {
            for k in 1..3 {
                let a = find(&mut parent, f[0]);
                let b = find(&mut parent, f[k]);
                if a != b {
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    parent[hi] = lo;
                }
            }
        }
        (0..self.vertices.len()).map(|v| find(&mut parent, v)).collect()
    }

    pub fn map_vertices(&mut self, f: impl Fn(&Vec3) -> Vec3) {
        for v in &mut self.vertices {
            *v = f(v);
        }
    }

    pub fn translated(mut self, t: Vec3) -> Self {
        self.map_vertices(|v| v + t);
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.map_vertices(|v| v * s);
        self
    }

    /// Same surface with reversed orientation.
    pub fn flipped(&self) -> Self {
        let mut out = self.clone();
        for f in &mut out.faces {
            f.swap(1, 2);
        }
        out
    }

    /// Disjoint union of two meshes.
    pub fn merged(&self, other: &TriangleMesh) -> Self {
        let off = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(other.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
        let colors = match (&self.colors, &other.colors) {
            (Some(a), Some(b)) => Some(a.iter().chain(b.iter()).copied().collect()),
            _ => None,
        };
        Self {
            vertices,
            faces,
            colors,
        }
    }

    /// Drops vertices not referenced by any face and renumbers the rest.
    pub fn compacted(&self) -> Self {
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut colors = self.colors.as_ref().map(|_| Vec::new());
        for f in &self.faces {
            for &v in f {
                if remap[v] == usize::MAX {
                    remap[v] = vertices.len();
                    vertices.push(self.vertices[v]);
                    if let (Some(out), Some(src)) = (colors.as_mut(), self.colors.as_ref()) {
                        out.push(src[v]);
                    }
                }
            }
        }
        let faces = self
            .faces
            .iter()
            .map(|f| [remap[f[0]], remap[f[1]], remap[f[2]]])
            .collect();
        Self {
            vertices,
            faces,
            colors,
        }
    }
}

pub(crate) fn face_cross(vertices: &[Vec3], f: &[usize; 3]) -> Vec3 {
    let a = vertices[f[0]];
    (vertices[f[1]] - a).cross(&(vertices[f[2]] - a))
}

pub(crate) fn bounds(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Unnormalized area-weighted vertex normal sums.
pub(crate) fn vertex_normal_sums(vertices: &[Vec3], faces: &[[usize; 3]]) -> Vec<Vec3> {
    let mut acc = vec![Vec3::zeros(); vertices.len()];
    for f in faces {
        let c = face_cross(vertices, f);
        for &v in f {
            acc[v] += c;
        }
    }
    acc
}

/// Area-weighted unit vertex normals over arbitrary positions.
///
/// Vertices with no incident area get [`FALLBACK_NORMAL`].
pub fn vertex_normals(vertices: &[Vec3], faces: &[[usize; 3]]) -> Vec<Vec3> {
    vertex_normal_sums(vertices, faces)
        .into_iter()
        .map(|s| {
            let n = s.norm();
            if n > 0.0 {
                s / n
            } else {
                FALLBACK_NORMAL
            }
        })
        .collect()
}

/// Backpropagates gradients on unit vertex normals to vertex positions.
pub fn vertex_normals_backward(
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    grad_normals: &[Vec3],
    grad_positions: &mut [Vec3],
) {
    let sums = vertex_normal_sums(vertices, faces);
    let grad_sums: Vec<Vec3> = sums
        .iter()
        .zip(grad_normals)
        .map(|(s, g)| {
            let len = s.norm();
            if len > 0.0 {
                let n = s / len;
                (g - n * n.dot(g)) / len
            } else {
                Vec3::zeros()
            }
        })
        .collect();
    for f in faces {
        let gc = grad_sums[f[0]] + grad_sums[f[1]] + grad_sums[f[2]];
        if gc == Vec3::zeros() {
            continue;
        }
        let e1 = vertices[f[1]] - vertices[f[0]];
        let e2 = vertices[f[2]] - vertices[f[0]];
        let g1 = e2.cross(&gc);
        let g2 = gc.cross(&e1);
        grad_positions[f[1]] += g1;
        grad_positions[f[2]] += g2;
        grad_positions[f[0]] -= g1 + g2;
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    /// Smaller endpoint.
    pub a: usize,
    /// Larger endpoint.
    pub b: usize,
    /// Incident faces in ascending order.
    pub faces: Vec<usize>,
}

/// Connectivity rebuilt from a face list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    pub vertex_faces: Vec<Vec<usize>>,
    /// One-ring neighbours per vertex, ascending.
    pub neighbors: Vec<Vec<usize>>,
    /// Unique undirected edges sorted by `(a, b)`.
    pub edges: Vec<Edge>,
    edge_index: HashMap<(usize, usize), usize>,
}

impl Adjacency {
    pub fn build(vertex_count: usize, faces: &[[usize; 3]]) -> Self {
        let mut vertex_faces = vec![Vec::new(); vertex_count];
        let mut triples = Vec::with_capacity(faces.len() * 3);
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                vertex_faces[f[k]].push(fi);
                let (u, v) = (f[k], f[(k + 1) % 3]);
                triples.push((u.min(v), u.max(v), fi));
            }
        }
        triples.sort_unstable();
        let mut edges: Vec<Edge> = Vec::new();
        for (a, b, fi) in triples {
            match edges.last_mut() {
                Some(e) if e.a == a && e.b == b => e.faces.push(fi),
                _ => edges.push(Edge {
                    a,
                    b,
                    faces: vec![fi],
                }),
            }
        }
        let mut neighbors = vec![Vec::new(); vertex_count];
        let mut edge_index = HashMap::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            neighbors[e.a].push(e.b);
            neighbors[e.b].push(e.a);
            edge_index.insert((e.a, e.b), i);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Self {
            vertex_faces,
            neighbors,
            edges,
            edge_index,
        }
    }

    pub fn edge(&self, u: usize, v: usize) -> Option<&Edge> {
        self.edge_index
            .get(&(u.min(v), u.max(v)))
            .map(|&i| &self.edges[i])
    }

    pub fn edge_id(&self, u: usize, v: usize) -> Option<usize> {
        self.edge_index.get(&(u.min(v), u.max(v))).copied()
    }

    /// Boundary loops as vertex sequences following face orientation.
    pub fn boundary_loops(&self, faces: &[[usize; 3]]) -> Vec<Vec<usize>> {
        // Directed boundary half-edges a -> b as they appear in their face.
        let mut next: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut starts = Vec::new();
        for e in self.edges.iter().filter(|e| e.faces.len() == 1) {
            let f = faces[e.faces[0]];
            let (u, v) = (0..3)
                .map(|k| (f[k], f[(k + 1) % 3]))
                .find(|&(u, v)| u.min(v) == e.a && u.max(v) == e.b)
                .expect("edge belongs to its face");
            next.entry(u).or_default().push(v);
            starts.push(u);
        }
        for v in next.values_mut() {
            v.sort_unstable();
        }
        starts.sort_unstable();
        starts.dedup();
        let mut loops = Vec::new();
        for s in starts {
            while next.get(&s).is_some_and(|v| !v.is_empty()) {
                let mut lp = vec![s];
                let mut cur = s;
                loop {
                    let Some(cands) = next.get_mut(&cur) else { break };
                    if cands.is_empty() {
                        break;
                    }
                    let nxt = cands.remove(0);
                    if nxt == s {
                        break;
                    }
                    lp.push(nxt);
                    cur = nxt;
                }
                loops.push(lp);
            }
        }
        loops
    }
}

/// Arithmetic mean of the one-ring neighbours' normals (not renormalized).
pub fn neighbor_normal_average(adj: &Adjacency, normals: &[Vec3], vertex: usize) -> Result<Vec3> {
    let ring = adj
        .neighbors
        .get(vertex)
        .ok_or_else(|| Error::InvalidMesh(format!("vertex {vertex} out of range")))?;
    if ring.is_empty() {
        return Err(Error::IsolatedVertex(vertex));
    }
    let sum: Vec3 = ring.iter().map(|&k| normals[k]).sum();
    Ok(sum / ring.len() as f64)
}

impl TriangleMesh {
    /// Convenience wrapper building adjacency and normals on the fly.
    pub fn neighbor_normal_average(&self, vertex: usize) -> Result<Vec3> {
        let normals = self.vertex_normals()?;
        neighbor_normal_average(&self.adjacency(), &normals, vertex)
    }
}

/// Sum over vertices of `|n_j - avg(n_neighbors)|^2`, skipping isolated vertices.
pub fn normal_regularizer(adj: &Adjacency, normals: &[Vec3]) -> f64 {
    let mut sum = 0.0;
    for (j, ring) in adj.neighbors.iter().enumerate() {
        if ring.is_empty() {
            continue;
        }
        let avg: Vec3 = ring.iter().map(|&k| normals[k]).sum::<Vec3>() / ring.len() as f64;
        sum += (normals[j] - avg).norm_squared();
    }
    sum
}

/// Gradient of [`normal_regularizer`] with respect to the unit normals.
pub fn normal_regularizer_grad(adj: &Adjacency, normals: &[Vec3], scale: f64, grad: &mut [Vec3]) {
    let k = 2.0 * scale;
    for (j, ring) in adj.neighbors.iter().enumerate() {
        if ring.is_empty() {
            continue;
        }
        let inv = 1.0 / ring.len() as f64;
        let avg: Vec3 = ring.iter().map(|&i| normals[i]).sum::<Vec3>() * inv;
        let d = (normals[j] - avg) * k;
        grad[j] += d;
        for &i in ring {
            grad[i] -= d * inv;
        }
    }
}

/// Mean `|n_j - n_j^neig|` over vertices; used to report surface roughness.
pub fn mean_normal_deviation(mesh: &TriangleMesh) -> Result<f64> {
    let normals = mesh.vertex_normals()?;
    let adj = mesh.adjacency();
    let mut sum = 0.0;
    let mut n = 0usize;
    for j in 0..mesh.vertices.len() {
        if let Ok(avg) = neighbor_normal_average(&adj, &normals, j) {
            sum += (normals[j] - avg).norm();
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Maximum `|n_j - n_j^neig|` over vertices.
pub fn max_normal_deviation(mesh: &TriangleMesh) -> Result<f64> {
    let normals = mesh.vertex_normals()?;
    let adj = mesh.adjacency();
    Ok((0..mesh.vertices.len())
        .filter_map(|j| neighbor_normal_average(&adj, &normals, j).ok().map(|a| (normals[j] - a).norm()))
        .fold(0.0, f64::max))
}
