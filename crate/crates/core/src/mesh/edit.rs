//! Local edits and the isotropic remeshing pass built from them.

use super::{TriangleMesh, Vec3};
use crate::error::EditRejection;

/// Mutable working copy with per-vertex face incidence and dead flags.
pub(crate) struct EditMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    vertex_alive: Vec<bool>,
    vf: Vec<Vec<usize>>,
    /// Flat per-vertex payload interpolated by splits and collapses.
    attrs: Vec<f64>,
    width: usize,
}

impl EditMesh {
    pub fn new(mesh: &TriangleMesh, attrs: Vec<f64>, width: usize) -> Self {
        assert_eq!(attrs.len(), mesh.vertices.len() * width);
        let mut vf = vec![Vec::new(); mesh.vertices.len()];
        for (i, f) in mesh.faces.iter().enumerate() {
            for &v in f {
                vf[v].push(i);
            }
        }
        Self {
            vertices: mesh.vertices.clone(),
            faces: mesh.faces.clone(),
            face_alive: vec![true; mesh.faces.len()],
            vertex_alive: vec![true; mesh.vertices.len()],
            vf,
            attrs,
            width,
        }
    }

    fn edge_faces(&self, a: usize, b: usize) -> Vec<usize> {
        if a >= self.vf.len() || b >= self.vf.len() {
            return Vec::new();
        }
        self.vf[a]
            .iter()
            .copied()
            .filter(|&f| self.faces[f].contains(&b))
            .collect()
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.vf[v]
            .iter()
            .flat_map(|&f| self.faces[f])
            .filter(|&u| u != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn is_boundary_vertex(&self, v: usize) -> bool {
        self.neighbors(v)
            .into_iter()
            .any(|u| self.edge_faces(v, u).len() == 1)
    }

    fn valence(&self, v: usize) -> usize {
        self.neighbors(v).len()
    }

    fn cross(&self, f: &[usize; 3]) -> Vec3 {
        super::face_cross(&self.vertices, f)
    }

    fn mix_attrs(&mut self, a: usize, b: usize) -> Vec<f64> {
        let w = self.width;
        (0..w)
            .map(|k| 0.5 * (self.attrs[a * w + k] + self.attrs[b * w + k]))
            .collect()
    }

    /// Opposite vertex of `f` given directed edge membership; returns
    /// `(from, to, opposite)` in face order.
    fn oriented(&self, f: usize, a: usize, b: usize) -> (usize, usize, usize) {
        let t = self.faces[f];
        for k in 0..3 {
            let (u, v, w) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            if (u == a && v == b) || (u == b && v == a) {
                return (u, v, w);
            }
        }
        unreachable!("face does not contain edge")
    }

    pub fn split(&mut self, a: usize, b: usize) -> Result<usize, EditRejection> {
        let faces = self.edge_faces(a, b);
        if faces.is_empty() {
            return Err(EditRejection::NoSuchEdge);
        }
        if faces.len() > 2 {
            return Err(EditRejection::NonManifold);
        }
        let m = self.vertices.len();
        self.vertices.push((self.vertices[a] + self.vertices[b]) * 0.5);
        let mixed = self.mix_attrs(a, b);
        self.attrs.extend(mixed);
        self.vertex_alive.push(true);
        self.vf.push(Vec::new());
        for f in faces {
            let (x, y, c) = self.oriented(f, a, b);
            let nf = self.faces.len();
            self.faces[f] = [x, m, c];
            self.faces.push([m, y, c]);
            self.face_alive.push(true);
            self.vf[y].retain(|&g| g != f);
            self.vf[y].push(nf);
            self.vf[c].push(nf);
            self.vf[m].push(f);
            self.vf[m].push(nf);
        }
        Ok(m)
    }

    /// Merges `b` into `a`, placing the result at the edge midpoint.
    pub fn collapse(&mut self, a: usize, b: usize, max_len: f64) -> Result<(), EditRejection> {
        let faces = self.edge_faces(a, b);
        if faces.is_empty() {
            return Err(EditRejection::NoSuchEdge);
        }
        if faces.len() > 2 {
            return Err(EditRejection::NonManifold);
        }
        let opposite: Vec<usize> = faces.iter().map(|&f| self.oriented(f, a, b).2).collect();
        let na = self.neighbors(a);
        let nb = self.neighbors(b);
        let common: Vec<usize> = na.iter().copied().filter(|v| nb.contains(v)).collect();
        let mut opp_sorted = opposite.clone();
        opp_sorted.sort_unstable();
        opp_sorted.dedup();
        if common != opp_sorted {
            return Err(EditRejection::NonManifold);
        }
        if faces.len() == 2 && self.is_boundary_vertex(a) && self.is_boundary_vertex(b) {
            return Err(EditRejection::NonManifold);
        }
        for &c in &opposite {
            let min_valence = if self.is_boundary_vertex(c) { 2 } else { 3 };
            if self.valence(c) <= min_valence {
                return Err(EditRejection::NonManifold);
            }
        }
        if faces.len() == 1 && (self.valence(a) <= 2 || self.valence(b) <= 2) {
            return Err(EditRejection::NonManifold);
        }

        let mid = (self.vertices[a] + self.vertices[b]) * 0.5;
        // Faces that survive get one endpoint moved to the midpoint.
        let mut touched: Vec<usize> = self.vf[a].iter().chain(&self.vf[b]).copied().collect();
        touched.sort_unstable();
        touched.dedup();
        for &f in touched.iter().filter(|f| !faces.contains(f)) {
            let before = self.faces[f];
            let mut after = before;
            for v in &mut after {
                if *v == a || *v == b {
                    *v = usize::MAX;
                }
            }
            let pos = |v: usize| if v == usize::MAX { mid } else { self.vertices[v] };
            let n0 = self.cross(&before);
            let n1 = (pos(after[1]) - pos(after[0])).cross(&(pos(after[2]) - pos(after[0])));
            let scale = n0.norm().max(1e-300);
            if n1.norm() <= 1e-12 * scale || n0.dot(&n1) <= 0.0 {
                return Err(EditRejection::OrientationFlip);
            }
            if max_len.is_finite() {
                for &v in &after {
                    if v != usize::MAX && (self.vertices[v] - mid).norm() > max_len {
                        return Err(EditRejection::TooLong);
                    }
                }
            }
        }

        self.vertices[a] = mid;
        let mixed = self.mix_attrs(a, b);
        let w = self.width;
        self.attrs[a * w..(a + 1) * w].copy_from_slice(&mixed);
        for &f in &faces {
            self.face_alive[f] = false;
            for v in self.faces[f] {
                self.vf[v].retain(|&g| g != f);
            }
        }
        let moved: Vec<usize> = self.vf[b].clone();
        for f in moved {
            for v in &mut self.faces[f] {
                if *v == b {
                    *v = a;
                }
            }
            self.vf[a].push(f);
        }
        self.vf[b].clear();
        self.vertex_alive[b] = false;
        Ok(())
    }

    fn flip_legal(&self, a: usize, b: usize) -> Result<(usize, usize, usize, usize), EditRejection> {
        let faces = self.edge_faces(a, b);
        match faces.len() {
            0 => return Err(EditRejection::NoSuchEdge),
            1 => return Err(EditRejection::Boundary),
            2 => {}
            _ => return Err(EditRejection::NonManifold),
        }
        let (x0, y0, c) = self.oriented(faces[0], a, b);
        let (x1, y1, d) = self.oriented(faces[1], a, b);
        if x0 != y1 || y0 != x1 || c == d {
            return Err(EditRejection::NonManifold);
        }
        if !self.edge_faces(c, d).is_empty() || self.neighbors(c).contains(&d) {
            return Err(EditRejection::NonManifold);
        }
        // faces[0] = (x0, y0, c), faces[1] = (y0, x0, d)
        let old = self.cross(&[x0, y0, c]) + self.cross(&[y0, x0, d]);
        let n1 = self.cross(&[x0, d, c]);
        let n2 = self.cross(&[d, y0, c]);
        let scale = old.norm().max(1e-300);
        if n1.norm() <= 1e-12 * scale
            || n2.norm() <= 1e-12 * scale
            || n1.dot(&old) <= 0.0
            || n2.dot(&old) <= 0.0
        {
            return Err(EditRejection::OrientationFlip);
        }
        Ok((faces[0], faces[1], c, d))
    }

    fn valence_deviation(&self, vs: [usize; 4], delta: [i64; 4]) -> i64 {
        vs.iter()
            .zip(delta)
            .map(|(&v, dv)| {
                let target = if self.is_boundary_vertex(v) { 4 } else { 6 };
                (self.valence(v) as i64 + dv - target).abs()
            })
            .sum()
    }

    pub fn flip_improves(&self, a: usize, b: usize) -> bool {
        let Ok((_, _, c, d)) = self.flip_legal(a, b) else {
            return false;
        };
        let before = self.valence_deviation([a, b, c, d], [0; 4]);
        let after = self.valence_deviation([a, b, c, d], [-1, -1, 1, 1]);
        after < before
    }

    pub fn flip(&mut self, a: usize, b: usize) -> Result<(), EditRejection> {
        let (f0, f1, c, d) = self.flip_legal(a, b)?;
        let (x0, y0, _) = self.oriented(f0, a, b);
        self.faces[f0] = [x0, d, c];
        self.faces[f1] = [d, y0, c];
        self.vf[y0].retain(|&g| g != f0);
        self.vf[x0].retain(|&g| g != f1);
        self.vf[d].push(f0);
        self.vf[c].push(f1);
        Ok(())
    }

    fn live_edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &alive)| alive)
            .flat_map(|(f, _)| (0..3).map(move |k| (f[k].min(f[(k + 1) % 3]), f[k].max(f[(k + 1) % 3]))))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    fn len(&self, (a, b): (usize, usize)) -> f64 {
        (self.vertices[a] - self.vertices[b]).norm()
    }

    pub fn finish(self) -> (TriangleMesh, Vec<f64>) {
        let w = self.width;
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut attrs = Vec::new();
        for (v, alive) in self.vertex_alive.iter().enumerate() {
            if *alive && !self.vf[v].is_empty() {
                remap[v] = vertices.len();
                vertices.push(self.vertices[v]);
                attrs.extend_from_slice(&self.attrs[v * w..(v + 1) * w]);
            }
        }
        let faces = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &alive)| alive)
            .map(|(f, _)| [remap[f[0]], remap[f[1]], remap[f[2]]])
            .collect();
        (
            TriangleMesh {
                vertices,
                faces,
                colors: None,
            },
            attrs,
        )
    }
}

/// Edge-length target of one remeshing pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RemeshTarget {
    pub edge_length: f64,
}

impl RemeshTarget {
    pub fn split_above(&self) -> f64 {
        self.edge_length * 4.0 / 3.0
    }

    pub fn collapse_below(&self) -> f64 {
        self.edge_length * 4.0 / 5.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RemeshStats {
    pub splits: usize,
    pub collapses: usize,
    pub flips: usize,
}

/// One split / collapse / flip sweep toward `target`.
///
/// `attrs` holds `width` values per vertex and is carried through the edits
/// (midpoint averages); mesh colors, when present, are carried the same way.
pub fn remesh_pass(
    mesh: &mut TriangleMesh,
    attrs: &mut Vec<f64>,
    width: usize,
    target: RemeshTarget,
) -> RemeshStats {
    let color_w = if mesh.colors.is_some() { 3 } else { 0 };
    let full_w = width + color_w;
    let mut packed = Vec::with_capacity(mesh.vertices.len() * full_w);
    for v in 0..mesh.vertices.len() {
        packed.extend_from_slice(&attrs[v * width..(v + 1) * width]);
        if let Some(c) = &mesh.colors {
            packed.extend_from_slice(c[v].as_slice());
        }
    }
    let mut em = EditMesh::new(mesh, packed, full_w);
    let mut stats = RemeshStats::default();
    let high = target.split_above();
    let low = target.collapse_below();

    for _ in 0..3 {
        let mut long: Vec<((usize, usize), f64)> = em
            .live_edges()
            .into_iter()
            .map(|e| (e, em.len(e)))
            .filter(|&(_, l)| l > high)
            .collect();
        if long.is_empty() {
            break;
        }
        long.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        for ((a, b), _) in long {
            if em.split(a, b).is_ok() {
                stats.splits += 1;
            }
        }
    }

    let mut short: Vec<((usize, usize), f64)> = em
        .live_edges()
        .into_iter()
        .map(|e| (e, em.len(e)))
        .filter(|&(_, l)| l < low)
        .collect();
    short.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    for ((a, b), _) in short {
        if !em.vertex_alive[a] || !em.vertex_alive[b] {
            continue;
        }
        if em.edge_faces(a, b).is_empty() || em.len((a, b)) >= low {
            continue;
        }
        if em.collapse(a, b, high).is_ok() {
            stats.collapses += 1;
        }
    }

    for (a, b) in em.live_edges() {
        if em.flip_improves(a, b) && em.flip(a, b).is_ok() {
            stats.flips += 1;
        }
    }

    let (mut out, packed) = em.finish();
    let n = out.vertices.len();
    attrs.clear();
    let mut colors = Vec::with_capacity(if color_w > 0 { n } else { 0 });
    for v in 0..n {
        let row = &packed[v * full_w..(v + 1) * full_w];
        attrs.extend_from_slice(&row[..width]);
        if color_w > 0 {
            colors.push(Vec3::new(row[width], row[width + 1], row[width + 2]));
        }
    }
    if color_w > 0 {
        out.colors = Some(colors);
    }
    *mesh = out;
    stats
}

impl TriangleMesh {
    /// Splits edge `(a, b)` at its midpoint; returns the new vertex index.
    pub fn split_edge(&mut self, a: usize, b: usize) -> Result<usize, EditRejection> {
        let mut em = self.edit_copy();
        let m = em.split(a, b)?;
        self.apply_edit(em);
        Ok(m)
    }

    /// Collapses edge `(a, b)` into its midpoint. Vertex `b` is removed and
    /// indices above it shift down by one; returns the surviving index.
    pub fn collapse_edge(&mut self, a: usize, b: usize) -> Result<usize, EditRejection> {
        let mut em = self.edit_copy();
        em.collapse(a, b, f64::INFINITY)?;
        self.apply_edit(em);
        Ok(if a > b { a - 1 } else { a })
    }

    /// Replaces the diagonal `(a, b)` of its two incident faces by the
    /// opposite diagonal. Refused when it would invert a face or duplicate
    /// an existing edge.
    pub fn flip_edge(&mut self, a: usize, b: usize) -> Result<(), EditRejection> {
        let mut em = self.edit_copy();
        em.flip(a, b)?;
        self.apply_edit(em);
        Ok(())
    }

    /// Like [`flip_edge`](Self::flip_edge) but also requires the flip to
    /// reduce the summed valence deviation (6 interior, 4 boundary).
    pub fn flip_edge_if_improves(&mut self, a: usize, b: usize) -> Result<(), EditRejection> {
        let mut em = self.edit_copy();
        em.flip_legal(a, b)?;
        if !em.flip_improves(a, b) {
            return Err(EditRejection::NoImprovement);
        }
        em.flip(a, b)?;
        self.apply_edit(em);
        Ok(())
    }

    fn edit_copy(&self) -> EditMesh {
        match &self.colors {
            Some(c) => EditMesh::new(self, c.iter().flat_map(|v| [v.x, v.y, v.z]).collect(), 3),
            None => EditMesh::new(self, Vec::new(), 0),
        }
    }

    /// Writes an edit result back, removing dead vertices but keeping
    /// unreferenced live ones so indices stay stable apart from removals.
    fn apply_edit(&mut self, em: EditMesh) {
        let w = em.width;
        let mut remap = vec![usize::MAX; em.vertices.len()];
        let mut vertices = Vec::new();
        let mut colors = Vec::new();
        for (v, alive) in em.vertex_alive.iter().enumerate() {
            if *alive {
                remap[v] = vertices.len();
                vertices.push(em.vertices[v]);
                if w == 3 {
                    colors.push(Vec3::new(em.attrs[3 * v], em.attrs[3 * v + 1], em.attrs[3 * v + 2]));
                }
            }
        }
        self.faces = em
            .faces
            .iter()
            .zip(&em.face_alive)
            .filter(|(_, &alive)| alive)
            .map(|(f, _)| [remap[f[0]], remap[f[1]], remap[f[2]]])
            .collect();
        self.vertices = vertices;
        if self.colors.is_some() {
            self.colors = Some(colors);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes;
    use proptest::prelude::*;

    fn valences(m: &TriangleMesh) -> Vec<usize> {
        m.adjacency().neighbors.iter().map(|n| n.len()).collect()
    }

    #[test]
    fn split_quad_edge_keeps_area() {
        let mut quad = scenes::quad(1.0);
        let area = quad.area();
        let m = quad.split_edge(0, 2).unwrap();
        assert_eq!(m, 4);
        assert_eq!(quad.faces.len(), 4);
        assert_eq!(quad.vertices.len(), 5);
        assert!((quad.area() - area).abs() < 1e-12);
        quad.validate().unwrap();
    }

    #[test]
    fn collapse_undoes_split() {
        let mut quad = scenes::quad(1.0);
        let m = quad.split_edge(0, 2).unwrap();
        quad.collapse_edge(0, m).unwrap();
        assert_eq!(quad.faces.len(), 2);
        assert_eq!(quad.vertices.len(), 4);
        assert!(quad.boundary_loops()[0].len() == 4);
    }

    #[test]
    fn flip_planar_quad_diagonal() {
        let mut quad = scenes::quad(1.0);
        let area = quad.area();
        let before = valences(&quad);
        quad.flip_edge(0, 2).unwrap();
        let after = valences(&quad);
        assert!((quad.area() - area).abs() < 1e-12);
        for (b, a) in before.iter().zip(&after) {
            assert_eq!((*a as i64 - *b as i64).abs(), 1);
        }
        // the quad's valences are already balanced, so the guarded flip refuses
        assert_eq!(
            quad.flip_edge_if_improves(1, 3),
            Err(EditRejection::NoImprovement)
        );
    }

    #[test]
    fn flip_rejects_inversion() {
        // Non-convex quad: flipping the diagonal would fold a triangle over.
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.2, 0.2, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let mut m = TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let snapshot = m.clone();
        assert_eq!(m.flip_edge(0, 2), Err(EditRejection::OrientationFlip));
        assert_eq!(m, snapshot);
    }

    #[test]
    fn collapse_rejects_tetrahedron_pinch() {
        let mut tet = scenes::tetrahedron();
        let snapshot = tet.clone();
        assert_eq!(tet.collapse_edge(0, 1), Err(EditRejection::NonManifold));
        assert_eq!(tet, snapshot);
    }

    #[test]
    fn missing_edge_is_rejected() {
        let mut quad = scenes::quad(1.0);
        assert_eq!(quad.split_edge(1, 3), Err(EditRejection::NoSuchEdge));
        assert_eq!(quad.flip_edge(0, 1), Err(EditRejection::Boundary));
    }

    #[test]
    fn remesh_pass_moves_edges_toward_target() {
        let mut sphere = scenes::icosphere(2);
        let mut attrs = vec![0.0; sphere.vertices.len()];
        let target = RemeshTarget { edge_length: 0.15 };
        for _ in 0..4 {
            remesh_pass(&mut sphere, &mut attrs, 1, target);
        }
        sphere.validate().unwrap();
        assert!(sphere.is_watertight());
        assert_eq!(sphere.euler_characteristic(), 2);
        let adj = sphere.adjacency();
        let mean: f64 = adj
            .edges
            .iter()
            .map(|e| (sphere.vertices[e.a] - sphere.vertices[e.b]).norm())
            .sum::<f64>()
            / adj.edges.len() as f64;
        assert!(mean > 0.8 * 0.15 && mean < 1.34 * 0.15, "mean edge {mean}");
        assert_eq!(attrs.len(), sphere.vertices.len());
    }

    #[test]
    fn remesh_pass_keeps_centroid() {
        let mut m = scenes::bumpy_sphere(3, 0.05, 6.0);
        let diag = m.bbox_diagonal();
        let mut attrs = Vec::new();
        for target in [0.14, 0.1, 0.05] {
            let c0 = m.surface_centroid();
            remesh_pass(&mut m, &mut attrs, 0, RemeshTarget { edge_length: target });
            let drift = (m.surface_centroid() - c0).norm();
            assert!(drift < 1e-3 * diag, "drift {drift}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_edits_preserve_euler_characteristic(ops in prop::collection::vec((0u8..3, 0usize..10_000), 1..40)) {
            let mut m = scenes::icosphere(1);
            for (kind, pick) in ops {
                let adj = m.adjacency();
                let e = &adj.edges[pick % adj.edges.len()];
                let (a, b) = (e.a, e.b);
                let _ = match kind {
                    0 => m.split_edge(a, b).map(|_| ()),
                    1 => m.collapse_edge(a, b).map(|_| ()),
                    _ => m.flip_edge(a, b),
                };
                m.validate().unwrap();
                prop_assert!(m.is_watertight());
                prop_assert_eq!(m.euler_characteristic(), 2);
            }
        }

        #[test]
        fn adjacency_rebuild_matches_after_edits(pick in 0usize..1000) {
            let mut m = scenes::icosphere(1);
            let adj = m.adjacency();
            let e = adj.edges[pick % adj.edges.len()].clone();
            m.split_edge(e.a, e.b).unwrap();
            let rebuilt = crate::mesh::Adjacency::build(m.vertices.len(), &m.faces);
            prop_assert_eq!(rebuilt, m.adjacency());
            for (v, ring) in m.adjacency().neighbors.iter().enumerate() {
                for &u in ring {
                    prop_assert!(m.adjacency().neighbors[u].contains(&v));
                }
            }
        }
    }
}
