//! Exact closest-point queries against a triangle surface.

use super::{TriangleMesh, Vec3};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub point: Vec3,
    pub distance: f64,
    pub face: usize,
}

/// Closest point to `p` on triangle `(a, b, c)` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

fn face_candidate(mesh: &TriangleMesh, f: usize, q: &Vec3) -> SurfacePoint {
    let [i, j, k] = mesh.faces[f];
    let point = closest_point_on_triangle(q, &mesh.vertices[i], &mesh.vertices[j], &mesh.vertices[k]);
    SurfacePoint {
        point,
        distance: (q - point).norm(),
        face: f,
    }
}

fn better(a: &SurfacePoint, b: &SurfacePoint) -> bool {
    a.distance < b.distance || (a.distance == b.distance && a.face < b.face)
}

/// O(F) reference query; ties resolve to the smallest face index.
pub fn nearest_point_brute_force(mesh: &TriangleMesh, q: &Vec3) -> Result<SurfacePoint> {
    mesh.ensure_nonempty()?;
    let mut best = face_candidate(mesh, 0, q);
    for f in 1..mesh.faces.len() {
        let c = face_candidate(mesh, f, q);
        if better(&c, &best) {
            best = c;
        }
    }
    Ok(best)
}

#[derive(Clone, Debug)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    /// Leaf: range into `order`; inner: child indices.
    start: usize,
    count: usize,
    left: usize,
    right: usize,
}

const LEAF_SIZE: usize = 4;

/// Bounding-volume hierarchy over the faces of a mesh.
///
/// Queries return the same result as [`nearest_point_brute_force`]: every
/// candidate distance is computed by the same routine and boxes are pruned
/// only when strictly farther than the current best.
#[derive(Clone, Debug)]
pub struct SurfaceIndex<'a> {
    mesh: &'a TriangleMesh,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl<'a> SurfaceIndex<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Result<Self> {
        mesh.ensure_nonempty()?;
        let centroids: Vec<Vec3> = mesh
            .faces
            .iter()
            .map(|f| (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0)
            .collect();
        let mut order: Vec<usize> = (0..mesh.faces.len()).collect();
        let mut nodes = Vec::with_capacity(2 * mesh.faces.len() / LEAF_SIZE + 1);
        build(mesh, &centroids, &mut order, 0, mesh.faces.len(), &mut nodes);
        Ok(Self { mesh, nodes, order })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        self.mesh
    }

    pub fn nearest(&self, q: &Vec3) -> SurfacePoint {
        let mut best = SurfacePoint {
            point: Vec3::zeros(),
            distance: f64::INFINITY,
            face: usize::MAX,
        };
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if box_distance(q, &node.lo, &node.hi) > best.distance {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start..node.start + node.count] {
                    let c = face_candidate(self.mesh, f, q);
                    if better(&c, &best) {
                        best = c;
                    }
                }
            } else {
                let (l, r) = (node.left, node.right);
                let dl = box_distance(q, &self.nodes[l].lo, &self.nodes[l].hi);
                let dr = box_distance(q, &self.nodes[r].lo, &self.nodes[r].hi);
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best
    }
}

fn box_distance(q: &Vec3, lo: &Vec3, hi: &Vec3) -> f64 {
    let mut d2 = 0.0;
    for k in 0..3 {
        let v = if q[k] < lo[k] {
            lo[k] - q[k]
        } else if q[k] > hi[k] {
            q[k] - hi[k]
        } else {
            0.0
        };
        d2 += v * v;
    }
    // Shrink slightly so rounding can never prune a box holding an exact tie.
    d2.sqrt() * (1.0 - 1e-12)
}

fn build(
    mesh: &TriangleMesh,
    centroids: &[Vec3],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for &f in &order[start..end] {
        for &v in &mesh.faces[f] {
            lo = lo.inf(&mesh.vertices[v]);
            hi = hi.sup(&mesh.vertices[v]);
        }
    }
    let id = nodes.len();
    nodes.push(Node {
        lo,
        hi,
        start,
        count: end - start,
        left: 0,
        right: 0,
    });
    if end - start <= LEAF_SIZE {
        return id;
    }
    let extent = hi - lo;
    let axis = extent.imax();
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centroids[a][axis]
            .total_cmp(&centroids[b][axis])
            .then(a.cmp(&b))
    });
    let left = build(mesh, centroids, order, start, mid, nodes);
    let right = build(mesh, centroids, order, mid, end, nodes);
    nodes[id].count = 0;
    nodes[id].left = left;
    nodes[id].right = right;
    id
}

impl TriangleMesh {
    /// Exact closest surface point; builds a temporary index.
    pub fn nearest_point_on_surface(&self, q: &Vec3) -> Result<SurfacePoint> {
        Ok(SurfaceIndex::new(self)?.nearest(q))
    }
}
