//! Deterministic procedural meshes used as ground truth and templates.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::{remesh_pass, RemeshTarget, TriangleMesh, Vec3};

pub fn tetrahedron() -> TriangleMesh {
    let v = vec![
        Vec3::new(1.0, 1.0, 1.0),
        Vec3::new(1.0, -1.0, -1.0),
        Vec3::new(-1.0, 1.0, -1.0),
        Vec3::new(-1.0, -1.0, 1.0),
    ];
    TriangleMesh::new(v, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]).unwrap()
}

/// Two triangles spanning `[-side/2, side/2]^2` in the z = 0 plane, facing +z.
pub fn quad(side: f64) -> TriangleMesh {
    let h = side / 2.0;
    let v = vec![
        Vec3::new(-h, -h, 0.0),
        Vec3::new(h, -h, 0.0),
        Vec3::new(h, h, 0.0),
        Vec3::new(-h, h, 0.0),
    ];
    TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap()
}

/// `(n+1)^2` vertex grid in the z = 0 plane, row-major, facing +z.
pub fn plane_grid(n: usize, size: f64) -> TriangleMesh {
    let step = size / n as f64;
    let mut v = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            v.push(Vec3::new(i as f64 * step - size / 2.0, j as f64 * step - size / 2.0, 0.0));
        }
    }
    let mut f = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = j * (n + 1) + i;
            let b = a + 1;
            let c = a + n + 1;
            let d = c + 1;
            f.push([a, b, d]);
            f.push([a, d, c]);
        }
    }
    TriangleMesh::new(v, f).unwrap()
}

/// Axis-aligned cube of the given side centred at the origin. Every face
/// diagonal joins the even-parity corners so corner normals are symmetric.
pub fn cube(side: f64) -> TriangleMesh {
    let h = side / 2.0;
    let corner = |i: usize| {
        Vec3::new(
            if i & 1 != 0 { h } else { -h },
            if i & 2 != 0 { h } else { -h },
            if i & 4 != 0 { h } else { -h },
        )
    };
    let vertices: Vec<Vec3> = (0..8).map(corner).collect();
    // Each face as a CCW (outward) corner cycle.
    let quads = [
        [1, 3, 7, 5], // +x
        [0, 4, 6, 2], // -x
        [2, 6, 7, 3], // +y
        [0, 1, 5, 4], // -y
        [4, 5, 7, 6], // +z
        [0, 2, 3, 1], // -z
    ];
    let even = |i: usize| (i.count_ones() % 2) == 0;
    let mut faces = Vec::new();
    for q in quads {
        // rotate so the cycle starts at an even corner; diagonal q0-q2 is even-even
        let s = if even(q[0]) { 0 } else { 1 };
        let r = [q[s], q[(s + 1) % 4], q[(s + 2) % 4], q[(s + 3) % 4]];
        faces.push([r[0], r[1], r[2]]);
        faces.push([r[0], r[2], r[3]]);
    }
    TriangleMesh::new(vertices, faces).unwrap()
}

/// Unit-radius subdivided icosahedron (subdivision 4: 2562 vertices).
pub fn icosphere(subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriangleMesh::new(vertices, faces).unwrap()
}

/// Unit icosphere with a radial displacement `amplitude * f(u) / max|f|`,
/// `f(u) = sin(w u_x) + sin(w u_y) + sin(w u_z)`.
pub fn bumpy_sphere(subdivisions: usize, amplitude: f64, frequency: f64) -> TriangleMesh {
    let mut m = icosphere(subdivisions);
    let f: Vec<f64> = m
        .vertices
        .iter()
        .map(|u| (frequency * u.x).sin() + (frequency * u.y).sin() + (frequency * u.z).sin())
        .collect();
    let peak = f.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    for (v, fv) in m.vertices.iter_mut().zip(f) {
        *v *= 1.0 + amplitude * (fv / peak);
    }
    m
}

pub fn snowman() -> TriangleMesh {
    let body = icosphere(3).scaled(0.55).translated(Vec3::new(0.0, -0.35, 0.0));
    let head = snowman_head();
    body.merged(&head)
}

/// Top sphere of [`snowman`], used as a head reference.
pub fn snowman_head() -> TriangleMesh {
    icosphere(3).scaled(0.3).translated(Vec3::new(0.0, 0.62, 0.0))
}

/// Shape knobs of the capsule mannequin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MannequinParams {
    pub torso_radius: f64,
    /// Depth-to-width ratio of the torso cross-section.
    pub torso_depth: f64,
    pub limb_radius: f64,
    pub head_radius: f64,
    /// Horizontal hand offset from the body axis.
    pub arm_spread: f64,
    pub blend: f64,
}

impl Default for MannequinParams {
    fn default() -> Self {
        Self {
            torso_radius: 0.22,
            torso_depth: 0.65,
            limb_radius: 0.075,
            head_radius: 0.16,
            arm_spread: 0.5,
            blend: 0.05,
        }
    }
}

impl MannequinParams {
    /// Rounder, thinner-limbed body standing in for a coarse body-model estimate.
    pub fn prior() -> Self {
        Self {
            torso_radius: 0.2,
            torso_depth: 1.0,
            limb_radius: 0.065,
            head_radius: 0.15,
            arm_spread: 0.47,
            blend: 0.05,
        }
    }
}

fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    let h = (0.5 + 0.5 * (b - a) / k).clamp(0.0, 1.0);
    b + (a - b) * h - k * h * (1.0 - h)
}

/// Signed distance-like field of the mannequin, negative inside.
pub fn mannequin_field(p: &Vec3, prm: &MannequinParams) -> f64 {
    let torso_p = Vec3::new(p.x, p.y, p.z / prm.torso_depth);
    let torso = segment_distance(&torso_p, &Vec3::new(0.0, -0.05, 0.0), &Vec3::new(0.0, 0.38, 0.0))
        - prm.torso_radius;
    let neck = segment_distance(p, &Vec3::new(0.0, 0.45, 0.0), &Vec3::new(0.0, 0.68, 0.0)) - 0.06;
    let head = (p - Vec3::new(0.0, 0.78, 0.0)).norm() - prm.head_radius;
    let mut d = smooth_min(torso, neck, prm.blend);
    d = smooth_min(d, head, prm.blend);
    for s in [-1.0, 1.0] {
        let arm = segment_distance(
            p,
            &Vec3::new(s * 0.27, 0.5, 0.0),
            &Vec3::new(s * prm.arm_spread, -0.12, 0.06),
        ) - prm.limb_radius;
        let leg = segment_distance(
            p,
            &Vec3::new(s * 0.11, -0.12, 0.0),
            &Vec3::new(s * 0.16, -0.86, 0.02),
        ) - prm.limb_radius * 1.2;
        d = smooth_min(d, arm, prm.blend);
        d = smooth_min(d, leg, prm.blend);
    }
    d
}

/// Capsule mannequin polygonized on a grid of the given spacing, cleaned
/// up by remeshing to `spacing` and projected back onto the surface.
pub fn mannequin(prm: &MannequinParams, spacing: f64) -> TriangleMesh {
    let field = |p: &Vec3| mannequin_field(p, prm);
    let lo = Vec3::new(-0.75, -1.0, -0.45);
    let hi = Vec3::new(0.75, 1.0, 0.45);
    let mut mesh = marching_tetrahedra(&field, lo, hi, spacing);
    let mut attrs = Vec::new();
    for _ in 0..4 {
        remesh_pass(&mut mesh, &mut attrs, 0, RemeshTarget { edge_length: spacing });
        project_to_level_set(&mut mesh, &field, spacing);
    }
    mesh
}

fn project_to_level_set(mesh: &mut TriangleMesh, field: &impl Fn(&Vec3) -> f64, spacing: f64) {
    let h = spacing * 1e-3;
    for v in &mut mesh.vertices {
        for _ in 0..4 {
            let f = field(v);
            let g = Vec3::new(
                field(&(*v + Vec3::x() * h)) - field(&(*v - Vec3::x() * h)),
                field(&(*v + Vec3::y() * h)) - field(&(*v - Vec3::y() * h)),
                field(&(*v + Vec3::z() * h)) - field(&(*v - Vec3::z() * h)),
            ) / (2.0 * h);
            let g2 = g.norm_squared();
            if g2 < 1e-12 {
                break;
            }
            let step = g * (f / g2);
            // keep projection local so thin features cannot swap sides
            *v -= if step.norm() > spacing { step * (spacing / step.norm()) } else { step };
        }
    }
}

/// Watertight polygonization of `{field < 0}` on a regular grid using the
/// Kuhn six-tetrahedra split of each cell. Triangles face increasing field.
pub fn marching_tetrahedra(
    field: &impl Fn(&Vec3) -> f64,
    lo: Vec3,
    hi: Vec3,
    spacing: f64,
) -> TriangleMesh {
    let n = ((hi - lo) / spacing).map(|x| x.ceil() as usize + 1);
    let (nx, ny, nz) = (n.x, n.y, n.z);
    let id = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
    let pos = |i: usize, j: usize, k: usize| lo + Vec3::new(i as f64, j as f64, k as f64) * spacing;
    let mut values = vec![0.0; (nx + 1) * (ny + 1) * (nz + 1)];
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                let v = field(&pos(i, j, k));
                values[id(i, j, k)] = if v == 0.0 { 1e-12 } else { v };
            }
        }
    }
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut vertices = Vec::new();
    let mut edge_vertex: HashMap<(usize, usize), usize> = HashMap::new();
    let mut faces = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for perm in perms {
                    let mut c = [i, j, k];
                    let mut corners = [(0usize, Vec3::zeros()); 4];
                    corners[0] = (id(c[0], c[1], c[2]), pos(c[0], c[1], c[2]));
                    for (s, &axis) in perm.iter().enumerate() {
                        c[axis] += 1;
                        corners[s + 1] = (id(c[0], c[1], c[2]), pos(c[0], c[1], c[2]));
                    }
                    let inside: Vec<usize> = (0..4).filter(|&t| values[corners[t].0] < 0.0).collect();
                    if inside.is_empty() || inside.len() == 4 {
                        continue;
                    }
                    let outside: Vec<usize> = (0..4).filter(|t| !inside.contains(t)).collect();
                    let mut cut = |a: usize, b: usize| {
                        let (ga, pa) = corners[a];
                        let (gb, pb) = corners[b];
                        let key = (ga.min(gb), ga.max(gb));
                        *edge_vertex.entry(key).or_insert_with(|| {
                            let (va, vb) = (values[ga], values[gb]);
                            let t = va / (va - vb);
                            vertices.push(pa + (pb - pa) * t);
                            vertices.len() - 1
                        })
                    };
                    let mut tris: Vec<[usize; 3]> = Vec::new();
                    if inside.len() == 1 || inside.len() == 3 {
                        let (apex, others) = if inside.len() == 1 {
                            (inside[0], outside.clone())
                        } else {
                            (outside[0], inside.clone())
                        };
                        tris.push([cut(apex, others[0]), cut(apex, others[1]), cut(apex, others[2])]);
                    } else {
                        let (a, b) = (inside[0], inside[1]);
                        let (c2, d) = (outside[0], outside[1]);
                        let ac = cut(a, c2);
                        let ad = cut(a, d);
                        let bc = cut(b, c2);
                        let bd = cut(b, d);
                        tris.push([ac, ad, bd]);
                        tris.push([ac, bd, bc]);
                    }
                    let cin: Vec3 = inside.iter().map(|&t| corners[t].1).sum::<Vec3>() / inside.len() as f64;
                    let cout: Vec3 = outside.iter().map(|&t| corners[t].1).sum::<Vec3>() / outside.len() as f64;
                    let outward = cout - cin;
                    for mut t in tris {
                        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                            continue;
                        }
                        let nrm = (vertices[t[1]] - vertices[t[0]]).cross(&(vertices[t[2]] - vertices[t[0]]));
                        if nrm.dot(&outward) < 0.0 {
                            t.swap(1, 2);
                        }
                        faces.push(t);
                    }
                }
            }
        }
    }
    TriangleMesh {
        vertices,
        faces,
        colors: None,
    }
}

/// Named built-in scenes: `(name, mesh, description)`.
pub fn builtin_scenes() -> Vec<(&'static str, TriangleMesh, &'static str)> {
    vec![
        ("icosphere", icosphere(4), "unit icosphere, subdivision 4"),
        (
            "bumpy_sphere",
            bumpy_sphere(5, 0.05, 6.0),
            "unit sphere with a frequency-6 radial sinusoid of amplitude 0.05",
        ),
        (
            "mannequin",
            mannequin(&MannequinParams::default(), 0.03),
            "capsule mannequin: torso, head, arms and legs in a smooth union",
        ),
        ("cube", cube(1.6), "axis-aligned cube, side 1.6"),
        ("snowman", snowman(), "two disjoint spheres stacked vertically"),
    ]
}

pub fn scene_by_name(name: &str) -> Result<TriangleMesh> {
    match name {
        "icosphere" => Ok(icosphere(4)),
        "bumpy_sphere" => Ok(bumpy_sphere(5, 0.05, 6.0)),
        "mannequin" => Ok(mannequin(&MannequinParams::default(), 0.03)),
        "mannequin_prior" => Ok(mannequin(&MannequinParams::prior(), 0.06)),
        "cube" => Ok(cube(1.6)),
        "snowman" => Ok(snowman()),
        other => Err(Error::Config(format!("unknown scene '{other}'"))),
    }
}
