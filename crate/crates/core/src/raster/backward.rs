use super::{pixel_center, segment_closest, Prepared, Projected, RenderBuffers, NONE};
use crate::error::{Error, Result};
use crate::mesh::{vertex_normals_backward, Vec3};
use crate::views::{OrthoCamera, BACKGROUND_NORMAL};

/// Per-pixel loss gradients on a view's rendered maps.
#[derive(Clone, Debug)]
pub struct PixelGrads {
    /// On the camera-space (decoded) normal.
    pub normal: Vec<Vec3>,
    pub silhouette: Vec<f64>,
    pub color: Option<Vec<Vec3>>,
}

impl PixelGrads {
    pub fn zeros(pixels: usize, with_color: bool) -> Self {
        Self {
            normal: vec![Vec3::zeros(); pixels],
            silhouette: vec![0.0; pixels],
            color: with_color.then(|| vec![Vec3::zeros(); pixels]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshGrads {
    pub positions: Vec<Vec3>,
    pub colors: Option<Vec<Vec3>>,
}

impl MeshGrads {
    pub fn zeros(vertices: usize, with_color: bool) -> Self {
        Self {
            positions: vec![Vec3::zeros(); vertices],
            colors: with_color.then(|| vec![Vec3::zeros(); vertices]),
        }
    }

    pub fn add_scaled(&mut self, other: &MeshGrads, s: f64) {
        for (a, b) in self.positions.iter_mut().zip(&other.positions) {
            *a += b * s;
        }
        if let (Some(a), Some(b)) = (self.colors.as_mut(), other.colors.as_ref()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y * s;
            }
        }
    }
}

/// Gradient of `v / |v|` given the upstream gradient `g` on the result.
#[inline]
fn normalize_back(v: &Vec3, g: &Vec3) -> Vec3 {
    let len = v.norm();
    if len == 0.0 {
        return Vec3::zeros();
    }
    let n = v / len;
    (g - n * n.dot(g)) / len
}

/// Adds `gd * dd/dE0` and `gd * dd/dE1` for the pixel-to-segment distance.
#[inline]
fn distance_back(p: [f64; 2], q: [f64; 2], d: f64, t: f64, gd: f64, g0: &mut [f64; 2], g1: &mut [f64; 2]) {
    if d == 0.0 || gd == 0.0 {
        return;
    }
    let u = [(p[0] - q[0]) / d, (p[1] - q[1]) / d];
    for k in 0..2 {
        g0[k] -= gd * (1.0 - t) * u[k];
        g1[k] -= gd * t * u[k];
    }
}

/// Backpropagates per-pixel gradients to vertex positions and colors.
///
/// `positions = false` skips the geometric chain (color-only optimization).
pub fn backward(
    prep: &Prepared,
    camera: &OrthoCamera,
    buffers: &RenderBuffers,
    grads: &PixelGrads,
    positions: bool,
) -> Result<MeshGrads> {
    let mesh = prep.mesh;
    buffers.check_matches(mesh, camera)?;
    let n = buffers.width * buffers.height;
    if grads.normal.len() != n || grads.silhouette.len() != n {
        return Err(Error::DimensionMismatch("pixel gradients do not match buffers".into()));
    }
    let colors = mesh.colors.as_ref();
    let color_grads = match (&grads.color, colors) {
        (Some(g), Some(_)) if g.len() == n => Some(g),
        (Some(_), None) => return Err(Error::Missing("mesh has no vertex colors".into())),
        (Some(_), Some(_)) => return Err(Error::DimensionMismatch("color gradients".into())),
        (None, _) => None,
    };
    let proj = Projected::new(prep, camera);
    let nv = mesh.vertices.len();
    let mut g_screen = vec![[0.0f64; 2]; nv];
    let mut g_ncam = vec![Vec3::zeros(); nv];
    let mut g_col = color_grads.map(|_| vec![Vec3::zeros(); nv]);
    let zero = Vec3::zeros();

    for p in 0..n {
        let gn = grads.normal[p];
        let gs = grads.silhouette[p];
        let gc = color_grads.map_or(zero, |g| g[p]);
        if gn == zero && gs == 0.0 && gc == zero {
            continue;
        }
        let fi = buffers.face[p];
        let [ea, eb] = buffers.aa_edge[p];
        let has_edge = ea != NONE;
        if fi == NONE && !has_edge {
            continue;
        }
        let pc = pixel_center(p, buffers.width);
        let alpha = buffers.silhouette[p];

        // Upstream gradients on the unblended attributes and on alpha.
        let (g_f, g_cf, g_alpha) = if has_edge {
            let f_normal;
            let f_color;
            if fi == NONE {
                let (ea, eb) = (ea as usize, eb as usize);
                let (t, _, _, _) = segment_closest(pc, proj.screen[ea], proj.screen[eb]);
                f_normal = super::normalize_or_background(&(proj.normals[ea] * (1.0 - t) + proj.normals[eb] * t));
                f_color = colors.map_or(zero, |c| c[ea] * (1.0 - t) + c[eb] * t);
            } else {
                let f = mesh.faces[fi as usize];
                f_normal = super::interpolate_normal(&proj.normals, &f, &buffers.bary[p]);
                let w = buffers.bary[p];
                f_color = colors.map_or(zero, |c| c[f[0]] * w[0] + c[f[1]] * w[1] + c[f[2]] * w[2]);
            }
            let blended = f_normal * alpha + BACKGROUND_NORMAL * (1.0 - alpha);
            let g_b = normalize_back(&blended, &gn);
            let g_alpha = gs + (f_normal - BACKGROUND_NORMAL).dot(&g_b) + f_color.dot(&gc);
            (g_b * alpha, gc * alpha, g_alpha)
        } else {
            (gn, gc, 0.0)
        };

        if fi != NONE {
            let f = mesh.faces[fi as usize];
            let w = buffers.bary[p];
            let u = proj.normals[f[0]] * w[0] + proj.normals[f[1]] * w[1] + proj.normals[f[2]] * w[2];
            let g_u = normalize_back(&u, &g_f);
            let mut g_w = [0.0; 3];
            for k in 0..3 {
                g_ncam[f[k]] += g_u * w[k];
                g_w[k] = proj.normals[f[k]].dot(&g_u);
                if let (Some(c), Some(gcol)) = (colors, g_col.as_mut()) {
                    gcol[f[k]] += g_cf * w[k];
                    g_w[k] += c[f[k]].dot(&g_cf);
                }
            }
            if positions {
                bary_back(&proj, &f, &w, &g_w, &mut g_screen);
            }
            if has_edge && positions {
                let (ea, eb) = (ea as usize, eb as usize);
                let (t, q, d, _) = segment_closest(pc, proj.screen[ea], proj.screen[eb]);
                let (mut g0, mut g1) = ([0.0; 2], [0.0; 2]);
                distance_back(pc, q, d, t, g_alpha, &mut g0, &mut g1);
                add2(&mut g_screen[ea], g0);
                add2(&mut g_screen[eb], g1);
            }
        } else {
            let (ea, eb) = (ea as usize, eb as usize);
            let (e0, e1) = (proj.screen[ea], proj.screen[eb]);
            let (t, q, d, clamped) = segment_closest(pc, e0, e1);
            let u = proj.normals[ea] * (1.0 - t) + proj.normals[eb] * t;
            let g_u = normalize_back(&u, &g_f);
            g_ncam[ea] += g_u * (1.0 - t);
            g_ncam[eb] += g_u * t;
            let mut g_t = (proj.normals[eb] - proj.normals[ea]).dot(&g_u);
            if let (Some(c), Some(gcol)) = (colors, g_col.as_mut()) {
                gcol[ea] += g_cf * (1.0 - t);
                gcol[eb] += g_cf * t;
                g_t += (c[eb] - c[ea]).dot(&g_cf);
            }
            if positions {
                let (mut g0, mut g1) = ([0.0; 2], [0.0; 2]);
                // alpha = 0.5 - d
                distance_back(pc, q, d, t, -g_alpha, &mut g0, &mut g1);
                if !clamped && g_t != 0.0 {
                    let e = [e1[0] - e0[0], e1[1] - e0[1]];
                    let r = [pc[0] - e0[0], pc[1] - e0[1]];
                    let ee = e[0] * e[0] + e[1] * e[1];
                    for k in 0..2 {
                        g1[k] += g_t * (r[k] - 2.0 * t * e[k]) / ee;
                        g0[k] += g_t * (-e[k] - r[k] + 2.0 * t * e[k]) / ee;
                    }
                }
                add2(&mut g_screen[ea], g0);
                add2(&mut g_screen[eb], g1);
            }
        }
    }

    let mut out = MeshGrads {
        positions: vec![Vec3::zeros(); nv],
        colors: g_col,
    };
    if positions {
        let rot = camera.rotation();
        let s = camera.pixel_scale();
        for v in 0..nv {
            let g_cam = Vec3::new(s * g_screen[v][0], -s * g_screen[v][1], 0.0);
            out.positions[v] = rot * g_cam;
        }
        let g_nworld: Vec<Vec3> = g_ncam.iter().map(|g| rot * g).collect();
        vertex_normals_backward(&mesh.vertices, &mesh.faces, &g_nworld, &mut out.positions);
    }
    Ok(out)
}

#[inline]
fn add2(a: &mut [f64; 2], b: [f64; 2]) {
    a[0] += b[0];
    a[1] += b[1];
}

/// Chain rule from barycentric weights at a fixed pixel to the triangle's
/// screen positions: `dL/dP_m = -w_m M^{-T} (g_w1 - g_w0, g_w2 - g_w0)` with
/// `M = [P1 - P0, P2 - P0]`.
fn bary_back(proj: &Projected, f: &[usize; 3], w: &[f64; 3], g_w: &[f64; 3], g_screen: &mut [[f64; 2]]) {
    let (p0, p1, p2) = (proj.screen[f[0]], proj.screen[f[1]], proj.screen[f[2]]);
    let m = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 {
        return;
    }
    let h = [g_w[1] - g_w[0], g_w[2] - g_w[0]];
    // M^{-T} h
    let v = [
        (m[1][1] * h[0] - m[1][0] * h[1]) / det,
        (-m[0][1] * h[0] + m[0][0] * h[1]) / det,
    ];
    for k in 0..3 {
        g_screen[f[k]][0] -= w[k] * v[0];
        g_screen[f[k]][1] -= w[k] * v[1];
    }
}
