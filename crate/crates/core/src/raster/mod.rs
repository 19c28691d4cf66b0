//! Software rasterizer for normal, silhouette, depth and color maps with
//! analytic gradients.
//!
//! Coverage is decided by a hard z-buffer at pixel centres. On top of that,
//! pixels within half a pixel of a silhouette edge get a fractional
//! coverage `alpha` from their distance to the edge, which makes the
//! silhouette (and every blended attribute) continuous in the vertex
//! positions away from occlusion boundaries.

mod backward;
mod loss;

use rayon::prelude::*;

pub use backward::{backward, MeshGrads, PixelGrads};
pub use loss::{color_loss, geometry_loss, multiview, multiview_geometry, LossKind, MultiviewLoss};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mesh::{Adjacency, TriangleMesh, Vec3};
use crate::views::{encode_normal, Observation, OrthoCamera, BACKGROUND_NORMAL};

pub const NONE: u32 = u32::MAX;

/// Rows handled per parallel work item.
const BAND: usize = 16;

/// Depth slack, in pixels, for matching a covered pixel to a nearby
/// silhouette edge of the same surface sheet.
const SHEET_TOLERANCE_PX: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RasterOptions {
    pub cull_backfaces: bool,
    pub antialias: bool,
}

impl Default for RasterOptions {
    fn default() -> Self {
        Self {
            cull_backfaces: true,
            antialias: true,
        }
    }
}

/// Per-mesh data shared by every view of one render pass.
pub struct Prepared<'a> {
    pub mesh: &'a TriangleMesh,
    pub adjacency: Adjacency,
    /// World-space unit vertex normals.
    pub normals: Vec<Vec3>,
}

impl<'a> Prepared<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Result<Self> {
        mesh.ensure_nonempty()?;
        Ok(Self {
            mesh,
            adjacency: mesh.adjacency(),
            normals: crate::mesh::vertex_normals(&mesh.vertices, &mesh.faces),
        })
    }
}

/// Output of [`rasterize`] plus the record needed by [`backward`].
#[derive(Clone, Debug)]
pub struct RenderBuffers {
    pub width: usize,
    pub height: usize,
    /// Covering face per pixel, [`NONE`] where uncovered.
    pub face: Vec<u32>,
    pub bary: Vec<[f64; 3]>,
    /// `f64::INFINITY` where uncovered.
    pub depth: Vec<f64>,
    pub silhouette: Vec<f64>,
    /// Camera-space normals (not encoded).
    pub normal: Vec<Vec3>,
    pub color: Option<Vec<Vec3>>,
    /// Silhouette edge that set the pixel's fractional coverage.
    pub aa_edge: Vec<[u32; 2]>,
    pub options: RasterOptions,
    vertex_count: usize,
    face_count: usize,
}

impl RenderBuffers {
    pub fn normal_image(&self) -> Image {
        let mut data = Vec::with_capacity(self.normal.len() * 3);
        for n in &self.normal {
            data.extend_from_slice(&encode_normal(n));
        }
        Image::from_data(self.width, self.height, 3, data).expect("shape")
    }

    pub fn silhouette_image(&self) -> Image {
        let data = self.silhouette.iter().map(|&a| a as f32).collect();
        Image::from_data(self.width, self.height, 1, data).expect("shape")
    }

    pub fn color_image(&self) -> Option<Image> {
        self.color.as_ref().map(|c| {
            let data = c.iter().flat_map(|v| [v.x as f32, v.y as f32, v.z as f32]).collect();
            Image::from_data(self.width, self.height, 3, data).expect("shape")
        })
    }

    /// Depth with uncovered pixels set to `background`.
    pub fn depth_image(&self, background: f32) -> Image {
        let data = self
            .depth
            .iter()
            .map(|&d| if d.is_finite() { d as f32 } else { background })
            .collect();
        Image::from_data(self.width, self.height, 1, data).expect("shape")
    }

    pub fn to_observation(&self) -> Observation {
        Observation {
            normal: self.normal_image(),
            silhouette: self.silhouette_image(),
            color: self.color_image(),
        }
    }

    pub(crate) fn check_matches(&self, mesh: &TriangleMesh, camera: &OrthoCamera) -> Result<()> {
        if self.vertex_count != mesh.vertices.len() || self.face_count != mesh.faces.len() {
            return Err(Error::DimensionMismatch("render buffers belong to a different mesh".into()));
        }
        if self.width != camera.resolution || self.height != camera.resolution {
            return Err(Error::DimensionMismatch("render buffers belong to a different camera".into()));
        }
        Ok(())
    }
}

/// Screen-space view of a mesh under one camera.
pub(crate) struct Projected {
    /// Continuous pixel coordinates.
    pub screen: Vec<[f64; 2]>,
    pub depth: Vec<f64>,
    pub normals: Vec<Vec3>,
    /// Twice the signed pixel-space area; negative means front-facing.
    pub area2: Vec<f64>,
}

impl Projected {
    pub fn new(prep: &Prepared, camera: &OrthoCamera) -> Self {
        let mesh = prep.mesh;
        let mut screen = Vec::with_capacity(mesh.vertices.len());
        let mut depth = Vec::with_capacity(mesh.vertices.len());
        for v in &mesh.vertices {
            let (x, y, d) = camera.project(v);
            screen.push([x, y]);
            depth.push(d);
        }
        let normals = prep.normals.iter().map(|n| camera.world_normal_to_camera(n)).collect();
        let area2 = mesh
            .faces
            .iter()
            .map(|f| {
                let (a, b, c) = (screen[f[0]], screen[f[1]], screen[f[2]]);
                cross2([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]])
            })
            .collect();
        Self {
            screen,
            depth,
            normals,
            area2,
        }
    }

    #[inline]
    pub fn front(&self, f: usize) -> bool {
        self.area2[f] < 0.0
    }
}

#[inline]
pub(crate) fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Barycentric weights of `p` in triangle `(a, b, c)` with doubled signed
/// area `area2`.
#[inline]
pub(crate) fn barycentric(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2], area2: f64) -> [f64; 3] {
    let pa = [a[0] - p[0], a[1] - p[1]];
    let pb = [b[0] - p[0], b[1] - p[1]];
    let pc = [c[0] - p[0], c[1] - p[1]];
    [cross2(pb, pc) / area2, cross2(pc, pa) / area2, cross2(pa, pb) / area2]
}

/// Closest point on segment `e0 e1` to `p`: `(t, q, distance, clamped)`.
#[inline]
pub(crate) fn segment_closest(p: [f64; 2], e0: [f64; 2], e1: [f64; 2]) -> (f64, [f64; 2], f64, bool) {
    let e = [e1[0] - e0[0], e1[1] - e0[1]];
    let r = [p[0] - e0[0], p[1] - e0[1]];
    let ee = e[0] * e[0] + e[1] * e[1];
    let raw = if ee > 0.0 { (r[0] * e[0] + r[1] * e[1]) / ee } else { 0.0 };
    let (t, clamped) = if raw <= 0.0 {
        (0.0, true)
    } else if raw >= 1.0 {
        (1.0, true)
    } else {
        (raw, false)
    };
    let q = [e0[0] + t * e[0], e0[1] + t * e[1]];
    let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    (t, q, d, clamped)
}

#[inline]
pub(crate) fn pixel_center(p: usize, width: usize) -> [f64; 2] {
    ((p % width) as f64 + 0.5, (p / width) as f64 + 0.5).into()
}

/// Edges on the visible outline under the current facing.
pub(crate) fn silhouette_edges(adj: &Adjacency, proj: &Projected, cull: bool) -> Vec<[usize; 2]> {
    adj.edges
        .iter()
        .filter(|e| {
            let fronts = e.faces.iter().filter(|&&f| proj.front(f)).count();
            if cull {
                fronts == 1
            } else {
                e.faces.len() == 1 || (fronts > 0 && fronts < e.faces.len())
            }
        })
        .map(|e| [e.a, e.b])
        .collect()
}

/// Renders `mesh` from `camera` with default options.
pub fn rasterize(mesh: &TriangleMesh, camera: &OrthoCamera) -> Result<RenderBuffers> {
    rasterize_with(&Prepared::new(mesh)?, camera, RasterOptions::default())
}

pub fn rasterize_with(prep: &Prepared, camera: &OrthoCamera, options: RasterOptions) -> Result<RenderBuffers> {
    let (w, h) = (camera.resolution, camera.resolution);
    if w == 0 {
        return Err(Error::Config("zero-resolution camera".into()));
    }
    let mesh = prep.mesh;
    let proj = Projected::new(prep, camera);
    let n = w * h;

    // Bin faces by row band.
    let bands = h.div_ceil(BAND);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); bands];
    for (fi, f) in mesh.faces.iter().enumerate() {
        let a2 = proj.area2[fi];
        if a2 == 0.0 || (options.cull_backfaces && !proj.front(fi)) {
            continue;
        }
        let ys = [proj.screen[f[0]][1], proj.screen[f[1]][1], proj.screen[f[2]][1]];
        let (lo, hi) = (ys.iter().cloned().fold(f64::INFINITY, f64::min), ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let Some((y0, y1)) = center_range(lo, hi, h) else { continue };
        for bin in &mut bins[y0 / BAND..=y1 / BAND] {
            bin.push(fi as u32);
        }
    }

    let mut face = vec![NONE; n];
    let mut bary = vec![[0.0; 3]; n];
    let mut depth = vec![f64::INFINITY; n];
    face.par_chunks_mut(BAND * w)
        .zip(bary.par_chunks_mut(BAND * w))
        .zip(depth.par_chunks_mut(BAND * w))
        .enumerate()
        .for_each(|(band, ((face, bary), depth))| {
            let row0 = band * BAND;
            let rows = face.len() / w;
            for &fi in &bins[band] {
                let fi = fi as usize;
                let f = mesh.faces[fi];
                let (a, b, c) = (proj.screen[f[0]], proj.screen[f[1]], proj.screen[f[2]]);
                let a2 = proj.area2[fi];
                let (ylo, yhi) = (a[1].min(b[1]).min(c[1]), a[1].max(b[1]).max(c[1]));
                let (xlo, xhi) = (a[0].min(b[0]).min(c[0]), a[0].max(b[0]).max(c[0]));
                let Some((y0, y1)) = center_range(ylo, yhi, h) else { continue };
                let Some((x0, x1)) = center_range(xlo, xhi, w) else { continue };
                let (y0, y1) = (y0.max(row0), y1.min(row0 + rows - 1));
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let p = [x as f64 + 0.5, y as f64 + 0.5];
                        let wts = barycentric(p, a, b, c, a2);
                        if wts[0] < 0.0 || wts[1] < 0.0 || wts[2] < 0.0 {
                            continue;
                        }
                        let z = wts[0] * proj.depth[f[0]] + wts[1] * proj.depth[f[1]] + wts[2] * proj.depth[f[2]];
                        let i = (y - row0) * w + x;
                        if z < depth[i] {
                            depth[i] = z;
                            face[i] = fi as u32;
                            bary[i] = wts;
                        }
                    }
                }
            }
        });

    let colors = mesh.colors.as_ref();
    let mut silhouette = vec![0.0; n];
    let mut normal = vec![BACKGROUND_NORMAL; n];
    let mut color = colors.map(|_| vec![Vec3::zeros(); n]);
    for p in 0..n {
        let fi = face[p];
        if fi == NONE {
            continue;
        }
        let f = mesh.faces[fi as usize];
        let wts = bary[p];
        silhouette[p] = 1.0;
        normal[p] = interpolate_normal(&proj.normals, &f, &wts);
        if let (Some(c), Some(out)) = (colors, color.as_mut()) {
            out[p] = c[f[0]] * wts[0] + c[f[1]] * wts[1] + c[f[2]] * wts[2];
        }
    }

    let mut aa_edge = vec![[NONE; 2]; n];
    if options.antialias {
        let edges = silhouette_edges(&prep.adjacency, &proj, options.cull_backfaces);
        let tol = SHEET_TOLERANCE_PX * camera.pixel_size();
        let mut best = vec![0.5f64; n];
        for [ea, eb] in edges {
            let (e0, e1) = (proj.screen[ea], proj.screen[eb]);
            let Some((x0, x1)) = center_range(e0[0].min(e1[0]) - 0.5, e0[0].max(e1[0]) + 0.5, w) else { continue };
            let Some((y0, y1)) = center_range(e0[1].min(e1[1]) - 0.5, e0[1].max(e1[1]) + 0.5, h) else { continue };
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = y * w + x;
                    let (t, _, d, _) = segment_closest([x as f64 + 0.5, y as f64 + 0.5], e0, e1);
                    if d >= best[p] {
                        continue;
                    }
                    let fi = face[p];
                    if fi != NONE {
                        let f = mesh.faces[fi as usize];
                        let shares = f.contains(&ea) || f.contains(&eb);
                        let zq = proj.depth[ea] + t * (proj.depth[eb] - proj.depth[ea]);
                        if !shares && (zq - depth[p]).abs() > tol {
                            continue;
                        }
                    }
                    best[p] = d;
                    aa_edge[p] = [ea as u32, eb as u32];
                }
            }
        }
        for p in 0..n {
            let [ea, eb] = aa_edge[p];
            if ea == NONE {
                continue;
            }
            let (ea, eb) = (ea as usize, eb as usize);
            let d = best[p];
            let (alpha, f_normal, f_color) = if face[p] == NONE {
                let (t, _, _, _) = segment_closest(pixel_center(p, w), proj.screen[ea], proj.screen[eb]);
                let u = proj.normals[ea] * (1.0 - t) + proj.normals[eb] * t;
                let c = colors.map(|c| c[ea] * (1.0 - t) + c[eb] * t);
                (0.5 - d, normalize_or_background(&u), c)
            } else {
                (0.5 + d, normal[p], color.as_ref().map(|c| c[p]))
            };
            silhouette[p] = alpha;
            normal[p] = normalize_or_background(&(f_normal * alpha + BACKGROUND_NORMAL * (1.0 - alpha)));
            if let (Some(out), Some(c)) = (color.as_mut(), f_color) {
                out[p] = c * alpha;
            }
        }
    }

    Ok(RenderBuffers {
        width: w,
        height: h,
        face,
        bary,
        depth,
        silhouette,
        normal,
        color,
        aa_edge,
        options,
        vertex_count: mesh.vertices.len(),
        face_count: mesh.faces.len(),
    })
}

/// Inclusive range of pixel indices whose centres lie in `[lo, hi]`.
#[inline]
fn center_range(lo: f64, hi: f64, size: usize) -> Option<(usize, usize)> {
    if !(lo <= hi) {
        return None;
    }
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(size as f64 - 1.0);
    if first > last {
        return None;
    }
    Some((first as usize, last as usize))
}

#[inline]
pub(crate) fn interpolate_normal(normals: &[Vec3], f: &[usize; 3], w: &[f64; 3]) -> Vec3 {
    normalize_or_background(&(normals[f[0]] * w[0] + normals[f[1]] * w[1] + normals[f[2]] * w[2]))
}

#[inline]
pub(crate) fn normalize_or_background(v: &Vec3) -> Vec3 {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        BACKGROUND_NORMAL
    }
}
