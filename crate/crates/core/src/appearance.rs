//! Per-vertex color recovery, unseen-region interpolation and the
//! image-space face composite.

use std::cmp::Ordering;

use crate::carving::CarveConfig;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::kdtree::KdTree3;
use crate::mesh::{TriangleMesh, Vec3};
use crate::optim::Adam;
use crate::raster::{barycentric, multiview, rasterize_with, LossKind, Prepared, Projected, RasterOptions, NONE};
use crate::views::{Observation, View, ViewSet};

/// Depth slack of the visibility test, relative to the bounding-box diagonal.
pub const VISIBILITY_EPS: f64 = 1e-4;
pub const UNSEEN_NEIGHBORS: usize = 8;

/// Per-vertex flag: front-facing and unoccluded in at least one view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VisibilityMask {
    pub visible: Vec<bool>,
}

impl VisibilityMask {
    pub fn all(n: usize) -> Self {
        Self { visible: vec![true; n] }
    }

    pub fn count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.visible.len().max(1) as f64
    }
}

/// Vertices seen by one camera, with their pixel index.
fn visible_in_view(prep: &Prepared, view: &View, eps: f64) -> Result<Vec<Option<usize>>> {
    let cam = &view.camera;
    let buffers = rasterize_with(prep, cam, RasterOptions::default())?;
    let proj = Projected::new(prep, cam);
    let mesh = prep.mesh;
    let res = cam.resolution;
    let mut out = vec![None; mesh.vertices.len()];
    for (v, slot) in out.iter_mut().enumerate() {
        if proj.normals[v].z <= 0.0 {
            continue;
        }
        let [x, y] = proj.screen[v];
        if !(x >= 0.0 && y >= 0.0 && x < res as f64 && y < res as f64) {
            continue;
        }
        let p = y as usize * res + x as usize;
        let f = buffers.face[p];
        let seen = if f == NONE {
            true
        } else {
            let face = mesh.faces[f as usize];
            if face.contains(&v) {
                true
            } else {
                let w = barycentric(
                    [x, y],
                    proj.screen[face[0]],
                    proj.screen[face[1]],
                    proj.screen[face[2]],
                    proj.area2[f as usize],
                );
                let plane = w[0] * proj.depth[face[0]] + w[1] * proj.depth[face[1]] + w[2] * proj.depth[face[2]];
                proj.depth[v] <= plane + eps
            }
        };
        if seen {
            *slot = Some(p);
        }
    }
    Ok(out)
}

/// Visibility over every view of `views`.
pub fn compute_visibility(mesh: &TriangleMesh, views: &ViewSet) -> Result<VisibilityMask> {
    let prep = Prepared::new(mesh)?;
    let eps = VISIBILITY_EPS * mesh.bbox_diagonal();
    let mut visible = vec![false; mesh.vertices.len()];
    for view in &views.views {
        for (flag, hit) in visible.iter_mut().zip(visible_in_view(&prep, view, eps)?) {
            *flag |= hit.is_some();
        }
    }
    Ok(VisibilityMask { visible })
}

/// Recovered colors and the vertices that some contributing view observed
/// through a fully covered pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct FuseOutcome {
    pub colors: Vec<Vec3>,
    pub observed: VisibilityMask,
    pub losses: Vec<f64>,
}

fn view_order(a: &View, b: &View) -> Ordering {
    let ka = [a.camera.azimuth_deg, a.camera.half_extent, a.weight, a.color_weight];
    let kb = [b.camera.azimuth_deg, b.camera.half_extent, b.weight, b.color_weight];
    ka.iter()
        .zip(&kb)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
        .then(a.camera.resolution.cmp(&b.camera.resolution))
}

/// Fits per-vertex colors to the color observations.
///
/// Colors start from a projection of fully covered observed pixels,
/// weighted by color weight and facing, then follow `steps_color` moment
/// steps on the color loss. Views are processed in a canonical order.
pub fn fuse_colors(mesh: &TriangleMesh, views: &ViewSet, obs: &[Observation], config: &CarveConfig) -> Result<FuseOutcome> {
    config.validate()?;
    mesh.ensure_nonempty()?;
    if obs.len() != views.len() {
        return Err(Error::DimensionMismatch(format!("{} observations for {} views", obs.len(), views.len())));
    }
    for o in obs {
        o.validate()?;
        if o.color.is_none() {
            return Err(Error::Missing("color observation".into()));
        }
    }
    let weighted = config.weighted_views(views)?;
    let mut pairs: Vec<(View, &Observation)> = weighted.views.iter().cloned().zip(obs.iter()).collect();
    pairs.sort_by(|a, b| view_order(&a.0, &b.0));
    pairs.retain(|(v, _)| v.color_weight > 0.0);
    let views = ViewSet {
        views: pairs.iter().map(|p| p.0.clone()).collect(),
    };
    let obs: Vec<Observation> = pairs.iter().map(|p| p.1.clone()).collect();
    let nv = mesh.vertices.len();
    if views.views.is_empty() {
        return Err(Error::NothingObserved);
    }

    let prep = Prepared::new(mesh)?;
    let eps = VISIBILITY_EPS * mesh.bbox_diagonal();
    let mut sum = vec![Vec3::zeros(); nv];
    let mut wsum = vec![0.0; nv];
    let mut observed = vec![false; nv];
    for (view, o) in views.views.iter().zip(&obs) {
        let color = o.color.as_ref().unwrap();
        let normals_cam: Vec<f64> = prep
            .normals
            .iter()
            .map(|n| view.camera.world_normal_to_camera(n).z)
            .collect();
        for (v, hit) in visible_in_view(&prep, view, eps)?.into_iter().enumerate() {
            let Some(p) = hit else { continue };
            if o.silhouette.data[p] < 1.0 {
                continue;
            }
            observed[v] = true;
            let w = view.color_weight * normals_cam[v];
            let c = color.pixel(p);
            sum[v] += Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64) * w;
            wsum[v] += w;
        }
    }
    let projected: Vec<Vec3> = sum
        .iter()
        .zip(&wsum)
        .map(|(s, &w)| if w > 0.0 { (s / w).map(|c| c.clamp(0.0, 1.0)) } else { Vec3::zeros() })
        .collect();
    let observed = VisibilityMask { visible: observed };
    // Grazing or silhouette-only vertices start from their observed neighbours.
    let start = if observed.count() > 0 {
        interpolate_unseen(mesh, &projected, &observed)?
    } else {
        projected
    };
    let mut x: Vec<f64> = start.iter().flat_map(|c| [c.x, c.y, c.z]).collect();

    let mut adam = Adam::new(x.len());
    let mut losses = Vec::with_capacity(config.steps_color);
    let mut colored = mesh.clone();
    let steps = config.steps_color;
    for step in 0..steps {
        colored.colors = Some(x.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect());
        let prep = Prepared::new(&colored)?;
        let ml = multiview(&prep, &views, &obs, LossKind::Color, RasterOptions::default())?;
        if !ml.total.is_finite() {
            return Err(Error::Diverged(format!("color loss is {} at step {step}", ml.total)));
        }
        losses.push(ml.total);
        let g: Vec<f64> = ml.grads.colors.unwrap().iter().flat_map(|c| [c.x, c.y, c.z]).collect();
        let lr = config.lr_color * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / steps as f64).cos());
        adam.step(&mut x, &g, lr, None);
        for c in x.iter_mut() {
            *c = c.clamp(0.0, 1.0);
        }
    }
    Ok(FuseOutcome {
        colors: x.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect(),
        observed,
        losses,
    })
}

/// Fills every invisible vertex with the inverse-distance average of its
/// nearest visible vertices, preferring those in the same connected
/// component.
pub fn interpolate_unseen(mesh: &TriangleMesh, colors: &[Vec3], mask: &VisibilityMask) -> Result<Vec<Vec3>> {
    let n = mesh.vertices.len();
    if colors.len() != n || mask.visible.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} colors and {} mask entries for {n} vertices",
            colors.len(),
            mask.visible.len()
        )));
    }
    let seen: Vec<usize> = (0..n).filter(|&i| mask.visible[i]).collect();
    if seen.is_empty() {
        return Err(Error::NothingObserved);
    }
    if seen.len() == n {
        return Ok(colors.to_vec());
    }
    let tree = KdTree3::new(seen.iter().map(|&i| mesh.vertices[i]).collect());
    let component = mesh.connected_components();
    let mut out = colors.to_vec();
    for v in (0..n).filter(|&i| !mask.visible[i]) {
        let near = tree.k_nearest(&mesh.vertices[v], UNSEEN_NEIGHBORS);
        let same: Vec<_> = near
            .iter()
            .filter(|nb| component[seen[nb.index]] == component[v])
            .collect();
        let chosen: Vec<_> = if same.is_empty() { near.iter().collect() } else { same };
        if let Some(hit) = chosen.iter().find(|nb| nb.distance == 0.0) {
            out[v] = colors[seen[hit.index]];
            continue;
        }
        // Offsets from the first color keep uniform neighborhoods exact.
        let base = colors[seen[chosen[0].index]];
        let mut acc = Vec3::zeros();
        let mut wsum = 0.0;
        for nb in &chosen {
            let w = 1.0 / nb.distance;
            acc += (colors[seen[nb.index]] - base) * w;
            wsum += w;
        }
        out[v] = base + acc / wsum;
    }
    Ok(out)
}

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Resampling weights along one axis: box filter when shrinking, bilinear
/// (pixel-centre aligned, edge-clamped) otherwise.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    if dst == src {
        return (0..dst).map(|i| vec![(i, 1.0)]).collect();
    }
    let s = src as f64 / dst as f64;
    if dst < src {
        (0..dst)
            .map(|i| {
                let (lo, hi) = (i as f64 * s, (i + 1) as f64 * s);
                let mut taps = Vec::new();
                for k in lo.floor() as usize..(hi.ceil() as usize).min(src) {
                    let cover = (hi.min(k as f64 + 1.0) - lo.max(k as f64)) / s;
                    if cover > 0.0 {
                        taps.push((k, cover));
                    }
                }
                taps
            })
            .collect()
    } else {
        (0..dst)
            .map(|i| {
                let u = ((i as f64 + 0.5) * s - 0.5).clamp(0.0, (src - 1) as f64);
                let k = (u.floor() as usize).min(src - 1);
                let f = u - k as f64;
                if f == 0.0 || k + 1 >= src {
                    vec![(k, 1.0)]
                } else {
                    vec![(k, 1.0 - f), (k + 1, f)]
                }
            })
            .collect()
    }
}

/// Separable resize to `width` x `height`.
pub fn resize(img: &Image, width: usize, height: usize) -> Result<Image> {
    if img.width == 0 || img.height == 0 || width == 0 || height == 0 {
        return Err(Error::EmptyRegion);
    }
    let ch = img.channels;
    let wx = axis_weights(img.width, width);
    let wy = axis_weights(img.height, height);
    let mut rows = vec![0.0f64; width * img.height * ch];
    for y in 0..img.height {
        for (x, taps) in wx.iter().enumerate() {
            for c in 0..ch {
                rows[(y * width + x) * ch + c] = taps.iter().map(|&(k, w)| w * img.get(k, y, c) as f64).sum();
            }
        }
    }
    let mut out = Image::new(width, height, ch);
    for (y, taps) in wy.iter().enumerate() {
        for x in 0..width {
            for c in 0..ch {
                let v: f64 = taps.iter().map(|&(k, w)| w * rows[(k * width + x) * ch + c]).sum();
                out.set(x, y, c, v as f32);
            }
        }
    }
    Ok(out)
}

/// Pastes `face` resized into `region` of `body`, blended by the
/// body-sized single-channel `weight`. Pixels outside the region are
/// copied unchanged.
pub fn composite_face(body: &Image, face: &Image, region: Rect, weight: &Image) -> Result<Image> {
    if region.width == 0 || region.height == 0 {
        return Err(Error::EmptyRegion);
    }
    if region.x + region.width > body.width || region.y + region.height > body.height {
        return Err(Error::DimensionMismatch(format!(
            "region {region:?} outside {}x{} image",
            body.width, body.height
        )));
    }
    if face.channels != body.channels {
        return Err(Error::DimensionMismatch(format!(
            "face has {} channels, body {}",
            face.channels, body.channels
        )));
    }
    if weight.width != body.width || weight.height != body.height || weight.channels != 1 {
        return Err(Error::DimensionMismatch("weight map must be single-channel and body-sized".into()));
    }
    let resized = resize(face, region.width, region.height)?;
    let mut out = body.clone();
    for y in 0..region.height {
        for x in 0..region.width {
            let (bx, by) = (region.x + x, region.y + y);
            let w = weight.get(bx, by, 0).clamp(0.0, 1.0);
            if w == 0.0 {
                continue;
            }
            for c in 0..body.channels {
                let b = body.get(bx, by, c);
                out.set(bx, by, c, (1.0 - w) * b + w * resized.get(x, y, c));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::rasterize;
    use crate::scenes;

    #[test]
    fn convex_mesh_is_almost_fully_visible() {
        let m = scenes::icosphere(3);
        let views = ViewSet::canonical(6, 128, 1.25).unwrap();
        let mask = compute_visibility(&m, &views).unwrap();
        assert!(mask.fraction() >= 0.99, "{}", mask.fraction());
    }

    #[test]
    fn single_view_sees_only_the_front() {
        let m = scenes::icosphere(3);
        let views = ViewSet::from_azimuths(&[0.0], 128, 1.25).unwrap();
        let mask = compute_visibility(&m, &views).unwrap();
        for (v, &vis) in m.vertices.iter().zip(&mask.visible) {
            if v.z < -0.05 {
                assert!(!vis);
            }
            if v.z > 0.2 {
                assert!(vis);
            }
        }
    }

    #[test]
    fn occluded_vertices_are_hidden() {
        let back = scenes::icosphere(2).scaled(0.3);
        let front = scenes::icosphere(2).scaled(0.6).translated(Vec3::new(0.0, 0.0, 0.8));
        let m = front.merged(&back);
        let views = ViewSet::from_azimuths(&[0.0], 128, 1.25).unwrap();
        let mask = compute_visibility(&m, &views).unwrap();
        let offset = front.vertices.len();
        assert!(mask.visible[offset..].iter().all(|&v| !v));
    }

    #[test]
    fn fill_from_uniform_neighbors_is_exact() {
        let m = scenes::icosphere(2);
        let c = Vec3::new(0.3, 0.1, 0.7);
        let mut colors = vec![c; m.vertices.len()];
        colors[5] = Vec3::zeros();
        let mut mask = VisibilityMask::all(m.vertices.len());
        mask.visible[5] = false;
        let out = interpolate_unseen(&m, &colors, &mask).unwrap();
        assert_eq!(out[5], c);
    }

    #[test]
    fn all_visible_is_identity_and_none_visible_errors() {
        let m = scenes::icosphere(1);
        let colors: Vec<Vec3> = m.vertices.iter().map(|v| v.abs()).collect();
        let mask = VisibilityMask::all(m.vertices.len());
        assert_eq!(interpolate_unseen(&m, &colors, &mask).unwrap(), colors);
        let none = VisibilityMask {
            visible: vec![false; m.vertices.len()],
        };
        assert!(matches!(interpolate_unseen(&m, &colors, &none), Err(Error::NothingObserved)));
    }

    #[test]
    fn two_color_sphere_patch_stays_red() {
        let m = scenes::icosphere(3);
        let red = Vec3::new(1.0, 0.0, 0.0);
        let blue = Vec3::new(0.0, 0.0, 1.0);
        let colors: Vec<Vec3> = m.vertices.iter().map(|v| if v.y >= 0.0 { red } else { blue }).collect();
        let patch_center = Vec3::new(0.0, 1.0, 0.0);
        let mask = VisibilityMask {
            visible: m.vertices.iter().map(|v| (v - patch_center).norm() > 0.5).collect(),
        };
        let out = interpolate_unseen(&m, &colors, &mask).unwrap();
        for (i, vis) in mask.visible.iter().enumerate() {
            if !vis {
                assert!((out[i] - red).amax() <= 10.0 / 255.0, "{:?}", out[i]);
            }
        }
        let again = interpolate_unseen(&m, &out, &mask).unwrap();
        assert_eq!(again, out);
    }

    fn color_obs(mesh: &TriangleMesh, views: &ViewSet) -> Vec<Observation> {
        views
            .views
            .iter()
            .map(|v| rasterize(mesh, &v.camera).unwrap().to_observation())
            .collect()
    }

    fn small_config() -> CarveConfig {
        CarveConfig {
            steps_color: 20,
            ..CarveConfig::default()
        }
    }

    #[test]
    fn constant_color_is_recovered() {
        let target = Vec3::new(0.2, 0.4, 0.6);
        let gt = scenes::icosphere(3);
        let colored = gt.clone().with_colors(vec![target; gt.vertices.len()]).unwrap();
        let views = ViewSet::canonical(6, 128, 1.25).unwrap();
        let obs = color_obs(&colored, &views);
        let out = fuse_colors(&gt, &views, &obs, &small_config()).unwrap();
        for (c, &seen) in out.colors.iter().zip(&out.observed.visible) {
            if seen {
                assert!((c - target).amax() <= 1.0 / 255.0, "{c:?}");
            }
        }
    }

    #[test]
    fn fusion_ignores_view_order() {
        let gt = scenes::icosphere(2);
        let colors: Vec<Vec3> = gt.vertices.iter().map(|v| (v + Vec3::repeat(1.0)) * 0.5).collect();
        let colored = gt.clone().with_colors(colors).unwrap();
        let views = ViewSet::canonical(4, 64, 1.25).unwrap();
        let obs = color_obs(&colored, &views);
        let a = fuse_colors(&gt, &views, &obs, &small_config()).unwrap();
        let order = [2, 0, 3, 1];
        let pv = ViewSet {
            views: order.iter().map(|&i| views.views[i].clone()).collect(),
        };
        let po: Vec<Observation> = order.iter().map(|&i| obs[i].clone()).collect();
        let b = fuse_colors(&gt, &pv, &po, &small_config()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_color_is_an_error() {
        let gt = scenes::icosphere(1);
        let views = ViewSet::canonical(2, 32, 1.25).unwrap();
        let obs = color_obs(&gt, &views);
        assert!(matches!(fuse_colors(&gt, &views, &obs, &small_config()), Err(Error::Missing(_))));
    }

    fn checkerboard(n: usize, cell: usize) -> Image {
        let mut img = Image::new(n, n, 3);
        for y in 0..n {
            for x in 0..n {
                let v = if (x / cell + y / cell) % 2 == 0 { 1.0 } else { 0.0 };
                for c in 0..3 {
                    img.set(x, y, c, v);
                }
            }
        }
        img
    }

    #[test]
    fn downscale_matches_block_average() {
        let face = checkerboard(24, 3);
        let body = Image::filled(40, 40, 3, 0.25);
        let region = Rect {
            x: 5,
            y: 7,
            width: 12,
            height: 12,
        };
        let mut w = Image::new(40, 40, 1);
        for y in 7..19 {
            for x in 5..17 {
                w.set(x, y, 0, 1.0);
            }
        }
        let out = composite_face(&body, &face, region, &w).unwrap();
        for y in 0..40 {
            for x in 0..40 {
                for c in 0..3 {
                    let expected = if (5..17).contains(&x) && (7..19).contains(&y) {
                        let (fx, fy) = (2 * (x - 5), 2 * (y - 7));
                        let sum: f32 = [(0, 0), (1, 0), (0, 1), (1, 1)]
                            .iter()
                            .map(|(dx, dy)| face.get(fx + dx, fy + dy, c))
                            .sum();
                        sum / 4.0
                    } else {
                        0.25
                    };
                    assert!((out.get(x, y, c) - expected).abs() <= 1.0 / 255.0);
                }
            }
        }
    }

    #[test]
    fn zero_weight_keeps_body_and_gray_fills_region() {
        let body = checkerboard(20, 2);
        let face = Image::filled(7, 5, 3, 0.5);
        let region = Rect {
            x: 3,
            y: 4,
            width: 10,
            height: 6,
        };
        let out = composite_face(&body, &face, region, &Image::new(20, 20, 1)).unwrap();
        assert_eq!(out, body);
        let ones = Image::filled(20, 20, 1, 1.0);
        let out = composite_face(&body, &face, region, &ones).unwrap();
        for y in 0..20 {
            for x in 0..20 {
                let inside = (3..13).contains(&x) && (4..10).contains(&y);
                for c in 0..3 {
                    let want = if inside { 0.5 } else { body.get(x, y, c) };
                    assert_eq!(out.get(x, y, c), want);
                }
            }
        }
        let empty = Rect { width: 0, ..region };
        assert!(matches!(composite_face(&body, &face, empty, &ones), Err(Error::EmptyRegion)));
    }

    #[test]
    fn upscale_is_bilinear() {
        let img = Image::from_data(2, 1, 1, vec![0.0, 1.0]).unwrap();
        let up = resize(&img, 4, 1).unwrap();
        assert_eq!(up.data, vec![0.0, 0.25, 0.75, 1.0]);
    }
}
