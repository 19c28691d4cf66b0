//! Image-space losses and their per-pixel gradients.
//!
//! Residuals are summed over the union of rendered and target coverage and
//! divided by the target's covered pixel count, which is fixed for a given
//! observation and keeps the loss continuous as coverage changes.

use rayon::prelude::*;

use super::{backward, rasterize_with, MeshGrads, PixelGrads, Prepared, RasterOptions, RenderBuffers};
use crate::error::{Error, Result};
use crate::mesh::Vec3;
use crate::views::{Observation, ViewSet};

fn target_count(obs: &Observation) -> f64 {
    obs.silhouette.data.iter().filter(|&&s| s > 0.0).count().max(1) as f64
}

fn check_shape(buffers: &RenderBuffers, obs: &Observation) -> Result<()> {
    obs.validate()?;
    if obs.silhouette.width != buffers.width || obs.silhouette.height != buffers.height {
        return Err(Error::DimensionMismatch(format!(
            "observation {}x{} vs render {}x{}",
            obs.silhouette.width, obs.silhouette.height, buffers.width, buffers.height
        )));
    }
    Ok(())
}

/// Weighted normal + silhouette loss of one view and its pixel gradients.
pub fn geometry_loss(buffers: &RenderBuffers, obs: &Observation, weight: f64) -> Result<(f64, PixelGrads)> {
    check_shape(buffers, obs)?;
    let n = buffers.width * buffers.height;
    let scale = weight / target_count(obs);
    let mut grads = PixelGrads::zeros(n, false);
    let mut sum = 0.0;
    for p in 0..n {
        let target_s = obs.silhouette.data[p] as f64;
        let s = buffers.silhouette[p];
        if s <= 0.0 && target_s <= 0.0 {
            continue;
        }
        let dn = buffers.normal[p] - obs.decoded_normal(p);
        let ds = s - target_s;
        sum += dn.norm_squared() + ds * ds;
        grads.normal[p] = dn * (2.0 * scale);
        grads.silhouette[p] = 2.0 * scale * ds;
    }
    Ok((sum * scale, grads))
}

/// Weighted color loss of one view and its pixel gradients.
pub fn color_loss(buffers: &RenderBuffers, obs: &Observation, weight: f64) -> Result<(f64, PixelGrads)> {
    check_shape(buffers, obs)?;
    let target = obs
        .color
        .as_ref()
        .ok_or_else(|| Error::Missing("color observation".into()))?;
    let rendered = buffers
        .color
        .as_ref()
        .ok_or_else(|| Error::Missing("mesh has no vertex colors".into()))?;
    let n = buffers.width * buffers.height;
    let scale = weight / target_count(obs);
    let mut grads = PixelGrads::zeros(n, true);
    let gc = grads.color.as_mut().unwrap();
    let mut sum = 0.0;
    for p in 0..n {
        if buffers.silhouette[p] <= 0.0 && obs.silhouette.data[p] <= 0.0 {
            continue;
        }
        let t = target.pixel(p);
        let d = rendered[p] - Vec3::new(t[0] as f64, t[1] as f64, t[2] as f64);
        sum += d.norm_squared();
        gc[p] = d * (2.0 * scale);
    }
    Ok((sum * scale, grads))
}

/// Summed loss and gradients over a view set.
#[derive(Clone, Debug)]
pub struct MultiviewLoss {
    pub total: f64,
    pub per_view: Vec<f64>,
    pub grads: MeshGrads,
    /// Gradient with respect to each camera's image-plane offset. A
    /// translation leaves normals unchanged, so it is minus the camera-frame
    /// sum of that view's position gradients.
    pub offset_grads: Vec<[f64; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Geometry,
    Color,
}

/// Renders every view in parallel and reduces in view order, so the result
/// does not depend on the thread count.
pub fn multiview(
    prep: &Prepared,
    views: &ViewSet,
    obs: &[Observation],
    kind: LossKind,
    options: RasterOptions,
) -> Result<MultiviewLoss> {
    if obs.len() != views.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observations for {} views",
            obs.len(),
            views.len()
        )));
    }
    if obs.is_empty() {
        return Err(Error::Missing("observations".into()));
    }
    let results: Vec<Result<(f64, MeshGrads)>> = views
        .views
        .par_iter()
        .zip(obs.par_iter())
        .map(|(view, o)| {
            let (weight, positions) = match kind {
                LossKind::Geometry => (view.weight, true),
                LossKind::Color => (view.color_weight, false),
            };
            let nv = prep.mesh.vertices.len();
            if weight == 0.0 {
                return Ok((0.0, MeshGrads::zeros(nv, kind == LossKind::Color)));
            }
            let buffers = rasterize_with(prep, &view.camera, options)?;
            let (loss, pixel) = match kind {
                LossKind::Geometry => geometry_loss(&buffers, o, weight)?,
                LossKind::Color => color_loss(&buffers, o, weight)?,
            };
            let g = backward(prep, &view.camera, &buffers, &pixel, positions)?;
            Ok((loss, g))
        })
        .collect();
    let nv = prep.mesh.vertices.len();
    let mut grads = MeshGrads::zeros(nv, kind == LossKind::Color);
    let mut per_view = Vec::with_capacity(results.len());
    let mut offset_grads = Vec::with_capacity(results.len());
    let mut total = 0.0;
    for (r, view) in results.into_iter().zip(&views.views) {
        let (l, g) = r?;
        total += l;
        per_view.push(l);
        let sum: Vec3 = g.positions.iter().sum();
        let c = view.camera.world_to_camera(&sum);
        offset_grads.push([-c.x, -c.y]);
        grads.add_scaled(&g, 1.0);
    }
    Ok(MultiviewLoss {
        total,
        per_view,
        grads,
        offset_grads,
    })
}

pub fn multiview_geometry(prep: &Prepared, views: &ViewSet, obs: &[Observation]) -> Result<MultiviewLoss> {
    multiview(prep, views, obs, LossKind::Geometry, RasterOptions::default())
}
