//! Synthetic observations rendered from a known mesh, with optional
//! controlled inconsistencies between views.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mesh::{TriangleMesh, Vec3};
use crate::raster::{rasterize_with, Prepared, RasterOptions};
use crate::views::{encode_normal, Observation, ViewSet, BACKGROUND_NORMAL, SCHEMA_VERSION};

/// A scalar for every view, or one value per view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerView<T> {
    All(T),
    Each(Vec<T>),
}

impl<T: Copy + Default> PerView<T> {
    pub fn get(&self, view: usize) -> T {
        match self {
            PerView::All(v) => *v,
            PerView::Each(v) => v.get(view).copied().unwrap_or_default(),
        }
    }
}

impl<T: Default> Default for PerView<T> {
    fn default() -> Self {
        PerView::All(T::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSpec {
    pub schema_version: u32,
    /// Signed silhouette morph radius in pixels (positive dilates).
    pub silhouette_px: PerView<i32>,
    /// Mean angular deviation of the normal noise, in degrees.
    pub normal_noise_deg: f64,
    /// Standard deviation of additive color noise.
    pub color_noise: f64,
    /// Largest per-view rigid translation, in world units. Only the
    /// image-plane part is visible to an orthographic camera, and the part
    /// shared by all views is removed (see [`ViewSet::center_offsets`]).
    pub jitter: f64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            silhouette_px: PerView::All(0),
            normal_noise_deg: 0.0,
            color_noise: 0.0,
            jitter: 0.0,
        }
    }
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        for (name, v) in [
            ("normal_noise_deg", self.normal_noise_deg),
            ("color_noise", self.color_noise),
            ("jitter", self.jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PerturbSpec = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("perturb spec serializes")
    }
}

/// Smooth position-based vertex colors for meshes that carry none.
pub fn paint_by_position(mesh: &TriangleMesh) -> TriangleMesh {
    let (lo, hi) = mesh.bbox();
    let span = (hi - lo).map(|s| if s > 0.0 { s } else { 1.0 });
    let colors = mesh
        .vertices
        .iter()
        .map(|v| {
            let u = (v - lo).component_div(&span);
            Vec3::new(0.2 + 0.6 * u.x, 0.2 + 0.6 * u.y, 0.8 - 0.6 * u.z)
        })
        .collect();
    let mut out = mesh.clone();
    out.colors = Some(colors);
    out
}

fn jitter_offset(rng: &mut ChaCha8Rng, max: f64) -> Vec3 {
    let dir = loop {
        let d = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n: f64 = d.norm();
        if n > 1e-12 {
            break d / n;
        }
    };
    dir * (max * rng.random::<f64>())
}

/// Morphs silhouette, normal and color maps by `radius` pixels with a disk
/// element: dilation takes the strongest neighbor, erosion the weakest.
fn morph(obs: &mut Observation, radius: i32) {
    let (w, h) = (obs.silhouette.width as i64, obs.silhouette.height as i64);
    let r = radius.abs() as i64;
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    let src = obs.clone();
    let bg = encode_normal(&BACKGROUND_NORMAL);
    for y in 0..h {
        for x in 0..w {
            let p = (y * w + x) as usize;
            let mut best = p;
            let mut best_s = src.silhouette.data[p];
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x + dx, y + dy);
                let s = if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    0.0
                } else {
                    src.silhouette.data[(ny * w + nx) as usize]
                };
                let better = if radius > 0 { s > best_s } else { s < best_s };
                if better {
                    best_s = s;
                    best = if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        usize::MAX
                    } else {
                        (ny * w + nx) as usize
                    };
                }
            }
            obs.silhouette.data[p] = best_s;
            if best == p {
                continue;
            }
            if radius > 0 {
                obs.normal.data[3 * p..3 * p + 3].copy_from_slice(src.normal.pixel(best));
                if let (Some(c), Some(sc)) = (obs.color.as_mut(), src.color.as_ref()) {
                    c.data[3 * p..3 * p + 3].copy_from_slice(sc.pixel(best));
                }
            } else if best_s <= 0.0 {
                obs.normal.data[3 * p..3 * p + 3].copy_from_slice(&bg);
                if let Some(c) = obs.color.as_mut() {
                    c.data[3 * p..3 * p + 3].fill(0.0);
                }
            }
        }
    }
}

/// Rotates each covered pixel's normal by a Rayleigh-distributed angle
/// whose mean is `mean_deg`, about a uniformly random tangent axis.
fn normal_noise(obs: &mut Observation, mean_deg: f64, rng: &mut ChaCha8Rng) {
    let sigma = mean_deg.to_radians() / (std::f64::consts::PI / 2.0).sqrt();
    for p in 0..obs.silhouette.data.len() {
        if obs.silhouette.data[p] <= 0.0 {
            continue;
        }
        let n = obs.decoded_normal(p).normalize();
        let u: f64 = rng.random();
        let theta = sigma * (-2.0 * (1.0 - u).ln()).sqrt();
        let phi = rng.random::<f64>() * std::f64::consts::TAU;
        let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let t1 = n.cross(&helper).normalize();
        let t2 = n.cross(&t1);
        let tangent = t1 * phi.cos() + t2 * phi.sin();
        let m = n * theta.cos() + tangent * theta.sin();
        obs.normal.data[3 * p..3 * p + 3].copy_from_slice(&encode_normal(&m));
    }
}

fn color_noise(color: &mut Image, silhouette: &Image, sigma: f64, rng: &mut ChaCha8Rng) {
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    for p in 0..silhouette.data.len() {
        if silhouette.data[p] <= 0.0 {
            continue;
        }
        for c in &mut color.data[3 * p..3 * p + 3] {
            *c = (*c as f64 + normal.sample(rng)).clamp(0.0, 1.0) as f32;
        }
    }
}

/// Cameras that see `gt` as if it were translated independently per view.
/// The shared component is removed and the set is shrunk, if needed, so no
/// view moves by more than `max`.
pub fn jittered_views(views: &ViewSet, rngs: &mut [ChaCha8Rng], max: f64) -> ViewSet {
    let mut out = views.clone();
    if max <= 0.0 {
        return out;
    }
    for (v, rng) in out.views.iter_mut().zip(rngs.iter_mut()) {
        let j = jitter_offset(rng, max);
        // Moving the object by j equals moving the view volume by -j.
        v.camera.offset[0] -= v.camera.right().dot(&j);
        v.camera.offset[1] -= v.camera.up().dot(&j);
    }
    out.center_offsets(|_| true);
    let largest = out
        .views
        .iter()
        .zip(&views.views)
        .map(|(a, b)| (a.camera.offset[0] - b.camera.offset[0]).hypot(a.camera.offset[1] - b.camera.offset[1]))
        .fold(0.0, f64::max);
    if largest > max {
        let s = max / largest;
        for (a, b) in out.views.iter_mut().zip(&views.views) {
            for i in 0..2 {
                a.camera.offset[i] = b.camera.offset[i] + s * (a.camera.offset[i] - b.camera.offset[i]);
            }
        }
    }
    out
}

/// Renders `gt` from every view and applies `perturb` in the order jitter,
/// render, silhouette morph, normal noise, color noise. View `k` draws from
/// stream `k` of a generator seeded with `seed`.
pub fn generate_observations(gt: &TriangleMesh, views: &ViewSet, perturb: &PerturbSpec, seed: u64) -> Result<Vec<Observation>> {
    perturb.validate()?;
    views.validate()?;
    gt.ensure_nonempty()?;
    let prep = Prepared::new(gt)?;
    let mut rngs: Vec<ChaCha8Rng> = (0..views.len())
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            rng
        })
        .collect();
    let cameras = jittered_views(views, &mut rngs, perturb.jitter);
    rngs.into_par_iter()
        .enumerate()
        .map(|(k, mut rng)| {
            let buffers = rasterize_with(&prep, &cameras.views[k].camera, RasterOptions::default())?;
            let mut obs = buffers.to_observation();
            let radius = perturb.silhouette_px.get(k);
            if radius != 0 {
                morph(&mut obs, radius);
            }
            if perturb.normal_noise_deg > 0.0 {
                normal_noise(&mut obs, perturb.normal_noise_deg, &mut rng);
            }
            if perturb.color_noise > 0.0 {
                if let Some(mut c) = obs.color.take() {
                    color_noise(&mut c, &obs.silhouette, perturb.color_noise, &mut rng);
                    obs.color = Some(c);
                }
            }
            Ok(obs)
        })
        .collect()
}
