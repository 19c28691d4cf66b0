//! Orthographic cameras, canonical view sets and per-view observations.
//!
//! Frame conventions: right-handed world, +Y up. The front camera sits on
//! +Z looking toward -Z. Azimuth rotates the camera counter-clockwise about
//! +Y (seen from above), so azimuth 90 places it on +X. Camera space has the
//! camera looking down its own -Z axis; depth is `-z_cam` and therefore
//! grows away from the camera. Pixel `(0, 0)` covers `[0, 1)^2` with its
//! centre at `(0.5, 0.5)`; image rows grow downward.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mesh::Vec3;

pub const SCHEMA_VERSION: u32 = 1;

/// Azimuths of the six canonical views: front, front-left, left, back,
/// right, front-right.
pub const SIX_VIEW_AZIMUTHS: [f64; 6] = [0.0, 45.0, 90.0, 180.0, 270.0, 315.0];
pub const FOUR_VIEW_AZIMUTHS: [f64; 4] = [0.0, 90.0, 180.0, 270.0];
pub const TWO_VIEW_AZIMUTHS: [f64; 2] = [0.0, 180.0];

pub const DEFAULT_HALF_EXTENT: f64 = 1.25;
pub const DEFAULT_RESOLUTION: usize = 512;

/// Camera-space background normal; encodes to `(0.5, 0.5, 1.0)`.
pub const BACKGROUND_NORMAL: Vec3 = Vec3::new(0.0, 0.0, 1.0);

#[derive(Clone, Debug, PartialEq)]
pub struct OrthoCamera {
    pub azimuth_deg: f64,
    /// Half side length of the square view volume in world units.
    pub half_extent: f64,
    /// Square image side in pixels.
    pub resolution: usize,
    pub near: f64,
    pub far: f64,
    /// Shift of the view volume centre along camera x and y, in world units.
    pub offset: [f64; 2],
    rotation: Matrix3<f64>,
}

impl OrthoCamera {
    pub fn new(azimuth_deg: f64, half_extent: f64, resolution: usize) -> Self {
        let (s, c) = azimuth_deg.to_radians().sin_cos();
        #[rustfmt::skip]
        let rotation = Matrix3::new(
            c, 0.0, s,
            0.0, 1.0, 0.0,
            -s, 0.0, c,
        );
        Self {
            azimuth_deg,
            half_extent,
            resolution,
            near: -1e3 * half_extent,
            far: 1e3 * half_extent,
            offset: [0.0, 0.0],
            rotation,
        }
    }

    pub fn with_offset(mut self, offset: [f64; 2]) -> Self {
        self.offset = offset;
        self
    }

    /// World direction of the camera x axis.
    pub fn right(&self) -> Vec3 {
        self.rotation * Vec3::x()
    }

    /// Camera-to-world rotation.
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// Unit vector from the scene toward the camera, in world space.
    pub fn toward_camera(&self) -> Vec3 {
        self.rotation * Vec3::z()
    }

    /// Viewing direction in world space.
    pub fn forward(&self) -> Vec3 {
        -self.toward_camera()
    }

    pub fn up(&self) -> Vec3 {
        self.rotation * Vec3::y()
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * p
    }

    pub fn world_normal_to_camera(&self, n: &Vec3) -> Vec3 {
        self.rotation.transpose() * n
    }

    pub fn camera_normal_to_world(&self, n: &Vec3) -> Vec3 {
        self.rotation * n
    }

    /// Pixels per world unit.
    pub fn pixel_scale(&self) -> f64 {
        self.resolution as f64 / (2.0 * self.half_extent)
    }

    /// World size of one pixel.
    pub fn pixel_size(&self) -> f64 {
        2.0 * self.half_extent / self.resolution as f64
    }

    /// `(pixel x, pixel y, depth)` with continuous pixel coordinates.
    pub fn project(&self, p: &Vec3) -> (f64, f64, f64) {
        let c = self.world_to_camera(p);
        let s = self.pixel_scale();
        (
            (c.x - self.offset[0] + self.half_extent) * s,
            (self.half_extent - c.y + self.offset[1]) * s,
            -c.z,
        )
    }

    pub fn unproject(&self, px: f64, py: f64, depth: f64) -> Vec3 {
        let s = self.pixel_scale();
        let c = Vec3::new(
            px / s - self.half_extent + self.offset[0],
            self.half_extent - py / s + self.offset[1],
            -depth,
        );
        self.rotation * c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub camera: OrthoCamera,
    /// Confidence weight in geometry losses.
    pub weight: f64,
    /// Confidence weight in appearance fusion.
    pub color_weight: f64,
}

/// Ordered list of weighted views sharing resolution and view volume.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewSet {
    pub views: Vec<View>,
}

impl ViewSet {
    /// Canonical 2-, 4- or 6-view configuration with default weights
    /// (geometry 1.0; appearance 1.0 front, 0.8 elsewhere).
    pub fn canonical(count: usize, resolution: usize, half_extent: f64) -> Result<Self> {
        let azimuths: &[f64] = match count {
            2 => &TWO_VIEW_AZIMUTHS,
            4 => &FOUR_VIEW_AZIMUTHS,
            6 => &SIX_VIEW_AZIMUTHS,
            n => return Err(Error::Config(format!("no canonical {n}-view set (use 2, 4 or 6)"))),
        };
        Self::from_azimuths(azimuths, resolution, half_extent)
    }

    pub fn from_azimuths(azimuths: &[f64], resolution: usize, half_extent: f64) -> Result<Self> {
        let views = azimuths
            .iter()
            .map(|&a| View {
                camera: OrthoCamera::new(a, half_extent, resolution),
                weight: 1.0,
                color_weight: if a == 0.0 { 1.0 } else { 0.8 },
            })
            .collect();
        let set = Self { views };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn resolution(&self) -> usize {
        self.views.first().map_or(0, |v| v.camera.resolution)
    }

    pub fn half_extent(&self) -> f64 {
        self.views.first().map_or(DEFAULT_HALF_EXTENT, |v| v.camera.half_extent)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.views.iter().enumerate() {
            for (name, w) in [("weight", v.weight), ("color_weight", v.color_weight)] {
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::Config(format!("view {i}: {name} {w} outside [0, 1]")));
                }
            }
            if v.camera.resolution == 0 {
                return Err(Error::Config(format!("view {i}: zero resolution")));
            }
            if !(v.camera.half_extent > 0.0) {
                return Err(Error::Config(format!("view {i}: half_extent must be positive")));
            }
        }
        Ok(())
    }

    /// Same cameras with the view volume scaled by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let views = self
            .views
            .iter()
            .map(|v| View {
                camera: OrthoCamera::new(v.camera.azimuth_deg, v.camera.half_extent * s, v.camera.resolution)
                    .with_offset([v.camera.offset[0] * s, v.camera.offset[1] * s]),
                ..v.clone()
            })
            .collect();
        Self { views }
    }

    pub fn with_resolution(&self, resolution: usize) -> Self {
        let views = self
            .views
            .iter()
            .map(|v| View {
                camera: OrthoCamera::new(v.camera.azimuth_deg, v.camera.half_extent, resolution).with_offset(v.camera.offset),
                ..v.clone()
            })
            .collect();
        Self { views }
    }

    pub fn to_config(&self) -> ViewsConfig {
        ViewsConfig {
            schema_version: SCHEMA_VERSION,
            resolution: self.resolution(),
            half_extent: self.half_extent(),
            views: self
                .views
                .iter()
                .map(|v| ViewEntry {
                    azimuth_deg: v.camera.azimuth_deg,
                    weight: v.weight,
                    color_weight: Some(v.color_weight),
                    offset: (v.camera.offset != [0.0, 0.0]).then_some(v.camera.offset),
                })
                .collect(),
        }
    }

    pub fn from_config(cfg: &ViewsConfig) -> Result<Self> {
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: cfg.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let views = cfg
            .views
            .iter()
            .map(|e| View {
                camera: OrthoCamera::new(e.azimuth_deg, cfg.half_extent, cfg.resolution)
                    .with_offset(e.offset.unwrap_or([0.0, 0.0])),
                weight: e.weight,
                color_weight: e.color_weight.unwrap_or(if e.azimuth_deg == 0.0 { 1.0 } else { 0.8 }),
            })
            .collect();
        let set = Self { views };
        set.validate()?;
        Ok(set)
    }

    /// Removes the common component of the selected views' image-plane
    /// offsets: their vertical parts sum to zero and their horizontal parts,
    /// taken as world vectors, sum to zero wherever the views constrain it.
    pub fn center_offsets(&mut self, include: impl Fn(&View) -> bool) {
        let chosen: Vec<usize> = (0..self.views.len()).filter(|&i| include(&self.views[i])).collect();
        if chosen.is_empty() {
            return;
        }
        let mean_up = chosen.iter().map(|&i| self.views[i].camera.offset[1]).sum::<f64>() / chosen.len() as f64;
        let mut m = nalgebra::Matrix2::<f64>::zeros();
        let mut b = nalgebra::Vector2::<f64>::zeros();
        for &i in &chosen {
            let r = self.views[i].camera.right();
            let r2 = nalgebra::Vector2::new(r.x, r.z);
            m += r2 * r2.transpose();
            b += r2 * self.views[i].camera.offset[0];
        }
        let lambda = m.pseudo_inverse(1e-9).map(|p| p * b).unwrap_or_else(|_| nalgebra::Vector2::zeros());
        for &i in &chosen {
            let r = self.views[i].camera.right();
            let cam = &mut self.views[i].camera;
            cam.offset[0] -= r.x * lambda.x + r.z * lambda.y;
            cam.offset[1] -= mean_up;
        }
    }

    pub fn offsets(&self) -> Vec<[f64; 2]> {
        self.views.iter().map(|v| v.camera.offset).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_config()).expect("views serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ViewsConfig = serde_json::from_str(text)?;
        Self::from_config(&cfg)
    }
}

/// On-disk form of a [`ViewSet`] (`views.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewsConfig {
    pub schema_version: u32,
    pub resolution: usize,
    pub half_extent: f64,
    pub views: Vec<ViewEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub azimuth_deg: f64,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color_weight: Option<f64>,
    /// Image-plane shift of the view volume, in world units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<[f64; 2]>,
}

/// Target maps of one view.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Camera-space normals encoded as `(n + 1) / 2`.
    pub normal: Image,
    /// Coverage in `[0, 1]`.
    pub silhouette: Image,
    pub color: Option<Image>,
}

impl Observation {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.silhouette.width, self.silhouette.height);
        if self.silhouette.channels != 1 || self.normal.channels != 3 {
            return Err(Error::DimensionMismatch("normal needs 3 channels, silhouette 1".into()));
        }
        if self.normal.width != w || self.normal.height != h {
            return Err(Error::DimensionMismatch("normal and silhouette sizes differ".into()));
        }
        if let Some(c) = &self.color {
            if c.channels != 3 || c.width != w || c.height != h {
                return Err(Error::DimensionMismatch("color map shape".into()));
            }
        }
        Ok(())
    }

    /// Camera-space normal at pixel `p` (decoded, not renormalized).
    pub fn decoded_normal(&self, p: usize) -> Vec3 {
        let n = self.normal.pixel(p);
        Vec3::new(
            2.0 * n[0] as f64 - 1.0,
            2.0 * n[1] as f64 - 1.0,
            2.0 * n[2] as f64 - 1.0,
        )
    }
}

pub fn encode_normal(n: &Vec3) -> [f32; 3] {
    [
        ((n.x + 1.0) * 0.5) as f32,
        ((n.y + 1.0) * 0.5) as f32,
        ((n.z + 1.0) * 0.5) as f32,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn front_camera_center_and_edge() {
        let cam = OrthoCamera::new(0.0, 1.0, 512);
        let (x, y, _) = cam.project(&Vec3::zeros());
        assert_eq!((x, y), (256.0, 256.0));
        let (x, _, _) = cam.project(&Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(x, 512.0);
    }

    #[test]
    fn left_camera_sees_plus_x_up_close() {
        let cam = OrthoCamera::new(90.0, 1.0, 512);
        let (x0, y0, d0) = cam.project(&Vec3::zeros());
        let (x, y, d) = cam.project(&Vec3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(x, 256.0, epsilon = 1e-9);
        assert_relative_eq!(y, 256.0, epsilon = 1e-9);
        assert_eq!((x0, y0), (256.0, 256.0));
        assert_relative_eq!(d - d0, -1.0, epsilon = 1e-12);
        // Independent check through the composed rotation matrix.
        let r = cam.rotation();
        assert_relative_eq!((r.transpose() * Vec3::x()).z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn normal_rotation_examples() {
        let front = OrthoCamera::new(0.0, 1.0, 64);
        assert_eq!(front.world_normal_to_camera(&Vec3::z()), Vec3::z());
        let back = OrthoCamera::new(180.0, 1.0, 64);
        assert!((back.world_normal_to_camera(&Vec3::z()) - (-Vec3::z())).norm() < 1e-12);
        let diag = OrthoCamera::new(45.0, 1.0, 64);
        let n = diag.world_normal_to_camera(&Vec3::x());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // Camera at azimuth 45 sits on the (+x, +z) diagonal, so world +x
        // points partly toward it (positive camera z).
        assert!((n - Vec3::new(s, 0.0, s)).norm() < 1e-12);
    }

    #[test]
    fn forward_and_up_are_orthogonal() {
        for a in SIX_VIEW_AZIMUTHS {
            let cam = OrthoCamera::new(a, 1.0, 16);
            assert!(cam.forward().dot(&cam.up()).abs() < 1e-15);
        }
    }

    #[test]
    fn view_volume_maps_to_full_image() {
        let cam = OrthoCamera::new(0.0, 1.3, 100);
        let (x0, y0, _) = cam.project(&Vec3::new(-1.3, 1.3, 0.0));
        let (x1, y1, _) = cam.project(&Vec3::new(1.3, -1.3, 0.0));
        assert_relative_eq!(x0, 0.0, epsilon = 1e-12);
        assert_relative_eq!(y0, 0.0, epsilon = 1e-12);
        assert_relative_eq!(x1, 100.0, epsilon = 1e-12);
        assert_relative_eq!(y1, 100.0, epsilon = 1e-12);
    }

    #[test]
    fn canonical_sets() {
        let six = ViewSet::canonical(6, 64, 1.0).unwrap();
        let az: Vec<f64> = six.views.iter().map(|v| v.camera.azimuth_deg).collect();
        assert_eq!(az, SIX_VIEW_AZIMUTHS.to_vec());
        assert_eq!(ViewSet::canonical(4, 64, 1.0).unwrap().len(), 4);
        assert_eq!(ViewSet::canonical(2, 64, 1.0).unwrap().len(), 2);
        assert!(ViewSet::canonical(3, 64, 1.0).is_err());
        assert_eq!(six, ViewSet::canonical(6, 64, 1.0).unwrap());
        assert_eq!(six.views[0].color_weight, 1.0);
        assert_eq!(six.views[1].color_weight, 0.8);
    }

    #[test]
    fn views_json_round_trip_and_strictness() {
        let six = ViewSet::canonical(6, 128, 1.25).unwrap();
        let back = ViewSet::from_json(&six.to_json()).unwrap();
        assert_eq!(six, back);
        let bad = r#"{"schema_version":1,"resolution":8,"half_extent":1,"views":[],"extra":0}"#;
        assert!(ViewSet::from_json(bad).is_err());
        let old = r#"{"schema_version":2,"resolution":8,"half_extent":1,"views":[]}"#;
        assert!(matches!(ViewSet::from_json(old), Err(Error::SchemaVersion { .. })));
        let heavy = r#"{"schema_version":1,"resolution":8,"half_extent":1,"views":[{"azimuth_deg":0,"weight":1.5}]}"#;
        assert!(ViewSet::from_json(heavy).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec3() -> impl Strategy<Value = Vec3> {
            (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
        }

        proptest! {
            #[test]
            fn project_unproject_round_trip(az in 0.0..360.0f64, p in vec3()) {
                let cam = OrthoCamera::new(az, 1.0, 512);
                let (x, y, d) = cam.project(&p);
                prop_assert!((cam.unproject(x, y, d) - p).norm() < 1e-9);
            }

            #[test]
            fn normal_rotation_preserves_dot_products(az in 0.0..360.0f64, a in vec3(), b in vec3()) {
                let cam = OrthoCamera::new(az, 1.0, 64);
                let (ca, cb) = (cam.world_normal_to_camera(&a), cam.world_normal_to_camera(&b));
                prop_assert!((ca.dot(&cb) - a.dot(&b)).abs() < 1e-12);
                prop_assert!((ca.norm() - a.norm()).abs() < 1e-12);
            }
        }
    }
}
