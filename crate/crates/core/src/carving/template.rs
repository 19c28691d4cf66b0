//! Similarity + linear-shape template fitted to observations.

use nalgebra::Matrix3;

use super::CarveConfig;
use crate::error::{Error, Result};
use crate::mesh::{TriangleMesh, Vec3};
use crate::optim::Adam;
use crate::raster::{multiview_geometry, Prepared};
use crate::views::{Observation, ViewSet};

/// Parameter units for the alignment step: one unit of `lr_align` moves a
/// translation by this fraction of the view half-extent, a rotation or
/// log-scale by this many radians / nepers.
pub const ALIGN_UNIT: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct TemplateParams {
    pub translation: Vec3,
    /// Axis-angle.
    pub rotation: Vec3,
    pub log_scale: f64,
    pub shape: Vec<f64>,
}

impl TemplateParams {
    pub fn identity(shape_len: usize) -> Self {
        Self {
            translation: Vec3::zeros(),
            rotation: Vec3::zeros(),
            log_scale: 0.0,
            shape: vec![0.0; shape_len],
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(7 + self.shape.len());
        v.extend_from_slice(self.translation.as_slice());
        v.extend_from_slice(self.rotation.as_slice());
        v.push(self.log_scale);
        v.extend_from_slice(&self.shape);
        v
    }

    fn from_vec(v: &[f64]) -> Self {
        Self {
            translation: Vec3::new(v[0], v[1], v[2]),
            rotation: Vec3::new(v[3], v[4], v[5]),
            log_scale: v[6],
            shape: v[7..].to_vec(),
        }
    }
}

fn skew(v: &Vec3) -> Matrix3<f64> {
    #[rustfmt::skip]
    let m = Matrix3::new(
        0.0, -v.z, v.y,
        v.z, 0.0, -v.x,
        -v.y, v.x, 0.0,
    );
    m
}

/// Rotation matrix of an axis-angle vector.
pub fn rodrigues(r: &Vec3) -> Matrix3<f64> {
    let theta = r.norm();
    let k = skew(r);
    let (a, b) = if theta < 1e-8 {
        (1.0 - theta * theta / 6.0, 0.5 - theta * theta / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Right Jacobian of the rotation exponential: `R(r + d) ~ R(r) exp(J_r d)`.
pub fn right_jacobian(r: &Vec3) -> Matrix3<f64> {
    let theta = r.norm();
    let k = skew(r);
    let (a, b) = if theta < 1e-6 {
        (0.5 - theta * theta / 24.0, 1.0 / 6.0 - theta * theta / 120.0)
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    Matrix3::identity() - k * a + k * k * b
}

/// Template mesh with an optional linear shape basis.
#[derive(Clone, Debug)]
pub struct Template {
    pub mesh: TriangleMesh,
    /// Per-coefficient vertex displacement fields.
    pub basis: Vec<Vec<Vec3>>,
    center: Vec3,
}

impl Template {
    pub fn new(mesh: TriangleMesh, basis: Vec<Vec<Vec3>>) -> Result<Self> {
        mesh.ensure_nonempty()?;
        if let Some(b) = basis.iter().find(|b| b.len() != mesh.vertices.len()) {
            return Err(Error::DimensionMismatch(format!(
                "shape basis has {} displacements for {} vertices",
                b.len(),
                mesh.vertices.len()
            )));
        }
        let center = mesh.bbox_center();
        Ok(Self { mesh, basis, center })
    }

    pub fn rigid(mesh: TriangleMesh) -> Result<Self> {
        Self::new(mesh, Vec::new())
    }

    pub fn identity(&self) -> TemplateParams {
        TemplateParams::identity(self.basis.len())
    }

    fn shaped(&self, p: &TemplateParams) -> Vec<Vec3> {
        let mut u = self.mesh.vertices.clone();
        for (b, &beta) in self.basis.iter().zip(&p.shape) {
            if beta != 0.0 {
                for (x, d) in u.iter_mut().zip(b) {
                    *x += d * beta;
                }
            }
        }
        u
    }

    /// `v = s R (u - c) + c + t` with `u` the shaped template.
    pub fn apply(&self, p: &TemplateParams) -> Result<TriangleMesh> {
        if p.shape.len() != self.basis.len() {
            return Err(Error::DimensionMismatch("shape coefficient count".into()));
        }
        let is_identity = p.translation == Vec3::zeros()
            && p.rotation == Vec3::zeros()
            && p.log_scale == 0.0
            && p.shape.iter().all(|&b| b == 0.0);
        if is_identity {
            return Ok(self.mesh.clone());
        }
        let rot = rodrigues(&p.rotation);
        let s = p.scale();
        let mut out = self.mesh.clone();
        out.vertices = self
            .shaped(p)
            .iter()
            .map(|u| rot * (u - self.center) * s + self.center + p.translation)
            .collect();
        Ok(out)
    }

    /// Chain rule from output vertex gradients to the parameter vector.
    pub fn param_grad(&self, p: &TemplateParams, g: &[Vec3]) -> TemplateParams {
        let rot = rodrigues(&p.rotation);
        let s = p.scale();
        let u = self.shaped(p);
        let mut gt = Vec3::zeros();
        let mut gs = 0.0;
        let mut cross = Vec3::zeros();
        let local: Vec<Vec3> = g.iter().map(|gk| rot.transpose() * gk).collect();
        for ((uk, gk), lk) in u.iter().zip(g).zip(&local) {
            let x = uk - self.center;
            gt += gk;
            gs += lk.dot(&x);
            cross += x.cross(lk);
        }
        let shape = self
            .basis
            .iter()
            .map(|b| s * b.iter().zip(&local).map(|(d, l)| d.dot(l)).sum::<f64>())
            .collect();
        TemplateParams {
            translation: gt,
            rotation: right_jacobian(&p.rotation).transpose() * cross * s,
            log_scale: s * gs,
            shape,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AlignOutcome {
    pub params: TemplateParams,
    pub mesh: TriangleMesh,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub losses: Vec<f64>,
}

/// Fits the template's similarity + shape parameters to the observations.
///
/// Returns the best parameters seen, so the final loss never exceeds the
/// initial one.
pub fn align_template(
    template: &Template,
    views: &ViewSet,
    obs: &[Observation],
    config: &CarveConfig,
) -> Result<AlignOutcome> {
    config.validate()?;
    if views.len() < 2 {
        return Err(Error::Config("alignment needs at least two views".into()));
    }
    if obs.is_empty() {
        return Err(Error::Missing("observations".into()));
    }
    let views = config.weighted_views(views)?;
    let mut params = template.identity();
    let mut x = params.to_vec();
    let h = views.half_extent();
    let units: Vec<f64> = (0..x.len())
        .map(|i| if i < 3 { ALIGN_UNIT * h } else { ALIGN_UNIT })
        .collect();
    let mut adam = Adam::new(x.len());
    let mut losses = Vec::with_capacity(config.steps_align + 1);
    let mut best = (f64::INFINITY, params.clone());
    let steps = config.steps_align;
    for step in 0..=steps {
        let mesh = template.apply(&params)?;
        let prep = Prepared::new(&mesh)?;
        let ml = multiview_geometry(&prep, &views, obs)?;
        if !ml.total.is_finite() {
            return Err(Error::Diverged(format!(
                "alignment loss is {} at step {step} (scale {})",
                ml.total,
                params.scale()
            )));
        }
        losses.push(ml.total);
        if step % 50 == 0 {
            log::debug!("align step {step}: loss {:.6e}, scale {:.4}", ml.total, params.scale());
        }
        if ml.total < best.0 {
            best = (ml.total, params.clone());
        }
        if step == steps {
            break;
        }
        let g = template.param_grad(&params, &ml.grads.positions).to_vec();
        let lr = config.lr_align * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / steps as f64).cos());
        adam.step(&mut x, &g, lr, Some(&units));
        params = TemplateParams::from_vec(&x);
    }
    let (final_loss, params) = best;
    Ok(AlignOutcome {
        mesh: template.apply(&params)?,
        params,
        initial_loss: losses[0],
        final_loss,
        losses,
    })
}
