//! Geometry recovery: template alignment, normal-driven carving with
//! continuous remeshing, and hole filling.

mod template;

use serde::{Deserialize, Serialize};

pub use template::{align_template, right_jacobian, rodrigues, AlignOutcome, Template, TemplateParams, ALIGN_UNIT};

use crate::error::{Error, Result};
use crate::mesh::{
    normal_regularizer, normal_regularizer_grad, remesh_pass, vertex_normals_backward, Adjacency, RemeshTarget,
    TriangleMesh, Vec3,
};
use crate::optim::{vertex_adam_step, Adam};
use crate::raster::{multiview_geometry, Prepared};
use crate::views::{Observation, ViewSet, SCHEMA_VERSION};

/// Schedule knobs; serialized as `carve.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarveConfig {
    pub schema_version: u32,
    pub steps_align: usize,
    pub steps_carve: usize,
    pub steps_color: usize,
    pub lr_align: f64,
    pub lr_carve: f64,
    pub lr_color: f64,
    /// Weight of the neighbour-normal regularizer.
    pub lambda: f64,
    pub remesh_interval: usize,
    /// Target edge length at the start, as a fraction of the initial
    /// bounding-box diagonal.
    pub edge_length_start: f64,
    pub edge_length_end: f64,
    /// Fraction of the carve steps over which the edge length anneals.
    pub edge_anneal_fraction: f64,
    /// Remeshing stops after this fraction of the carve steps.
    pub remesh_stop_fraction: f64,
    /// Fraction of the carve steps, at the end, over which the step size
    /// decays to zero.
    pub lr_decay_fraction: f64,
    /// Blend between a vertex gradient and its one-ring mean.
    pub gradient_smoothing: f64,
    /// Boundary loops up to this many edges are closed after carving.
    pub max_hole_edges: usize,
    /// Jointly refine each view's image-plane offset while carving, so
    /// small misregistrations between views are absorbed.
    pub view_offsets: bool,
    /// Overrides the geometry weight of each view.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view_weights: Option<Vec<f64>>,
    /// Overrides the appearance weight of each view.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color_weights: Option<Vec<f64>>,
}

impl Default for CarveConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            steps_align: 700,
            steps_carve: 700,
            steps_color: 100,
            lr_align: 0.3,
            lr_carve: 0.001,
            lr_color: 0.0005,
            lambda: 0.02,
            remesh_interval: 5,
            edge_length_start: 0.04,
            edge_length_end: 0.01,
            edge_anneal_fraction: 0.8,
            remesh_stop_fraction: 0.9,
            lr_decay_fraction: 0.1,
            gradient_smoothing: 0.5,
            max_hole_edges: 64,
            view_offsets: true,
            view_weights: None,
            color_weights: None,
        }
    }
}

impl CarveConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        for (name, lr) in [("lr_align", self.lr_align), ("lr_carve", self.lr_carve), ("lr_color", self.lr_color)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if self.remesh_interval == 0 {
            return Err(Error::Config("remesh_interval must be at least 1".into()));
        }
        if !(self.edge_length_end > 0.0 && self.edge_length_start >= self.edge_length_end) {
            return Err(Error::Config("need edge_length_start >= edge_length_end > 0".into()));
        }
        for (name, f) in [
            ("edge_anneal_fraction", self.edge_anneal_fraction),
            ("remesh_stop_fraction", self.remesh_stop_fraction),
            ("lr_decay_fraction", self.lr_decay_fraction),
            ("gradient_smoothing", self.gradient_smoothing),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    /// Views with the configured weight overrides applied.
    pub fn weighted_views(&self, views: &ViewSet) -> Result<ViewSet> {
        let mut out = views.clone();
        for (name, over) in [("view_weights", &self.view_weights), ("color_weights", &self.color_weights)] {
            if let Some(w) = over {
                if w.len() != views.len() {
                    return Err(Error::Config(format!("{name} has {} entries for {} views", w.len(), views.len())));
                }
                for (v, &x) in out.views.iter_mut().zip(w) {
                    if name == "view_weights" {
                        v.weight = x;
                    } else {
                        v.color_weight = x;
                    }
                }
            }
        }
        out.validate()?;
        Ok(out)
    }

    /// Target edge length at `step`, in units of the initial diagonal.
    pub fn edge_length_at(&self, step: usize) -> f64 {
        let span = self.edge_anneal_fraction * self.steps_carve as f64;
        let f = if span > 0.0 { (step as f64 / span).min(1.0) } else { 1.0 };
        self.edge_length_start + (self.edge_length_end - self.edge_length_start) * f
    }

    fn remesh_at(&self, step: usize) -> bool {
        (step + 1) % self.remesh_interval == 0
            && (step as f64) < self.remesh_stop_fraction * self.steps_carve as f64
    }

    fn lr_factor(&self, step: usize) -> f64 {
        let n = self.steps_carve as f64;
        let start = (1.0 - self.lr_decay_fraction) * n;
        if (step as f64) < start || self.lr_decay_fraction == 0.0 {
            1.0
        } else {
            ((n - step as f64) / (n - start)).clamp(0.0, 1.0)
        }
    }
}

#[derive(Clone, Debug)]
pub struct CarveOutcome {
    pub mesh: TriangleMesh,
    /// Total loss before each step.
    pub losses: Vec<f64>,
    pub splits: usize,
    pub collapses: usize,
    pub flips: usize,
    /// Input views with the refined image-plane offsets.
    pub views: ViewSet,
}

/// Total carve loss (image terms + regularizer) and its position gradient.
pub fn carve_loss(mesh: &TriangleMesh, views: &ViewSet, obs: &[Observation], lambda: f64) -> Result<(f64, Vec<Vec3>)> {
    carve_terms(mesh, views, obs, lambda).map(|(l, g, _)| (l, g))
}

fn carve_terms(
    mesh: &TriangleMesh,
    views: &ViewSet,
    obs: &[Observation],
    lambda: f64,
) -> Result<(f64, Vec<Vec3>, Vec<[f64; 2]>)> {
    let prep = Prepared::new(mesh)?;
    let ml = multiview_geometry(&prep, views, obs)?;
    let mut grads = ml.grads.positions;
    let mut total = ml.total;
    if lambda > 0.0 {
        total += lambda * normal_regularizer(&prep.adjacency, &prep.normals);
        let mut gn = vec![Vec3::zeros(); mesh.vertices.len()];
        normal_regularizer_grad(&prep.adjacency, &prep.normals, lambda, &mut gn);
        vertex_normals_backward(&mesh.vertices, &mesh.faces, &gn, &mut grads);
    }
    Ok((total, grads, ml.offset_grads))
}

fn smooth(adj: &Adjacency, g: &[Vec3], mu: f64) -> Vec<Vec3> {
    if mu == 0.0 {
        return g.to_vec();
    }
    g.iter()
        .enumerate()
        .map(|(i, gi)| {
            let ring = &adj.neighbors[i];
            if ring.is_empty() {
                return *gi;
            }
            let mean = ring.iter().map(|&j| g[j]).sum::<Vec3>() / ring.len() as f64;
            gi * (1.0 - mu) + mean * mu
        })
        .collect()
}

/// Carves detail into `initial` by vertex displacement and remeshing.
pub fn carve(initial: &TriangleMesh, views: &ViewSet, obs: &[Observation], config: &CarveConfig) -> Result<CarveOutcome> {
    config.validate()?;
    initial.ensure_nonempty()?;
    let mut views = config.weighted_views(views)?;
    let mut offsets: Vec<f64> = views.offsets().into_iter().flatten().collect();
    let mut offset_adam = Adam::new(offsets.len());
    let diag0 = initial.bbox_diagonal();
    let step_unit = views.half_extent();
    let mut mesh = initial.clone();
    let mut state = vec![0.0; 4 * mesh.vertices.len()];
    let mut losses = Vec::with_capacity(config.steps_carve);
    let (mut splits, mut collapses, mut flips) = (0, 0, 0);
    let mut initial_loss = None;
    let mut above = 0usize;
    for step in 0..config.steps_carve {
        let (loss, grads, offset_grads) = carve_terms(&mesh, &views, obs, config.lambda)?;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("carve loss is {loss} at step {step}")));
        }
        let l0 = *initial_loss.get_or_insert(loss);
        above = if loss > 10.0 * l0 { above + 1 } else { 0 };
        if above >= 50 {
            return Err(Error::Diverged(format!(
                "carve loss {loss:.6e} above 10x initial {l0:.6e} for 50 steps (step {step}, {} vertices)",
                mesh.vertices.len()
            )));
        }
        losses.push(loss);
        if step % 50 == 0 {
            log::debug!("carve step {step}: loss {loss:.6e}, {} vertices", mesh.vertices.len());
        }
        let adj = mesh.adjacency();
        let g = smooth(&adj, &grads, config.gradient_smoothing);
        let lr = config.lr_carve * step_unit * config.lr_factor(step);
        vertex_adam_step(&mut mesh.vertices, &mut state, &g, step as u32 + 1, lr, 0.9, 0.99);
        if config.view_offsets && views.len() > 1 {
            let og: Vec<f64> = offset_grads.into_iter().flatten().collect();
            offset_adam.step(&mut offsets, &og, lr, None);
            for (v, o) in views.views.iter_mut().zip(offsets.chunks(2)) {
                v.camera.offset = [o[0], o[1]];
            }
            views.center_offsets(|v| v.weight > 0.0);
            offsets = views.offsets().into_iter().flatten().collect();
        }
        if config.remesh_at(step) {
            let target = RemeshTarget {
                edge_length: config.edge_length_at(step) * diag0,
            };
            let s = remesh_pass(&mut mesh, &mut state, 4, target);
            splits += s.splits;
            collapses += s.collapses;
            flips += s.flips;
        }
    }
    if mesh.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
        return Err(Error::Diverged("non-finite vertex after carving".into()));
    }
    Ok(CarveOutcome {
        mesh,
        losses,
        splits,
        collapses,
        flips,
        views,
    })
}

/// Closes boundary loops of at most `max_boundary_len` edges with a fan
/// around the loop centroid, then relaxes the new vertices.
pub fn fill_holes(mesh: &TriangleMesh, max_boundary_len: usize) -> TriangleMesh {
    let loops = mesh.boundary_loops();
    let mut out = mesh.clone();
    let mut added = Vec::new();
    for lp in loops.iter().filter(|l| l.len() >= 3 && l.len() <= max_boundary_len) {
        let c = lp.iter().map(|&v| mesh.vertices[v]).sum::<Vec3>() / lp.len() as f64;
        let ci = out.vertices.len();
        out.vertices.push(c);
        if let Some(cols) = out.colors.as_mut() {
            let mean = lp.iter().map(|&v| cols[v]).sum::<Vec3>() / lp.len() as f64;
            cols.push(mean);
        }
        for i in 0..lp.len() {
            let (a, b) = (lp[i], lp[(i + 1) % lp.len()]);
            out.faces.push([b, a, ci]);
        }
        added.push(ci);
    }
    if added.is_empty() {
        return out;
    }
    let adj = out.adjacency();
    for _ in 0..10 {
        for &v in &added {
            let ring = &adj.neighbors[v];
            out.vertices[v] = ring.iter().map(|&k| out.vertices[k]).sum::<Vec3>() / ring.len() as f64;
        }
    }
    out
}
