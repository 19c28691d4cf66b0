//! Observation bundles on disk and the end-to-end reconstruction run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::appearance::{fuse_colors, interpolate_unseen};
use crate::carving::{align_template, carve, fill_holes, CarveConfig, Template};
use crate::error::{Error, Result};
use crate::io::{load_map, load_mesh, save_map, save_mesh, write_atomic, MapFormat};
use crate::mesh::TriangleMesh;
use crate::oracle::PerturbSpec;
use crate::scenes;
use crate::views::{Observation, ViewSet, SCHEMA_VERSION};

pub const VIEWS_FILE: &str = "views.json";
pub const GT_FILE: &str = "gt.ply";
pub const PERTURB_FILE: &str = "perturb.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MESH_FILE: &str = "mesh.ply";

/// Observations with the cameras that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub views: ViewSet,
    pub observations: Vec<Observation>,
    pub gt: Option<TriangleMesh>,
    pub perturb: Option<PerturbSpec>,
}

fn map_path(dir: &Path, kind: &str, k: usize, ext: &str) -> PathBuf {
    dir.join(format!("{kind}_{k}.{ext}"))
}

/// Writes `views.json`, per-view `normal_k`, `mask_k` and `color_k` maps,
/// and optionally `gt.ply` and `perturb.json`.
pub fn write_bundle(dir: &Path, bundle: &Bundle, format: MapFormat) -> Result<()> {
    if bundle.views.len() != bundle.observations.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observations for {} views",
            bundle.observations.len(),
            bundle.views.len()
        )));
    }
    fs::create_dir_all(dir)?;
    let ext = format.extension();
    for (k, o) in bundle.observations.iter().enumerate() {
        save_map(&map_path(dir, "normal", k, ext), "normal", &o.normal)?;
        save_map(&map_path(dir, "mask", k, ext), "mask", &o.silhouette)?;
        if let Some(c) = &o.color {
            save_map(&map_path(dir, "color", k, ext), "color", c)?;
        }
    }
    if let Some(gt) = &bundle.gt {
        save_mesh(&dir.join(GT_FILE), gt)?;
    }
    if let Some(p) = &bundle.perturb {
        write_atomic(&dir.join(PERTURB_FILE), p.to_json().as_bytes())?;
    }
    write_atomic(&dir.join(VIEWS_FILE), bundle.views.to_json().as_bytes())
}

pub fn read_bundle(dir: &Path) -> Result<Bundle> {
    let views = ViewSet::from_json(&fs::read_to_string(dir.join(VIEWS_FILE))?)?;
    let ext = ["nfr", "png"]
        .into_iter()
        .find(|e| map_path(dir, "normal", 0, e).exists())
        .ok_or_else(|| Error::Missing(format!("normal_0 map in {}", dir.display())))?;
    let mut observations = Vec::with_capacity(views.len());
    for k in 0..views.len() {
        let color_path = map_path(dir, "color", k, ext);
        let o = Observation {
            normal: load_map(&map_path(dir, "normal", k, ext))?,
            silhouette: load_map(&map_path(dir, "mask", k, ext))?,
            color: if color_path.exists() { Some(load_map(&color_path)?) } else { None },
        };
        o.validate()?;
        if o.silhouette.width != views.views[k].camera.resolution {
            return Err(Error::DimensionMismatch(format!(
                "view {k}: {}px maps for a {}px camera",
                o.silhouette.width, views.views[k].camera.resolution
            )));
        }
        observations.push(o);
    }
    let gt_path = dir.join(GT_FILE);
    let perturb_path = dir.join(PERTURB_FILE);
    Ok(Bundle {
        views,
        observations,
        gt: if gt_path.exists() { Some(load_mesh(&gt_path)?) } else { None },
        perturb: if perturb_path.exists() {
            Some(PerturbSpec::from_json(&fs::read_to_string(perturb_path)?)?)
        } else {
            None
        },
    })
}

/// Template used when none is given.
pub fn default_template() -> TriangleMesh {
    scenes::icosphere(3)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timings {
    pub align_s: f64,
    pub carve_s: f64,
    pub color_s: f64,
    pub total_s: f64,
}

/// Inputs, outputs and run metadata of one `carve` invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineManifest {
    pub schema_version: u32,
    pub version: String,
    pub bundle: String,
    pub template: Option<String>,
    pub config: Option<String>,
    pub out_dir: String,
    pub mesh: String,
    pub seed: u64,
    pub vertices: usize,
    pub faces: usize,
    pub align_loss: [f64; 2],
    pub carve_loss: [f64; 2],
    pub view_offsets: Vec<[f64; 2]>,
    pub timings: Timings,
}

impl PipelineManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let m: Self = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: m.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        Ok(m)
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub mesh: TriangleMesh,
    pub align_loss: [f64; 2],
    pub carve_loss: [f64; 2],
    pub views: ViewSet,
    pub timings: Timings,
}

/// Align, carve, close small holes, then recover vertex colors when the
/// observations carry them.
pub fn run_pipeline(bundle: &Bundle, template: &TriangleMesh, config: &CarveConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let start = Instant::now();
    let tpl = Template::rigid(template.clone())?;
    let aligned = align_template(&tpl, &bundle.views, &bundle.observations, config)?;
    let align_s = start.elapsed().as_secs_f64();
    log::info!("aligned in {align_s:.1}s: loss {:.6e} -> {:.6e}", aligned.initial_loss, aligned.final_loss);

    let t = Instant::now();
    let carved = carve(&aligned.mesh, &bundle.views, &bundle.observations, config)?;
    let mut mesh = fill_holes(&carved.mesh, config.max_hole_edges);
    let carve_s = t.elapsed().as_secs_f64();
    log::info!("carved in {carve_s:.1}s: {} vertices, {} faces", mesh.vertices.len(), mesh.faces.len());

    let t = Instant::now();
    if bundle.observations.iter().all(|o| o.color.is_some()) {
        let fused = fuse_colors(&mesh, &carved.views, &bundle.observations, config)?;
        let colors = interpolate_unseen(&mesh, &fused.colors, &fused.observed)?;
        mesh.colors = Some(colors);
    }
    let color_s = t.elapsed().as_secs_f64();
    let carve_loss = [
        carved.losses.first().copied().unwrap_or(0.0),
        carved.losses.last().copied().unwrap_or(0.0),
    ];
    Ok(PipelineOutput {
        mesh,
        align_loss: [aligned.initial_loss, aligned.final_loss],
        carve_loss,
        views: carved.views,
        timings: Timings {
            align_s,
            carve_s,
            color_s,
            total_s: start.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{generate_observations, paint_by_position};

    fn small_bundle(format_views: usize) -> Bundle {
        let gt = paint_by_position(&scenes::icosphere(2));
        let views = ViewSet::canonical(format_views, 32, 1.25).unwrap();
        let observations = generate_observations(&gt, &views, &PerturbSpec::default(), 0).unwrap();
        Bundle {
            views,
            observations,
            gt: Some(gt),
            perturb: Some(PerturbSpec::default()),
        }
    }

    #[test]
    fn nfr_bundle_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let b = small_bundle(4);
        write_bundle(dir.path(), &b, MapFormat::Nfr).unwrap();
        let back = read_bundle(dir.path()).unwrap();
        assert_eq!(back.views, b.views);
        assert_eq!(back.observations, b.observations);
        assert_eq!(back.perturb, b.perturb);
        assert_eq!(back.gt.unwrap().faces, b.gt.unwrap().faces);
    }

    #[test]
    fn png_bundle_round_trips_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let b = small_bundle(2);
        write_bundle(dir.path(), &b, MapFormat::Png).unwrap();
        let back = read_bundle(dir.path()).unwrap();
        for (a, o) in back.observations.iter().zip(&b.observations) {
            for (x, y) in a.normal.data.iter().zip(&o.normal.data) {
                assert!((x - y).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
    }

    #[test]
    fn newer_schema_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &small_bundle(2), MapFormat::Nfr).unwrap();
        let p = dir.path().join(VIEWS_FILE);
        let text = fs::read_to_string(&p).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 2");
        fs::write(&p, text).unwrap();
        assert!(matches!(read_bundle(dir.path()), Err(Error::SchemaVersion { found: 2, .. })));
    }
}
