//! Surface distances, normal consistency and image similarity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::kdtree::KdTree3;
use crate::mesh::{vertex_normals, Adjacency, SurfaceIndex, SurfacePoint, TriangleMesh, Vec3};

pub const DEFAULT_SAMPLES: usize = 100_000;

/// Geometry comparison of a prediction against ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoReport {
    pub chamfer: f64,
    pub p2s: f64,
    pub nc: f64,
    pub samples: usize,
}

/// A point drawn on a mesh together with its source face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceSample {
    pub point: Vec3,
    pub face: usize,
}

/// `n` area-uniform samples (cumulative-area inversion, then uniform
/// barycentric coordinates).
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    mesh.ensure_nonempty()?;
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut acc = 0.0;
    for f in 0..mesh.faces.len() {
        acc += mesh.face_area(f);
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::InvalidMesh("mesh has zero surface area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * acc;
        let face = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let [a, b, c] = mesh.faces[face];
        let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let point = va * (1.0 - s) + vb * (s * (1.0 - r2)) + vc * (s * r2);
        out.push(SurfaceSample { point, face });
    }
    Ok(out)
}

/// Mean distance from samples on `gt` to the surface of `pred`.
pub fn p2s(pred: &TriangleMesh, gt: &TriangleMesh, n_samples: usize, seed: u64) -> Result<f64> {
    let samples = sample_surface(gt, n_samples, seed)?;
    let index = SurfaceIndex::new(pred)?;
    let d: Vec<f64> = samples.par_iter().map(|s| index.nearest(&s.point).distance).collect();
    Ok(mean(&d))
}

/// Symmetric mean of the two directed point-to-surface distances.
pub fn chamfer_l1(pred: &TriangleMesh, gt: &TriangleMesh, n_samples: usize, seed: u64) -> Result<f64> {
    let a = p2s(pred, gt, n_samples, seed)?;
    let b = p2s(gt, pred, n_samples, seed)?;
    Ok(0.5 * (a + b))
}

/// Surface normal at a closest point: the face normal in the interior, the
/// mean of the incident face normals on an edge, the vertex normal at a
/// corner. Adjacent faces that tie for the closest point therefore agree.
fn feature_normal(mesh: &TriangleMesh, adj: &Adjacency, face_normals: &[Vec3], vertex_normals: &[Vec3], sp: &SurfacePoint) -> Vec3 {
    const TOL: f64 = 1e-9;
    let f = mesh.faces[sp.face];
    let [a, b, c] = f.map(|i| mesh.vertices[i]);
    let n = (b - a).cross(&(c - a));
    let nn = n.norm_squared();
    if !(nn > 0.0) {
        return face_normals[sp.face];
    }
    let p = sp.point;
    let bary = [
        (c - b).cross(&(p - b)).dot(&n) / nn,
        (a - c).cross(&(p - c)).dot(&n) / nn,
        (b - a).cross(&(p - a)).dot(&n) / nn,
    ];
    let on: Vec<usize> = (0..3).filter(|&i| bary[i] > TOL).collect();
    match on.as_slice() {
        [v] => vertex_normals[f[*v]],
        [u, v] => {
            let faces = adj.edge(f[*u], f[*v]).map(|e| e.faces.as_slice()).unwrap_or(&[]);
            let s: Vec3 = faces.iter().map(|&g| face_normals[g]).sum();
            if s.norm() > 0.0 {
                s.normalize()
            } else {
                face_normals[sp.face]
            }
        }
        _ => face_normals[sp.face],
    }
}

fn directed_nc(from: &TriangleMesh, to: &TriangleMesh, n: usize, seed: u64) -> Result<f64> {
    let samples = sample_surface(from, n, seed)?;
    let index = SurfaceIndex::new(to)?;
    let from_normals = from.face_normals();
    let to_normals = to.face_normals();
    let to_vertex_normals = vertex_normals(&to.vertices, &to.faces);
    let adj = to.adjacency();
    let dots: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let sp = index.nearest(&s.point);
            from_normals[s.face].dot(&feature_normal(to, &adj, &to_normals, &to_vertex_normals, &sp))
        })
        .collect();
    Ok(mean(&dots))
}

/// Symmetric mean of normal dot products at matched closest points.
pub fn normal_consistency(pred: &TriangleMesh, gt: &TriangleMesh, n_samples: usize, seed: u64) -> Result<f64> {
    let a = directed_nc(gt, pred, n_samples, seed)?;
    let b = directed_nc(pred, gt, n_samples, seed)?;
    Ok(0.5 * (a + b))
}

pub fn geo_report(pred: &TriangleMesh, gt: &TriangleMesh, n_samples: usize, seed: u64) -> Result<GeoReport> {
    let p2s_gt = p2s(pred, gt, n_samples, seed)?;
    let p2s_pred = p2s(gt, pred, n_samples, seed)?;
    Ok(GeoReport {
        chamfer: 0.5 * (p2s_gt + p2s_pred),
        p2s: p2s_gt,
        nc: normal_consistency(pred, gt, n_samples, seed)?,
        samples: n_samples,
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// `10 log10(1 / MSE)`; identical images give `+inf`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.same_shape(b)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.data.len().max(1) as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() })
}

pub const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Mean SSIM over all 8x8 windows (stride 1) and channels, with uniform
/// weights and population statistics.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.same_shape(b)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::DimensionMismatch(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels")));
    }
    let k = SSIM_WINDOW;
    let area = (k * k) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..a.channels {
        // Summed-area tables of x, y, x^2, y^2, xy with a zero border.
        let sw = w + 1;
        let mut tables = vec![[0.0f64; 5]; sw * (h + 1)];
        for y in 0..h {
            let mut row = [0.0; 5];
            for x in 0..w {
                let p = a.get(x, y, c) as f64;
                let q = b.get(x, y, c) as f64;
                let vals = [p, q, p * p, q * q, p * q];
                for i in 0..5 {
                    row[i] += vals[i];
                    tables[(y + 1) * sw + x + 1][i] = tables[y * sw + x + 1][i] + row[i];
                }
            }
        }
        for y in 0..=h - k {
            for x in 0..=w - k {
                let mut s = [0.0; 5];
                for (i, si) in s.iter_mut().enumerate() {
                    *si = tables[(y + k) * sw + x + k][i] - tables[y * sw + x + k][i] - tables[(y + k) * sw + x][i]
                        + tables[y * sw + x][i];
                }
                total += ssim_window(s, area);
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

#[inline]
fn ssim_window(s: [f64; 5], area: f64) -> f64 {
    let mx = s[0] / area;
    let my = s[1] / area;
    let vx = s[2] / area - mx * mx;
    let vy = s[3] / area - my * my;
    let cxy = s[4] / area - mx * my;
    ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2)) / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
}

/// Sub-mesh near a reference region: vertices within `radius_factor` times
/// the reference radius (largest distance from its bounding-box centre to a
/// reference vertex) of that centre, plus faces whose corners all survive.
pub fn crop_head(mesh: &TriangleMesh, head_reference: &TriangleMesh, radius_factor: f64) -> Result<TriangleMesh> {
    mesh.ensure_nonempty()?;
    head_reference.ensure_nonempty()?;
    let center = head_reference.bbox_center();
    let radius = head_reference
        .vertices
        .iter()
        .map(|v| (v - center).norm())
        .fold(0.0, f64::max);
    let tree = KdTree3::new(mesh.vertices.clone());
    let mut keep = vec![false; mesh.vertices.len()];
    for i in tree.within_radius(&center, radius * radius_factor) {
        keep[i] = true;
    }
    let faces: Vec<[usize; 3]> = mesh
        .faces
        .iter()
        .filter(|f| f.iter().all(|&v| keep[v]))
        .copied()
        .collect();
    if faces.is_empty() {
        return Err(Error::NoHeadOverlap);
    }
    let mut out = mesh.clone();
    out.faces = faces;
    Ok(out.compacted())
}

pub const DEFAULT_HEAD_RADIUS_FACTOR: f64 = 1.2;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes;

    #[test]
    fn identical_meshes() {
        let m = scenes::icosphere(2);
        assert!(p2s(&m, &m, 2000, 1).unwrap() < 1e-9);
        assert!(chamfer_l1(&m, &m, 2000, 1).unwrap() < 1e-9);
        assert!((normal_consistency(&m, &m, 2000, 1).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flipped_orientation_gives_minus_one() {
        let m = scenes::icosphere(2);
        let nc = normal_consistency(&m.flipped(), &m, 2000, 3).unwrap();
        assert!((nc + 1.0).abs() < 1e-6, "{nc}");
    }

    #[test]
    fn chamfer_is_symmetric_bit_exactly() {
        let a = scenes::icosphere(2);
        let b = scenes::bumpy_sphere(2, 0.05, 6.0);
        assert_eq!(chamfer_l1(&a, &b, 3000, 9).unwrap(), chamfer_l1(&b, &a, 3000, 9).unwrap());
    }

    #[test]
    fn sampling_is_seeded() {
        let m = scenes::cube(1.0);
        assert_eq!(sample_surface(&m, 50, 4).unwrap(), sample_surface(&m, 50, 4).unwrap());
        assert_ne!(sample_surface(&m, 50, 4).unwrap(), sample_surface(&m, 50, 5).unwrap());
    }

    #[test]
    fn uniform_images() {
        let a = Image::filled(16, 16, 3, 0.5);
        let b = Image::filled(16, 16, 3, 0.6);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(psnr(&a, &Image::new(8, 8, 3)).is_err());
    }

    #[test]
    fn crop_full_reference_is_identity() {
        let m = scenes::icosphere(2);
        let c = crop_head(&m, &m, 1.2).unwrap();
        assert_eq!((c.vertices.len(), c.faces.len()), (m.vertices.len(), m.faces.len()));
        assert!(chamfer_l1(&c, &m, 1000, 2).unwrap() < 1e-12);
    }

    #[test]
    fn crop_far_reference_fails() {
        let m = scenes::icosphere(2);
        let far = m.clone().translated(Vec3::new(10.0, 0.0, 0.0));
        assert!(matches!(crop_head(&m, &far, 1.2), Err(Error::NoHeadOverlap)));
    }
}
