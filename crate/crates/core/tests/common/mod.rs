//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use normcarve::mesh::{TriangleMesh, Vec3};
use normcarve::metrics::sample_surface;
use normcarve::raster::{backward, geometry_loss, rasterize_with, Prepared, RasterOptions};
use normcarve::scenes;
use normcarve::views::{Observation, OrthoCamera};
use normcarve::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth random star-shaped blob around an icosphere.
pub fn blob(seed: u64, subdiv: usize) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k: Vec<(Vec3, f64)> = (0..3)
        .map(|_| {
            let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (d.normalize() * rng.random_range(1.0..2.5), rng.random_range(0.0..6.0))
        })
        .collect();
    let mut m = scenes::icosphere(subdiv);
    m.map_vertices(|v| {
        let r = 0.7 + k.iter().map(|(d, ph)| 0.04 * (d.dot(v) * 2.0 + ph).sin()).sum::<f64>();
        v * r
    });
    m
}

fn loss_of(mesh: &TriangleMesh, cam: &OrthoCamera, target: &Observation) -> f64 {
    let prep = Prepared::new(mesh).unwrap();
    let buf = rasterize_with(&prep, cam, RasterOptions::default()).unwrap();
    geometry_loss(&buf, target, 1.0).unwrap().0
}

/// Analytic position gradients against central differences at 30 random
/// coordinates; returns `(within tolerance, total)`.
pub fn gradient_check(seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
    let cam = OrthoCamera::new(rng.random_range(0.0..360.0), 1.25, 64);
    let target_mesh = blob(seed + 1000, 3);
    let target = rasterize_with(&Prepared::new(&target_mesh).unwrap(), &cam, RasterOptions::default())
        .unwrap()
        .to_observation();
    let mesh = blob(seed, 2);
    let prep = Prepared::new(&mesh).unwrap();
    let buf = rasterize_with(&prep, &cam, RasterOptions::default()).unwrap();
    let (_, pg) = geometry_loss(&buf, &target, 1.0).unwrap();
    let g = backward(&prep, &cam, &buf, &pg, true).unwrap();
    let h = 1e-3;
    let mut ok = 0;
    let total = 30;
    for _ in 0..total {
        let v = rng.random_range(0..mesh.vertices.len());
        let k = rng.random_range(0..3);
        let mut up = mesh.clone();
        up.vertices[v][k] += h;
        let mut dn = mesh.clone();
        dn.vertices[v][k] -= h;
        let fd = (loss_of(&up, &cam, &target) - loss_of(&dn, &cam, &target)) / (2.0 * h);
        let an = g.positions[v][k];
        let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
        if err < 2e-2 {
            ok += 1;
        } else {
            eprintln!("seed {seed} v {v} k {k}: fd {fd:.6e} analytic {an:.6e}");
        }
    }
    (ok, total)
}

/// Distance from `p` to triangle `abc`: plane distance when the projection
/// falls inside, otherwise the nearest of the three edge segments.
pub fn point_triangle_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let n = (b - a).cross(&(c - a));
    let nn = n.norm_squared();
    if nn > 0.0 {
        let q = p - n * ((p - a).dot(&n) / nn);
        let inside = [(a, b), (b, c), (c, a)]
            .iter()
            .all(|(u, v)| (*v - *u).cross(&(q - *u)).dot(&n) >= 0.0);
        if inside {
            return (p - q).norm();
        }
    }
    [(a, b), (b, c), (c, a)]
        .iter()
        .map(|(u, v)| {
            let d = *v - *u;
            let t = if d.norm_squared() > 0.0 { ((p - *u).dot(&d) / d.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
            (p - (*u + d * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn brute_p2s(pred: &TriangleMesh, gt: &TriangleMesh, n: usize, seed: u64) -> f64 {
    let samples = sample_surface(gt, n, seed).unwrap();
    let mut total = 0.0;
    for s in &samples {
        let d = pred
            .faces
            .iter()
            .map(|f| point_triangle_distance(&s.point, &pred.vertices[f[0]], &pred.vertices[f[1]], &pred.vertices[f[2]]))
            .fold(f64::INFINITY, f64::min);
        total += d;
    }
    total / n as f64
}

/// Windowed SSIM straight from the definition, two-pass statistics.
pub fn reference_ssim(a: &Image, b: &Image) -> f64 {
    let k = 8;
    let (c1, c2) = (1e-4, 9e-4);
    let mut total = 0.0;
    let mut count = 0;
    for c in 0..a.channels {
        for y0 in 0..=a.height - k {
            for x0 in 0..=a.width - k {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for y in y0..y0 + k {
                    for x in x0..x0 + k {
                        xs.push(a.get(x, y, c) as f64);
                        ys.push(b.get(x, y, c) as f64);
                    }
                }
                let n = xs.len() as f64;
                let mx = xs.iter().sum::<f64>() / n;
                let my = ys.iter().sum::<f64>() / n;
                let vx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n;
                let vy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n;
                let cov = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

