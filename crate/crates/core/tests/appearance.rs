use normcarve::appearance::{composite_face, compute_visibility, fuse_colors, Rect};
use normcarve::carving::CarveConfig;
use normcarve::metrics::psnr;
use normcarve::oracle::{generate_observations, PerturbSpec};
use normcarve::{scenes, Image, Observation, TriangleMesh, Vec3, ViewSet};
use proptest::prelude::*;

fn gradient_sphere() -> TriangleMesh {
    let m = scenes::icosphere(4);
    let colors = m
        .vertices
        .iter()
        .map(|v| Vec3::new(0.5 + 0.4 * v.x, 0.5 + 0.4 * v.y, 0.5 - 0.3 * v.z))
        .collect();
    m.with_colors(colors).unwrap()
}

fn render(mesh: &TriangleMesh, views: &ViewSet) -> Vec<Observation> {
    generate_observations(mesh, views, &PerturbSpec::default(), 0).unwrap()
}

fn color_config() -> CarveConfig {
    CarveConfig {
        steps_color: 100,
        ..CarveConfig::default()
    }
}

#[test]
fn smooth_gradient_round_trip() {
    let gt = gradient_sphere();
    let views = ViewSet::canonical(6, 256, 1.25).unwrap();
    let obs = render(&gt, &views);
    let geometry = TriangleMesh::new(gt.vertices.clone(), gt.faces.clone()).unwrap();
    let fused = fuse_colors(&geometry, &views, &obs, &color_config()).unwrap();
    let truth = gt.colors.as_ref().unwrap();
    let mut worst = 0.0f64;
    for (i, c) in fused.colors.iter().enumerate() {
        if fused.observed.visible[i] {
            worst = worst.max((c - truth[i]).amax());
        }
    }
    assert!(worst < 5.0 / 255.0, "max error {worst}");
    let rerender = render(&geometry.with_colors(fused.colors).unwrap(), &views);
    for (a, b) in rerender.iter().zip(&obs) {
        let p = psnr(a.color.as_ref().unwrap(), b.color.as_ref().unwrap()).unwrap();
        assert!(p > 35.0, "{p}");
    }
}

#[test]
fn zero_weight_views_do_not_contribute() {
    let gt = gradient_sphere();
    let views = ViewSet::canonical(4, 128, 1.25).unwrap();
    let obs = render(&gt, &views);
    let mut tampered = obs.clone();
    for o in tampered.iter_mut().skip(1) {
        o.color.as_mut().unwrap().data.iter_mut().for_each(|c| *c = 1.0 - *c);
    }
    let cfg = CarveConfig {
        color_weights: Some(vec![1.0, 0.0, 0.0, 0.0]),
        ..color_config()
    };
    let views = cfg.weighted_views(&views).unwrap();
    let geometry = TriangleMesh::new(gt.vertices.clone(), gt.faces.clone()).unwrap();
    let a = fuse_colors(&geometry, &views, &obs, &cfg).unwrap();
    let b = fuse_colors(&geometry, &views, &tampered, &cfg).unwrap();
    let front = ViewSet {
        views: vec![views.views[0].clone()],
        ..views.clone()
    };
    let seen = compute_visibility(&geometry, &front).unwrap();
    assert!(seen.count() > 0);
    for i in 0..geometry.vertices.len() {
        if seen.visible[i] {
            assert!((a.colors[i] - b.colors[i]).amax() <= 1.0 / 255.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn composite_leaves_exterior_untouched(
        x in 0usize..20, y in 0usize..20, w in 1usize..12, h in 1usize..12,
        fw in 1usize..16, fh in 1usize..16, seed in 0u32..1000,
    ) {
        let (bw, bh) = (32, 32);
        let mut body = Image::new(bw, bh, 3);
        for (i, v) in body.data.iter_mut().enumerate() {
            *v = (((i as u32).wrapping_mul(2654435761) ^ seed) % 256) as f32 / 255.0;
        }
        let face = Image::filled(fw, fh, 3, 0.25);
        let mut weight = Image::new(bw, bh, 1);
        for py in y..y + h {
            for px in x..x + w {
                weight.set(px, py, 0, ((px * 7 + py * 3) % 5) as f32 / 4.0);
            }
        }
        let out = composite_face(&body, &face, Rect { x, y, width: w, height: h }, &weight).unwrap();
        for py in 0..bh {
            for px in 0..bw {
                if px < x || px >= x + w || py < y || py >= y + h {
                    for c in 0..3 {
                        prop_assert_eq!(out.get(px, py, c).to_bits(), body.get(px, py, c).to_bits());
                    }
                }
            }
        }
    }
}

