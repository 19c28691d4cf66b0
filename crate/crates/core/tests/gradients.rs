mod common;

use common::{blob, gradient_check};
use normcarve::mesh::{TriangleMesh, Vec3};
use normcarve::raster::{backward, geometry_loss, color_loss, rasterize_with, PixelGrads, Prepared, RasterOptions};
use normcarve::scenes;
use normcarve::views::{Observation, OrthoCamera};

#[test]
fn position_gradients_match_finite_differences() {
    for seed in 0..5 {
        let (ok, total) = gradient_check(seed);
        eprintln!("seed {seed}: {ok}/{total}");
        assert!(ok * 100 >= 95 * total, "seed {seed}: only {ok}/{total} within tolerance");
    }
}

#[test]
fn translating_along_view_axis_has_no_depth_gradient() {
    // Off the pixel grid so the outline crosses partially covered pixels.
    let quad = scenes::quad(0.973);
    let cam = OrthoCamera::new(0.0, 1.0, 64);
    let target = rasterize_with(&Prepared::new(&quad.clone().scaled(0.9)).unwrap(), &cam, RasterOptions::default())
        .unwrap()
        .to_observation();
    let prep = Prepared::new(&quad).unwrap();
    let buf = rasterize_with(&prep, &cam, RasterOptions::default()).unwrap();
    let (_, pg) = geometry_loss(&buf, &target, 1.0).unwrap();
    let g = backward(&prep, &cam, &buf, &pg, true).unwrap();
    let total: f64 = g.positions.iter().map(|v| v.norm()).sum();
    assert!(total > 0.0);
    for v in &g.positions {
        assert!(v.z.abs() < 1e-6 * total);
    }
}

#[test]
fn silhouette_shift_pulls_toward_target() {
    let tri = TriangleMesh::new(
        vec![Vec3::new(-0.5, -0.4, 0.0), Vec3::new(0.5, -0.4, 0.0), Vec3::new(0.0, 0.5, 0.0)],
        vec![[0, 1, 2]],
    )
    .unwrap();
    let cam = OrthoCamera::new(0.0, 1.0, 64);
    let shifted = tri.clone().translated(Vec3::new(cam.pixel_size(), 0.0, 0.0));
    let target = rasterize_with(&Prepared::new(&shifted).unwrap(), &cam, RasterOptions::default())
        .unwrap()
        .to_observation();
    let prep = Prepared::new(&tri).unwrap();
    let buf = rasterize_with(&prep, &cam, RasterOptions::default()).unwrap();
    let (_, mut pg) = geometry_loss(&buf, &target, 1.0).unwrap();
    // Silhouette term only.
    pg.normal.iter_mut().for_each(|n| *n = Vec3::zeros());
    let g = backward(&prep, &cam, &buf, &pg, true).unwrap();
    for v in &g.positions {
        assert!(v.x < 0.0, "{v:?}");
    }
}

#[test]
fn color_backward_is_linear() {
    let mesh = scenes::icosphere(2);
    let n = mesh.vertices.len();
    let mesh = mesh.with_colors(vec![Vec3::new(0.3, 0.5, 0.7); n]).unwrap();
    let cam = OrthoCamera::new(30.0, 1.25, 48);
    let prep = Prepared::new(&mesh).unwrap();
    let buf = rasterize_with(&prep, &cam, RasterOptions::default()).unwrap();
    let mut target = buf.to_observation();
    target.color.as_mut().unwrap().data.iter_mut().for_each(|c| *c *= 0.5);
    let (_, pg) = color_loss(&buf, &target, 1.0).unwrap();
    let mut doubled = PixelGrads::zeros(pg.normal.len(), true);
    doubled.color = pg.color.as_ref().map(|c| c.iter().map(|v| v * 2.0).collect());
    let a = backward(&prep, &cam, &buf, &pg, false).unwrap();
    let b = backward(&prep, &cam, &buf, &doubled, false).unwrap();
    for (x, y) in a.colors.unwrap().iter().zip(b.colors.unwrap().iter()) {
        assert_eq!(x * 2.0, *y);
    }
}

#[test]
fn view_offset_gradient_matches_finite_differences() {
    use normcarve::raster::multiview_geometry;
    use normcarve::ViewSet;
    let target_mesh = blob(7, 3);
    let views = ViewSet::canonical(4, 64, 1.25).unwrap();
    let obs: Vec<Observation> = views
        .views
        .iter()
        .map(|v| {
            let cam = v.camera.clone().with_offset([0.02, -0.015]);
            rasterize_with(&Prepared::new(&target_mesh).unwrap(), &cam, RasterOptions::default())
                .unwrap()
                .to_observation()
        })
        .collect();
    let mesh = blob(3, 2);
    let prep = Prepared::new(&mesh).unwrap();
    let ml = multiview_geometry(&prep, &views, &obs).unwrap();
    // A view shift moves every outline pixel at once, so the loss is only
    // locally smooth over a much shorter step than a single vertex move.
    let h = 1e-5;
    for k in 0..views.len() {
        for axis in 0..2 {
            let shifted = |d: f64| {
                let mut vs = views.clone();
                vs.views[k].camera.offset[axis] += d;
                multiview_geometry(&prep, &vs, &obs).unwrap().total
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let an = ml.offset_grads[k][axis];
            assert!((fd - an).abs() <= 2e-2 * fd.abs().max(an.abs()).max(1e-6), "view {k} axis {axis}: fd {fd} analytic {an}");
        }
    }
}
