use nalgebra::{Rotation3, Unit, Vector3};
use proptest::prelude::*;

use nerfloc::camera::{CameraPose, Intrinsics};
use nerfloc::field::{AnalyticScene, ForwardPassLedger, Primitive, RadianceField};
use nerfloc::render::{compositing_weights, generate_ray, render_pixel, render_pixels, RenderSettings};

const BG: [f64; 3] = [1.0, 1.0, 1.0];

fn spheres(rot: &Rotation3<f64>) -> RadianceField {
    let place = |c: [f64; 3]| {
        let v = rot * Vector3::from(c);
        [v.x, v.y, v.z]
    };
    RadianceField::Analytic(AnalyticScene::new(vec![
        Primitive::sphere(place([0.3, 0.1, 0.0]), 0.6, [0.9, 0.2, 0.1], 8.0),
        Primitive::sphere(place([-0.5, -0.2, 0.3]), 0.4, [0.1, 0.3, 0.8], 3.0),
    ]))
}

fn looking_at_origin() -> CameraPose {
    // camera on +z looking down −z at the origin
    CameraPose::from_parts(&Rotation3::identity().into_inner(), &Vector3::new(0.0, 0.0, 4.0))
}

#[test]
fn quadrature_converges_with_more_points() {
    let field = spheres(&Rotation3::identity());
    let k = Intrinsics::from_fov(16, 16, 0.6).unwrap();
    let pose = looking_at_origin();
    let pixels: Vec<(u32, u32)> = (0..16).flat_map(|r| (0..16).map(move |c| (r, c))).collect();
    let render = |n: usize| {
        let s = RenderSettings::new(2.0, 6.0, n, BG).unwrap();
        render_pixels(&field, &pose, &k, &pixels, &s, &ForwardPassLedger::new()).unwrap()
    };
    let reference = render(4096);
    let mut last = f64::INFINITY;
    for n in [16, 32, 64, 128, 256, 512] {
        let err = render(n)
            .iter()
            .zip(&reference)
            .flat_map(|(a, b)| (0..3).map(move |c| (a.rgb[c] - b.rgb[c]).abs()))
            .fold(0.0, f64::max);
        assert!(err <= last, "{n} points: {err} > {last}");
        last = err;
    }
    assert!(last < 5e-3, "512 points still {last} away");
}

#[test]
fn batching_does_not_change_pixels() {
    let field = spheres(&Rotation3::identity());
    let k = Intrinsics::from_fov(40, 40, 0.6).unwrap();
    let pose = looking_at_origin();
    let s = RenderSettings::new(2.0, 6.0, 48, BG).unwrap();
    let pixels: Vec<(u32, u32)> = (0..40).flat_map(|r| (0..40).map(move |c| (r, c))).collect();
    let ledger = ForwardPassLedger::new();
    // 1600 rays × 48 points spans several batches
    let together = render_pixels(&field, &pose, &k, &pixels, &s, &ledger).unwrap();
    assert_eq!(ledger.total(), 1600 * 48);
    for (px, whole) in pixels.iter().zip(&together) {
        let ray = generate_ray(&pose, &k, px.0, px.1, &s).unwrap();
        let (rgb, alpha) = render_pixel(&field, &ray, BG, &ForwardPassLedger::new()).unwrap();
        assert_eq!(rgb, whole.rgb);
        assert_eq!(alpha, whole.accumulated_alpha);
    }
}

proptest! {
    #[test]
    fn compositing_weights_sum_to_one(
        samples in prop::collection::vec((0.0f64..50.0, 0.0f64..0.5), 1..128)
    ) {
        let (sigmas, deltas): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
        let w = compositing_weights(&sigmas, &deltas);
        prop_assert_eq!(w.len(), sigmas.len() + 1);
        prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rendering_is_equivariant_under_rigid_motion(
        axis in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        angle in -3.0f64..3.0,
        row in 0u32..12,
        col in 0u32..12,
    ) {
        let axis = Vector3::new(axis.0, axis.1, axis.2);
        prop_assume!(axis.norm() > 0.1);
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        let k = Intrinsics::from_fov(12, 12, 0.6).unwrap();
        let s = RenderSettings::new(2.0, 6.0, 64, BG).unwrap();
        let pose = looking_at_origin();
        let moved = CameraPose::from_parts(
            &(rot * pose.rotation()),
            &(rot * pose.translation()),
        );
        let a = render_pixels(&spheres(&Rotation3::identity()), &pose, &k, &[(row, col)], &s,
            &ForwardPassLedger::new()).unwrap();
        let b = render_pixels(&spheres(&rot), &moved, &k, &[(row, col)], &s,
            &ForwardPassLedger::new()).unwrap();
        for c in 0..3 {
            prop_assert!((a[0].rgb[c] - b[0].rgb[c]).abs() < 1e-9);
        }
    }
}
