//! Property tests for the renderer, SSIM and the density field.

use proptest::prelude::*;
use splatpush::math::{Quat, Vec3};
use splatpush::splat::{density, render, ssim, CameraView, Image, Intrinsics, Splat, SplatScene};

fn top_down(size: usize) -> CameraView {
    let f = size as f64 * 1.5;
    CameraView::look_at(
        Vec3::new(0.0, 0.0, 0.5),
        Vec3::zeros(),
        Vec3::y(),
        Intrinsics {
            fx: f,
            fy: f,
            cx: 0.5 * (size as f64 - 1.0),
            cy: 0.5 * (size as f64 - 1.0),
        },
        size,
        size,
    )
    .unwrap()
}

fn splat_at(x: f64, y: f64, z: f64, scale: f64, opacity: f64, color: [f64; 3]) -> Splat {
    Splat::isotropic(Vec3::new(x, y, z), scale, opacity, Vec3::from(color))
}

fn color() -> impl Strategy<Value = [f64; 3]> {
    [0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64]
}

/// Splats on a coarse grid with small footprints so their 3σ supports never
/// share a pixel.
fn separated_scene() -> impl Strategy<Value = Vec<Splat>> {
    prop::collection::vec((0.0..0.01f64, 0.0..0.05f64, 0.1..1.0f64, color()), 2..9).prop_map(|items| {
        items
            .into_iter()
            .enumerate()
            .map(|(i, (jitter, z, opacity, c))| {
                let (gx, gy) = ((i % 3) as f64 - 1.0, (i / 3) as f64 - 1.0);
                splat_at(0.1 * gx + jitter, 0.1 * gy - jitter, z, 0.004, opacity, c)
            })
            .collect()
    })
}

fn random_image(seed: &[f64]) -> Image {
    let mut img = Image::filled(12, 12, [0.0; 3]);
    for (i, px) in img.rgb.iter_mut().enumerate() {
        for (c, v) in px.iter_mut().enumerate() {
            *v = seed[(3 * i + c) % seed.len()];
        }
    }
    img
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn non_overlapping_render_is_order_independent(splats in separated_scene(), rot in 1usize..8) {
        let view = top_down(48);
        let a = render(&SplatScene::new(0, splats.clone()), &view, [0.1, 0.2, 0.3]);
        let mut permuted = splats;
        let n = permuted.len();
        permuted.rotate_left(rot % n);
        permuted.reverse();
        let b = render(&SplatScene::new(0, permuted), &view, [0.1, 0.2, 0.3]);
        for (pa, pb) in a.rgb.iter().zip(&b.rgb) {
            for c in 0..3 {
                prop_assert!((pa[c] - pb[c]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn raising_opacity_never_lowers_own_contribution(
        front in color(),
        opacity in 0.05..0.9f64,
        bump in 0.01..0.1f64,
        dx in -0.01..0.01f64,
    ) {
        // The probed splat is pure red over a black background behind a
        // green one, so its contribution is the red channel.
        let view = top_down(24);
        let make = |o: f64| SplatScene::new(0, vec![
            splat_at(dx, 0.0, 0.01, 0.01, 0.5, [0.0, front[1], 0.0]),
            splat_at(0.0, 0.0, 0.0, 0.01, o, [1.0, 0.0, 0.0]),
        ]);
        let lo = render(&make(opacity), &view, [0.0; 3]);
        let hi = render(&make((opacity + bump).min(0.99)), &view, [0.0; 3]);
        for (a, b) in lo.rgb.iter().zip(&hi.rgb) {
            prop_assert!(b[0] >= a[0] - 1e-12);
        }
    }

    #[test]
    fn ssim_is_symmetric_with_unit_self_similarity(
        a in prop::collection::vec(0.0..1.0f64, 7..40),
        b in prop::collection::vec(0.0..1.0f64, 7..40),
    ) {
        let (ia, ib) = (random_image(&a), random_image(&b));
        prop_assert!((ssim(&ia, &ib).unwrap() - ssim(&ib, &ia).unwrap()).abs() < 1e-9);
        prop_assert!((ssim(&ia, &ia).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn density_is_nonnegative_and_vanishes_far_away(
        pts in prop::collection::vec((-0.1..0.1f64, -0.1..0.1f64, 0.0..0.05f64, 0.001..0.02f64, 0.0..1.0f64), 1..6),
        q in (-0.2..0.2f64, -0.2..0.2f64, -0.1..0.1f64),
        angle in 0.0..6.0f64,
    ) {
        let scene = SplatScene::new(0, pts.iter().map(|&(x, y, z, s, o)| {
            let mut sp = splat_at(x, y, z, s, o, [0.5; 3]);
            sp.rotation = Quat::from_axis_angle(Vec3::new(1.0, 2.0, 3.0).normalize(), angle);
            sp.scale = Vec3::new(s, 0.5 * s, 2.0 * s);
            sp
        }).collect());
        prop_assert!(density(&scene, &Vec3::new(q.0, q.1, q.2)) >= 0.0);
        prop_assert!(density(&scene, &Vec3::new(50.0 + q.0, -50.0, 10.0)) < 1e-12);
    }
}
