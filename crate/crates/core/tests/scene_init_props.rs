//! Property tests for lifting, sampling and filtering.

use proptest::prelude::*;
use splatpush::math::{Aabb, Vec3};
use splatpush::scene_init::{farthest_point_sample, filter_scene, lift, CloudPoint, PointCloud, RgbdObservation};
use splatpush::splat::{CameraView, Image, Intrinsics, Splat, SplatScene};

fn cloud_from(points: &[(f64, f64, f64)]) -> PointCloud {
    PointCloud {
        points: points
            .iter()
            .map(|&(x, y, z)| CloudPoint {
                position: Vec3::new(x, y, z),
                color: Vec3::zeros(),
            })
            .collect(),
    }
}

fn min_pairwise(points: &[Vec3]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min((points[i] - points[j]).norm());
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fps_final_pick_is_greedy_optimal(
        pts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 3..=12),
        k_frac in 0.0..1.0f64,
        seed in any::<u64>(),
    ) {
        let cloud = cloud_from(&pts);
        let k = 2 + ((pts.len() - 2) as f64 * k_frac) as usize;
        let k = k.min(pts.len() - 1);
        let sample = farthest_point_sample(&cloud, k, seed).unwrap();
        prop_assert_eq!(sample.len(), k);
        let chosen: Vec<Vec3> = sample.points.iter().map(|p| p.position).collect();
        for p in &chosen {
            prop_assert!(cloud.points.iter().any(|q| q.position == *p));
        }
        let base = min_pairwise(&chosen);
        for other in &cloud.points {
            if chosen.contains(&other.position) {
                continue;
            }
            let mut swapped = chosen.clone();
            *swapped.last_mut().unwrap() = other.position;
            prop_assert!(base >= min_pairwise(&swapped) - 1e-12);
        }
    }

    #[test]
    fn lift_then_project_recovers_pixels(
        eye in (-0.5..0.5f64, -0.5..0.5f64, 0.3..0.8f64),
        depths in prop::collection::vec(0.0..1.0f64, 16),
    ) {
        let view = CameraView::look_at(
            Vec3::new(eye.0, eye.1, eye.2),
            Vec3::zeros(),
            Vec3::z(),
            Intrinsics { fx: 20.0, fy: 22.0, cx: 3.3, cy: 2.7 },
            4,
            4,
        ).unwrap();
        let mut image = Image::filled(4, 4, [0.2; 3]);
        // Zero marks an invalid pixel; the rest lie 0.1..1.0 in front.
        image.depth = Some(depths.iter().map(|&d| if d < 0.2 { 0.0 } else { d }).collect());
        let obs = vec![RgbdObservation { image: image.clone(), view: view.clone() }];
        let cloud = lift(&obs).unwrap();
        let mut k = 0;
        for y in 0..4 {
            for x in 0..4 {
                if image.depth.as_ref().unwrap()[image.index(x, y)] == 0.0 {
                    continue;
                }
                let uv = view.project(&cloud.points[k].position);
                prop_assert!((uv.x - x as f64).abs() <= 0.5 && (uv.y - y as f64).abs() <= 0.5);
                k += 1;
            }
        }
        prop_assert_eq!(k, cloud.len());
    }

    #[test]
    fn filter_is_idempotent(
        splats in prop::collection::vec((-0.2..0.2f64, -0.2..0.2f64, -0.05..0.1f64, 0.0..1.0f64), 0..20),
        sigma_min in 0.0..0.5f64,
    ) {
        let scene = SplatScene::new(3, splats.iter().map(|&(x, y, z, o)| {
            Splat::isotropic(Vec3::new(x, y, z), 0.01, o, Vec3::repeat(0.5))
        }).collect());
        let ws = Aabb::new([-0.1, -0.1, 0.0], [0.1, 0.1, 0.05]);
        let once = filter_scene(&scene, &ws, sigma_min);
        prop_assert_eq!(filter_scene(&once, &ws, sigma_min), once.clone());
        prop_assert!(once.splats.iter().all(|s| ws.contains(&s.position) && s.opacity >= sigma_min));
    }
}
