//! From multi-view RGBD frames to an initial splat set: back-projection,
//! farthest point sampling, splat initialization and post-fit filtering.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};
use crate::splat::{fit_scene, CameraView, FitConfig, FitReport, Image, Splat, SplatScene};
use serde::{Deserialize, Serialize};

/// One RGBD frame with the camera that captured it. Depth 0 marks invalid
/// pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbdObservation {
    pub image: Image,
    pub view: CameraView,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloudPoint {
    pub position: Vec3,
    pub color: Vec3,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points inside the closed box, order preserved.
    pub fn crop(&self, region: &Aabb) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .filter(|p| region.contains(&p.position))
                .copied()
                .collect(),
        }
    }
}

/// Back-projects every valid-depth pixel of every observation to world space.
pub fn lift(observations: &[RgbdObservation]) -> Result<PointCloud> {
    if observations.is_empty() {
        return Err(Error::NoObservations);
    }
    let mut points = Vec::new();
    for obs in observations {
        let img = &obs.image;
        let Some(depth) = img.depth.as_ref() else {
            continue;
        };
        for y in 0..img.height {
            for x in 0..img.width {
                let i = img.index(x, y);
                let d = depth[i];
                if !(d > 0.0 && d.is_finite()) {
                    continue;
                }
                points.push(CloudPoint {
                    position: obs.view.unproject(x as f64, y as f64, d),
                    color: Vec3::from(img.rgb[i]),
                });
            }
        }
    }
    Ok(PointCloud { points })
}

/// Greedy farthest point sampling with a seeded random first pick.
pub fn farthest_point_sample(cloud: &PointCloud, k: usize, seed: u64) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let first = ChaCha8Rng::seed_from_u64(seed).gen_range(0..cloud.len());
    farthest_point_sample_from(cloud, k, first)
}

/// Farthest point sampling starting from a given index. Ties in the max–min
/// distance go to the lowest index. Output is in selection order.
pub fn farthest_point_sample_from(cloud: &PointCloud, k: usize, first: usize) -> Result<PointCloud> {
    if k == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if cloud.len() <= k {
        return Ok(cloud.clone());
    }
    let pts = &cloud.points;
    let mut min_d2 = vec![f64::INFINITY; pts.len()];
    let mut chosen = Vec::with_capacity(k);
    let mut current = first;
    loop {
        chosen.push(current);
        if chosen.len() == k {
            break;
        }
        let c = pts[current].position;
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, p) in pts.iter().enumerate() {
            let d2 = (p.position - c).norm_squared();
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
            if min_d2[i] > best.0 {
                best = (min_d2[i], i);
            }
        }
        current = best.1;
    }
    Ok(PointCloud {
        points: chosen.into_iter().map(|i| pts[i]).collect(),
    })
}

/// One isotropic, identity-rotation splat per point.
pub fn init_splats(cloud: &PointCloud, default_scale: f64, default_sigma: f64) -> Result<SplatScene> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(SplatScene::new(
        0,
        cloud
            .points
            .iter()
            .map(|p| Splat::isotropic(p.position, default_scale, default_sigma, p.color))
            .collect(),
    ))
}

/// Drops splats outside `workspace` or with opacity below `sigma_min`.
pub fn filter_scene(scene: &SplatScene, workspace: &Aabb, sigma_min: f64) -> SplatScene {
    SplatScene::new(
        scene.frame_id,
        scene
            .splats
            .iter()
            .filter(|s| workspace.contains(&s.position) && s.opacity >= sigma_min)
            .cloned()
            .collect(),
    )
}

/// Knobs for turning observations into a fitted splat scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    /// Points outside this box are discarded before sampling; its floor sits
    /// just above the table so table pixels never become splats.
    pub crop: Aabb,
    /// Splats kept after fitting must lie inside this box.
    pub workspace: Aabb,
    /// Splat count as a multiple of the particle count.
    pub samples_per_particle: usize,
    pub default_scale: f64,
    pub default_sigma: f64,
    pub sigma_min: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            crop: Aabb::new([-0.1, -0.1, 0.002], [0.1, 0.1, 0.05]),
            workspace: Aabb::new([-0.1, -0.1, 0.0], [0.1, 0.1, 0.05]),
            samples_per_particle: 2,
            default_scale: 0.0025,
            default_sigma: 0.9,
            sigma_min: 0.05,
        }
    }
}

/// lift → crop → farthest point sampling → init → fit → filter. Returns the
/// filtered scene and the fit report; an empty crop yields an empty scene.
pub fn reconstruct(
    observations: &[RgbdObservation],
    n_particles: usize,
    init: &InitConfig,
    fit: &FitConfig,
    seed: u64,
) -> Result<(SplatScene, FitReport)> {
    let cloud = lift(observations)?.crop(&init.crop);
    if cloud.is_empty() {
        return Ok((SplatScene::new(0, Vec::new()), FitReport::default()));
    }
    let k = (init.samples_per_particle * n_particles).max(1);
    let sampled = farthest_point_sample(&cloud, k, seed)?;
    let start = init_splats(&sampled, init.default_scale, init.default_sigma)?;
    let views: Vec<(Image, CameraView)> = observations.iter().map(|o| (o.image.clone(), o.view.clone())).collect();
    let (fitted, report) = fit_scene(&views, &start, fit)?;
    Ok((filter_scene(&fitted, &init.workspace, init.sigma_min), report))
}

/// Writes `view_XX.png`, `depth_XX.bin` and `camera_XX.json` per observation.
pub fn save_bundle(dir: &Path, observations: &[RgbdObservation]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, obs) in observations.iter().enumerate() {
        obs.image.save_png(&dir.join(format!("view_{i:02}.png")))?;
        obs.image.save_depth(&dir.join(format!("depth_{i:02}.bin")))?;
        obs.view.save(&dir.join(format!("camera_{i:02}.json")))?;
    }
    Ok(())
}

/// Reads consecutive bundle entries starting at index 0.
pub fn load_bundle(dir: &Path) -> Result<Vec<RgbdObservation>> {
    let mut out = Vec::new();
    loop {
        let cam = dir.join(format!("camera_{:02}.json", out.len()));
        if !cam.exists() {
            break;
        }
        let view = CameraView::load(&cam)?;
        let mut image = Image::load_png(&dir.join(format!("view_{:02}.png", out.len())))?;
        image.load_depth(&dir.join(format!("depth_{:02}.bin", out.len())))?;
        if image.dims() != (view.width, view.height) {
            return Err(Error::DimensionMismatch {
                left: image.dims(),
                right: (view.width, view.height),
            });
        }
        out.push(RgbdObservation { image, view });
    }
    if out.is_empty() {
        return Err(Error::NoObservations);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat3;
    use crate::splat::Intrinsics;

    fn identity_view(w: usize, h: usize) -> CameraView {
        CameraView::new(
            Mat3::identity(),
            Vec3::zeros(),
            Intrinsics {
                fx: 10.0,
                fy: 12.0,
                cx: 3.0,
                cy: 2.0,
            },
            w,
            h,
        )
        .unwrap()
    }

    fn obs_with_depth(depth: Vec<f64>, w: usize, h: usize) -> RgbdObservation {
        let mut image = Image::filled(w, h, [0.5, 0.25, 0.125]);
        image.depth = Some(depth);
        RgbdObservation {
            image,
            view: identity_view(w, h),
        }
    }

    fn line(n: usize) -> PointCloud {
        PointCloud {
            points: (0..n)
                .map(|i| CloudPoint {
                    position: Vec3::new(i as f64, 0.0, 0.0),
                    color: Vec3::zeros(),
                })
                .collect(),
        }
    }

    #[test]
    fn lift_principal_point() {
        let (w, h) = (7, 5);
        let mut depth = vec![0.0; w * h];
        depth[2 * w + 3] = 1.5; // (cx, cy) = (3, 2)
        let cloud = lift(&[obs_with_depth(depth, w, h)]).unwrap();
        assert_eq!(cloud.len(), 1);
        assert!((cloud.points[0].position - Vec3::new(0.0, 0.0, 1.5)).norm() < 1e-12);
        assert_eq!(cloud.points[0].color, Vec3::new(0.5, 0.25, 0.125));
    }

    #[test]
    fn lift_one_focal_length_off_axis() {
        // u = cx + fx → x/z = 1.
        let (w, h) = (16, 5);
        let mut depth = vec![0.0; w * h];
        depth[2 * w + 13] = 2.0;
        let cloud = lift(&[obs_with_depth(depth, w, h)]).unwrap();
        assert!((cloud.points[0].position - Vec3::new(2.0, 0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn lift_skips_invalid_depth() {
        let cloud = lift(&[obs_with_depth(vec![0.0; 12], 4, 3)]).unwrap();
        assert!(cloud.is_empty());
        assert!(matches!(lift(&[]), Err(Error::NoObservations)));
    }

    #[test]
    fn fps_collinear_picks_far_end() {
        let out = farthest_point_sample_from(&line(10), 2, 0).unwrap();
        let xs: Vec<f64> = out.points.iter().map(|p| p.position.x).collect();
        assert_eq!(xs, vec![0.0, 9.0]);
    }

    #[test]
    fn fps_small_cloud_unchanged_and_single_pick() {
        let cloud = line(4);
        assert_eq!(farthest_point_sample(&cloud, 4, 1).unwrap(), cloud);
        assert_eq!(farthest_point_sample(&cloud, 9, 1).unwrap(), cloud);
        let one = farthest_point_sample(&line(10), 1, 5).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one, farthest_point_sample(&line(10), 1, 5).unwrap());
        assert!(matches!(
            farthest_point_sample(&PointCloud::default(), 3, 0),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn init_splats_fields() {
        let cloud = PointCloud {
            points: vec![
                CloudPoint {
                    position: Vec3::zeros(),
                    color: Vec3::new(0.1, 0.2, 0.3),
                },
                CloudPoint {
                    position: Vec3::new(1.0, 2.0, 3.0),
                    color: Vec3::new(0.7, 0.8, 0.9),
                },
            ],
        };
        let scene = init_splats(&cloud, 0.01, 0.9).unwrap();
        assert_eq!(scene.len(), 2);
        let s = &scene.splats[0];
        assert_eq!(s.position, Vec3::zeros());
        assert_eq!(s.scale, Vec3::repeat(0.01));
        assert_eq!(s.opacity, 0.9);
        assert_eq!(s.rotation.0, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(scene.splats[1].color, Vec3::new(0.7, 0.8, 0.9));
        assert!(matches!(
            init_splats(&PointCloud::default(), 0.01, 0.9),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn filter_rules() {
        let ws = Aabb::new([0.0; 3], [1.0; 3]);
        let mk = |x: f64, sigma: f64| Splat::isotropic(Vec3::new(x, 0.5, 0.5), 0.1, sigma, Vec3::zeros());
        let scene = SplatScene::new(
            4,
            vec![mk(0.5, 0.9), mk(1.0, 0.9), mk(0.2, 0.0), mk(1.5, 0.9), mk(0.0, 0.05)],
        );
        let out = filter_scene(&scene, &ws, 0.05);
        let xs: Vec<f64> = out.splats.iter().map(|s| s.position.x).collect();
        assert_eq!(xs, vec![0.5, 1.0, 0.0]);
        assert_eq!(out.frame_id, 4);
        assert_eq!(filter_scene(&out, &ws, 0.05), out);
    }

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut depth = vec![0.0; 12];
        depth[5] = 0.75;
        let obs = obs_with_depth(depth, 4, 3);
        save_bundle(dir.path(), &[obs.clone(), obs.clone()]).unwrap();
        assert!(dir.path().join("view_01.png").exists());
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].image.depth.as_ref().unwrap()[5], 0.75);
        assert!((back[0].view.rotation - obs.view.rotation).norm() < 1e-12);
    }
}
