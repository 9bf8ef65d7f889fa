//! Camera ring and the ray-cast RGBD renderer for particle states.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ParticleState;
use crate::error::Result;
use crate::math::Vec3;
use crate::scene_init::RgbdObservation;
use crate::splat::{CameraView, Image, Intrinsics};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigConfig {
    pub n_cameras: usize,
    /// Distance from each camera to the workspace center, meters.
    pub distance: f64,
    pub elevation_deg: f64,
    /// Full horizontal field of view.
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
    pub particle_color: [f64; 3],
    pub table_color: [f64; 3],
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig {
            n_cameras: 8,
            distance: 0.5,
            elevation_deg: 45.0,
            fov_deg: 36.0,
            width: 64,
            height: 64,
            particle_color: [0.8, 0.5, 0.2],
            table_color: [0.35, 0.35, 0.38],
        }
    }
}

/// Cameras evenly spaced in azimuth, all looking at the origin.
pub fn camera_rig(config: &RigConfig) -> Result<Vec<CameraView>> {
    let f = 0.5 * config.width as f64 / (0.5 * config.fov_deg.to_radians()).tan();
    let intrinsics = Intrinsics {
        fx: f,
        fy: f,
        cx: 0.5 * (config.width as f64 - 1.0),
        cy: 0.5 * (config.height as f64 - 1.0),
    };
    let elev = config.elevation_deg.to_radians();
    (0..config.n_cameras)
        .map(|i| {
            let az = std::f64::consts::TAU * i as f64 / config.n_cameras as f64;
            let eye = config.distance * Vec3::new(elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin());
            CameraView::look_at(eye, Vec3::zeros(), Vec3::z(), intrinsics, config.width, config.height)
        })
        .collect()
}

fn ray_sphere(origin: &Vec3, dir: &Vec3, center: &Vec3, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > 0.0).then_some(t)
}

fn render_view(state: &ParticleState, view: &CameraView, config: &RigConfig) -> Image {
    let mut image = Image::filled(view.width, view.height, config.table_color);
    let mut depth = vec![0.0; view.width * view.height];
    let origin = view.center();
    let k = &view.intrinsics;
    let to_world = view.rotation.transpose();
    for y in 0..view.height {
        for x in 0..view.width {
            // Camera-frame ray with unit z, so the hit parameter is the depth.
            let ray_cam = Vec3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0);
            let ray = to_world * ray_cam;
            let scale = ray.norm();
            let unit = ray / scale;
            let i = image.index(x, y);
            let mut best = if unit.z < 0.0 {
                -origin.z / unit.z
            } else {
                f64::INFINITY
            };
            let mut hit_particle = false;
            for c in &state.positions {
                if let Some(t) = ray_sphere(&origin, &unit, c, state.radius) {
                    if t < best {
                        best = t;
                        hit_particle = true;
                    }
                }
            }
            if hit_particle {
                image.rgb[i] = config.particle_color;
            }
            if best.is_finite() {
                depth[i] = best / scale;
            }
        }
    }
    image.depth = Some(depth);
    image
}

/// RGBD images of the state from every camera: flat particle color on a flat
/// table color, with exact ray-cast depth.
pub fn observe(state: &ParticleState, rig: &[CameraView], config: &RigConfig) -> Vec<RgbdObservation> {
    rig.par_iter()
        .map(|view| RgbdObservation {
            image: render_view(state, view, config),
            view: view.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{Aabb, Mat3};

    fn ws() -> Aabb {
        Aabb::new([-0.1, -0.1, 0.0], [0.1, 0.1, 0.05])
    }

    #[test]
    fn rig_geometry() {
        let rig = camera_rig(&RigConfig::default()).unwrap();
        assert_eq!(rig.len(), 8);
        for view in &rig {
            let c = view.center();
            assert!((c.norm() - 0.5).abs() < 1e-12);
            assert!((c.z - 0.5 * std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
            let o = view.project(&Vec3::zeros());
            assert!((o.x - 31.5).abs() < 1e-9 && (o.y - 31.5).abs() < 1e-9);
            // Every workspace corner is in frame.
            for cx in [-0.1, 0.1] {
                for cy in [-0.1, 0.1] {
                    let p = view.project(&Vec3::new(cx, cy, 0.0));
                    assert!(p.x > 0.0 && p.x < 63.0 && p.y > 0.0 && p.y < 63.0);
                }
            }
        }
    }

    #[test]
    fn empty_state_is_pure_table() {
        let cfg = RigConfig::default();
        let rig = camera_rig(&cfg).unwrap();
        let obs = observe(&ParticleState::new(0.005, ws(), &[]), &rig, &cfg);
        for o in &obs {
            assert!(o.image.rgb.iter().all(|p| *p == cfg.table_color));
            // Table depth: the center pixel sees the origin.
            let d = o.image.depth.as_ref().unwrap();
            let idx = o.image.index(31, 31);
            let hit = o.view.unproject(31.0, 31.0, d[idx]);
            assert!(hit.z.abs() < 1e-12);
        }
    }

    #[test]
    fn top_down_disk_diameter() {
        let cfg = RigConfig::default();
        let (fx, depth, r) = (180.0, 0.5, 0.005);
        // Straight down onto the particle, principal point between pixels.
        let rot = Mat3::from_rows(&[
            Vec3::x().transpose(),
            (-Vec3::y()).transpose(),
            (-Vec3::z()).transpose(),
        ]);
        let eye = Vec3::new(0.0, 0.0, depth + r);
        let k = Intrinsics {
            fx,
            fy: fx,
            cx: 20.5,
            cy: 20.5,
        };
        let view = CameraView::new(rot, -(rot * eye), k, 42, 42).unwrap();
        let state = ParticleState::new(r, ws(), &[[0.0, 0.0]]);
        let obs = observe(&state, &[view], &cfg);
        let img = &obs[0].image;
        let expected = (2.0 * r * fx / depth).ceil() as usize;
        let row = (0..42).filter(|&x| img.pixel(x, 20) == cfg.particle_color).count();
        let col = (0..42).filter(|&y| img.pixel(20, y) == cfg.particle_color).count();
        assert_eq!(row, expected);
        assert_eq!(col, expected);
        let d = img.depth.as_ref().unwrap()[img.index(20, 20)];
        // Off-center pixel: slightly below the top of the sphere.
        assert!(d > depth - r && d < depth - r + 5e-4);
    }

    #[test]
    fn particles_visible_in_every_view() {
        let cfg = RigConfig::default();
        let rig = camera_rig(&cfg).unwrap();
        let state = ParticleState::new(0.005, ws(), &[[0.02, -0.03], [-0.05, 0.04]]);
        for o in observe(&state, &rig, &cfg) {
            assert!(o.image.rgb.contains(&cfg.particle_color));
            assert_ne!(cfg.particle_color, cfg.table_color);
        }
    }
}
