//! Gaussian splat scenes: data model, rasterizer, image losses, the
//! reconstruction optimizer and the density field used by the planner.

mod camera;
mod covariance;
mod density;
mod fit;
mod image;
mod loss;
mod render;
mod ssim;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use camera::{CameraView, Intrinsics};
pub use covariance::{build_covariance, project_covariance, COVARIANCE_FLOOR, NEAR_PLANE};
pub use density::{density, density_backward, PreparedDensity};
pub use fit::{fit_scene, total_loss, total_loss_grad, FitConfig, FitReport};
pub use image::Image;
pub use loss::{l1, recon_loss, recon_loss_grad, DEFAULT_SSIM_WEIGHT};
pub use render::{render, render_backward, CUTOFF_MAHALANOBIS_SQ};
pub use ssim::{ssim, ssim_grad, SSIM_C1, SSIM_C2, SSIM_STRIDE, SSIM_WINDOW};

use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};

/// One anisotropic 3D Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat {
    pub position: Vec3,
    /// Stored as given; consumers normalize on read.
    pub rotation: Quat,
    /// Per-axis standard deviation in meters.
    pub scale: Vec3,
    pub opacity: f64,
    pub color: Vec3,
}

impl Splat {
    pub fn isotropic(position: Vec3, scale: f64, opacity: f64, color: Vec3) -> Self {
        Splat {
            position,
            rotation: Quat::IDENTITY,
            scale: Vec3::repeat(scale),
            opacity,
            color,
        }
    }

    /// Node feature layout used by the dynamics graph: (c, σ, r, g, s).
    pub fn features(&self) -> [f64; 14] {
        let r = self.rotation.0;
        [
            self.color.x,
            self.color.y,
            self.color.z,
            self.opacity,
            r[0],
            r[1],
            r[2],
            r[3],
            self.position.x,
            self.position.y,
            self.position.z,
            self.scale.x,
            self.scale.y,
            self.scale.z,
        ]
    }
}

/// Gradient with respect to every splat parameter. The rotation entry is with
/// respect to the stored (raw) quaternion components.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SplatGrad {
    pub position: Vec3,
    pub rotation: [f64; 4],
    pub scale: Vec3,
    pub opacity: f64,
    pub color: Vec3,
}

impl SplatGrad {
    pub fn add_assign(&mut self, other: &SplatGrad) {
        self.position += other.position;
        for k in 0..4 {
            self.rotation[k] += other.rotation[k];
        }
        self.scale += other.scale;
        self.opacity += other.opacity;
        self.color += other.color;
    }
}

/// Ordered splat collection for one timestep.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplatScene {
    pub frame_id: i64,
    pub splats: Vec<Splat>,
}

impl SplatScene {
    pub fn new(frame_id: i64, splats: Vec<Splat>) -> Self {
        SplatScene { frame_id, splats }
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    pub fn to_json(&self) -> String {
        let file = SceneFile {
            frame_id: self.frame_id,
            splats: self.splats.iter().map(SplatRecord::from).collect(),
        };
        serde_json::to_string_pretty(&file).expect("scene serialization cannot fail")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        let file: SceneFile = serde_json::from_str(text)?;
        Ok(SplatScene {
            frame_id: file.frame_id,
            splats: file.splats.into_iter().map(Splat::from).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::parse(path, e))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    frame_id: i64,
    splats: Vec<SplatRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplatRecord {
    g: [f64; 3],
    r: [f64; 4],
    s: [f64; 3],
    sigma: f64,
    c: [f64; 3],
}

impl From<&Splat> for SplatRecord {
    fn from(s: &Splat) -> Self {
        SplatRecord {
            g: s.position.into(),
            r: s.rotation.0,
            s: s.scale.into(),
            sigma: s.opacity,
            c: s.color.into(),
        }
    }
}

impl From<SplatRecord> for Splat {
    fn from(r: SplatRecord) -> Self {
        Splat {
            position: Vec3::from(r.g),
            rotation: Quat(r.r),
            scale: Vec3::from(r.s),
            opacity: r.sigma,
            color: Vec3::from(r.c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_json_schema() {
        let scene = SplatScene::new(
            3,
            vec![Splat::isotropic(
                Vec3::new(0.1, 0.2, 0.3),
                0.01,
                0.9,
                Vec3::new(1.0, 0.5, 0.0),
            )],
        );
        let value: serde_json::Value = serde_json::from_str(&scene.to_json()).unwrap();
        assert_eq!(value["frame_id"], 3);
        let s = &value["splats"][0];
        assert_eq!(s["g"], serde_json::json!([0.1, 0.2, 0.3]));
        assert_eq!(s["r"], serde_json::json!([1.0, 0.0, 0.0, 0.0]));
        assert_eq!(s["sigma"], 0.9);
        assert_eq!(SplatScene::from_json(&scene.to_json()).unwrap(), scene);
    }

    #[test]
    fn unknown_splat_fields_are_rejected() {
        let text = r#"{"frame_id":0,"splats":[{"g":[0,0,0],"r":[1,0,0,0],"s":[1,1,1],"sigma":1,"c":[0,0,0],"sh":[]}]}"#;
        assert!(SplatScene::from_json(text).is_err());
    }
}
