use std::path::Path;

use nalgebra::{Matrix2x3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

/// Pinhole intrinsics in pixels. Pixel `(u, v)` has its center at coordinate
/// `(u, v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// World→camera rigid transform plus intrinsics. Camera frame follows the
/// x-right, y-down, z-forward convention.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraView {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub intrinsics: Intrinsics,
    pub width: usize,
    pub height: usize,
}

impl CameraView {
    pub fn new(rotation: Mat3, translation: Vec3, intrinsics: Intrinsics, width: usize, height: usize) -> Result<Self> {
        let view = CameraView {
            rotation,
            translation,
            intrinsics,
            width,
            height,
        };
        view.validate()?;
        Ok(view)
    }

    /// Camera at `eye` looking at `target`; `up` picks the roll.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        intrinsics: Intrinsics,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 {
            right = forward.cross(&Vec3::x());
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        CameraView::new(rotation, translation, intrinsics, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        if (r * r.transpose() - Mat3::identity()).amax() > 1e-6 {
            return Err(Error::InvalidConfig("camera rotation is not orthonormal".into()));
        }
        if !(self.intrinsics.fx > 0.0 && self.intrinsics.fy > 0.0) {
            return Err(Error::InvalidConfig("camera focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("camera resolution must be non-zero".into()));
        }
        Ok(())
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.rotation * world + self.translation
    }

    pub fn to_world(&self, cam: &Vec3) -> Vec3 {
        self.rotation.transpose() * (cam - self.translation)
    }

    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Pinhole projection of a camera-frame point to pixel coordinates.
    pub fn project_camera(&self, cam: &Vec3) -> Vector2<f64> {
        let k = &self.intrinsics;
        Vector2::new(k.fx * cam.x / cam.z + k.cx, k.fy * cam.y / cam.z + k.cy)
    }

    pub fn project(&self, world: &Vec3) -> Vector2<f64> {
        self.project_camera(&self.to_camera(world))
    }

    /// Jacobian of the pinhole projection at a camera-frame point.
    pub fn projection_jacobian(&self, cam: &Vec3) -> Matrix2x3<f64> {
        let k = &self.intrinsics;
        let iz = 1.0 / cam.z;
        Matrix2x3::new(
            k.fx * iz,
            0.0,
            -k.fx * cam.x * iz * iz,
            0.0,
            k.fy * iz,
            -k.fy * cam.y * iz * iz,
        )
    }

    /// Back-projects pixel `(u, v)` at camera-frame depth `depth` to world.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let k = &self.intrinsics;
        let cam = Vec3::new((u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth);
        self.to_world(&cam)
    }

    pub fn pose_matrix(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn to_json(&self) -> String {
        let file = CameraFile {
            pose: self.pose_matrix(),
            fx: self.intrinsics.fx,
            fy: self.intrinsics.fy,
            cx: self.intrinsics.cx,
            cy: self.intrinsics.cy,
            width: self.width,
            height: self.height,
        };
        serde_json::to_string_pretty(&file).expect("camera serialization cannot fail")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let f: CameraFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let p = &f.pose;
        let rotation = Mat3::new(
            p[0][0], p[0][1], p[0][2], p[1][0], p[1][1], p[1][2], p[2][0], p[2][1], p[2][2],
        );
        let translation = Vec3::new(p[0][3], p[1][3], p[2][3]);
        let intrinsics = Intrinsics {
            fx: f.fx,
            fy: f.fy,
            cx: f.cx,
            cy: f.cy,
        };
        CameraView::new(rotation, translation, intrinsics, f.width, f.height).map_err(|e| e.to_string())
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
struct CameraFile {
    /// Row-major world→camera transform.
    pose: [[f64; 4]; 4],
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}
