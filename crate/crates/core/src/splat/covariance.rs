use nalgebra::{Matrix2, Matrix2x3};

use super::{CameraView, Splat};
use crate::error::{Error, Result};
use crate::math::{normalize_backward, rotation_matrix, rotation_matrix_backward, Mat3, Vec3};

/// Splats at or in front of this camera-frame depth are not projected.
pub const NEAR_PLANE: f64 = 1e-2;
/// Isotropic term added to every screen-space covariance before inversion.
pub const COVARIANCE_FLOOR: f64 = 1e-6;

/// Σ = R·diag(s²)·Rᵀ.
pub fn build_covariance(splat: &Splat) -> Mat3 {
    let r = splat.rotation.to_matrix();
    let d = Mat3::from_diagonal(&splat.scale.component_mul(&splat.scale));
    r * d * r.transpose()
}

/// Screen-space covariance J·W·Σ·Wᵀ·Jᵀ (+ floor) of a splat at `position`.
pub fn project_covariance(sigma3d: &Mat3, position: &Vec3, view: &CameraView) -> Result<Matrix2<f64>> {
    let cam = view.to_camera(position);
    if cam.z <= NEAR_PLANE {
        return Err(Error::BehindCamera { z: cam.z });
    }
    let jac = view.projection_jacobian(&cam);
    Ok(screen_covariance(&jac, &view.rotation, sigma3d))
}

pub(crate) fn screen_covariance(jac: &Matrix2x3<f64>, w: &Mat3, sigma3d: &Mat3) -> Matrix2<f64> {
    let t = jac * w;
    t * sigma3d * t.transpose() + Matrix2::identity() * COVARIANCE_FLOOR
}

/// Gradient of Σ (through R and s) back to the raw quaternion and the scales.
pub(crate) fn covariance_backward(splat: &Splat, d_sigma: &Mat3) -> ([f64; 4], Vec3) {
    let g = 0.5 * (d_sigma + d_sigma.transpose());
    let unit = splat.rotation.normalized().0;
    let r = rotation_matrix(&unit);
    let s2 = splat.scale.component_mul(&splat.scale);
    let d_r = 2.0 * g * r * Mat3::from_diagonal(&s2);
    let inner = r.transpose() * g * r;
    let d_scale = Vec3::new(
        2.0 * splat.scale.x * inner[(0, 0)],
        2.0 * splat.scale.y * inner[(1, 1)],
        2.0 * splat.scale.z * inner[(2, 2)],
    );
    let d_unit = rotation_matrix_backward(&unit, &d_r);
    (normalize_backward(&splat.rotation.0, &d_unit), d_scale)
}

/// Backward of Σ₂ = T·Σ·Tᵀ with T = J·W. Returns (dΣ, dJ).
pub(crate) fn screen_covariance_backward(
    jac: &Matrix2x3<f64>,
    w: &Mat3,
    sigma3d: &Mat3,
    d_sigma2: &Matrix2<f64>,
) -> (Mat3, Matrix2x3<f64>) {
    let g = 0.5 * (d_sigma2 + d_sigma2.transpose());
    let t = jac * w;
    let d_sigma3 = t.transpose() * g * t;
    let d_t = 2.0 * g * t * sigma3d;
    (d_sigma3, d_t * w.transpose())
}

/// Gradient of the projection Jacobian entries with respect to the
/// camera-frame position they were evaluated at.
pub(crate) fn jacobian_backward(view: &CameraView, cam: &Vec3, d_jac: &Matrix2x3<f64>) -> Vec3 {
    let k = &view.intrinsics;
    let iz = 1.0 / cam.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let dx = d_jac[(0, 2)] * (-k.fx * iz2);
    let dy = d_jac[(1, 2)] * (-k.fy * iz2);
    let dz = d_jac[(0, 0)] * (-k.fx * iz2)
        + d_jac[(0, 2)] * (2.0 * k.fx * cam.x * iz3)
        + d_jac[(1, 1)] * (-k.fy * iz2)
        + d_jac[(1, 2)] * (2.0 * k.fy * cam.y * iz3);
    Vec3::new(dx, dy, dz)
}
