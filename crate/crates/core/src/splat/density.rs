use super::{SplatGrad, SplatScene};
use crate::math::{normalize_backward, rotation_matrix, rotation_matrix_backward, Mat3, Vec3};

/// Precomputed inverse covariances for repeated density queries.
pub struct PreparedDensity {
    entries: Vec<DensityTerm>,
}

struct DensityTerm {
    center: Vec3,
    rotation: Mat3,
    inv_var: Vec3,
    opacity: f64,
}

impl PreparedDensity {
    pub fn new(scene: &SplatScene) -> Self {
        let entries = scene
            .splats
            .iter()
            .map(|s| DensityTerm {
                center: s.position,
                rotation: s.rotation.to_matrix(),
                inv_var: s.scale.map(|v| 1.0 / (v * v)),
                opacity: s.opacity,
            })
            .collect();
        PreparedDensity { entries }
    }

    pub fn eval(&self, x: &Vec3) -> f64 {
        self.entries
            .iter()
            .map(|t| {
                let local = t.rotation.transpose() * (x - t.center);
                let q = local.component_mul(&local).dot(&t.inv_var);
                t.opacity * (-0.5 * q).exp()
            })
            .sum()
    }
}

/// d(x) = Σ σᵢ·exp(−½ (x−gᵢ)ᵀ Σᵢ⁻¹ (x−gᵢ)) using each splat's world covariance.
pub fn density(scene: &SplatScene, x: &Vec3) -> f64 {
    PreparedDensity::new(scene).eval(x)
}

/// Accumulates `d_values[k]`·∂d(points[k])/∂(splat params) into `grads`.
pub fn density_backward(scene: &SplatScene, points: &[Vec3], d_values: &[f64], grads: &mut [SplatGrad]) {
    assert_eq!(points.len(), d_values.len());
    assert_eq!(grads.len(), scene.len());
    for (splat, grad) in scene.splats.iter().zip(grads.iter_mut()) {
        let unit = splat.rotation.normalized().0;
        let r = rotation_matrix(&unit);
        let inv_var = splat.scale.map(|v| 1.0 / (v * v));
        let mut d_r = Mat3::zeros();
        for (x, &dv) in points.iter().zip(d_values) {
            if dv == 0.0 {
                continue;
            }
            let y = x - splat.position;
            let z = r.transpose() * y;
            let q = z.component_mul(&z).dot(&inv_var);
            let g = (-0.5 * q).exp();
            let e = splat.opacity * g;
            grad.opacity += dv * g;
            let d_q = -0.5 * e * dv;
            let w = z.component_mul(&inv_var);
            // ∂q/∂g = −2 R D⁻² Rᵀ y, ∂q/∂R = 2 y (D⁻² z)ᵀ, ∂q/∂s = −2 z²/s³.
            grad.position += -2.0 * d_q * (r * w);
            d_r += 2.0 * d_q * (y * w.transpose());
            for k in 0..3 {
                grad.scale[k] += d_q * (-2.0 * z[k] * z[k] * inv_var[k] / splat.scale[k]);
            }
        }
        let d_unit = rotation_matrix_backward(&unit, &d_r);
        let d_raw = normalize_backward(&splat.rotation.0, &d_unit);
        for (g, d) in grad.rotation.iter_mut().zip(d_raw) {
            *g += d;
        }
    }
}
