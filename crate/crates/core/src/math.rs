//! Small geometry helpers shared across the pipeline: quaternions with their
//! hand-written derivatives, axis-aligned boxes and seed derivation.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Quaternion in (w, x, y, z) order. Not necessarily unit length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quat(pub [f64; 4]);

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat([1.0, 0.0, 0.0, 0.0]);

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let axis = axis.normalize();
        let (s, c) = (0.5 * angle).sin_cos();
        Quat([c, axis.x * s, axis.y * s, axis.z * s])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit quaternion; the zero quaternion maps to identity.
    pub fn normalized(&self) -> Quat {
        let n = self.norm();
        if n < 1e-300 {
            return Quat::IDENTITY;
        }
        Quat(self.0.map(|v| v / n))
    }

    pub fn dot(&self, other: &Quat) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn mul(&self, rhs: &Quat) -> Quat {
        let [aw, ax, ay, az] = self.0;
        let [bw, bx, by, bz] = rhs.0;
        Quat([
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ])
    }

    /// Rotation matrix of the normalized quaternion.
    pub fn to_matrix(&self) -> Mat3 {
        rotation_matrix(&self.normalized().0)
    }
}

/// Rotation matrix polynomial evaluated at the given (assumed unit) components.
pub fn rotation_matrix(q: &[f64; 4]) -> Mat3 {
    let [w, x, y, z] = *q;
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls a gradient on the rotation matrix back to the (unit) quaternion
/// components it was built from.
pub fn rotation_matrix_backward(q: &[f64; 4], d_r: &Mat3) -> [f64; 4] {
    let [w, x, y, z] = *q;
    let g = |r: usize, c: usize| d_r[(r, c)];
    let dw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let dx = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - w * g(1, 2) + z * g(2, 0) + w * g(2, 1))
        - 4.0 * x * (g(1, 1) + g(2, 2));
    let dy = 2.0 * (x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) + z * g(2, 1))
        - 4.0 * y * (g(0, 0) + g(2, 2));
    let dz = 2.0 * (-w * g(0, 1) + x * g(0, 2) + w * g(1, 0) + y * g(1, 2) + x * g(2, 0) + y * g(2, 1))
        - 4.0 * z * (g(0, 0) + g(1, 1));
    [dw, dx, dy, dz]
}

/// Gradient of `q / |q|` pulled back to the raw components.
pub fn normalize_backward(raw: &[f64; 4], d_unit: &[f64; 4]) -> [f64; 4] {
    let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n < 1e-300 {
        return [0.0; 4];
    }
    let u = raw.map(|v| v / n);
    let proj: f64 = u.iter().zip(d_unit).map(|(a, b)| a * b).sum();
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = (d_unit[k] - u[k] * proj) / n;
    }
    out
}

/// Gradients of the Hamilton product `a ⊗ b` with respect to `a` and `b`.
pub fn quat_mul_backward(a: &[f64; 4], b: &[f64; 4], d_out: &[f64; 4]) -> ([f64; 4], [f64; 4]) {
    let [aw, ax, ay, az] = *a;
    let [bw, bx, by, bz] = *b;
    let [gw, gx, gy, gz] = *d_out;
    let da = [
        bw * gw + bx * gx + by * gy + bz * gz,
        -bx * gw + bw * gx - bz * gy + by * gz,
        -by * gw + bz * gx + bw * gy - bx * gz,
        -bz * gw - by * gx + bx * gy + bw * gz,
    ];
    let db = [
        aw * gw + ax * gx + ay * gy + az * gz,
        -ax * gw + aw * gx + az * gy - ay * gz,
        -ay * gw - az * gx + aw * gy + ax * gz,
        -az * gw + ay * gx - ax * gy + aw * gz,
    ];
    (da, db)
}

/// Closed axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Aabb { min, max }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

/// SplitMix64 step, used to derive independent child seeds from a parent seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15_u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(&[f64; 4]) -> f64, x: [f64; 4], analytic: [f64; 4]) {
        let h = 1e-6;
        for k in 0..4 {
            let mut p = x;
            let mut m = x;
            p[k] += h;
            m[k] -= h;
            let num = (f(&p) - f(&m)) / (2.0 * h);
            assert!(
                (num - analytic[k]).abs() < 1e-6 * (1.0 + num.abs()),
                "component {k}: numeric {num} analytic {}",
                analytic[k]
            );
        }
    }

    #[test]
    fn rotation_matrix_is_orthonormal() {
        let q = Quat([0.3, -0.2, 0.8, 0.1]);
        let r = q.to_matrix();
        assert!((r * r.transpose() - Mat3::identity()).norm() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_backward_matches_finite_differences() {
        let weights = Mat3::new(0.3, -1.0, 0.2, 0.5, 0.7, -0.4, 1.1, 0.0, -0.6);
        let q = [0.4, 0.1, -0.7, 0.3];
        let f = |q: &[f64; 4]| rotation_matrix(q).component_mul(&weights).sum();
        fd_check(f, q, rotation_matrix_backward(&q, &weights));
    }

    #[test]
    fn normalize_backward_matches_finite_differences() {
        let w = [0.3, -0.5, 0.9, 0.2];
        let raw = [1.3, -0.4, 0.2, 0.6];
        let f = |q: &[f64; 4]| {
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            q.iter().zip(w.iter()).map(|(a, b)| a / n * b).sum()
        };
        fd_check(f, raw, normalize_backward(&raw, &w));
    }

    #[test]
    fn quat_mul_backward_matches_finite_differences() {
        let a = [0.9, 0.1, -0.3, 0.2];
        let b = [0.2, 0.7, 0.1, -0.5];
        let w = [0.4, -0.2, 0.8, 0.3];
        let (da, db) = quat_mul_backward(&a, &b, &w);
        fd_check(|x| Quat(*x).mul(&Quat(b)).dot(&Quat(w)), a, da);
        fd_check(|x| Quat(a).mul(&Quat(*x)).dot(&Quat(w)), b, db);
    }

    #[test]
    fn half_turn_about_z_is_an_involution() {
        let q = Quat::from_axis_angle(Vec3::z(), std::f64::consts::PI);
        let r = Quat([0.6, 0.0, 0.8, 0.0]);
        let twice = q.mul(&q.mul(&r)).normalized();
        // q⊗q = -1, which is the same rotation as +1.
        assert!((twice.dot(&r).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
