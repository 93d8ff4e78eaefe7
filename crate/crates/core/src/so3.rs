//! Rotation-group helpers shared by the kinematics and dynamics layers.
//!
//! Rotations are plain `Matrix3<f64>` values. Functions here never
//! re-orthonormalize; stepping goes through the exponential map so the
//! group structure is preserved up to rounding.

use nalgebra::{Matrix3, SVector, Vector3};

pub type Vec3 = Vector3<f64>;
pub type RotationMatrix = Matrix3<f64>;

/// Below this rotation angle the Rodrigues coefficients switch to their
/// Taylor expansions.
const SMALL_ANGLE: f64 = 1e-8;

/// Cross-product matrix: `skew(v) * w == v.cross(&w)`.
pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`] for a skew-symmetric input (the symmetric part is
/// discarded).
pub fn unskew(m: &Matrix3<f64>) -> Vec3 {
    Vec3::new(0.5 * (m[(2, 1)] - m[(1, 2)]), 0.5 * (m[(0, 2)] - m[(2, 0)]), 0.5 * (m[(1, 0)] - m[(0, 1)]))
}

pub fn rot_x(theta: f64) -> RotationMatrix {
    let (s, c) = theta.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(theta: f64) -> RotationMatrix {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(theta: f64) -> RotationMatrix {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `exp(S(phi))` by Rodrigues' formula.
pub fn exp_map(phi: &Vec3) -> RotationMatrix {
    let angle = phi.norm();
    let k = skew(phi);
    let k2 = k * k;
    let (a, b) = if angle < SMALL_ANGLE {
        (1.0 - angle * angle / 6.0, 0.5 - angle * angle / 24.0)
    } else {
        (angle.sin() / angle, (1.0 - angle.cos()) / (angle * angle))
    };
    Matrix3::identity() + k * a + k2 * b
}

/// Logarithm of a rotation, returned as the rotation vector. Valid for
/// angles strictly below π.
pub fn log_map(r: &RotationMatrix) -> Vec3 {
    let cos_angle = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let angle = cos_angle.acos();
    let v = unskew(r);
    if angle < SMALL_ANGLE {
        v
    } else {
        v * (angle / angle.sin())
    }
}

/// One exact exponential-map step of `Ṙ = R S(ω)` with body-frame `ω`
/// held constant over `dt`.
pub fn integrate_rotation(r: &RotationMatrix, omega_body: &Vec3, dt: f64) -> RotationMatrix {
    r * exp_map(&(omega_body * dt))
}

/// Packs a rotation as the rows of `Rᵀ` (equivalently the columns of `R`),
/// which is the wire order used for `r_B` everywhere in this crate.
pub fn vectorize_rotation(r: &RotationMatrix) -> SVector<f64, 9> {
    SVector::<f64, 9>::from_iterator(r.iter().copied())
}

pub fn unvectorize_rotation(v: &SVector<f64, 9>) -> RotationMatrix {
    Matrix3::from_iterator(v.iter().copied())
}

/// Frobenius norm of `RᵀR − I`.
pub fn orthogonality_error(r: &RotationMatrix) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

pub fn is_rotation(r: &RotationMatrix, tol: f64) -> bool {
    orthogonality_error(r) < tol && (r.determinant() - 1.0).abs() < tol
}
