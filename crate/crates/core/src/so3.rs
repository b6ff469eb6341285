//! Scalar-last unit quaternions and rotation helpers.
//!
//! Storage is `(q_v, q_s)` with the vector part first. The product `p ⊗ q`
//! is the matrix operator
//!
//! ```text
//! p⊗ = | p_s·1 − [p_v×]   p_v |
//!      |     −p_vᵀ        p_s |
//! ```
//!
//! applied to `q`. With this product rotation matrices compose in reverse
//! order: `R(p ⊗ q) = R(q)·R(p)`. `R(q)` maps body-frame vectors into the
//! inertial frame, and `q̇ = ½ ω̲ ⊗ q` holds for the body-frame angular
//! velocity `ω`. For an inertial-frame rate the same derivative reads
//! `q̇ = ½ q ⊗ ω̲`.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::linalg::skew;
use crate::linalg::{Mat3, Vec3};

/// Norm drift above which a quaternion is considered corrupted rather than
/// merely in need of renormalization.
pub const NORM_INTEGRITY_TOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum So3Error {
    #[error("quaternion norm {norm} drifted more than {NORM_INTEGRITY_TOL} from unity")]
    NormDrift { norm: f64 },
    #[error("quaternion has zero norm")]
    ZeroNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuaternion {
    v: Vec3,
    s: f64,
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::identity()
    }
}

impl UnitQuaternion {
    pub fn identity() -> Self {
        Self { v: Vec3::zeros(), s: 1.0 }
    }

    /// Normalizes `(v, s)`; fails only on a zero-norm input.
    pub fn from_parts(v: Vec3, s: f64) -> Result<Self, So3Error> {
        let n = (v.norm_squared() + s * s).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(So3Error::ZeroNorm);
        }
        Ok(Self { v: v / n, s: s / n })
    }

    /// Accepts a nearly-unit 4-vector `(x, y, z, s)` such as an integrator
    /// output, renormalizing it. Drift beyond [`NORM_INTEGRITY_TOL`] is an
    /// error.
    pub fn from_vector4(q: &Vector4<f64>) -> Result<Self, So3Error> {
        let n = q.norm();
        if (n - 1.0).abs() > NORM_INTEGRITY_TOL {
            return Err(So3Error::NormDrift { norm: n });
        }
        Ok(Self { v: Vec3::new(q.x, q.y, q.z) / n, s: q.w / n })
    }

    /// Rotation by `angle` (rad) about `axis`, in the sense of `R(q)`.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let half = 0.5 * angle;
        Self { v: axis / n * half.sin(), s: half.cos() }
    }

    /// Quaternion whose `R(q)` equals the proper orthogonal matrix `r`.
    pub fn from_rotation(r: &Mat3) -> Self {
        // Shepperd's method on R = (2s²−1)1 + 2s[v×] + 2vvᵀ.
        let trace = r.trace();
        let (v, s) = if trace > r[(0, 0)].max(r[(1, 1)]).max(r[(2, 2)]) {
            let s = 0.5 * (1.0 + trace).sqrt();
            let f = 0.25 / s;
            (Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]) * f, s)
        } else if r[(0, 0)] >= r[(1, 1)] && r[(0, 0)] >= r[(2, 2)] {
            let x = 0.5 * (1.0 + 2.0 * r[(0, 0)] - trace).sqrt();
            let f = 0.25 / x;
            (Vec3::new(x, (r[(0, 1)] + r[(1, 0)]) * f, (r[(0, 2)] + r[(2, 0)]) * f), (r[(2, 1)] - r[(1, 2)]) * f)
        } else if r[(1, 1)] >= r[(2, 2)] {
            let y = 0.5 * (1.0 + 2.0 * r[(1, 1)] - trace).sqrt();
            let f = 0.25 / y;
            (Vec3::new((r[(0, 1)] + r[(1, 0)]) * f, y, (r[(1, 2)] + r[(2, 1)]) * f), (r[(0, 2)] - r[(2, 0)]) * f)
        } else {
            let z = 0.5 * (1.0 + 2.0 * r[(2, 2)] - trace).sqrt();
            let f = 0.25 / z;
            (Vec3::new((r[(0, 2)] + r[(2, 0)]) * f, (r[(1, 2)] + r[(2, 1)]) * f, z), (r[(1, 0)] - r[(0, 1)]) * f)
        };
        Self::from_parts(v, s).unwrap_or_default()
    }

    pub fn vector(&self) -> Vec3 {
        self.v
    }

    pub fn scalar(&self) -> f64 {
        self.s
    }

    /// `(x, y, z, s)`.
    pub fn to_vector4(&self) -> Vector4<f64> {
        Vector4::new(self.v.x, self.v.y, self.v.z, self.s)
    }

    pub fn conjugate(&self) -> Self {
        Self { v: -self.v, s: self.s }
    }

    pub fn negated(&self) -> Self {
        Self { v: -self.v, s: -self.s }
    }

    /// The 4x4 left-product operator `self⊗`.
    pub fn product_matrix(&self) -> Matrix4<f64> {
        product_matrix(&self.v, self.s)
    }

    /// `self ⊗ rhs`.
    pub fn multiply(&self, rhs: &Self) -> Self {
        let raw = self.product_matrix() * rhs.to_vector4();
        let n = raw.norm();
        Self { v: Vec3::new(raw.x, raw.y, raw.z) / n, s: raw.w / n }
    }

    /// Rotation matrix from the body frame to the inertial frame.
    pub fn to_rotation(&self) -> Mat3 {
        let s = self.s;
        Mat3::identity() * (2.0 * s * s - 1.0) + skew(&self.v) * (2.0 * s) + self.v * self.v.transpose() * 2.0
    }

    pub fn rotate(&self, x: &Vec3) -> Vec3 {
        self.to_rotation() * x
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.v.norm().atan2(self.s.abs())
    }
}

fn product_matrix(v: &Vec3, s: f64) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    let top = Mat3::identity() * s - skew(v);
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&top);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(v);
    m.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-v.transpose()));
    m[(3, 3)] = s;
    m
}

/// Attitude error between `q` and the reference `q_ref`.
///
/// Computed as `q_ref* ⊗ q`, so that `R(δq) = R(q)·R(q_ref)ᵀ` (the error
/// rotation in the inertial frame), with the sign chosen so `δq_s ≥ 0`.
pub fn quat_error(q: &UnitQuaternion, q_ref: &UnitQuaternion) -> UnitQuaternion {
    let e = q_ref.conjugate().multiply(q);
    if e.s < 0.0 {
        e.negated()
    } else {
        e
    }
}

/// `q̇ = ½ ω̲ ⊗ q` with `ω` the body-frame angular velocity.
pub fn quat_derivative(q: &UnitQuaternion, omega_body: &Vec3) -> Vector4<f64> {
    product_matrix(omega_body, 0.0) * q.to_vector4() * 0.5
}

/// `q̇ = ½ q ⊗ ω̲` with `ω` expressed in the inertial frame.
pub fn quat_derivative_inertial(q: &UnitQuaternion, omega_inertial: &Vec3) -> Vector4<f64> {
    q.product_matrix() * Vector4::new(omega_inertial.x, omega_inertial.y, omega_inertial.z, 0.0) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn quat_strategy() -> impl Strategy<Value = UnitQuaternion> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-3)
            .prop_map(|(a, b, c, d)| UnitQuaternion::from_parts(Vec3::new(a, b, c), d).unwrap())
    }

    fn vec_strategy() -> impl Strategy<Value = Vec3> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b, c)| Vec3::new(a, b, c))
    }

    // Hamilton-form sandwich written out directly, independent of R(q).
    fn sandwich(q: &UnitQuaternion, x: &Vec3) -> Vec3 {
        let v = q.vector();
        let t = v.cross(x) * 2.0;
        x + t * q.scalar() + v.cross(&t)
    }

    fn close(a: &UnitQuaternion, b: &UnitQuaternion, tol: f64) -> bool {
        (a.to_vector4() - b.to_vector4()).norm() < tol
    }

    #[test]
    fn identity_is_neutral() {
        let q = UnitQuaternion::from_parts(Vec3::new(0.1, -0.4, 0.3), 0.8).unwrap();
        assert!(close(&UnitQuaternion::identity().multiply(&q), &q, 1e-15));
        assert!(close(&q.multiply(&UnitQuaternion::identity()), &q, 1e-15));
    }

    #[test]
    fn conjugate_is_inverse() {
        let q = UnitQuaternion::from_parts(Vec3::new(0.1, -0.4, 0.3), 0.8).unwrap();
        assert!(close(&q.multiply(&q.conjugate()), &UnitQuaternion::identity(), 1e-15));
    }

    #[test]
    fn two_quarter_turns_make_a_half_turn() {
        let q90 = UnitQuaternion::from_axis_angle(&Vec3::z(), FRAC_PI_2);
        let q180 = q90.multiply(&q90);
        let expected = UnitQuaternion::from_axis_angle(&Vec3::z(), PI);
        assert!(close(&q180, &expected, 1e-15));
        assert!((q180.vector() - Vec3::z()).norm() < 1e-15);
    }

    #[test]
    fn rotation_of_identity_and_quarter_turn() {
        assert_eq!(UnitQuaternion::identity().to_rotation(), Mat3::identity());
        let q = UnitQuaternion::from_axis_angle(&Vec3::z(), FRAC_PI_2);
        assert!((q.rotate(&Vec3::x()) - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn error_examples() {
        let q = UnitQuaternion::from_parts(Vec3::new(0.2, 0.5, -0.1), 0.6).unwrap();
        let e = quat_error(&q, &q);
        assert!(close(&e, &UnitQuaternion::identity(), 1e-15));

        let e = quat_error(&q, &UnitQuaternion::identity());
        assert!(close(&e, &q, 1e-15) || close(&e, &q.negated(), 1e-15));

        let e = quat_error(&q.negated(), &q);
        assert!(close(&e, &UnitQuaternion::identity(), 1e-15));
    }

    #[test]
    fn derivative_examples() {
        let q = UnitQuaternion::from_parts(Vec3::new(0.2, 0.5, -0.1), 0.6).unwrap();
        assert_eq!(quat_derivative(&q, &Vec3::zeros()), Vector4::zeros());
        let d = quat_derivative(&UnitQuaternion::identity(), &Vec3::new(0.0, 0.0, 2.0));
        assert_eq!(d, Vector4::new(0.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn body_rate_kinematics_match_rotation_derivative() {
        // Ṙ = R[ω×] for body rates, Ṙ = [ω×]R for inertial rates.
        let q = UnitQuaternion::from_parts(Vec3::new(0.3, -0.2, 0.5), 0.7).unwrap();
        let w = Vec3::new(0.4, -1.1, 0.7);
        let h = 1e-6;
        let step = |d: Vector4<f64>, sign: f64| {
            UnitQuaternion::from_vector4(&(q.to_vector4() + d * (sign * h))).unwrap().to_rotation()
        };
        let d = quat_derivative(&q, &w);
        let rdot = (step(d, 1.0) - step(d, -1.0)) / (2.0 * h);
        assert!((rdot - q.to_rotation() * skew(&w)).amax() < 1e-8);

        let d = quat_derivative_inertial(&q, &w);
        let rdot = (step(d, 1.0) - step(d, -1.0)) / (2.0 * h);
        assert!((rdot - skew(&w) * q.to_rotation()).amax() < 1e-8);
    }

    #[test]
    fn from_rotation_round_trip_all_branches() {
        for (axis, angle) in [
            (Vec3::new(1.0, 2.0, 3.0), 0.3),
            (Vec3::x(), 3.0),
            (Vec3::y(), 3.1),
            (Vec3::z(), PI),
            (Vec3::new(1.0, 1.0, 0.0), 2.9),
        ] {
            let q = UnitQuaternion::from_axis_angle(&axis, angle);
            let back = UnitQuaternion::from_rotation(&q.to_rotation());
            assert!((back.to_rotation() - q.to_rotation()).amax() < 1e-14);
        }
    }

    #[test]
    fn long_multiplication_chain_stays_unit() {
        let step = UnitQuaternion::from_parts(Vec3::new(1e-3, -2e-3, 5e-4), 1.0).unwrap();
        let mut q = UnitQuaternion::identity();
        for _ in 0..1_000_000 {
            q = q.multiply(&step);
        }
        assert!((q.to_vector4().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn large_drift_is_an_integrity_error() {
        let r = UnitQuaternion::from_vector4(&Vector4::new(0.0, 0.0, 0.0, 1.01));
        assert!(matches!(r, Err(So3Error::NormDrift { .. })));
        let ok = UnitQuaternion::from_vector4(&Vector4::new(0.0, 0.0, 0.0, 1.0 + 1e-5)).unwrap();
        assert!((ok.to_vector4().norm() - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn rotation_is_proper_orthogonal(q in quat_strategy()) {
            let r = q.to_rotation();
            prop_assert!((r.transpose() * r - Mat3::identity()).amax() < 1e-10);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn rotation_matches_sandwich(q in quat_strategy(), x in vec_strategy()) {
            prop_assert!((q.rotate(&x) - sandwich(&q, &x)).norm() < 1e-12);
        }

        #[test]
        fn product_composes_in_reverse(p in quat_strategy(), q in quat_strategy()) {
            let lhs = p.multiply(&q).to_rotation();
            prop_assert!((lhs - q.to_rotation() * p.to_rotation()).amax() < 1e-10);
            prop_assert!((p.multiply(&q).to_vector4().norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn derivative_is_orthogonal_to_q(q in quat_strategy(), w in vec_strategy()) {
            prop_assert!(quat_derivative(&q, &w).dot(&q.to_vector4()).abs() < 1e-12);
            prop_assert!(quat_derivative_inertial(&q, &w).dot(&q.to_vector4()).abs() < 1e-12);
        }

        #[test]
        fn error_scalar_is_nonnegative(q in quat_strategy(), r in quat_strategy()) {
            let e = quat_error(&q, &r);
            prop_assert!(e.scalar() >= 0.0);
            let err_rot = q.to_rotation() * r.to_rotation().transpose();
            prop_assert!((e.to_rotation() - err_rot).amax() < 1e-10);
        }
    }
}
