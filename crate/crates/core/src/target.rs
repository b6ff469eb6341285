//! Torque-free motion of the tumbling target and kinematics of its grapple
//! fixture.
//!
//! The target's angular velocity is kept in its body frame; position and
//! velocity of the center of mass are inertial.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{is_spd3, Mat3, Vec3};
use crate::so3::{quat_derivative, So3Error, UnitQuaternion};

/// Default RK4 step for target prediction (s).
pub const DEFAULT_DT: f64 = 1e-3;

/// Per-step relative change of inertial angular momentum that rejects a step.
pub const MOMENTUM_STEP_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TargetError {
    #[error("target mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("target inertia is not symmetric positive definite")]
    InertiaNotSpd,
    #[error("target inertia eigenvalues {0:?} violate the triangle inequality")]
    TriangleInequality([f64; 3]),
    #[error("step size must be positive, got {0}")]
    BadStep(f64),
    #[error(
        "STEP_REJECTED: integration step rejected: angular momentum changed by {relative:.3e} (relative) in one step"
    )]
    StepRejected { relative: f64 },
    #[error(transparent)]
    Attitude(#[from] So3Error),
}

/// Inertial properties of the target and the location of its grapple
/// fixture (body frame, relative to the center of mass).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetParams {
    mass: f64,
    inertia: Mat3,
    inertia_inv: Mat3,
    grapple: Vec3,
}

impl TargetParams {
    pub fn new(mass: f64, inertia: Mat3, grapple: Vec3) -> Result<Self, TargetError> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(TargetError::NonPositiveMass(mass));
        }
        check_rigid_inertia(&inertia)?;
        let inertia_inv = inertia.try_inverse().ok_or(TargetError::InertiaNotSpd)?;
        Ok(Self { mass, inertia, inertia_inv, grapple })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn inertia(&self) -> &Mat3 {
        &self.inertia
    }

    pub fn inertia_inv(&self) -> &Mat3 {
        &self.inertia_inv
    }

    pub fn grapple(&self) -> &Vec3 {
        &self.grapple
    }

    /// Same body with mass and inertia multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, TargetError> {
        Self::new(self.mass * factor, self.inertia * factor, self.grapple)
    }
}

/// SPD plus the triangle inequality on principal moments.
pub fn check_rigid_inertia(inertia: &Mat3) -> Result<(), TargetError> {
    if !is_spd3(inertia, 1e-12) {
        return Err(TargetError::InertiaNotSpd);
    }
    let e = inertia.symmetric_eigenvalues();
    let ev = [e[0], e[1], e[2]];
    let tol = 1e-9 * e.amax();
    for k in 0..3 {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        if ev[i] + ev[j] < ev[k] - tol {
            return Err(TargetError::TriangleInequality(ev));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    /// Body to inertial attitude.
    pub attitude: UnitQuaternion,
    /// Body-frame angular velocity (rad/s).
    pub omega: Vec3,
    /// Center-of-mass position (m).
    pub position: Vec3,
    /// Center-of-mass velocity (m/s).
    pub velocity: Vec3,
}

impl TargetState {
    pub fn at_rest(position: Vec3) -> Self {
        Self { attitude: UnitQuaternion::identity(), omega: Vec3::zeros(), position, velocity: Vec3::zeros() }
    }

    /// Angular momentum in the inertial frame.
    pub fn angular_momentum(&self, params: &TargetParams) -> Vec3 {
        self.attitude.rotate(&(params.inertia * self.omega))
    }

    pub fn rotational_energy(&self, params: &TargetParams) -> f64 {
        0.5 * self.omega.dot(&(params.inertia * self.omega))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetRates {
    pub attitude: Vector4<f64>,
    pub omega: Vec3,
    pub position: Vec3,
    pub velocity: Vec3,
}

impl TargetRates {
    /// Classical RK4 weighting of four stage derivatives.
    pub fn rk4_blend(k: [&TargetRates; 4]) -> TargetRates {
        let b = |a: Vec3, b: Vec3, c: Vec3, d: Vec3| (a + b * 2.0 + c * 2.0 + d) / 6.0;
        TargetRates {
            attitude: (k[0].attitude + k[1].attitude * 2.0 + k[2].attitude * 2.0 + k[3].attitude) / 6.0,
            omega: b(k[0].omega, k[1].omega, k[2].omega, k[3].omega),
            position: b(k[0].position, k[1].position, k[2].position, k[3].position),
            velocity: b(k[0].velocity, k[1].velocity, k[2].velocity, k[3].velocity),
        }
    }
}

impl TargetState {
    /// `self + h·k`, renormalizing the attitude.
    pub fn advanced(&self, k: &TargetRates, h: f64) -> TargetState {
        let q = self.attitude.to_vector4() + k.attitude * h;
        TargetState {
            attitude: UnitQuaternion::from_parts(q.xyz(), q.w).unwrap_or(self.attitude),
            omega: self.omega + k.omega * h,
            position: self.position + k.position * h,
            velocity: self.velocity + k.velocity * h,
        }
    }
}

/// `φ(ω) = −I⁻¹(ω × Iω)`.
pub fn gyroscopic_accel(omega: &Vec3, inertia: &Mat3, inertia_inv: &Mat3) -> Vec3 {
    -(inertia_inv * omega.cross(&(inertia * omega)))
}

/// Torque-free state derivative.
pub fn state_rhs(x: &TargetState, params: &TargetParams) -> TargetRates {
    TargetRates {
        attitude: quat_derivative(&x.attitude, &x.omega),
        omega: gyroscopic_accel(&x.omega, &params.inertia, &params.inertia_inv),
        position: x.velocity,
        velocity: Vec3::zeros(),
    }
}

/// One classical RK4 step with quaternion renormalization.
pub fn rk4_step(x: &TargetState, params: &TargetParams, dt: f64) -> Result<TargetState, TargetError> {
    let offset = |k: &TargetRates, h: f64| -> TargetState {
        let q = x.attitude.to_vector4() + k.attitude * h;
        TargetState {
            // Intermediate stages only need direction; normalization keeps
            // R(q) orthogonal inside state_rhs.
            attitude: UnitQuaternion::from_parts(q.xyz(), q.w).unwrap_or(x.attitude),
            omega: x.omega + k.omega * h,
            position: x.position + k.position * h,
            velocity: x.velocity + k.velocity * h,
        }
    };
    let k1 = state_rhs(x, params);
    let k2 = state_rhs(&offset(&k1, 0.5 * dt), params);
    let k3 = state_rhs(&offset(&k2, 0.5 * dt), params);
    let k4 = state_rhs(&offset(&k3, dt), params);
    let w = dt / 6.0;
    let q = x.attitude.to_vector4() + (k1.attitude + k2.attitude * 2.0 + k3.attitude * 2.0 + k4.attitude) * w;
    Ok(TargetState {
        attitude: UnitQuaternion::from_vector4(&q)?,
        omega: x.omega + (k1.omega + k2.omega * 2.0 + k3.omega * 2.0 + k4.omega) * w,
        position: x.position + (k1.position + k2.position * 2.0 + k3.position * 2.0 + k4.position) * w,
        velocity: x.velocity + (k1.velocity + k2.velocity * 2.0 + k3.velocity * 2.0 + k4.velocity) * w,
    })
}

/// Integrates `steps` RK4 steps of size `dt`.
pub fn propagate(x: &TargetState, params: &TargetParams, dt: f64, steps: usize) -> Result<TargetState, TargetError> {
    if steps > 0 && !(dt > 0.0) {
        return Err(TargetError::BadStep(dt));
    }
    let mut state = *x;
    let mut h = state.angular_momentum(params);
    for _ in 0..steps {
        let next = rk4_step(&state, params, dt)?;
        let h_next = next.angular_momentum(params);
        let scale = h.norm();
        if scale > 0.0 {
            let relative = (h_next - h).norm() / scale;
            if relative > MOMENTUM_STEP_TOL {
                return Err(TargetError::StepRejected { relative });
            }
        }
        state = next;
        h = h_next;
    }
    Ok(state)
}

/// Propagates over `duration` with the largest uniform step not exceeding
/// `max_dt`.
pub fn propagate_for(
    x: &TargetState,
    params: &TargetParams,
    duration: f64,
    max_dt: f64,
) -> Result<TargetState, TargetError> {
    if duration <= 0.0 {
        return Ok(*x);
    }
    let steps = (duration / max_dt).ceil().max(1.0) as usize;
    propagate(x, params, duration / steps as f64, steps)
}

/// Torque-free prediction of the target on a fixed RK4 grid, extended on
/// demand. A state between grid points comes from one partial RK4 step off
/// the previous grid point, so `state_at` is continuous in `t`.
#[derive(Debug, Clone)]
pub struct TargetPredictor {
    params: TargetParams,
    dt: f64,
    grid: Vec<TargetState>,
}

impl TargetPredictor {
    pub fn new(initial: TargetState, params: TargetParams, dt: f64) -> Result<Self, TargetError> {
        if !(dt > 0.0) {
            return Err(TargetError::BadStep(dt));
        }
        Ok(Self { params, dt, grid: vec![initial] })
    }

    pub fn params(&self) -> &TargetParams {
        &self.params
    }

    pub fn initial(&self) -> &TargetState {
        &self.grid[0]
    }

    /// Predicted state `t` seconds after the initial state (`t ≥ 0`).
    pub fn state_at(&mut self, t: f64) -> Result<TargetState, TargetError> {
        if !(t >= 0.0) {
            return Err(TargetError::BadStep(t));
        }
        let k = (t / self.dt).floor() as usize;
        while self.grid.len() <= k {
            let last = *self.grid.last().expect("grid is never empty");
            let next = propagate(&last, &self.params, self.dt, 1)?;
            self.grid.push(next);
        }
        let h = t - k as f64 * self.dt;
        if h <= 0.0 {
            Ok(self.grid[k])
        } else {
            rk4_step(&self.grid[k], &self.params, h)
        }
    }
}

/// `r_c = r_o + R(q_o)ρ`.
pub fn grapple_position(x: &TargetState, grapple: &Vec3) -> Vec3 {
    x.position + x.attitude.rotate(grapple)
}

/// `ṙ_c = ṙ_o + R(q_o)(ω_o × ρ)`.
pub fn grapple_velocity(x: &TargetState, grapple: &Vec3) -> Vec3 {
    x.velocity + x.attitude.rotate(&x.omega.cross(grapple))
}

/// Grapple acceleration for a body-frame angular acceleration `omega_dot`.
pub fn grapple_acceleration_with(x: &TargetState, grapple: &Vec3, omega_dot: &Vec3) -> Vec3 {
    let w = &x.omega;
    x.attitude.rotate(&(w.cross(&w.cross(grapple)) + omega_dot.cross(grapple)))
}

/// `r̈_c = R(q_o)(ω_o × (ω_o × ρ) + φ(ω_o) × ρ)` for the torque-free target.
pub fn grapple_acceleration(x: &TargetState, params: &TargetParams) -> Vec3 {
    let phi = gyroscopic_accel(&x.omega, &params.inertia, &params.inertia_inv);
    grapple_acceleration_with(x, &params.grapple, &phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn diag(a: f64, b: f64, c: f64) -> Mat3 {
        Mat3::from_diagonal(&Vec3::new(a, b, c))
    }

    fn tumbler(inertia: Mat3, omega: Vec3) -> (TargetParams, TargetState) {
        let params = TargetParams::new(100.0, inertia, Vec3::new(0.5, -0.2, 0.3)).unwrap();
        let state = TargetState {
            attitude: UnitQuaternion::from_axis_angle(&Vec3::new(1.0, 1.0, 0.2), 0.7),
            omega,
            position: Vec3::new(1.0, 2.0, 3.0),
            velocity: Vec3::zeros(),
        };
        (params, state)
    }

    #[test]
    fn gyroscopic_examples() {
        let i = Mat3::identity() * 4.0;
        let phi = gyroscopic_accel(&Vec3::new(0.3, -0.1, 0.9), &i, &i.try_inverse().unwrap());
        assert!(phi.norm() < 1e-16);

        let i = diag(1.0, 2.0, 3.0);
        let ii = i.try_inverse().unwrap();
        assert!(gyroscopic_accel(&Vec3::new(0.0, 0.7, 0.0), &i, &ii).norm() < 1e-16);
        // ω × Iω = (1,1,1) × (1,2,3) = (1, −2, 1); −I⁻¹ of that = (−1, 1, −1/3).
        let phi = gyroscopic_accel(&Vec3::new(1.0, 1.0, 1.0), &i, &ii);
        assert!((phi - Vec3::new(-1.0, 1.0, -1.0 / 3.0)).norm() < 1e-15);
    }

    #[test]
    fn rest_state_has_zero_rates() {
        let (params, mut x) = tumbler(diag(1.0, 2.0, 3.0), Vec3::zeros());
        x.velocity = Vec3::zeros();
        let r = state_rhs(&x, &params);
        assert_eq!(r.attitude, Vector4::zeros());
        assert_eq!(r.omega, Vec3::zeros());
        assert_eq!(r.position, Vec3::zeros());
        assert_eq!(r.velocity, Vec3::zeros());
    }

    #[test]
    fn spherical_body_keeps_its_rate() {
        let (params, x) = tumbler(Mat3::identity() * 3.0, Vec3::new(0.2, -0.4, 0.1));
        let y = propagate(&x, &params, 1e-3, 2000).unwrap();
        assert!((y.omega - x.omega).norm() < 1e-15);
    }

    #[test]
    fn zero_duration_is_identity() {
        let (params, x) = tumbler(diag(1.0, 2.0, 3.0), Vec3::new(0.3, 0.2, 0.1));
        assert_eq!(propagate(&x, &params, 1e-3, 0).unwrap(), x);
        assert_eq!(propagate_for(&x, &params, 0.0, 1e-3).unwrap(), x);
    }

    #[test]
    fn axisymmetric_precession_matches_closed_form() {
        let (a, c) = (2.0, 3.0);
        let w0 = Vec3::new(0.3, -0.1, 0.5);
        let (params, x) = tumbler(diag(a, a, c), w0);
        let t = 5.0;
        let y = propagate(&x, &params, 1e-3, 5000).unwrap();
        // ω̇_x = −Ω ω_y, ω̇_y = Ω ω_x with Ω = (C − A)/A · ω_z.
        let rate = (c - a) / a * w0.z;
        let (s, co) = (rate * t).sin_cos();
        let expected = Vec3::new(w0.x * co - w0.y * s, w0.x * s + w0.y * co, w0.z);
        assert!((y.omega - expected).norm() < 1e-12);
    }

    #[test]
    fn triaxial_tumbler_conserves_momentum_and_energy() {
        for omega in [Vec3::new(0.3, 0.2, 0.1), Vec3::new(1e-3, 0.5, -2e-3)] {
            let (params, x) = tumbler(diag(1.0, 2.0, 3.0), omega);
            let h0 = x.angular_momentum(&params);
            let e0 = x.rotational_energy(&params);
            let y = propagate(&x, &params, 1e-3, 10_000).unwrap();
            assert!((y.angular_momentum(&params) - h0).norm() / h0.norm() < 1e-8);
            assert!((y.rotational_energy(&params) - e0).abs() / e0 < 1e-8);
            // Drift term of the state keeps moving the center of mass.
            assert_eq!(y.position, x.position);
        }
    }

    #[test]
    fn grapple_kinematics_examples() {
        let mut x = TargetState::at_rest(Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(grapple_position(&x, &Vec3::zeros()), x.position);
        let rho = Vec3::new(0.4, -0.2, 0.1);
        assert_eq!(grapple_position(&x, &rho), x.position + rho);
        assert_eq!(grapple_velocity(&x, &rho), Vec3::zeros());

        x.position = Vec3::zeros();
        x.attitude = UnitQuaternion::from_axis_angle(&Vec3::z(), PI);
        assert!((grapple_position(&x, &Vec3::x()) - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);

        x.omega = Vec3::new(0.3, 0.6, -0.9);
        assert!(grapple_velocity(&x, &(x.omega * 2.0)).norm() < 1e-15);

        let params = TargetParams::new(10.0, Mat3::identity(), Vec3::new(2.0, 0.0, 0.0)).unwrap();
        let spin = TargetState { omega: Vec3::new(0.0, 0.0, 0.5), ..TargetState::at_rest(Vec3::zeros()) };
        let acc = grapple_acceleration(&spin, &params);
        assert!((acc - Vec3::new(-0.25 * 2.0, 0.0, 0.0)).norm() < 1e-15);
        let still = TargetState::at_rest(Vec3::zeros());
        assert_eq!(grapple_acceleration(&still, &params), Vec3::zeros());
    }

    #[test]
    fn grapple_derivatives_match_central_differences() {
        let (params, x0) = tumbler(diag(2.0, 3.0, 4.5), Vec3::new(0.4, -0.3, 0.25));
        let mut x0 = x0;
        x0.velocity = Vec3::new(0.01, -0.02, 0.005);
        let rho = *params.grapple();
        let h = 1e-4;
        let mid = propagate(&x0, &params, 1e-4, 3000).unwrap();
        let ahead = rk4_step(&mid, &params, h).unwrap();
        let behind = rk4_step(&mid, &params, -h).unwrap();
        let v_fd = (grapple_position(&ahead, &rho) - grapple_position(&behind, &rho)) / (2.0 * h);
        assert!((v_fd - grapple_velocity(&mid, &rho)).norm() < 1e-6);
        let a_fd = (grapple_velocity(&ahead, &rho) - grapple_velocity(&behind, &rho)) / (2.0 * h);
        assert!((a_fd - grapple_acceleration(&mid, &params)).norm() < 1e-6);
    }

    #[test]
    fn parameter_validation() {
        assert!(matches!(
            TargetParams::new(0.0, Mat3::identity(), Vec3::zeros()),
            Err(TargetError::NonPositiveMass(_))
        ));
        assert!(matches!(TargetParams::new(1.0, diag(1.0, -1.0, 1.0), Vec3::zeros()), Err(TargetError::InertiaNotSpd)));
        assert!(matches!(
            TargetParams::new(1.0, diag(1.0, 1.0, 3.0), Vec3::zeros()),
            Err(TargetError::TriangleInequality(_))
        ));
        // Thin rod limit sits exactly on the boundary.
        assert!(TargetParams::new(1.0, diag(1.0, 1.0, 2.0), Vec3::zeros()).is_ok());
    }

    #[test]
    fn bad_step_size_is_rejected() {
        let (params, x) = tumbler(diag(1.0, 2.0, 3.0), Vec3::new(0.3, 0.2, 0.1));
        assert!(matches!(propagate(&x, &params, 0.0, 3), Err(TargetError::BadStep(_))));
        let r = propagate(&x, &params, 50.0, 3);
        assert!(matches!(r, Err(TargetError::StepRejected { .. } | TargetError::Attitude(_))), "{r:?}");
    }
}
