//! Feedback-linearizing coordination controller.
//!
//! On the reduced dynamics `M̄ψ̈̄ + c̄ = τ̄` with `ψ̄̇ = (ω_b, v_h, ω_h)`, the
//! torque
//!
//! ```text
//! τ̄ = c̄ + M̄ ( [0; r̈*; ω̇*] − [K_bp δq_b + K_bd ω_b;
//!                              K_rp (r_h − r*) + K_rd (ṙ_h − ṙ*);
//!                              K_hp δq_h + K_hd (ω_h − ω*)] )
//! ```
//!
//! leaves three decoupled linear error systems: base attitude regulation,
//! hand translation tracking and hand attitude tracking. The stacked
//! feedback follows the order of `ψ̄̇`.

use thiserror::Error;

use crate::linalg::{is_spd3, Mat3, Mat9, Vec3, Vec6, Vec9};
use crate::multibody::{ChainKinematics, RobotModel, RobotState};
use crate::so3::{quat_error, UnitQuaternion};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("gain {0} is not symmetric positive definite")]
    GainNotSpd(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub base_p: Mat3,
    pub base_d: Mat3,
    pub hand_p: Mat3,
    pub hand_d: Mat3,
    pub pos_p: Mat3,
    pub pos_d: Mat3,
}

impl Gains {
    pub fn new(
        base_p: Mat3,
        base_d: Mat3,
        hand_p: Mat3,
        hand_d: Mat3,
        pos_p: Mat3,
        pos_d: Mat3,
    ) -> Result<Self, ControllerError> {
        let g = Self { base_p, base_d, hand_p, hand_d, pos_p, pos_d };
        for (name, m) in g.named() {
            if !is_spd3(m, 1e-12) {
                return Err(ControllerError::GainNotSpd(name));
            }
        }
        Ok(g)
    }

    /// Diagonal gains from scalar triplets.
    pub fn diagonal(d: [[f64; 3]; 6]) -> Result<Self, ControllerError> {
        let m = |v: [f64; 3]| Mat3::from_diagonal(&Vec3::from(v));
        Self::new(m(d[0]), m(d[1]), m(d[2]), m(d[3]), m(d[4]), m(d[5]))
    }

    /// The same proportional and derivative gain on every loop.
    pub fn isotropic(attitude_p: f64, attitude_d: f64, pos_p: f64, pos_d: f64) -> Result<Self, ControllerError> {
        let i = Mat3::identity();
        Self::new(i * attitude_p, i * attitude_d, i * attitude_p, i * attitude_d, i * pos_p, i * pos_d)
    }

    pub fn named(&self) -> [(&'static str, &Mat3); 6] {
        [
            ("base_p", &self.base_p),
            ("base_d", &self.base_d),
            ("hand_p", &self.hand_p),
            ("hand_d", &self.hand_d),
            ("pos_p", &self.pos_p),
            ("pos_d", &self.pos_d),
        ]
    }

    /// Smallest eigenvalue over all six gain matrices.
    pub fn min_eigenvalue(&self) -> f64 {
        self.named().iter().map(|(_, m)| m.symmetric_eigenvalues().min()).fold(f64::INFINITY, f64::min)
    }
}

/// Desired motion for one control instant. Rates are inertial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSignal {
    pub base_attitude: UnitQuaternion,
    pub hand_attitude: UnitQuaternion,
    pub hand_omega: Vec3,
    pub hand_omega_dot: Vec3,
    pub hand_position: Vec3,
    pub hand_velocity: Vec3,
    pub hand_accel: Vec3,
}

/// Measured quantities the controller feeds back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub base_attitude: UnitQuaternion,
    pub base_omega: Vec3,
    pub hand_position: Vec3,
    pub hand_attitude: UnitQuaternion,
    pub hand_velocity: Vec3,
    pub hand_omega: Vec3,
}

impl Measured {
    pub fn from_robot(model: &RobotModel, state: &RobotState) -> Self {
        let kin = ChainKinematics::new(model, state);
        let twist = kin.hand_twist();
        Self {
            base_attitude: state.base_attitude,
            base_omega: state.base_omega,
            hand_position: kin.hand_position,
            hand_attitude: kin.hand_pose().attitude,
            hand_velocity: twist.fixed_rows::<3>(0).into(),
            hand_omega: twist.fixed_rows::<3>(3).into(),
        }
    }
}

fn stack3(a: &Vec3, b: &Vec3, c: &Vec3) -> Vec9 {
    let mut v = Vec9::zeros();
    v.fixed_rows_mut::<3>(0).copy_from(a);
    v.fixed_rows_mut::<3>(3).copy_from(b);
    v.fixed_rows_mut::<3>(6).copy_from(c);
    v
}

/// `τ̄_ff = c̄ + M̄ [0₃; ν̇*_h]`.
pub fn feedforward(m_bar: &Mat9, c_bar: &Vec9, hand_accel: &Vec6) -> Vec9 {
    let mut a = Vec9::zeros();
    a.fixed_rows_mut::<6>(3).copy_from(hand_accel);
    c_bar + m_bar * a
}

/// The three PD terms, stacked in `ψ̄̇` order.
pub fn feedback(measured: &Measured, refs: &ReferenceSignal, gains: &Gains) -> Vec9 {
    let dq_b = quat_error(&measured.base_attitude, &refs.base_attitude);
    let dq_h = quat_error(&measured.hand_attitude, &refs.hand_attitude);
    stack3(
        &(gains.base_p * dq_b.vector() + gains.base_d * measured.base_omega),
        &(gains.pos_p * (measured.hand_position - refs.hand_position)
            + gains.pos_d * (measured.hand_velocity - refs.hand_velocity)),
        &(gains.hand_p * dq_h.vector() + gains.hand_d * (measured.hand_omega - refs.hand_omega)),
    )
}

/// Commanded reduced acceleration `[0; ν̇*] − feedback`.
pub fn commanded_acceleration(measured: &Measured, refs: &ReferenceSignal, gains: &Gains) -> Vec9 {
    stack3(&Vec3::zeros(), &refs.hand_accel, &refs.hand_omega_dot) - feedback(measured, refs, gains)
}

/// `τ̄ = c̄ + M̄([0; ν̇*] − e)`.
pub fn control_torque(m_bar: &Mat9, c_bar: &Vec9, measured: &Measured, refs: &ReferenceSignal, gains: &Gains) -> Vec9 {
    c_bar + m_bar * commanded_acceleration(measured, refs, gains)
}

/// Residuals of the closed-loop error equations for realized reduced
/// accelerations `ψ̈̄ = (ω̇_b, a_h, ω̇_h)`; all three vanish under exact
/// feedback linearization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorResiduals {
    pub base: Vec3,
    pub translation: Vec3,
    pub hand_attitude: Vec3,
}

impl ErrorResiduals {
    pub fn max_norm(&self) -> f64 {
        self.base.norm().max(self.translation.norm()).max(self.hand_attitude.norm())
    }
}

pub fn error_residuals(
    measured: &Measured,
    refs: &ReferenceSignal,
    gains: &Gains,
    psi_bar_ddot: &Vec9,
) -> ErrorResiduals {
    let r = psi_bar_ddot - commanded_acceleration(measured, refs, gains);
    ErrorResiduals {
        base: r.fixed_rows::<3>(0).into(),
        translation: r.fixed_rows::<3>(3).into(),
        hand_attitude: r.fixed_rows::<3>(6).into(),
    }
}

/// Lyapunov function of the base attitude loop,
/// `V = ½‖ω_b‖² + δq_vᵀK_p δq_v + (tr K_p/3)(1 − δq_s)²`.
///
/// For `K_p = k·1₃` this is `½‖ω_b‖² + 2k(1 − δq_s)` and its derivative
/// along the closed loop is exactly `−ω_bᵀK_d ω_b`.
pub fn lyapunov_value(dq: &UnitQuaternion, omega: &Vec3, k_p: &Mat3) -> f64 {
    let v = dq.vector();
    let s = 1.0 - dq.scalar();
    0.5 * omega.norm_squared() + v.dot(&(k_p * v)) + k_p.trace() / 3.0 * s * s
}

/// Scalar attitude and position errors, for logging.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ErrorNorms {
    pub base_attitude: f64,
    pub base_rate: f64,
    pub hand_attitude: f64,
    pub hand_rate: f64,
    pub position: f64,
    pub velocity: f64,
}

pub fn error_norms(measured: &Measured, refs: &ReferenceSignal) -> ErrorNorms {
    ErrorNorms {
        base_attitude: quat_error(&measured.base_attitude, &refs.base_attitude).vector().norm(),
        base_rate: measured.base_omega.norm(),
        hand_attitude: quat_error(&measured.hand_attitude, &refs.hand_attitude).vector().norm(),
        hand_rate: (measured.hand_omega - refs.hand_omega).norm(),
        position: (measured.hand_position - refs.hand_position).norm(),
        velocity: (measured.hand_velocity - refs.hand_velocity).norm(),
    }
}
