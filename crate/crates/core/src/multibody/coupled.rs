//! Robot plus grasped payload, rewritten in the velocities `ψ̇ = (ν_b, ν_h)`
//! and reduced to the 9 controllable coordinates `ψ̄̇ = (ω_b, v_h, ω_h)`.
//!
//! With `T = [1 0; −J_m⁻¹J_b J_m⁻¹]` mapping `ψ̇` to `ψ̇_s` and `b` the
//! velocity-product part of `ψ̈_s`,
//!
//! ```text
//! M = M_s T + [0  JᵀAᵀM_oA]
//! c = M_s b + JᵀAᵀ(M_o Ȧν_h + c_o) + c_s
//! ```
//!
//! so `Mψ̈ + c = u` keeps the robot's original generalized forces on the
//! right-hand side. Its top three rows are the total linear momentum
//! balance, which is why `u` has a zero top block when the base thrusters
//! are idle. `M` is not symmetric; `Tᵀ M` is the kinetic-energy metric.

use nalgebra::SMatrix;

use crate::linalg::{skew, Mat12, Mat3, Mat6, Mat9, Vec12, Vec3, Vec6, Vec9};
use crate::so3::UnitQuaternion;
use crate::target::TargetParams;

use super::dynamics::{bias, mass_matrix, robot_kinetic_energy, robot_linear_momentum};
use super::kinematics::{stack, ChainKinematics};
use super::model::{RobotModel, RobotState};
use super::MultibodyError;

/// `J_m` condition number above which the arm counts as singular.
pub const JM_COND_LIMIT: f64 = 1e8;
/// `M̄` condition number above which forward dynamics is refused.
pub const MBAR_COND_LIMIT: f64 = 1e10;

pub type Mat3x9 = SMatrix<f64, 3, 9>;
pub type Mat9x3 = SMatrix<f64, 9, 3>;

/// Grasped target: its parameters and current attitude.
#[derive(Debug, Clone, Copy)]
pub struct Payload<'a> {
    pub params: &'a TargetParams,
    pub attitude: UnitQuaternion,
}

/// Terms of the rigid grasp in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    /// `ν_o = A ν_h`.
    pub a: Mat6,
    pub a_inv: Mat6,
    pub m_o: Mat6,
    pub c_o: Vec6,
    /// `Ȧ ν_h`.
    pub a_dot_nu: Vec6,
}

/// `A = [1 ρ×; 0 1]` with `ρ` the grapple offset from the target center of
/// mass, in the frame the twists use.
pub fn grasp_matrix(rho: &Vec3) -> (Mat6, Mat6) {
    let mut a = Mat6::identity();
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(rho));
    let mut a_inv = Mat6::identity();
    a_inv.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(rho)));
    (a, a_inv)
}

/// Coupling terms for a payload held at the hand with twist `nu_h`.
pub fn target_coupling(params: &TargetParams, attitude: &UnitQuaternion, nu_h: &Vec6) -> Coupling {
    let r = attitude.to_rotation();
    let rho = r * params.grapple();
    let inertia = r * params.inertia() * r.transpose();
    let (a, a_inv) = grasp_matrix(&rho);
    let mut m_o = Mat6::zeros();
    m_o.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Mat3::identity() * params.mass()));
    m_o.fixed_view_mut::<3, 3>(3, 3).copy_from(&inertia);
    let w: Vec3 = nu_h.fixed_rows::<3>(3).into();
    let c_o = stack(&Vec3::zeros(), &w.cross(&(inertia * w)));
    let a_dot_nu = stack(&w.cross(&rho).cross(&w), &Vec3::zeros());
    Coupling { a, a_inv, m_o, c_o, a_dot_nu }
}

impl Coupling {
    /// Wrench exerted on the hand by the payload for a hand twist rate.
    pub fn hand_wrench(&self, nu_h_dot: &Vec6) -> Vec6 {
        -(self.a.transpose() * (self.m_o * (self.a * nu_h_dot + self.a_dot_nu) + self.c_o))
    }

    pub fn kinetic_energy(&self, nu_h: &Vec6) -> f64 {
        let nu_o = self.a * nu_h;
        0.5 * nu_o.dot(&(self.m_o * nu_o))
    }

    pub fn linear_momentum(&self, nu_h: &Vec6) -> Vec3 {
        (self.m_o * (self.a * nu_h)).fixed_rows::<3>(0).into()
    }
}

#[derive(Debug, Clone)]
pub struct CoupledDynamics {
    pub m_s: Mat12,
    pub c_s: Vec12,
    pub jb: Mat6,
    pub jm: Mat6,
    pub jm_inv: Mat6,
    /// `J̇ψ̇_s`, the velocity-product part of the hand twist rate.
    pub hand_bias: Vec6,
    pub hand_twist: Vec6,
    /// `ψ̇_s = T ψ̇`.
    pub transform: Mat12,
    /// `ψ̈_s = T ψ̈ + b`.
    pub accel_offset: Vec12,
    pub coupling: Option<Coupling>,
    pub mass: Mat12,
    pub bias: Vec12,
    pub m11: Mat3,
    pub m12: Mat3x9,
    pub m21: Mat9x3,
    pub m22: Mat9,
    pub c1: Vec3,
    pub c2: Vec9,
    pub m_bar: Mat9,
    pub c_bar: Vec9,
    /// Robot-plus-payload kinetic energy at this state.
    pub kinetic_energy: f64,
}

fn cond1<const N: usize>(m: &SMatrix<f64, N, N>, inv: &SMatrix<f64, N, N>) -> f64 {
    let norm1 = |x: &SMatrix<f64, N, N>| x.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max);
    norm1(m) * norm1(inv)
}

/// `(J_b, J_m)`; fails when `J_m` is too badly conditioned to invert.
pub fn jacobians(model: &RobotModel, state: &RobotState) -> Result<(Mat6, Mat6), MultibodyError> {
    let kin = ChainKinematics::new(model, state);
    let (jb, jm) = kin.jacobians();
    invert_arm_jacobian(&jm)?;
    Ok((jb, jm))
}

fn invert_arm_jacobian(jm: &Mat6) -> Result<Mat6, MultibodyError> {
    let inv = jm.try_inverse().ok_or(MultibodyError::SingularArm { condition: f64::INFINITY })?;
    let condition = cond1(jm, &inv);
    if !(condition <= JM_COND_LIMIT) {
        return Err(MultibodyError::SingularArm { condition });
    }
    Ok(inv)
}

/// 1-norm condition number of `J_m` at this state.
pub fn arm_condition(model: &RobotModel, state: &RobotState) -> f64 {
    let (_, jm) = ChainKinematics::new(model, state).jacobians();
    match jm.try_inverse() {
        Some(inv) => cond1(&jm, &inv),
        None => f64::INFINITY,
    }
}

/// Builds `M`, `c` and the reduced `M̄`, `c̄`. With no payload the target
/// terms vanish, which is the pre-capture model.
pub fn combined_dynamics(
    model: &RobotModel,
    state: &RobotState,
    payload: Option<Payload<'_>>,
) -> Result<CoupledDynamics, MultibodyError> {
    let kin = ChainKinematics::new(model, state);
    let (jb, jm) = kin.jacobians();
    let jm_inv = invert_arm_jacobian(&jm)?;
    let m_s = mass_matrix(model, &kin);
    let c_s = bias(model, state, &kin);
    let hand_bias = kin.accelerations(state, &Vec12::zeros()).hand;
    let hand_twist = kin.hand_twist();

    let mut transform = Mat12::zeros();
    transform.fixed_view_mut::<6, 6>(0, 0).copy_from(&Mat6::identity());
    transform.fixed_view_mut::<6, 6>(6, 0).copy_from(&(-jm_inv * jb));
    transform.fixed_view_mut::<6, 6>(6, 6).copy_from(&jm_inv);
    let mut accel_offset = Vec12::zeros();
    accel_offset.fixed_rows_mut::<6>(6).copy_from(&(-jm_inv * hand_bias));

    let mut mass = m_s * transform;
    let mut bias_vec = m_s * accel_offset + c_s;
    let mut kinetic_energy = robot_kinetic_energy(model, &kin);

    let coupling = payload.map(|p| target_coupling(p.params, &p.attitude, &hand_twist));
    if let Some(cp) = &coupling {
        let mut j = SMatrix::<f64, 6, 12>::zeros();
        j.fixed_view_mut::<6, 6>(0, 0).copy_from(&jb);
        j.fixed_view_mut::<6, 6>(0, 6).copy_from(&jm);
        let jt_at = j.transpose() * cp.a.transpose();
        let block = jt_at * cp.m_o * cp.a;
        let current = mass.fixed_view::<12, 6>(0, 6).into_owned();
        mass.fixed_view_mut::<12, 6>(0, 6).copy_from(&(current + block));
        bias_vec += jt_at * (cp.m_o * cp.a_dot_nu + cp.c_o);
        kinetic_energy += cp.kinetic_energy(&hand_twist);
    }

    let m11: Mat3 = mass.fixed_view::<3, 3>(0, 0).into();
    let m12: Mat3x9 = mass.fixed_view::<3, 9>(0, 3).into();
    let m21: Mat9x3 = mass.fixed_view::<9, 3>(3, 0).into();
    let m22: Mat9 = mass.fixed_view::<9, 9>(3, 3).into();
    let c1: Vec3 = bias_vec.fixed_rows::<3>(0).into();
    let c2: Vec9 = bias_vec.fixed_rows::<9>(3).into();
    let m11_inv = m11.try_inverse().ok_or(MultibodyError::SingularMass { condition: f64::INFINITY })?;
    let m_bar = m22 - m21 * m11_inv * m12;
    let c_bar = c2 - m21 * (m11_inv * c1);

    Ok(CoupledDynamics {
        m_s,
        c_s,
        jb,
        jm,
        jm_inv,
        hand_bias,
        hand_twist,
        transform,
        accel_offset,
        coupling,
        mass,
        bias: bias_vec,
        m11,
        m12,
        m21,
        m22,
        c1,
        c2,
        m_bar,
        c_bar,
        kinetic_energy,
    })
}

/// `ψ̇ = (v_b, ω_b, ν_h)` for the robot state the dynamics were built at.
pub fn reduced_velocity(state: &RobotState, dynamics: &CoupledDynamics) -> (Vec3, Vec9) {
    let mut psi_bar = Vec9::zeros();
    psi_bar.fixed_rows_mut::<3>(0).copy_from(&state.base_omega);
    psi_bar.fixed_rows_mut::<6>(3).copy_from(&dynamics.hand_twist);
    (state.base_velocity, psi_bar)
}

/// `p = M₁₁ v_b + M₁₂ ψ̄̇`, the total linear momentum of robot and payload.
pub fn linear_momentum(dynamics: &CoupledDynamics, v_b: &Vec3, psi_bar_dot: &Vec9) -> Vec3 {
    dynamics.m11 * v_b + dynamics.m12 * psi_bar_dot
}

/// Linear momentum computed body by body, independent of `M`.
pub fn direct_linear_momentum(model: &RobotModel, state: &RobotState, payload: Option<Payload<'_>>) -> Vec3 {
    let kin = ChainKinematics::new(model, state);
    let mut p = robot_linear_momentum(model, &kin);
    if let Some(pl) = payload {
        p += target_coupling(pl.params, &pl.attitude, &kin.hand_twist()).linear_momentum(&kin.hand_twist());
    }
    p
}

/// Solves the reduced dynamics for `τ̄`: `ψ̈̄ = M̄⁻¹(τ̄ − c̄)` and
/// `v̇_b = −M₁₁⁻¹(M₁₂ψ̈̄ + c₁)`.
pub fn forward_dynamics(dynamics: &CoupledDynamics, tau_bar: &Vec9) -> Result<(Vec3, Vec9), MultibodyError> {
    let inv = dynamics.m_bar.try_inverse().ok_or(MultibodyError::SingularMass { condition: f64::INFINITY })?;
    let condition = cond1(&dynamics.m_bar, &inv);
    if !(condition <= MBAR_COND_LIMIT) {
        return Err(MultibodyError::SingularMass { condition });
    }
    let psi_bar_ddot = inv * (tau_bar - dynamics.c_bar);
    let m11_inv = dynamics.m11.try_inverse().ok_or(MultibodyError::SingularMass { condition: f64::INFINITY })?;
    let v_b_dot = -(m11_inv * (dynamics.m12 * psi_bar_ddot + dynamics.c1));
    Ok((v_b_dot, psi_bar_ddot))
}

/// `ψ̈ = (v̇_b, ψ̈̄)` as one 12-vector.
pub fn stack_accel(v_b_dot: &Vec3, psi_bar_ddot: &Vec9) -> Vec12 {
    let mut a = Vec12::zeros();
    a.fixed_rows_mut::<3>(0).copy_from(v_b_dot);
    a.fixed_rows_mut::<9>(3).copy_from(psi_bar_ddot);
    a
}

impl CoupledDynamics {
    /// Joint-space accelerations `ψ̈_s = T ψ̈ + b`.
    pub fn robot_accel(&self, psi_ddot: &Vec12) -> Vec12 {
        self.transform * psi_ddot + self.accel_offset
    }

    /// Wrench on the hand from the payload (zero without one).
    pub fn hand_wrench(&self, nu_h_dot: &Vec6) -> Vec6 {
        self.coupling.as_ref().map_or(Vec6::zeros(), |c| c.hand_wrench(nu_h_dot))
    }

    /// Generalized force `u = (0₃, τ̄)`.
    pub fn input(tau_bar: &Vec9) -> Vec12 {
        stack_accel(&Vec3::zeros(), tau_bar)
    }

    /// `Tᵀ M`, the symmetric kinetic-energy metric in `ψ̇` coordinates.
    pub fn energy_metric(&self) -> Mat12 {
        self.transform.transpose() * self.mass
    }
}
