//! Time-optimal detumbling under a Euclidean torque bound `‖τ‖ ≤ τ_max`.
//!
//! The minimum principle with the closed-form costate
//! `λ = I_c²ω / (‖I_cω‖ τ_max)` gives the torque `τ* = −τ_max I_cω/‖I_cω‖`:
//! constant norm, antiparallel to the body angular momentum. Since the
//! gyroscopic term never changes `‖I_cω‖`, the momentum norm decays affinely
//! at rate `τ_max` and the maneuver lasts `‖I_cω₀‖/τ_max`.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{skew, Mat3, Vec3};
use crate::precapture::{desired_hand_attitude_with, AttitudeReference, TrajectoryPoint};
use crate::so3::{quat_derivative, So3Error, UnitQuaternion};
use crate::target::{
    grapple_acceleration_with, grapple_position, grapple_velocity, gyroscopic_accel, TargetParams, TargetState,
};

pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetumbleError {
    #[error("torque bound must be positive, got {0}")]
    InvalidTorqueBound(f64),
    #[error("invalid detumble parameter: {0}")]
    InvalidParams(String),
    #[error("ZERO_MOMENTUM: angular momentum {norm:.3e} is at or below the stop threshold {eps:.3e}")]
    ZeroMomentum { norm: f64, eps: f64 },
    #[error("STEP_TOO_LARGE: step {dt} s exceeds {limit:.3e} s (fewer than 100 steps per maneuver)")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error(transparent)]
    Attitude(#[from] So3Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetumbleParams {
    pub tau_max: f64,
    /// Stop threshold on `‖I_cω‖`; `None` selects
    /// `max(1e-9, 1e-6·‖I_cω₀‖)`.
    pub eps_stop: Option<f64>,
    pub dt: f64,
}

impl DetumbleParams {
    pub fn new(tau_max: f64, eps_stop: Option<f64>, dt: f64) -> Result<Self, DetumbleError> {
        if !(tau_max > 0.0 && tau_max.is_finite()) {
            return Err(DetumbleError::InvalidTorqueBound(tau_max));
        }
        if let Some(e) = eps_stop {
            if !(e > 0.0) {
                return Err(DetumbleError::InvalidParams(format!("eps_stop must be positive, got {e}")));
            }
        }
        if !(dt > 0.0) {
            return Err(DetumbleError::InvalidParams(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { tau_max, eps_stop, dt })
    }

    pub fn stop_threshold(&self, initial_momentum: f64) -> f64 {
        self.eps_stop.unwrap_or_else(|| default_stop_threshold(initial_momentum))
    }
}

pub fn default_stop_threshold(initial_momentum: f64) -> f64 {
    (1e-6 * initial_momentum).max(1e-9)
}

/// `τ* = −τ_max I_cω/‖I_cω‖`.
pub fn optimal_torque(omega: &Vec3, inertia: &Mat3, tau_max: f64, eps_stop: f64) -> Result<Vec3, DetumbleError> {
    let h = inertia * omega;
    let norm = h.norm();
    if !(norm > eps_stop) {
        return Err(DetumbleError::ZeroMomentum { norm, eps: eps_stop });
    }
    Ok(h * (-tau_max / norm))
}

/// Closed-form costate `λ = I_c²ω/(‖I_cω‖τ_max)`.
pub fn costate(omega: &Vec3, inertia: &Mat3, tau_max: f64) -> Vec3 {
    let h = inertia * omega;
    inertia * h / (h.norm() * tau_max)
}

/// The minimizing torque written through the costate,
/// `−τ_max I_c⁻¹λ/‖I_c⁻¹λ‖`.
pub fn torque_from_costate(lambda: &Vec3, inertia_inv: &Mat3, tau_max: f64) -> Vec3 {
    let d = inertia_inv * lambda;
    d * (-tau_max / d.norm())
}

/// `∂φᵀ/∂ω = I_c[ω×]I_c⁻¹ − [I_cω×]I_c⁻¹`.
pub fn gyroscopic_jacobian_transpose(omega: &Vec3, inertia: &Mat3, inertia_inv: &Mat3) -> Mat3 {
    (inertia * skew(omega) - skew(&(inertia * omega))) * inertia_inv
}

/// Angular acceleration under the optimal torque, `φ(ω) + I_c⁻¹τ*`.
pub fn detumble_rhs(omega: &Vec3, params: &TargetParams, tau_max: f64, eps_stop: f64) -> Result<Vec3, DetumbleError> {
    let tau = optimal_torque(omega, params.inertia(), tau_max, eps_stop)?;
    Ok(gyroscopic_accel(omega, params.inertia(), params.inertia_inv()) + params.inertia_inv() * tau)
}

/// `‖I_cω₀‖/τ_max`.
pub fn detumble_duration(omega0: &Vec3, inertia: &Mat3, tau_max: f64) -> f64 {
    (inertia * omega0).norm() / tau_max
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetumbleSample {
    /// Time since the start of the maneuver (s).
    pub t: f64,
    pub state: TargetState,
    /// Optimal torque on the target, body frame (N·m).
    pub torque: Vec3,
    /// `‖I_cω‖` (N·m·s).
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetumblePlan {
    pub samples: Vec<DetumbleSample>,
    /// Maneuver duration: first time `‖I_cω‖` reaches the stop threshold.
    pub t_f2: f64,
    pub eps_stop: f64,
    pub tau_max: f64,
    pub dt: f64,
    pub initial_momentum: f64,
    params: TargetParams,
}

#[derive(Debug, Clone, Copy)]
struct Rates {
    attitude: Vector4<f64>,
    omega: Vec3,
    position: Vec3,
}

fn rates(x: &TargetState, params: &TargetParams, tau_max: f64, eps: f64) -> Result<Rates, DetumbleError> {
    Ok(Rates {
        attitude: quat_derivative(&x.attitude, &x.omega),
        omega: detumble_rhs(&x.omega, params, tau_max, eps)?,
        position: x.velocity,
    })
}

/// One RK4 step of the torqued target. Stage states only need a
/// normalized attitude, so renormalization happens without drift checks.
fn rk4(x: &TargetState, params: &TargetParams, tau_max: f64, eps: f64, h: f64) -> Result<TargetState, DetumbleError> {
    let offset = |k: &Rates, s: f64| -> TargetState {
        let q = x.attitude.to_vector4() + k.attitude * s;
        TargetState {
            attitude: UnitQuaternion::from_parts(q.xyz(), q.w).unwrap_or(x.attitude),
            omega: x.omega + k.omega * s,
            position: x.position + k.position * s,
            velocity: x.velocity,
        }
    };
    let k1 = rates(x, params, tau_max, eps)?;
    let k2 = rates(&offset(&k1, 0.5 * h), params, tau_max, eps)?;
    let k3 = rates(&offset(&k2, 0.5 * h), params, tau_max, eps)?;
    let k4 = rates(&offset(&k3, h), params, tau_max, eps)?;
    let w = h / 6.0;
    let q = x.attitude.to_vector4() + (k1.attitude + k2.attitude * 2.0 + k3.attitude * 2.0 + k4.attitude) * w;
    Ok(TargetState {
        attitude: UnitQuaternion::from_vector4(&q)?,
        omega: x.omega + (k1.omega + k2.omega * 2.0 + k3.omega * 2.0 + k4.omega) * w,
        position: x.position + (k1.position + k2.position * 2.0 + k3.position * 2.0 + k4.position) * w,
        velocity: x.velocity,
    })
}

const SUBSTEP_RATIO: f64 = 10.0;
const MAX_SUBSTEPS: usize = 64;

/// Integrates the optimal detumbling maneuver from `initial` until
/// `‖I_cω‖` falls to the stop threshold. The center of mass keeps its
/// velocity (the maneuver applies a pure torque).
pub fn plan_detumble(
    initial: &TargetState,
    params: &TargetParams,
    settings: &DetumbleParams,
) -> Result<DetumblePlan, DetumbleError> {
    let tau_max = settings.tau_max;
    let n0 = (params.inertia() * initial.omega).norm();
    let eps = settings.stop_threshold(n0);
    let sample = |t: f64, state: TargetState| -> DetumbleSample {
        let momentum = (params.inertia() * state.omega).norm();
        let torque = optimal_torque(&state.omega, params.inertia(), tau_max, eps).unwrap_or_else(|_| Vec3::zeros());
        DetumbleSample { t, state, torque, momentum }
    };
    let mut plan = DetumblePlan {
        samples: Vec::new(),
        t_f2: 0.0,
        eps_stop: eps,
        tau_max,
        dt: settings.dt,
        initial_momentum: n0,
        params: params.clone(),
    };
    if n0 <= eps {
        plan.samples.push(sample(0.0, TargetState { omega: Vec3::zeros(), ..*initial }));
        return Ok(plan);
    }
    let limit = 0.01 * n0 / tau_max;
    if settings.dt > limit {
        return Err(DetumbleError::StepTooLarge { dt: settings.dt, limit });
    }

    let dt = settings.dt;
    let mut x = *initial;
    let mut k = 0usize;
    plan.samples.push(sample(0.0, x));
    loop {
        let t = k as f64 * dt;
        let n = (params.inertia() * x.omega).norm();
        // Keep every RK4 stage clear of the threshold: the final step is
        // shortened to land on it using the affine decay law.
        if n - tau_max * dt <= eps {
            let h = (n - eps) / tau_max;
            let mut end = if h > 0.0 { rk4(&x, params, tau_max, 0.0, h)? } else { x };
            let n_end = (params.inertia() * end.omega).norm();
            // Linear interpolation of the norm inside the final step.
            let t_f2 = if n > n_end { t + h * (n - eps) / (n - n_end) } else { t + h };
            end.omega = Vec3::zeros();
            plan.t_f2 = t_f2;
            plan.samples.push(DetumbleSample { t: t_f2, state: end, torque: Vec3::zeros(), momentum: 0.0 });
            break;
        }
        // The torque direction's derivatives grow like 1/‖I_cω‖ᵏ, so the
        // last few steps before the stop are split into substeps.
        let substeps = ((SUBSTEP_RATIO * tau_max * dt / n).ceil() as usize).clamp(1, MAX_SUBSTEPS);
        let h = dt / substeps as f64;
        for _ in 0..substeps {
            x = rk4(&x, params, tau_max, eps, h)?;
        }
        k += 1;
        plan.samples.push(sample(k as f64 * dt, x));
    }
    Ok(plan)
}

/// Hand reference derived from the detumble maneuver through the rigid
/// grasp: attitude `q_g ⊗ q_o` and grapple-point translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandReference {
    pub attitude: AttitudeReference,
    pub translation: TrajectoryPoint,
}

/// State of the planned maneuver at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanPoint {
    pub state: TargetState,
    pub torque: Vec3,
    /// Body-frame angular acceleration including the torque.
    pub omega_dot: Vec3,
}

impl DetumblePlan {
    pub fn params(&self) -> &TargetParams {
        &self.params
    }

    pub fn is_empty(&self) -> bool {
        self.t_f2 == 0.0
    }

    /// Planned state at `t` seconds into the maneuver; a partial RK4 step
    /// from the previous sample between grid points, rest after `t_f2`.
    pub fn at(&self, t: f64) -> Result<PlanPoint, DetumbleError> {
        self.point(t, false)
    }

    /// Like [`at`](Self::at), but at `t = t_f2` returns the limit from
    /// inside the maneuver (torque still applied). Integrators use this
    /// for stages at the end of a step that lands on `t_f2`.
    pub fn at_left(&self, t: f64) -> Result<PlanPoint, DetumbleError> {
        self.point(t, true)
    }

    fn point(&self, t: f64, left: bool) -> Result<PlanPoint, DetumbleError> {
        // Absorb round-off from callers that measure time from another origin.
        let t = if left && t > self.t_f2 && t - self.t_f2 <= 1e-9 * (1.0 + self.t_f2) { self.t_f2 } else { t };
        let last = self.samples.last().expect("plan has at least one sample");
        if t > self.t_f2 || (t == self.t_f2 && !left) || self.is_empty() {
            let mut state = last.state;
            state.position += state.velocity * (t - self.t_f2).max(0.0);
            return Ok(PlanPoint { state, torque: Vec3::zeros(), omega_dot: Vec3::zeros() });
        }
        let k = ((t.max(0.0) / self.dt).floor() as usize).min(self.samples.len() - 2);
        let base = &self.samples[k];
        let h = t - base.t;
        let state = if h > 0.0 { rk4(&base.state, &self.params, self.tau_max, 0.0, h)? } else { base.state };
        let torque = optimal_torque(&state.omega, self.params.inertia(), self.tau_max, 0.0)?;
        let omega_dot = gyroscopic_accel(&state.omega, self.params.inertia(), self.params.inertia_inv())
            + self.params.inertia_inv() * torque;
        Ok(PlanPoint { state, torque, omega_dot })
    }

    pub fn hand_reference(&self, t: f64, grasp: &UnitQuaternion) -> Result<HandReference, DetumbleError> {
        self.reference_from(self.at(t)?, grasp)
    }

    /// Hand reference using the left limit at `t_f2`, see [`at_left`](Self::at_left).
    pub fn hand_reference_left(&self, t: f64, grasp: &UnitQuaternion) -> Result<HandReference, DetumbleError> {
        self.reference_from(self.at_left(t)?, grasp)
    }

    fn reference_from(&self, p: PlanPoint, grasp: &UnitQuaternion) -> Result<HandReference, DetumbleError> {
        let rho = self.params.grapple();
        Ok(HandReference {
            attitude: desired_hand_attitude_with(&p.state, grasp, &p.omega_dot),
            translation: TrajectoryPoint {
                position: grapple_position(&p.state, rho),
                velocity: grapple_velocity(&p.state, rho),
                acceleration: grapple_acceleration_with(&p.state, rho, &p.omega_dot),
            },
        })
    }

    /// Largest deviation of `‖I_cω‖` from `‖I_cω₀‖ − τ_max t`, relative to
    /// `‖I_cω₀‖`, over samples before the stop.
    pub fn affine_decay_deviation(&self) -> f64 {
        if self.initial_momentum == 0.0 {
            return 0.0;
        }
        self.samples
            .iter()
            .filter(|s| s.t < self.t_f2)
            .map(|s| (s.momentum - (self.initial_momentum - self.tau_max * s.t)).abs())
            .fold(0.0, f64::max)
            / self.initial_momentum
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostateReport {
    /// `max‖λ̇ + (∂φᵀ/∂ω)λ‖` with `λ̇` by central differences.
    pub max_residual: f64,
    /// `max|1 + λᵀφ + (I_c⁻¹λ)ᵀτ*|`.
    pub max_hamiltonian: f64,
    pub points: usize,
}

/// Checks the closed-form costate against the costate equation and the
/// vanishing Hamiltonian along the uniformly spaced part of the plan.
pub fn verify_costate(plan: &DetumblePlan) -> CostateReport {
    verify_costate_above(plan, plan.eps_stop)
}

/// As [`verify_costate`], restricted to samples with `‖I_cω‖ > floor`.
///
/// The torque direction `I_cω/‖I_cω‖` has spatial derivatives that grow
/// like `1/‖I_cω‖ᵏ`, so integration error in the last few steps before the
/// stop dominates the finite-difference residual there. A floor away from
/// zero isolates the O(dt²) central-difference behaviour.
pub fn verify_costate_above(plan: &DetumblePlan, floor: f64) -> CostateReport {
    let p = plan.params();
    let (inertia, inertia_inv) = (p.inertia(), p.inertia_inv());
    let tau_max = plan.tau_max;
    let live: Vec<&DetumbleSample> = plan.samples.iter().filter(|s| s.t < plan.t_f2 && s.momentum > floor).collect();
    // Interior points need uniformly spaced neighbours.
    let uniform = live.iter().take_while(|s| ((s.t / plan.dt).round() * plan.dt - s.t).abs() < 1e-9).count();
    let lambda: Vec<Vec3> = live.iter().map(|s| costate(&s.state.omega, inertia, tau_max)).collect();
    let mut report = CostateReport { max_residual: 0.0, max_hamiltonian: 0.0, points: 0 };
    for (i, s) in live.iter().enumerate() {
        let w = &s.state.omega;
        let phi = gyroscopic_accel(w, inertia, inertia_inv);
        let h = 1.0 + lambda[i].dot(&phi) + (inertia_inv * lambda[i]).dot(&s.torque);
        report.max_hamiltonian = report.max_hamiltonian.max(h.abs());
        if i == 0 || i + 1 >= uniform {
            continue;
        }
        let lambda_dot = (lambda[i + 1] - lambda[i - 1]) / (2.0 * plan.dt);
        let r = lambda_dot + gyroscopic_jacobian_transpose(w, inertia, inertia_inv) * lambda[i];
        report.max_residual = report.max_residual.max(r.norm());
        report.points += 1;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(inertia: Mat3) -> TargetParams {
        TargetParams::new(100.0, inertia, Vec3::new(0.5, 0.1, -0.2)).unwrap()
    }

    fn start(omega: Vec3) -> TargetState {
        TargetState { omega, ..TargetState::at_rest(Vec3::new(1.0, 2.0, 3.0)) }
    }

    #[test]
    fn torque_examples() {
        let i = Mat3::identity() * 4.0;
        let tau = optimal_torque(&Vec3::new(0.3, 0.0, 0.0), &i, 2.0, 1e-9).unwrap();
        assert_eq!(tau, Vec3::new(-2.0, 0.0, 0.0));
        let i = Mat3::from_diagonal(&Vec3::new(10.0, 15.0, 20.0));
        let w = Vec3::new(0.1, -0.05, 0.08);
        let tau = optimal_torque(&w, &i, 0.7, 1e-9).unwrap();
        assert_relative_eq!(tau.norm(), 0.7, max_relative = 1e-15);
        assert_relative_eq!(tau.dot(&(i * w)), -0.7 * (i * w).norm(), max_relative = 1e-14);
        let via_costate = torque_from_costate(&costate(&w, &i, 0.7), &i.try_inverse().unwrap(), 0.7);
        assert!((via_costate - tau).norm() < 1e-12);
        assert!(matches!(optimal_torque(&Vec3::zeros(), &i, 1.0, 1e-9), Err(DetumbleError::ZeroMomentum { .. })));
    }

    #[test]
    fn isotropic_rate_keeps_direction() {
        let p = params(Mat3::identity() * 5.0);
        let w = Vec3::new(0.1, 0.2, -0.1);
        let a = detumble_rhs(&w, &p, 1.0, 1e-9).unwrap();
        assert!((a + w / w.norm() * (1.0 / 5.0)).norm() < 1e-15);
    }

    #[test]
    fn principal_spin_stays_on_axis() {
        let p = params(Mat3::from_diagonal(&Vec3::new(10.0, 15.0, 20.0)));
        let plan = plan_detumble(&start(Vec3::new(0.0, 0.2, 0.0)), &p, &DetumbleParams::new(1.0, None, 1e-3).unwrap())
            .unwrap();
        for s in &plan.samples {
            assert!(s.state.omega.x.abs() < 1e-9 && s.state.omega.z.abs() < 1e-9);
        }
    }

    #[test]
    fn isotropic_duration_is_one_second() {
        let p = params(Mat3::identity() * 10.0);
        let plan = plan_detumble(&start(Vec3::new(0.1, 0.0, 0.0)), &p, &DetumbleParams::new(1.0, None, 1e-3).unwrap())
            .unwrap();
        assert!((plan.t_f2 - 1.0).abs() < 1e-4);
        let report = verify_costate(&plan);
        assert!(report.max_residual < 1e-8);
        assert!(report.max_hamiltonian < 1e-12);
    }

    #[test]
    fn triaxial_duration_and_affine_decay() {
        let i = Mat3::from_diagonal(&Vec3::new(10.0, 15.0, 20.0));
        let w0 = Vec3::new(0.1, -0.05, 0.08);
        let plan = plan_detumble(&start(w0), &params(i), &DetumbleParams::new(0.5, None, 1e-3).unwrap()).unwrap();
        assert!((plan.t_f2 - detumble_duration(&w0, &i, 0.5)).abs() < 1e-4);
        assert!(plan.affine_decay_deviation() < 1e-6);
        for s in plan.samples.iter().filter(|s| s.momentum > plan.eps_stop) {
            assert_relative_eq!(s.torque.norm(), 0.5, max_relative = 1e-9);
        }
        for pair in plan.samples.windows(2) {
            assert!(pair[1].momentum < pair[0].momentum);
        }
        // Finite-difference slope of the logged norm.
        let s = &plan.samples;
        for k in 1..s.len().saturating_sub(3) {
            let slope = (s[k + 1].momentum - s[k - 1].momentum) / (s[k + 1].t - s[k - 1].t);
            assert!((slope + 0.5).abs() < 1e-6 * 0.5);
        }
    }

    #[test]
    fn costate_residual_shrinks_quadratically() {
        let i = Mat3::new(12.0, 1.0, -0.5, 1.0, 18.0, 0.7, -0.5, 0.7, 25.0);
        let p = params(i);
        let w0 = Vec3::new(0.15, -0.1, 0.12);
        let coarse = plan_detumble(&start(w0), &p, &DetumbleParams::new(1.0, None, 2e-3).unwrap()).unwrap();
        let fine = plan_detumble(&start(w0), &p, &DetumbleParams::new(1.0, None, 1e-3).unwrap()).unwrap();
        let whole = verify_costate(&fine);
        assert!(whole.max_residual < 1e-4);
        assert!(whole.max_hamiltonian < 1e-6);
        // Away from the stop the residual is the central-difference error.
        let floor = 0.1 * fine.initial_momentum;
        let ratio = verify_costate_above(&coarse, floor).max_residual / verify_costate_above(&fine, floor).max_residual;
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn scaling_inertia_and_torque_leaves_costate_unchanged() {
        let i = Mat3::from_diagonal(&Vec3::new(10.0, 15.0, 20.0));
        let w0 = Vec3::new(0.1, -0.05, 0.08);
        let settings = DetumbleParams::new(0.5, None, 1e-3).unwrap();
        let a = plan_detumble(&start(w0), &params(i), &settings).unwrap();
        let b = plan_detumble(&start(w0), &params(i * 2.0), &DetumbleParams { tau_max: 1.0, ..settings }).unwrap();
        assert_eq!(a.samples.len(), b.samples.len());
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert!((sa.state.omega - sb.state.omega).norm() < 1e-12);
        }
        let (ra, rb) = (verify_costate(&a), verify_costate(&b));
        assert_relative_eq!(ra.max_residual, rb.max_residual, max_relative = 1e-6, epsilon = 1e-12);
    }

    #[test]
    fn rotating_the_problem_rotates_the_torque() {
        let i = Mat3::from_diagonal(&Vec3::new(10.0, 15.0, 20.0));
        let w0 = Vec3::new(0.1, -0.05, 0.08);
        let r = UnitQuaternion::from_axis_angle(&Vec3::new(1.0, 2.0, -0.5), 0.8).to_rotation();
        let settings = DetumbleParams::new(0.5, None, 1e-3).unwrap();
        let a = plan_detumble(&start(w0), &params(i), &settings).unwrap();
        let b = plan_detumble(&start(r * w0), &params(r * i * r.transpose()), &settings).unwrap();
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert!((r * sa.torque - sb.torque).norm() < 1e-9);
        }
    }

    #[test]
    fn resting_target_gives_empty_plan() {
        let p = params(Mat3::identity() * 10.0);
        let plan = plan_detumble(&start(Vec3::zeros()), &p, &DetumbleParams::new(1.0, None, 1e-3).unwrap()).unwrap();
        assert!(plan.is_empty());
        assert_eq!(plan.samples.len(), 1);
        assert_eq!(detumble_duration(&Vec3::zeros(), p.inertia(), 1.0), 0.0);
    }

    #[test]
    fn coarse_step_is_rejected() {
        let p = params(Mat3::identity() * 10.0);
        let r = plan_detumble(&start(Vec3::new(0.1, 0.0, 0.0)), &p, &DetumbleParams::new(1.0, None, 0.05).unwrap());
        assert!(matches!(r, Err(DetumbleError::StepTooLarge { .. })));
    }

    #[test]
    fn duration_matches_closed_form_for_random_inertias() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let settings = DetumbleParams::new(1.0, None, 1e-3).unwrap();
        for _ in 0..20 {
            let d = Vec3::new(rng.gen_range(5.0..20.0), rng.gen_range(5.0..20.0), rng.gen_range(5.0..20.0));
            let Ok(p) = TargetParams::new(50.0, Mat3::from_diagonal(&d), Vec3::zeros()) else { continue };
            let w0 = Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
            let plan = plan_detumble(&start(w0), &p, &settings).unwrap();
            assert!((plan.t_f2 - detumble_duration(&w0, p.inertia(), 1.0)).abs() < 1e-4);
        }
    }

    #[test]
    fn plan_lookup_is_continuous_and_rests_after_stop() {
        let i = Mat3::from_diagonal(&Vec3::new(10.0, 15.0, 20.0));
        let plan = plan_detumble(
            &start(Vec3::new(0.1, -0.05, 0.08)),
            &params(i),
            &DetumbleParams::new(0.5, None, 1e-3).unwrap(),
        )
        .unwrap();
        let t = 0.5;
        let at = plan.at(t).unwrap();
        assert_eq!(at.state, plan.samples[500].state);
        let just_before = plan.at(t - 1e-12).unwrap();
        assert!((just_before.state.omega - at.state.omega).norm() < 1e-12);
        let rest = plan.at(plan.t_f2 + 1.0).unwrap();
        assert_eq!(rest.state.omega, Vec3::zeros());
        assert_eq!(rest.torque, Vec3::zeros());
        // Hand translation reference is consistent with its derivative.
        let g = UnitQuaternion::identity();
        let h = 1e-5;
        let (a, b) = (plan.hand_reference(t - h, &g).unwrap(), plan.hand_reference(t + h, &g).unwrap());
        let mid = plan.hand_reference(t, &g).unwrap();
        let fd = (b.translation.velocity - a.translation.velocity) / (2.0 * h);
        assert!((fd - mid.translation.acceleration).norm() < 1e-8);
        let fd_w = (b.attitude.omega - a.attitude.omega) / (2.0 * h);
        assert!((fd_w - mid.attitude.omega_dot).norm() < 1e-8);
    }
}
