//! Optimal intercept trajectory for the hand with a free rendezvous time.
//!
//! Minimizing `∫ 1 + w₁‖ṙ_h‖² + w₂‖r̈_h‖² dt` subject to meeting the grapple
//! with matched velocity gives, per axis,
//!
//! ```text
//! r*(t) = κ₀ + κ₁t + κ₂e^{σt} + κ₃e^{−σt},   σ = √(w₁/w₂)
//! ```
//!
//! The rendezvous time `t_f1` is the smallest zero of the terminal
//! Hamiltonian `1 + w₁‖ṙ_h‖² + w₂ r̈_hᵀ(2r̈_c − r̈_h)` evaluated at `t_f1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{condition_number, solve4, Vec3};
use crate::rootfind::{brent, first_bracket, RootError};
use crate::so3::UnitQuaternion;
use crate::target::{
    grapple_acceleration, grapple_position, grapple_velocity, gyroscopic_accel, TargetError, TargetParams,
    TargetPredictor, TargetState, DEFAULT_DT,
};

/// Largest `σ·t_f1` accepted before `e^{σt}` starts to swamp the solve.
pub const MAX_SIGMA_T: f64 = 40.0;
/// Condition number of the scaled 4×4 boundary system that is rejected.
pub const MAX_CONDITION: f64 = 1e12;
pub const DEFAULT_WINDOW: (f64, f64) = (0.1, 120.0);
pub const SCAN_SAMPLES: usize = 64;
pub const ROOT_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrecaptureError {
    #[error("weights must be positive, got w1 = {w1}, w2 = {w2}")]
    InvalidWeights { w1: f64, w2: f64 },
    #[error("search window [{lo}, {hi}] is empty or non-positive")]
    InvalidWindow { lo: f64, hi: f64 },
    #[error("ILL_CONDITIONED: boundary system is ill-conditioned (sigma*t = {sigma_t:.3}, condition {condition:.3e})")]
    IllConditioned { sigma_t: f64, condition: f64 },
    #[error("OUT_OF_RANGE: time {t} lies outside the plan horizon [0, {t_f1}]")]
    OutOfRange { t: f64, t_f1: f64 },
    #[error("NO_ROOT: terminal Hamiltonian has no sign change in [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64, samples: Vec<(f64, f64)> },
    #[error("root refinement failed: {0}")]
    Refinement(String),
    #[error("target prediction failed: {0}")]
    Target(#[from] TargetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecaptureWeights {
    w1: f64,
    w2: f64,
}

impl PrecaptureWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self, PrecaptureError> {
        if !(w1 > 0.0 && w2 > 0.0 && w1.is_finite() && w2.is_finite()) {
            return Err(PrecaptureError::InvalidWeights { w1, w2 });
        }
        Ok(Self { w1, w2 })
    }

    pub fn w1(&self) -> f64 {
        self.w1
    }

    pub fn w2(&self) -> f64 {
        self.w2
    }

    pub fn sigma(&self) -> f64 {
        (self.w1 / self.w2).sqrt()
    }
}

/// Position, velocity and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

/// Solves the per-axis boundary system for `κ₀..κ₃`.
///
/// The `κ₂` column is scaled by `e^{−σT}` so that every entry stays O(1)
/// at large `σT`.
pub fn solve_coefficients(
    r0: &Vec3,
    v0: &Vec3,
    rf: &Vec3,
    vf: &Vec3,
    sigma: f64,
    t_f1: f64,
) -> Result<[Vec3; 4], PrecaptureError> {
    let sigma_t = sigma * t_f1;
    if !(t_f1 > 0.0 && sigma > 0.0) || !(sigma_t < MAX_SIGMA_T) {
        return Err(PrecaptureError::IllConditioned { sigma_t, condition: f64::INFINITY });
    }
    let em = (-sigma_t).exp();
    let a = [[1.0, 0.0, em, 1.0], [0.0, 1.0, sigma * em, -sigma], [1.0, t_f1, 1.0, em], [0.0, 1.0, sigma, -sigma * em]];
    let condition = condition_number(&nalgebra::Matrix4::from_fn(|i, j| a[i][j]));
    if !(condition <= MAX_CONDITION) {
        return Err(PrecaptureError::IllConditioned { sigma_t, condition });
    }
    let mut kappa = [Vec3::zeros(); 4];
    for axis in 0..3 {
        let b = [r0[axis], v0[axis], rf[axis], vf[axis]];
        let x = solve4(&a, &b).ok_or(PrecaptureError::IllConditioned { sigma_t, condition })?;
        kappa[0][axis] = x[0];
        kappa[1][axis] = x[1];
        kappa[2][axis] = x[2] * em;
        kappa[3][axis] = x[3];
    }
    Ok(kappa)
}

/// Evaluates `r*(t)` and its first two derivatives.
pub fn evaluate(kappa: &[Vec3; 4], sigma: f64, t: f64) -> TrajectoryPoint {
    let ep = (sigma * t).exp();
    let em = (-sigma * t).exp();
    TrajectoryPoint {
        position: kappa[0] + kappa[1] * t + kappa[2] * ep + kappa[3] * em,
        velocity: kappa[1] + (kappa[2] * ep - kappa[3] * em) * sigma,
        acceleration: (kappa[2] * ep + kappa[3] * em) * (sigma * sigma),
    }
}

/// `𝓗*(t_f1) = 1 + w₁‖ṙ_h‖² + w₂ r̈_hᵀ(2r̈_c − r̈_h)` at the endpoint.
pub fn terminal_hamiltonian(end: &TrajectoryPoint, grapple_accel: &Vec3, weights: &PrecaptureWeights) -> f64 {
    let a = &end.acceleration;
    1.0 + weights.w1 * end.velocity.norm_squared() + weights.w2 * a.dot(&(grapple_accel * 2.0 - a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecapturePlan {
    pub kappa: [Vec3; 4],
    pub sigma: f64,
    /// Rendezvous time, measured from the start of the plan (s).
    pub t_f1: f64,
    pub weights: PrecaptureWeights,
    /// Target state predicted at the rendezvous.
    pub rendezvous: TargetState,
    /// Terminal Hamiltonian at the returned root.
    pub hamiltonian: f64,
}

impl PrecapturePlan {
    pub fn eval(&self, t: f64) -> Result<TrajectoryPoint, PrecaptureError> {
        if !(0.0..=self.t_f1).contains(&t) {
            return Err(PrecaptureError::OutOfRange { t, t_f1: self.t_f1 });
        }
        Ok(evaluate(&self.kappa, self.sigma, t))
    }

    /// Like [`eval`](Self::eval) but clamps `t` to the plan horizon.
    pub fn eval_clamped(&self, t: f64) -> TrajectoryPoint {
        evaluate(&self.kappa, self.sigma, t.clamp(0.0, self.t_f1))
    }

    /// Performance index by composite Simpson quadrature on `2n` panels.
    pub fn performance_index(&self, n: usize) -> f64 {
        let w = self.weights;
        performance_index(|t| evaluate(&self.kappa, self.sigma, t), self.t_f1, &w, n)
    }
}

/// `∫₀ᵀ 1 + w₁‖ṙ‖² + w₂‖r̈‖² dt` for any trajectory, by Simpson's rule.
pub fn performance_index<F>(traj: F, horizon: f64, weights: &PrecaptureWeights, n: usize) -> f64
where
    F: Fn(f64) -> TrajectoryPoint,
{
    let panels = 2 * n.max(1);
    let h = horizon / panels as f64;
    let integrand = |t: f64| {
        let p = traj(t);
        1.0 + weights.w1 * p.velocity.norm_squared() + weights.w2 * p.acceleration.norm_squared()
    };
    let mut sum = integrand(0.0) + integrand(horizon);
    for i in 1..panels {
        sum += integrand(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

/// Hand state at the start of planning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandStart {
    pub position: Vec3,
    pub velocity: Vec3,
}

/// Finds the optimal intercept of the grapple fixture.
///
/// `target` is the target state at the start of the plan; `window` bounds
/// the rendezvous time search. The upper end is clipped so `σ·t_f1` stays
/// below [`MAX_SIGMA_T`].
pub fn plan(
    hand: &HandStart,
    target: &TargetState,
    params: &TargetParams,
    weights: &PrecaptureWeights,
    window: (f64, f64),
) -> Result<PrecapturePlan, PrecaptureError> {
    let sigma = weights.sigma();
    let lo = window.0;
    let hi = window.1.min(0.9975 * MAX_SIGMA_T / sigma);
    if !(lo > 0.0 && hi > lo) {
        return Err(PrecaptureError::InvalidWindow { lo: window.0, hi: window.1 });
    }
    let mut predictor = TargetPredictor::new(*target, params.clone(), DEFAULT_DT)?;
    let mut candidate = |t: f64| -> Result<(f64, [Vec3; 4], TargetState), PrecaptureError> {
        let x = predictor.state_at(t)?;
        let rf = grapple_position(&x, params.grapple());
        let vf = grapple_velocity(&x, params.grapple());
        let kappa = solve_coefficients(&hand.position, &hand.velocity, &rf, &vf, sigma, t)?;
        let end = evaluate(&kappa, sigma, t);
        Ok((terminal_hamiltonian(&end, &grapple_acceleration(&x, params), weights), kappa, x))
    };

    let (samples, bracket) = first_bracket(|t| candidate(t).map(|c| c.0), lo, hi, SCAN_SAMPLES)?;
    let Some((a, b)) = bracket else {
        log::debug!("no sign change of the terminal Hamiltonian in [{lo}, {hi}]");
        return Err(PrecaptureError::NoRoot { lo, hi, samples });
    };
    let t_f1 = brent(|t| candidate(t).map(|c| c.0), a, b, ROOT_TOL, 200).map_err(|e| match e {
        RootError::Eval(inner) => inner,
        other => PrecaptureError::Refinement(other.to_string()),
    })?;
    let (hamiltonian, kappa, rendezvous) = candidate(t_f1)?;
    log::info!("rendezvous at t_f1 = {t_f1:.9} s, terminal Hamiltonian {hamiltonian:.3e}");
    Ok(PrecapturePlan { kappa, sigma, t_f1, weights: *weights, rendezvous, hamiltonian })
}

/// Hand attitude that keeps a fixed grasp offset `q_g` relative to the
/// target body frame, `R_h = R(q_o)·R(q_g)`, together with the inertial
/// angular velocity and acceleration of that frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeReference {
    pub attitude: UnitQuaternion,
    pub omega: Vec3,
    pub omega_dot: Vec3,
}

pub fn desired_hand_attitude(x: &TargetState, params: &TargetParams, grasp: &UnitQuaternion) -> AttitudeReference {
    let phi = gyroscopic_accel(&x.omega, params.inertia(), params.inertia_inv());
    desired_hand_attitude_with(x, grasp, &phi)
}

/// As [`desired_hand_attitude`] for a given body angular acceleration.
pub fn desired_hand_attitude_with(x: &TargetState, grasp: &UnitQuaternion, omega_dot_body: &Vec3) -> AttitudeReference {
    // R(q_g ⊗ q_o) = R(q_o)·R(q_g).
    AttitudeReference {
        attitude: grasp.multiply(&x.attitude),
        omega: x.attitude.rotate(&x.omega),
        omega_dot: x.attitude.rotate(omega_dot_body),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat3;
    use crate::so3::quat_derivative_inertial;
    use crate::target::propagate_for;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix4, Vector4};

    fn tumbling() -> (TargetState, TargetParams) {
        let params =
            TargetParams::new(200.0, Mat3::from_diagonal(&Vec3::new(30.0, 40.0, 50.0)), Vec3::new(0.6, 0.0, 0.2))
                .unwrap();
        let x = TargetState {
            attitude: UnitQuaternion::from_axis_angle(&Vec3::new(0.2, 1.0, -0.3), 0.4),
            omega: Vec3::new(0.05, -0.08, 0.06),
            position: Vec3::new(2.0, 0.3, 0.8),
            velocity: Vec3::zeros(),
        };
        (x, params)
    }

    #[test]
    fn static_rendezvous_has_zero_motion_coefficients() {
        let r = Vec3::new(1.0, -2.0, 0.5);
        let k = solve_coefficients(&r, &Vec3::zeros(), &r, &Vec3::zeros(), 0.2, 5.0).unwrap();
        assert!((k[0] - r).norm() < 1e-12);
        for c in &k[1..] {
            assert!(c.norm() < 1e-12);
        }
    }

    #[test]
    fn unit_case_matches_dense_solve() {
        let (s, t) = (1.0f64, 1.0f64);
        let e = t.exp();
        let m = Matrix4::new(1.0, 0.0, 1.0, 1.0, 0.0, 1.0, s, -s, 1.0, t, e, 1.0 / e, 0.0, 1.0, s * e, -s / e);
        let oracle = m.lu().solve(&Vector4::new(0.0, 0.0, 1.0, 0.0)).unwrap();
        let k = solve_coefficients(&Vec3::zeros(), &Vec3::zeros(), &Vec3::x(), &Vec3::zeros(), s, t).unwrap();
        for i in 0..4 {
            assert_relative_eq!(k[i].x, oracle[i], max_relative = 1e-12, epsilon = 1e-14);
            assert_eq!(k[i].y, 0.0);
        }
    }

    #[test]
    fn boundary_values_are_met() {
        let (r0, v0) = (Vec3::new(0.1, 0.2, -0.3), Vec3::new(0.01, 0.0, 0.02));
        let (rf, vf) = (Vec3::new(1.0, -0.5, 0.4), Vec3::new(-0.05, 0.03, 0.0));
        for &(sigma, t) in &[(0.2, 5.0), (1.0, 30.0), (0.05, 0.3), (2.0, 19.0)] {
            let k = solve_coefficients(&r0, &v0, &rf, &vf, sigma, t).unwrap();
            let a = evaluate(&k, sigma, 0.0);
            let b = evaluate(&k, sigma, t);
            assert!((a.position - r0).norm() < 1e-9 && (a.velocity - v0).norm() < 1e-9);
            assert!((b.position - rf).norm() < 1e-9 && (b.velocity - vf).norm() < 1e-9);
        }
        assert!(matches!(
            solve_coefficients(&r0, &v0, &rf, &vf, 1.0, 41.0),
            Err(PrecaptureError::IllConditioned { .. })
        ));
    }

    #[test]
    fn derivatives_and_fourth_order_ode() {
        let k = [
            Vec3::new(0.3, 0.0, 1.0),
            Vec3::new(-0.1, 0.2, 0.0),
            Vec3::new(0.01, 0.02, -0.03),
            Vec3::new(0.5, -0.4, 0.2),
        ];
        let sigma = 0.7;
        let h = 1e-3;
        for &t in &[0.5, 2.0, 3.7] {
            let p = |t| evaluate(&k, sigma, t);
            let fd_v = (p(t + h).position - p(t - h).position) / (2.0 * h);
            let fd_a = (p(t + h).velocity - p(t - h).velocity) / (2.0 * h);
            assert!((fd_v - p(t).velocity).norm() < 1e-7);
            assert!((fd_a - p(t).acceleration).norm() < 1e-7);
            // d²/dt² (r̈ − σ²r) = 0 by 5-point stencil on the analytic r̈ − σ²r.
            let g = |t: f64| p(t).acceleration - p(t).position * (sigma * sigma);
            let hh = 1e-2;
            let d2 = (-g(t + 2.0 * hh) + g(t + hh) * 16.0 - g(t) * 30.0 + g(t - hh) * 16.0 - g(t - 2.0 * hh))
                / (12.0 * hh * hh);
            assert!(d2.norm() < 1e-5);
        }
    }

    #[test]
    fn hamiltonian_expanded_in_coefficients() {
        let w = PrecaptureWeights::new(1.3, 4.0).unwrap();
        let sigma = w.sigma();
        let k = [
            Vec3::new(0.3, 0.0, 1.0),
            Vec3::new(-0.1, 0.2, 0.05),
            Vec3::new(0.01, 0.02, -0.03),
            Vec3::new(0.5, -0.4, 0.2),
        ];
        let t = 2.5;
        let rc = Vec3::new(0.02, -0.01, 0.03);
        let (ep, em) = ((sigma * t).exp(), (-sigma * t).exp());
        // Expanded form: terms collected by products of coefficients.
        let expanded = 1.0
            + w.w1() * (k[1].norm_squared() + sigma * sigma * (k[2] * ep - k[3] * em).norm_squared())
            + 2.0 * w.w1() * sigma * (k[2] * ep - k[3] * em).dot(&k[1])
            + 2.0 * w.w2() * sigma * sigma * (k[2] * ep + k[3] * em).dot(&rc)
            - w.w2() * sigma.powi(4) * (k[2] * ep + k[3] * em).norm_squared();
        let direct = terminal_hamiltonian(&evaluate(&k, sigma, t), &rc, &w);
        assert_relative_eq!(direct, expanded, max_relative = 1e-12);
        // With w₁ = σ²w₂ the two quadratic terms in κ₂e^{σt}, κ₃e^{−σt}
        // collapse to −4(w₁²/w₂) κ₂ᵀκ₃.
        let collapsed = 1.0 + w.w1() * k[1].norm_squared() - 4.0 * w.w1() * w.w1() / w.w2() * k[2].dot(&k[3])
            + 2.0 * w.w1() * sigma * (k[2] * ep - k[3] * em).dot(&k[1])
            + 2.0 * w.w2() * sigma * sigma * (k[2] * ep + k[3] * em).dot(&rc);
        assert_relative_eq!(direct, collapsed, max_relative = 1e-12);
    }

    #[test]
    fn stationary_endpoint_gives_unit_hamiltonian() {
        let w = PrecaptureWeights::new(1.0, 25.0).unwrap();
        let end = TrajectoryPoint { position: Vec3::zeros(), velocity: Vec3::zeros(), acceleration: Vec3::zeros() };
        assert_eq!(terminal_hamiltonian(&end, &Vec3::new(1.0, 2.0, 3.0), &w), 1.0);
    }

    #[test]
    fn plan_meets_terminal_conditions() {
        let (x, params) = tumbling();
        let w = PrecaptureWeights::new(1.0, 25.0).unwrap();
        let hand = HandStart { position: Vec3::new(1.7, 0.1, 1.2), velocity: Vec3::zeros() };
        let plan = plan(&hand, &x, &params, &w, DEFAULT_WINDOW).unwrap();
        assert!(plan.t_f1 > 0.0);
        assert!(plan.hamiltonian.abs() < 1e-6, "{}", plan.hamiltonian);
        // Independent propagation of the target to the rendezvous.
        let xf = propagate_for(&x, &params, plan.t_f1, 1e-4).unwrap();
        let end = plan.eval(plan.t_f1).unwrap();
        assert!((end.position - grapple_position(&xf, params.grapple())).norm() < 1e-6);
        assert!((end.velocity - grapple_velocity(&xf, params.grapple())).norm() < 1e-6);
        let start = plan.eval(0.0).unwrap();
        assert!((start.position - hand.position).norm() < 1e-9);
        assert!(matches!(plan.eval(plan.t_f1 + 1.0), Err(PrecaptureError::OutOfRange { .. })));
    }

    #[test]
    fn hand_at_static_grapple_has_no_root() {
        let (mut x, params) = tumbling();
        x.omega = Vec3::zeros();
        let w = PrecaptureWeights::new(1.0, 25.0).unwrap();
        let hand = HandStart { position: grapple_position(&x, params.grapple()), velocity: Vec3::zeros() };
        match plan(&hand, &x, &params, &w, DEFAULT_WINDOW) {
            Err(PrecaptureError::NoRoot { samples, .. }) => {
                assert_eq!(samples.len(), SCAN_SAMPLES);
                assert!(samples.iter().all(|&(_, h)| (h - 1.0).abs() < 1e-12));
            }
            other => panic!("expected NoRoot, got {other:?}"),
        }
    }

    #[test]
    fn offset_along_x_keeps_other_axes_idle() {
        let params = TargetParams::new(100.0, Mat3::identity() * 10.0, Vec3::zeros()).unwrap();
        let x = TargetState::at_rest(Vec3::new(1.0, 0.0, 0.0));
        let w = PrecaptureWeights::new(1.0, 25.0).unwrap();
        let hand = HandStart { position: Vec3::zeros(), velocity: Vec3::zeros() };
        let p = plan(&hand, &x, &params, &w, DEFAULT_WINDOW).unwrap();
        for k in &p.kappa {
            assert!(k.y.abs() < 1e-15 && k.z.abs() < 1e-15);
        }
    }

    #[test]
    fn rendezvous_time_grows_with_velocity_weight() {
        let params = TargetParams::new(100.0, Mat3::identity() * 10.0, Vec3::zeros()).unwrap();
        let x = TargetState::at_rest(Vec3::new(0.5, 0.2, 0.0));
        let hand = HandStart { position: Vec3::zeros(), velocity: Vec3::zeros() };
        let mut last = 0.0;
        for w1 in [0.01, 0.1, 1.0, 10.0] {
            let w = PrecaptureWeights::new(w1, 25.0).unwrap();
            let t = plan(&hand, &x, &params, &w, (0.5, 400.0)).unwrap().t_f1;
            assert!(t > last, "t_f1 = {t} after {last}");
            last = t;
        }
        let mut last = f64::INFINITY;
        for scale in [1.0, 0.1, 0.01] {
            let w = PrecaptureWeights::new(scale, 25.0 * scale).unwrap();
            let t = plan(&hand, &x, &params, &w, (0.5, 400.0)).unwrap().t_f1;
            assert!(t < last);
            last = t;
        }
    }

    #[test]
    fn attitude_reference_follows_target() {
        let (x, params) = tumbling();
        let grasp = UnitQuaternion::from_axis_angle(&Vec3::new(0.0, 1.0, 0.0), 0.3);
        let r = desired_hand_attitude(&x, &params, &grasp);
        assert!((r.attitude.to_rotation() - x.attitude.to_rotation() * grasp.to_rotation()).norm() < 1e-12);
        let plain = desired_hand_attitude(&x, &params, &UnitQuaternion::identity());
        assert!((plain.attitude.to_vector4() - x.attitude.to_vector4()).norm() < 1e-15);

        // q̇ from the inertial rate matches the propagated reference.
        let h = 1e-4;
        let fwd = propagate_for(&x, &params, h, h).unwrap();
        let bwd = propagate_for(&TargetState { omega: -x.omega, ..x }, &params, h, h).unwrap();
        let q_f = desired_hand_attitude(&fwd, &params, &grasp).attitude.to_vector4();
        // Reversing ω traces the torque-free path backward in time.
        let q_b = desired_hand_attitude(&bwd, &params, &grasp).attitude.to_vector4();
        let fd = (q_f - q_b) / (2.0 * h);
        assert!((fd - quat_derivative_inertial(&r.attitude, &r.omega)).norm() < 1e-7);

        let at_rest = TargetState::at_rest(Vec3::zeros());
        let r0 = desired_hand_attitude(&at_rest, &params, &grasp);
        assert_eq!(r0.omega, Vec3::zeros());
    }
}
