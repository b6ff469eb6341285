//! Two-phase closed-loop scenario runner.
//!
//! Phase 1 tracks the intercept trajectory with the robot alone while the
//! target tumbles freely. Once the hand meets the grapple fixture the target
//! is attached rigidly to the hand and phase 2 tracks the time-optimal
//! detumble maneuver through the combined dynamics.
//!
//! Integration is fixed-step RK4. Steps are shortened to land exactly on the
//! planned rendezvous and detumble end times.

mod record;

use serde::Serialize;
use thiserror::Error;

use crate::controller::{
    control_torque, error_norms, error_residuals, lyapunov_value, ErrorNorms, ErrorResiduals, Gains, Measured,
    ReferenceSignal,
};
use crate::detumble::{plan_detumble, DetumbleError, DetumbleParams, DetumblePlan};
use crate::linalg::{Vec3, Vec6, Vec9};
use crate::multibody::{
    combined_dynamics, forward_dynamics, linear_momentum, reduced_velocity, stack_accel, CoupledDynamics,
    MultibodyError, Payload, RobotModel, RobotRates, RobotState,
};
use crate::precapture::{
    desired_hand_attitude, plan, HandStart, PrecaptureError, PrecapturePlan, PrecaptureWeights, DEFAULT_WINDOW,
};
use crate::so3::{quat_error, UnitQuaternion};
use crate::target::{
    grapple_acceleration, grapple_position, grapple_velocity, state_rhs, TargetError, TargetParams, TargetRates,
    TargetState,
};

pub use record::{Event, EventKind, Handoff, LogRecord, SimLog, SimSummary};

/// Relative energy residual above which a step is rejected.
pub const ENERGY_TOL: f64 = 1e-4;
/// Kinetic energy floor (J) for the relative energy residual.
const ENERGY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimSettings {
    pub dt: f64,
    pub capture_pos_tol: f64,
    pub capture_vel_tol: f64,
    /// Phase 1 gives up after `horizon_factor · t_f1`.
    pub horizon_factor: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { dt: 5e-3, capture_pos_tol: 1e-3, capture_vel_tol: 1e-3, horizon_factor: 1.5 }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: RobotModel,
    pub robot: RobotState,
    pub target: TargetParams,
    pub target_state: TargetState,
    pub weights: PrecaptureWeights,
    pub window: (f64, f64),
    /// Grasp offset `q_g`; `None` keeps the initial hand attitude relative
    /// to the target.
    pub grasp: Option<UnitQuaternion>,
    /// Base attitude to hold; `None` holds the initial attitude.
    pub base_attitude_ref: Option<UnitQuaternion>,
    pub gains: Gains,
    /// Factor applied to the target mass and inertia inside the controller
    /// model only. 1 is an exact model.
    pub model_scale: f64,
    pub detumble: DetumbleParams,
    pub settings: SimSettings,
}

impl Scenario {
    pub fn new(
        model: RobotModel,
        robot: RobotState,
        target: TargetParams,
        target_state: TargetState,
        weights: PrecaptureWeights,
        gains: Gains,
        detumble: DetumbleParams,
    ) -> Self {
        Self {
            model,
            robot,
            target,
            target_state,
            weights,
            window: DEFAULT_WINDOW,
            grasp: None,
            base_attitude_ref: None,
            gains,
            model_scale: 1.0,
            detumble,
            settings: SimSettings::default(),
        }
    }
}

impl Scenario {
    /// Reference case: the nominal robot in its ready pose and a 200 kg
    /// triaxial target tumbling at about 0.1 rad/s, with the grapple
    /// fixture 0.3 m from the hand.
    pub fn nominal() -> Self {
        let model = RobotModel::nominal();
        let robot = RobotState::at_rest(RobotModel::nominal_joint_angles());
        let target = TargetParams::new(
            200.0,
            crate::linalg::Mat3::from_diagonal(&Vec3::new(30.0, 40.0, 50.0)),
            Vec3::new(0.6, 0.0, 0.2),
        )
        .expect("nominal target is valid");
        let hand = Measured::from_robot(&model, &robot).hand_position;
        let target_state = TargetState {
            attitude: UnitQuaternion::identity(),
            omega: Vec3::new(0.05, 0.08, 0.04),
            position: hand + Vec3::new(-0.3, 0.0, 0.0) - target.grapple(),
            velocity: Vec3::zeros(),
        };
        Self::new(
            model,
            robot,
            target,
            target_state,
            PrecaptureWeights::new(1.0, 25.0).expect("valid weights"),
            Gains::diagonal([[4.0; 3], [4.0; 3], [20.0; 3], [6.0; 3], [4.0; 3], [4.0; 3]]).expect("valid gains"),
            DetumbleParams::new(1.0, None, crate::detumble::DEFAULT_DT).expect("valid detumble settings"),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    Capture,
    Detumble,
}

impl Phase {
    /// Numeric tag used in the log.
    pub fn tag(self) -> u8 {
        match self {
            Phase::Capture => 1,
            Phase::Detumble => 2,
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Capture => "capture",
            Phase::Detumble => "detumble",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error(transparent)]
    Multibody(#[from] MultibodyError),
    #[error(transparent)]
    Precapture(#[from] PrecaptureError),
    #[error(transparent)]
    Detumble(#[from] DetumbleError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error("STEP_REJECTED at t = {t:.6} s: relative energy residual {residual:.3e} exceeds {ENERGY_TOL:e}")]
    StepRejected { t: f64, residual: f64 },
    #[error(
        "CAPTURE_MISSED at t = {t:.6} s (horizon {horizon:.6} s): position error {position:.3e} m, velocity error {velocity:.3e} m/s"
    )]
    CaptureMissed { t: f64, horizon: f64, position: f64, velocity: f64 },
    #[error("DETUMBLE_MISSED at t = {t:.6} s: |I_c w| = {momentum:.3e} still above {eps:.3e}")]
    DetumbleMissed { t: f64, momentum: f64, eps: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

/// A step error tagged with the phase it occurred in.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{phase} phase: {error}")]
pub struct SimError {
    pub phase: Phase,
    pub error: StepError,
}

/// Robot and target at one instant. During [`Phase::Detumble`] the target
/// is slaved to the hand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub phase: Phase,
    pub robot: RobotState,
    pub target: TargetState,
}

/// What drives the joints over a step.
#[derive(Debug, Clone, Copy)]
pub enum Drive<'a> {
    /// Fixed generalized torque `τ̄`.
    Torque(Vec9),
    /// Controller tracking a constant reference.
    Track(ReferenceSignal),
    /// Controller tracking the intercept plan, then the grapple fixture.
    Intercept(&'a PrecapturePlan),
    /// Controller tracking the detumble plan, which started at `start`.
    Detumble { plan: &'a DetumblePlan, start: f64 },
}

/// Energy bookkeeping for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// `∫ψ̇_sᵀu dt` over the step.
    pub work: f64,
    /// `|ΔT − W| / max(T, floor)`.
    pub energy_residual: f64,
}

struct Evaluation {
    measured: Measured,
    refs: Option<ReferenceSignal>,
    plant: CoupledDynamics,
    tau: Vec9,
    psi_bar_ddot: Vec9,
    rates: RobotRates,
    target_rates: Option<TargetRates>,
    power: f64,
}

/// Target state implied by a rigid grasp `q_h = q_g ⊗ q_o` at the given
/// hand pose and twist.
pub fn slaved_target(measured: &Measured, grasp: &UnitQuaternion, params: &TargetParams) -> TargetState {
    let attitude = grasp.conjugate().multiply(&measured.hand_attitude);
    let rho = attitude.rotate(params.grapple());
    TargetState {
        attitude,
        omega: attitude.to_rotation().transpose() * measured.hand_omega,
        position: measured.hand_position - rho,
        velocity: measured.hand_velocity + rho.cross(&measured.hand_omega),
    }
}

/// Re-derives the target from the hand at capture; the hand is untouched.
pub fn capture_handoff(
    model: &RobotModel,
    robot: &RobotState,
    target: &TargetState,
    params: &TargetParams,
    grasp: &UnitQuaternion,
) -> (TargetState, Handoff) {
    let attached = slaved_target(&Measured::from_robot(model, robot), grasp, params);
    let jump = Handoff {
        position: (attached.position - target.position).norm(),
        velocity: (attached.velocity - target.velocity).norm(),
        omega: (attached.attitude.rotate(&attached.omega) - target.attitude.rotate(&target.omega)).norm(),
        attitude: 2.0 * quat_error(&attached.attitude, &target.attitude).vector().norm().min(1.0).asin(),
        momentum: params.mass() * (attached.velocity - target.velocity).norm(),
    };
    (attached, jump)
}

/// Closed-loop integrator for one scenario.
pub struct Simulator<'a> {
    scenario: &'a Scenario,
    grasp: UnitQuaternion,
    base_ref: UnitQuaternion,
    controller_target: TargetParams,
}

impl<'a> Simulator<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self, StepError> {
        let s = &scenario.settings;
        if !(s.dt > 0.0 && s.capture_pos_tol > 0.0 && s.capture_vel_tol > 0.0 && s.horizon_factor >= 1.0) {
            return Err(StepError::InvalidScenario(format!("bad integrator settings {s:?}")));
        }
        if !(scenario.model_scale > 0.0) {
            return Err(StepError::InvalidScenario(format!("model_scale {} must be positive", scenario.model_scale)));
        }
        let hand = Measured::from_robot(&scenario.model, &scenario.robot);
        // R_g = R_oᵀR_h, i.e. q_g = q_h ⊗ q_o*.
        let grasp =
            scenario.grasp.unwrap_or_else(|| hand.hand_attitude.multiply(&scenario.target_state.attitude.conjugate()));
        Ok(Self {
            scenario,
            grasp,
            base_ref: scenario.base_attitude_ref.unwrap_or(scenario.robot.base_attitude),
            controller_target: scenario.target.scaled(scenario.model_scale)?,
        })
    }

    pub fn grasp(&self) -> &UnitQuaternion {
        &self.grasp
    }

    pub fn base_reference(&self) -> &UnitQuaternion {
        &self.base_ref
    }

    pub fn initial_state(&self) -> SimState {
        SimState { t: 0.0, phase: Phase::Capture, robot: self.scenario.robot, target: self.scenario.target_state }
    }

    fn reference(&self, state: &SimState, drive: &Drive<'_>, left: bool) -> Result<Option<ReferenceSignal>, StepError> {
        let params = &self.scenario.target;
        let refs = match drive {
            Drive::Torque(_) => return Ok(None),
            Drive::Track(r) => *r,
            Drive::Intercept(p) => {
                let x = &state.target;
                let (position, velocity, accel) = if state.t <= p.t_f1 {
                    let tr = p.eval_clamped(state.t);
                    (tr.position, tr.velocity, tr.acceleration)
                } else {
                    (
                        grapple_position(x, params.grapple()),
                        grapple_velocity(x, params.grapple()),
                        grapple_acceleration(x, params),
                    )
                };
                let att = desired_hand_attitude(x, params, &self.grasp);
                ReferenceSignal {
                    base_attitude: self.base_ref,
                    hand_attitude: att.attitude,
                    hand_omega: att.omega,
                    hand_omega_dot: att.omega_dot,
                    hand_position: position,
                    hand_velocity: velocity,
                    hand_accel: accel,
                }
            }
            Drive::Detumble { plan, start } => {
                let t = state.t - start;
                let r =
                    if left { plan.hand_reference_left(t, &self.grasp)? } else { plan.hand_reference(t, &self.grasp)? };
                ReferenceSignal {
                    base_attitude: self.base_ref,
                    hand_attitude: r.attitude.attitude,
                    hand_omega: r.attitude.omega,
                    hand_omega_dot: r.attitude.omega_dot,
                    hand_position: r.translation.position,
                    hand_velocity: r.translation.velocity,
                    hand_accel: r.translation.acceleration,
                }
            }
        };
        Ok(Some(refs))
    }

    /// `left` selects one-sided references at the end of a step, so a stage
    /// landing on a reference switch sees the value from inside the step.
    fn evaluate(&self, state: &SimState, drive: &Drive<'_>, left: bool) -> Result<Evaluation, StepError> {
        let sc = self.scenario;
        let measured = Measured::from_robot(&sc.model, &state.robot);
        let (plant, controller) = match state.phase {
            Phase::Capture => (combined_dynamics(&sc.model, &state.robot, None)?, None),
            Phase::Detumble => {
                let attitude = self.grasp.conjugate().multiply(&measured.hand_attitude);
                let plant = combined_dynamics(&sc.model, &state.robot, Some(Payload { params: &sc.target, attitude }))?;
                let controller = if sc.model_scale == 1.0 {
                    None
                } else {
                    let payload = Payload { params: &self.controller_target, attitude };
                    Some(combined_dynamics(&sc.model, &state.robot, Some(payload))?)
                };
                (plant, controller)
            }
        };
        let refs = self.reference(state, drive, left)?;
        let tau = match (drive, &refs) {
            (Drive::Torque(t), _) => *t,
            (_, Some(r)) => {
                let model = controller.as_ref().unwrap_or(&plant);
                control_torque(&model.m_bar, &model.c_bar, &measured, r, &sc.gains)
            }
            (_, None) => unreachable!("controller drives always carry a reference"),
        };
        let (v_b_dot, psi_bar_ddot) = forward_dynamics(&plant, &tau)?;
        let accel = plant.robot_accel(&stack_accel(&v_b_dot, &psi_bar_ddot));
        let rates = state.robot.rates(&accel);
        let power = state.robot.generalized_velocity().fixed_rows::<9>(3).dot(&tau);
        let target_rates = match state.phase {
            Phase::Capture => Some(state_rhs(&state.target, &sc.target)),
            Phase::Detumble => None,
        };
        Ok(Evaluation { measured, refs, plant, tau, psi_bar_ddot, rates, target_rates, power })
    }

    fn settle(&self, state: SimState) -> SimState {
        match state.phase {
            Phase::Capture => state,
            Phase::Detumble => {
                let measured = Measured::from_robot(&self.scenario.model, &state.robot);
                SimState { target: slaved_target(&measured, &self.grasp, &self.scenario.target), ..state }
            }
        }
    }

    fn offset(&self, state: &SimState, k: &Evaluation, h: f64) -> SimState {
        SimState {
            t: state.t + h,
            phase: state.phase,
            robot: state.robot.advanced(&k.rates, h),
            target: k.target_rates.map_or(state.target, |r| state.target.advanced(&r, h)),
        }
    }

    /// One RK4 step of length `h`. Quaternions are renormalized; after
    /// capture the target follows the hand through the rigid grasp.
    pub fn step(&self, state: &SimState, drive: &Drive<'_>, h: f64) -> Result<(SimState, StepReport), StepError> {
        let k1 = self.evaluate(state, drive, false)?;
        self.step_from(state, drive, h, k1)
    }

    fn step_from(
        &self,
        state: &SimState,
        drive: &Drive<'_>,
        h: f64,
        k1: Evaluation,
    ) -> Result<(SimState, StepReport), StepError> {
        let k2 = self.evaluate(&self.offset(state, &k1, 0.5 * h), drive, true)?;
        let k3 = self.evaluate(&self.offset(state, &k2, 0.5 * h), drive, true)?;
        let k4 = self.evaluate(&self.offset(state, &k3, h), drive, true)?;
        let robot = state.robot.advanced(&RobotRates::rk4_blend([&k1.rates, &k2.rates, &k3.rates, &k4.rates]), h);
        let target = match (k1.target_rates, k2.target_rates, k3.target_rates, k4.target_rates) {
            (Some(a), Some(b), Some(c), Some(d)) => state.target.advanced(&TargetRates::rk4_blend([&a, &b, &c, &d]), h),
            _ => state.target,
        };
        let next = self.settle(SimState { t: state.t + h, phase: state.phase, robot, target });
        let work = h / 6.0 * (k1.power + 2.0 * k2.power + 2.0 * k3.power + k4.power);
        let t0 = k1.plant.kinetic_energy;
        let t1 = self.kinetic_energy(&next)?;
        let energy_residual = ((t1 - t0) - work).abs() / t0.max(t1).max(ENERGY_FLOOR);
        if energy_residual > ENERGY_TOL {
            return Err(StepError::StepRejected { t: next.t, residual: energy_residual });
        }
        Ok((next, StepReport { work, energy_residual }))
    }

    fn kinetic_energy(&self, state: &SimState) -> Result<f64, StepError> {
        Ok(self.plant(state)?.kinetic_energy)
    }

    fn plant(&self, state: &SimState) -> Result<CoupledDynamics, StepError> {
        let sc = self.scenario;
        Ok(match state.phase {
            Phase::Capture => combined_dynamics(&sc.model, &state.robot, None)?,
            Phase::Detumble => {
                let payload = Payload { params: &sc.target, attitude: state.target.attitude };
                combined_dynamics(&sc.model, &state.robot, Some(payload))?
            }
        })
    }

    /// Linear momentum `M₁₁v_b + M₁₂ψ̄̇` of the simulated multibody system
    /// (robot alone before capture).
    pub fn momentum(&self, state: &SimState) -> Result<Vec3, StepError> {
        let plant = self.plant(state)?;
        let (v_b, psi_bar) = reduced_velocity(&state.robot, &plant);
        Ok(linear_momentum(&plant, &v_b, &psi_bar))
    }

    /// Momentum of robot and target together, whichever phase.
    pub fn total_momentum(&self, state: &SimState) -> Result<Vec3, StepError> {
        let p = self.momentum(state)?;
        Ok(match state.phase {
            Phase::Capture => p + state.target.velocity * self.scenario.target.mass(),
            Phase::Detumble => p,
        })
    }

    /// Full log record at `state`. The closed-loop residuals use
    /// accelerations from a direct solve of the unreduced 12×12 system,
    /// independent of the reduction used to integrate.
    pub fn record(
        &self,
        state: &SimState,
        drive: &Drive<'_>,
        report: Option<StepReport>,
    ) -> Result<LogRecord, StepError> {
        let e = self.evaluate(state, drive, false)?;
        self.record_from(state, &e, report)
    }

    fn record_from(
        &self,
        state: &SimState,
        e: &Evaluation,
        report: Option<StepReport>,
    ) -> Result<LogRecord, StepError> {
        let sc = self.scenario;
        let rhs = CoupledDynamics::input(&e.tau) - e.plant.bias;
        let direct = e.plant.mass.lu().solve(&rhs).ok_or(MultibodyError::SingularMass { condition: f64::INFINITY })?;
        let psi_bar_ddot: Vec9 = direct.fixed_rows::<9>(3).into();
        let refs = e.refs;
        let residuals = match &refs {
            Some(r) => error_residuals(&e.measured, r, &sc.gains, &psi_bar_ddot),
            None => ErrorResiduals { base: Vec3::zeros(), translation: Vec3::zeros(), hand_attitude: Vec3::zeros() },
        };
        let base_ref = refs.map_or(self.base_ref, |r| r.base_attitude);
        let errors = match &refs {
            Some(r) => error_norms(&e.measured, r),
            None => ErrorNorms {
                base_attitude: quat_error(&state.robot.base_attitude, &base_ref).vector().norm(),
                base_rate: state.robot.base_omega.norm(),
                hand_attitude: 0.0,
                hand_rate: 0.0,
                position: 0.0,
                velocity: 0.0,
            },
        };
        let nu_h_dot: Vec6 = e.psi_bar_ddot.fixed_rows::<6>(3).into();
        let (v_b, psi_bar) = reduced_velocity(&state.robot, &e.plant);
        let momentum = linear_momentum(&e.plant, &v_b, &psi_bar);
        let total_momentum = match state.phase {
            Phase::Capture => momentum + state.target.velocity * sc.target.mass(),
            Phase::Detumble => momentum,
        };
        Ok(LogRecord {
            t: state.t,
            phase: state.phase,
            robot: state.robot,
            target: state.target,
            hand_position: e.measured.hand_position,
            hand_attitude: e.measured.hand_attitude,
            hand_velocity: e.measured.hand_velocity,
            hand_omega: e.measured.hand_omega,
            reference: refs,
            torque: e.tau,
            hand_wrench: e.plant.hand_wrench(&nu_h_dot),
            momentum,
            total_momentum,
            target_momentum: (sc.target.inertia() * state.target.omega).norm(),
            errors,
            residuals,
            lyapunov: lyapunov_value(
                &quat_error(&state.robot.base_attitude, &base_ref),
                &state.robot.base_omega,
                &sc.gains.base_p,
            ),
            kinetic_energy: e.plant.kinetic_energy,
            work: report.map_or(0.0, |r| r.work),
            energy_residual: report.map_or(0.0, |r| r.energy_residual),
        })
    }

    /// Integrates under `drive` for `duration`, logging every step.
    pub fn track(&self, start: SimState, drive: &Drive<'_>, duration: f64) -> Result<Vec<LogRecord>, StepError> {
        let dt = self.scenario.settings.dt;
        let end = start.t + duration;
        let mut state = start;
        let mut report = None;
        let mut records = Vec::new();
        loop {
            let e = self.evaluate(&state, drive, false)?;
            records.push(self.record_from(&state, &e, report)?);
            if state.t >= end - 1e-12 {
                return Ok(records);
            }
            let h = step_length(state.t, end, dt);
            let (mut next, r) = self.step_from(&state, drive, h, e)?;
            if h < dt {
                next.t = end;
            }
            state = next;
            report = Some(r);
        }
    }

    fn capture_errors(&self, state: &SimState) -> (f64, f64) {
        let m = Measured::from_robot(&self.scenario.model, &state.robot);
        let rho = self.scenario.target.grapple();
        (
            (m.hand_position - grapple_position(&state.target, rho)).norm(),
            (m.hand_velocity - grapple_velocity(&state.target, rho)).norm(),
        )
    }

    /// Runs both phases to the DETUMBLED event.
    pub fn run(&self) -> Result<SimLog, SimError> {
        let at = |phase| move |error| SimError { phase, error };
        let sc = self.scenario;
        let settings = &sc.settings;
        let mut log = SimLog::default();
        let mut state = self.initial_state();

        // Phase 1.
        let (p0, v0) = self.capture_errors(&state);
        let within = |p: f64, v: f64| p < settings.capture_pos_tol && v < settings.capture_vel_tol;
        if !within(p0, v0) {
            let hand = Measured::from_robot(&sc.model, &state.robot);
            let start = HandStart { position: hand.hand_position, velocity: hand.hand_velocity };
            let intercept = plan(&start, &state.target, &sc.target, &sc.weights, sc.window)
                .map_err(|e| at(Phase::Capture)(e.into()))?;
            log.summary.planned_t_f1 = Some(intercept.t_f1);
            let drive = Drive::Intercept(&intercept);
            let horizon = settings.horizon_factor * intercept.t_f1;
            let p_start = self.momentum(&state).map_err(at(Phase::Capture))?;
            let mut report = None;
            loop {
                let e = self.evaluate(&state, &drive, false).map_err(at(Phase::Capture))?;
                let (pos, vel) = self.capture_errors(&state);
                if state.t >= intercept.t_f1 - 1e-12 && within(pos, vel) {
                    log.summary.capture_position_error = pos;
                    log.summary.capture_velocity_error = vel;
                    break;
                }
                if state.t > horizon {
                    return Err(at(Phase::Capture)(StepError::CaptureMissed {
                        t: state.t,
                        horizon,
                        position: pos,
                        velocity: vel,
                    }));
                }
                let rec = self.record_from(&state, &e, report).map_err(at(Phase::Capture))?;
                log.summary.absorb(&rec, &p_start);
                log.records.push(rec);
                let h = step_length(state.t, intercept.t_f1, settings.dt);
                let (mut next, r) = self.step_from(&state, &drive, h, e).map_err(at(Phase::Capture))?;
                if h < settings.dt {
                    next.t = intercept.t_f1;
                }
                state = next;
                report = Some(r);
                log.summary.steps += 1;
            }
            log.precapture = Some(intercept);
        }
        let t_capture = state.t;
        log.events.push(Event { kind: EventKind::Capture, t: t_capture });
        log.summary.capture_time = Some(t_capture);
        log::info!("CAPTURE at t = {t_capture:.6} s");

        // Handoff.
        let before = self.total_momentum(&state).map_err(at(Phase::Capture))?;
        let (attached, mut jump) = capture_handoff(&sc.model, &state.robot, &state.target, &sc.target, &self.grasp);
        state = SimState { phase: Phase::Detumble, target: attached, ..state };
        let p_start = self.momentum(&state).map_err(at(Phase::Detumble))?;
        jump.momentum = (p_start - before).norm();
        log.summary.handoff = Some(jump);

        // Phase 2.
        let detumble =
            plan_detumble(&state.target, &sc.target, &sc.detumble).map_err(|e| at(Phase::Detumble)(e.into()))?;
        log.summary.planned_t_f2 = Some(detumble.t_f2);
        log.summary.detumble_oracle = Some(detumble.initial_momentum / detumble.tau_max);
        let eps = detumble.eps_stop;
        let t_end = t_capture + detumble.t_f2;
        let horizon = t_capture + (settings.horizon_factor * detumble.t_f2).max(detumble.t_f2 + 100.0 * settings.dt);
        let drive = Drive::Detumble { plan: &detumble, start: t_capture };
        let mut report = None;
        let mut previous: Option<(f64, f64)> = None;
        let detumbled_at = loop {
            let e = self.evaluate(&state, &drive, false).map_err(at(Phase::Detumble))?;
            let rec = self.record_from(&state, &e, report).map_err(at(Phase::Detumble))?;
            let n = rec.target_momentum;
            log.summary.absorb(&rec, &p_start);
            log.records.push(rec);
            if n <= eps {
                // Crossing time by linear interpolation inside the last step.
                break match previous {
                    Some((t_prev, n_prev)) if n_prev > n => t_prev + (state.t - t_prev) * (n_prev - eps) / (n_prev - n),
                    _ => state.t,
                };
            }
            if state.t > horizon {
                return Err(at(Phase::Detumble)(StepError::DetumbleMissed { t: state.t, momentum: n, eps }));
            }
            previous = Some((state.t, n));
            let h = step_length(state.t, t_end, settings.dt);
            let (mut next, r) = self.step_from(&state, &drive, h, e).map_err(at(Phase::Detumble))?;
            if h < settings.dt {
                next.t = t_end;
            }
            state = next;
            report = Some(r);
            log.summary.steps += 1;
        };
        log.events.push(Event { kind: EventKind::Detumbled, t: detumbled_at });
        log.summary.detumbled_time = Some(detumbled_at);
        log.summary.detumble_duration = Some(detumbled_at - t_capture);
        log.summary.final_errors = log.records.last().map(|r| r.errors);
        log.detumble = Some(detumble);
        log::info!("DETUMBLED at t = {detumbled_at:.6} s");
        Ok(log)
    }
}

/// Step length that lands exactly on `event` when it falls within one step.
fn step_length(t: f64, event: f64, dt: f64) -> f64 {
    let remaining = event - t;
    if remaining > 1e-12 && remaining < dt * (1.0 + 1e-9) {
        remaining
    } else {
        dt
    }
}

/// Convenience wrapper around [`Simulator::run`].
pub fn run(scenario: &Scenario) -> Result<SimLog, SimError> {
    Simulator::new(scenario).map_err(|error| SimError { phase: Phase::Capture, error })?.run()
}
