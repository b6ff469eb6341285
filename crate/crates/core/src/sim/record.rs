//! Per-step log records, events and the run summary.

use std::io::{self, Write};

use serde::Serialize;

use super::Phase;
use crate::controller::{ErrorNorms, ErrorResiduals, ReferenceSignal};
use crate::detumble::DetumblePlan;
use crate::linalg::{Vec3, Vec6, Vec9};
use crate::multibody::RobotState;
use crate::precapture::PrecapturePlan;
use crate::so3::UnitQuaternion;
use crate::target::TargetState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    pub phase: Phase,
    pub robot: RobotState,
    pub target: TargetState,
    pub hand_position: Vec3,
    pub hand_attitude: UnitQuaternion,
    pub hand_velocity: Vec3,
    pub hand_omega: Vec3,
    pub reference: Option<ReferenceSignal>,
    pub torque: Vec9,
    /// Wrench the payload exerts on the hand (zero before capture).
    pub hand_wrench: Vec6,
    /// `M₁₁v_b + M₁₂ψ̄̇`.
    pub momentum: Vec3,
    /// Robot plus target, free or attached.
    pub total_momentum: Vec3,
    /// `‖I_cω‖` of the target.
    pub target_momentum: f64,
    pub errors: ErrorNorms,
    pub residuals: ErrorResiduals,
    /// Base-attitude Lyapunov function.
    pub lyapunov: f64,
    pub kinetic_energy: f64,
    /// Work done by `τ̄` over the step that ended here.
    pub work: f64,
    pub energy_residual: f64,
}

fn xyz(prefix: &str) -> [String; 3] {
    ["x", "y", "z"].map(|a| format!("{prefix}_{a}"))
}

fn quat(prefix: &str) -> [String; 4] {
    ["qx", "qy", "qz", "qs"].map(|a| format!("{prefix}_{a}"))
}

fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

impl LogRecord {
    /// Column names, in the order of [`values`](Self::values).
    pub fn columns() -> Vec<String> {
        let mut c = vec!["t".to_string(), "phase".to_string()];
        c.extend(xyz("base_pos"));
        c.extend(quat("base"));
        c.extend(xyz("base_vel"));
        c.extend(xyz("base_omega"));
        c.extend(indexed("theta", 6));
        c.extend(indexed("theta_dot", 6));
        c.extend(xyz("target_pos"));
        c.extend(quat("target"));
        c.extend(xyz("target_omega_body"));
        c.extend(xyz("target_vel"));
        c.extend(xyz("hand_pos"));
        c.extend(quat("hand"));
        c.extend(xyz("hand_vel"));
        c.extend(xyz("hand_omega"));
        c.extend(xyz("ref_pos"));
        c.extend(xyz("ref_vel"));
        c.extend(xyz("ref_acc"));
        c.extend(quat("ref_hand"));
        c.extend(xyz("ref_omega"));
        c.extend(xyz("ref_omega_dot"));
        c.extend(indexed("tau", 9));
        c.extend(["fx", "fy", "fz", "nx", "ny", "nz"].map(|a| format!("hand_wrench_{a}")));
        c.extend(xyz("momentum"));
        c.extend(xyz("total_momentum"));
        c.push("target_momentum_norm".into());
        for name in ["err_base_att", "err_base_rate", "err_hand_att", "err_hand_rate", "err_pos", "err_vel"] {
            c.push(name.into());
        }
        for name in
            ["res_base", "res_translation", "res_hand_att", "lyapunov", "kinetic_energy", "work", "energy_residual"]
        {
            c.push(name.into());
        }
        c
    }

    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![self.t, f64::from(self.phase.tag())];
        let q = |v: &mut Vec<f64>, q: &UnitQuaternion| v.extend(q.to_vector4().iter());
        let r = &self.robot;
        v.extend(r.base_position.iter());
        q(&mut v, &r.base_attitude);
        v.extend(r.base_velocity.iter());
        v.extend(r.base_omega.iter());
        v.extend(r.joint_angles.iter());
        v.extend(r.joint_rates.iter());
        let x = &self.target;
        v.extend(x.position.iter());
        q(&mut v, &x.attitude);
        v.extend(x.omega.iter());
        v.extend(x.velocity.iter());
        v.extend(self.hand_position.iter());
        q(&mut v, &self.hand_attitude);
        v.extend(self.hand_velocity.iter());
        v.extend(self.hand_omega.iter());
        match &self.reference {
            Some(s) => {
                v.extend(s.hand_position.iter());
                v.extend(s.hand_velocity.iter());
                v.extend(s.hand_accel.iter());
                q(&mut v, &s.hand_attitude);
                v.extend(s.hand_omega.iter());
                v.extend(s.hand_omega_dot.iter());
            }
            None => v.extend([f64::NAN; 19]),
        }
        v.extend(self.torque.iter());
        v.extend(self.hand_wrench.iter());
        v.extend(self.momentum.iter());
        v.extend(self.total_momentum.iter());
        v.push(self.target_momentum);
        let e = &self.errors;
        v.extend([e.base_attitude, e.base_rate, e.hand_attitude, e.hand_rate, e.position, e.velocity]);
        let s = &self.residuals;
        v.extend([s.base.norm(), s.translation.norm(), s.hand_attitude.norm()]);
        v.extend([self.lyapunov, self.kinetic_energy, self.work, self.energy_residual]);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Capture,
    Detumbled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub kind: EventKind,
    pub t: f64,
}

/// Size of the state jump when the target is re-derived from the hand.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Handoff {
    pub position: f64,
    pub velocity: f64,
    pub omega: f64,
    /// Rotation angle between free and attached target attitude (rad).
    pub attitude: f64,
    /// Jump in total linear momentum.
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SimSummary {
    pub steps: usize,
    pub planned_t_f1: Option<f64>,
    pub capture_time: Option<f64>,
    pub capture_position_error: f64,
    pub capture_velocity_error: f64,
    pub handoff: Option<Handoff>,
    pub planned_t_f2: Option<f64>,
    /// `‖I_cω‖/τ_max` at capture.
    pub detumble_oracle: Option<f64>,
    pub detumbled_time: Option<f64>,
    pub detumble_duration: Option<f64>,
    pub max_residual_capture: f64,
    pub max_residual_detumble: f64,
    /// `max ‖p − p₀‖/(1 + ‖p₀‖)` within each phase.
    pub max_momentum_drift: f64,
    pub max_energy_residual: f64,
    /// Largest step-to-step increase of the base Lyapunov function.
    pub max_lyapunov_increase: f64,
    pub final_errors: Option<ErrorNorms>,
    #[serde(skip)]
    last_lyapunov: Option<(Phase, f64)>,
}

impl SimSummary {
    pub(super) fn absorb(&mut self, rec: &LogRecord, p0: &Vec3) {
        let residual = rec.residuals.max_norm();
        match rec.phase {
            Phase::Capture => self.max_residual_capture = self.max_residual_capture.max(residual),
            Phase::Detumble => self.max_residual_detumble = self.max_residual_detumble.max(residual),
        }
        let drift = (rec.momentum - p0).norm() / (1.0 + p0.norm());
        self.max_momentum_drift = self.max_momentum_drift.max(drift);
        self.max_energy_residual = self.max_energy_residual.max(rec.energy_residual);
        if let Some((phase, v)) = self.last_lyapunov {
            if phase == rec.phase {
                self.max_lyapunov_increase = self.max_lyapunov_increase.max(rec.lyapunov - v);
            }
        }
        self.last_lyapunov = Some((rec.phase, rec.lyapunov));
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimLog {
    pub records: Vec<LogRecord>,
    pub events: Vec<Event>,
    pub summary: SimSummary,
    pub precapture: Option<PrecapturePlan>,
    pub detumble: Option<DetumblePlan>,
}

impl SimLog {
    /// Writes the records as CSV with 17 significant digits, so the file
    /// round-trips every value exactly.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", LogRecord::columns().join(","))?;
        for rec in &self.records {
            let line: Vec<String> = rec.values().iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}
