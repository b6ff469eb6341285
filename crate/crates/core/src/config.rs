//! Scenario files.
//!
//! TOML with sections `[target]`, `[robot]`, `[planner]`, `[controller]`,
//! `[detumble]`, `[sim]` and `[output]`. SI units throughout; quaternions
//! are written scalar-last as `[qx, qy, qz, qs]`; inertias as
//! `[xx, yy, zz, xy, xz, yz]` (kg·m²). Unknown keys are rejected.
//!
//! Problems found after parsing are reported with the line of the key
//! they concern.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Gains;
use crate::detumble::{DetumbleParams, DEFAULT_DT as DETUMBLE_DT};
use crate::linalg::{symmetric_from_entries, Mat3, Vec3, Vec6};
use crate::multibody::{arm_condition, Link, RobotModel, RobotState, JM_COND_LIMIT};
use crate::precapture::{PrecaptureWeights, DEFAULT_WINDOW};
use crate::sim::{Scenario, SimSettings};
use crate::so3::UnitQuaternion;
use crate::target::{check_rigid_inertia, TargetError, TargetParams, TargetState};

/// Quaternions in the file must have unit norm to this tolerance.
pub const QUAT_NORM_TOL: f64 = 1e-6;
/// Arm conditioning above this draws a warning from validation.
pub const CONDITION_WARNING: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub target: TargetSection,
    #[serde(default)]
    pub robot: RobotSection,
    pub planner: PlannerSection,
    pub controller: ControllerSection,
    pub detumble: DetumbleSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    /// kg
    pub mass: f64,
    /// About the center of mass, body frame.
    pub inertia: [f64; 6],
    /// Grapple fixture relative to the center of mass, body frame (m).
    pub grapple: [f64; 3],
    #[serde(default = "identity")]
    pub attitude: [f64; 4],
    /// Body frame (rad/s).
    #[serde(default)]
    pub angular_velocity: [f64; 3],
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSection {
    /// `"nominal"` selects the built-in robot; otherwise `base`, `links`
    /// and `hand` must all be given.
    pub preset: Option<String>,
    pub base: Option<BaseSection>,
    pub links: Option<Vec<LinkSection>>,
    pub hand: Option<HandSection>,
    /// Overrides per-link angles (rad).
    pub joint_angles: Option<[f64; 6]>,
    /// Overrides per-link rates (rad/s).
    pub joint_rates: Option<[f64; 6]>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSection {
    pub mass: Option<f64>,
    pub inertia: Option<[f64; 6]>,
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default = "identity")]
    pub attitude: [f64; 4],
    #[serde(default)]
    pub velocity: [f64; 3],
    /// Inertial frame (rad/s).
    #[serde(default)]
    pub angular_velocity: [f64; 3],
}

impl Default for BaseSection {
    fn default() -> Self {
        Self {
            mass: None,
            inertia: None,
            position: [0.0; 3],
            attitude: identity(),
            velocity: [0.0; 3],
            angular_velocity: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub axis: [f64; 3],
    pub offset: [f64; 3],
    pub mass: f64,
    pub com: [f64; 3],
    pub inertia: [f64; 6],
    #[serde(default)]
    pub angle: f64,
    #[serde(default)]
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HandSection {
    pub offset: [f64; 3],
    #[serde(default = "identity")]
    pub attitude: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    pub w1: f64,
    pub w2: f64,
    #[serde(default = "default_window")]
    pub window: [f64; 2],
    /// Grasp offset `q_g`; omitted keeps the initial relative attitude.
    pub grapple_attitude: Option<[f64; 4]>,
    /// Rows in the sampled trajectory output.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Planner start overrides for `plan-precapture` (m, m/s).
    pub hand_position: Option<[f64; 3]>,
    pub hand_velocity: Option<[f64; 3]>,
}

/// A scalar gain (times identity) or a diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Gain {
    Scalar(f64),
    Diagonal([f64; 3]),
}

impl Gain {
    fn matrix(self) -> Mat3 {
        match self {
            Gain::Scalar(k) => Mat3::identity() * k,
            Gain::Diagonal(d) => Mat3::from_diagonal(&Vec3::from(d)),
        }
    }

    fn entries(self) -> [f64; 3] {
        match self {
            Gain::Scalar(k) => [k; 3],
            Gain::Diagonal(d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub base_p: Gain,
    pub base_d: Gain,
    pub hand_p: Gain,
    pub hand_d: Gain,
    pub pos_p: Gain,
    pub pos_d: Gain,
    /// Held base attitude; omitted holds the initial attitude.
    pub base_attitude_ref: Option<[f64; 4]>,
    /// Scale of the target mass and inertia assumed by the controller.
    #[serde(default = "one")]
    pub model_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DetumbleSection {
    /// N·m
    pub tau_max: f64,
    /// ‖I_cω‖ stop threshold (N·m·s); default scales with the initial value.
    pub eps_stop: Option<f64>,
    #[serde(default = "default_detumble_dt")]
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dt: f64,
    pub capture_pos_tol: f64,
    pub capture_vel_tol: f64,
    pub horizon_factor: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let s = SimSettings::default();
        Self {
            dt: s.dt,
            capture_pos_tol: s.capture_pos_tol,
            capture_vel_tol: s.capture_vel_tol,
            horizon_factor: s.horizon_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Emit a gnuplot script next to each CSV.
    #[serde(default)]
    pub gnuplot: bool,
    /// Write every n-th simulation record.
    #[serde(default = "one_usize")]
    pub every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { gnuplot: false, every: 1 }
    }
}

fn identity() -> [f64; 4] {
    [0.0, 0.0, 0.0, 1.0]
}
fn default_window() -> [f64; 2] {
    [DEFAULT_WINDOW.0, DEFAULT_WINDOW.1]
}
fn default_samples() -> usize {
    500
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_detumble_dt() -> f64 {
    DETUMBLE_DT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// One validation outcome, anchored to a key of the file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    /// 1-based line of the key, when present in the file.
    pub line: Option<usize>,
    /// Dotted key, e.g. `target.inertia`.
    pub key: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.line {
            Some(l) => write!(f, "line {l}: {tag}: {}: {}", self.key, self.message),
            None => write!(f, "{tag}: {}: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Finding>),
}

/// Line of `key` inside `[section]` (or a `[[section]]` array entry, the
/// `index`-th one), found by scanning the source.
pub fn locate(src: &str, key: &str) -> Option<usize> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop()?;
    // `robot.links.3.mass` names the fourth `[[robot.links]]` entry.
    let (section, index) = match parts.last().and_then(|p| p.parse::<usize>().ok()) {
        Some(i) => {
            parts.pop();
            (parts.join("."), Some(i))
        }
        None => (parts.join("."), None),
    };
    let mut current = String::new();
    let mut seen = 0usize;
    let mut header_line = None;
    for (n, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(name) = line.strip_prefix("[[").and_then(|l| l.strip_suffix("]]")) {
            current = name.trim().to_string();
            if current == section {
                seen += 1;
            }
        } else if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
        } else if let Some((k, _)) = line.split_once('=') {
            let in_entry = index.is_none_or(|i| seen == i + 1);
            if current == section && in_entry && k.trim() == leaf {
                return Some(n + 1);
            }
            continue;
        } else {
            continue;
        }
        if current == section && index.is_none_or(|i| seen == i + 1) && header_line.is_none() {
            header_line = Some(n + 1);
        }
    }
    // Fall back to the section header when the key was defaulted.
    if leaf.is_empty() {
        None
    } else {
        header_line
    }
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::from(a)
}

struct Checker<'s> {
    src: &'s str,
    findings: Vec<Finding>,
}

impl Checker<'_> {
    fn push(&mut self, severity: Severity, key: &str, message: impl Into<String>) {
        self.findings.push(Finding {
            severity,
            line: locate(self.src, key),
            key: key.to_string(),
            message: message.into(),
        });
    }

    fn error(&mut self, key: &str, message: impl Into<String>) {
        self.push(Severity::Error, key, message);
    }

    fn warn(&mut self, key: &str, message: impl Into<String>) {
        self.push(Severity::Warning, key, message);
    }

    fn positive(&mut self, key: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.error(key, format!("must be positive and finite, got {v}"));
        }
    }

    fn finite(&mut self, key: &str, v: &[f64]) {
        if v.iter().any(|x| !x.is_finite()) {
            self.error(key, "all entries must be finite");
        }
    }

    fn quaternion(&mut self, key: &str, q: [f64; 4]) -> Option<UnitQuaternion> {
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !((n - 1.0).abs() <= QUAT_NORM_TOL) {
            self.error(key, format!("quaternion [qx, qy, qz, qs] must have unit norm, got norm {n:.9}"));
            return None;
        }
        UnitQuaternion::from_parts(Vec3::new(q[0], q[1], q[2]), q[3]).ok()
    }

    fn rigid_inertia(&mut self, key: &str, e: [f64; 6]) -> Option<Mat3> {
        let m = symmetric_from_entries(&e);
        match check_rigid_inertia(&m) {
            Ok(()) => Some(m),
            Err(TargetError::TriangleInequality(ev)) => {
                self.error(
                    key,
                    format!("principal moments {ev:.6?} violate the triangle inequality (not a physical rigid body)"),
                );
                None
            }
            Err(_) => {
                self.error(key, "inertia is not symmetric positive definite");
                None
            }
        }
    }

    fn gain(&mut self, key: &str, g: Gain) {
        let e = g.entries();
        if e.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            self.error(key, format!("gain entries must be positive, got {e:?}"));
        }
    }
}

/// Everything [`Config::build`] produces.
#[derive(Debug, Clone)]
pub struct Built {
    pub scenario: Scenario,
    pub findings: Vec<Finding>,
}

impl Config {
    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        toml::from_str(src).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Validates every physical value and builds the scenario. Errors carry
    /// the line of the offending key in `src`; warnings are returned with
    /// the scenario.
    ///
    /// A singular initial arm pose is only a warning here: the simulator
    /// stops on it with full context. [`validate`](Self::validate) reports
    /// it as an error.
    pub fn build(&self, src: &str) -> Result<Built, ConfigError> {
        self.build_with(src, Severity::Warning)
    }

    fn build_with(&self, src: &str, singular: Severity) -> Result<Built, ConfigError> {
        let mut c = Checker { src, findings: Vec::new() };

        // Target.
        let t = &self.target;
        c.positive("target.mass", t.mass);
        c.finite("target.grapple", &t.grapple);
        c.finite("target.angular_velocity", &t.angular_velocity);
        c.finite("target.position", &t.position);
        c.finite("target.velocity", &t.velocity);
        let inertia = c.rigid_inertia("target.inertia", t.inertia);
        let attitude = c.quaternion("target.attitude", t.attitude);
        if vec3(t.grapple).norm() == 0.0 {
            c.warn("target.grapple", "grapple fixture at the center of mass");
        }

        // Robot.
        let (model, robot) = self.robot(&mut c);

        // Planner.
        let p = &self.planner;
        c.positive("planner.w1", p.w1);
        c.positive("planner.w2", p.w2);
        if !(p.window[0] > 0.0 && p.window[1] > p.window[0]) {
            c.error("planner.window", format!("need 0 < lo < hi, got {:?}", p.window));
        }
        if p.samples < 2 {
            c.error("planner.samples", "need at least 2 samples");
        }
        let grasp = p.grapple_attitude.map(|q| c.quaternion("planner.grapple_attitude", q));

        // Controller.
        let k = &self.controller;
        for (name, g) in [
            ("base_p", k.base_p),
            ("base_d", k.base_d),
            ("hand_p", k.hand_p),
            ("hand_d", k.hand_d),
            ("pos_p", k.pos_p),
            ("pos_d", k.pos_d),
        ] {
            c.gain(&format!("controller.{name}"), g);
        }
        c.positive("controller.model_scale", k.model_scale);
        let base_ref = k.base_attitude_ref.map(|q| c.quaternion("controller.base_attitude_ref", q));

        // Detumble and integrator.
        let d = &self.detumble;
        c.positive("detumble.tau_max", d.tau_max);
        c.positive("detumble.dt", d.dt);
        if let Some(e) = d.eps_stop {
            c.positive("detumble.eps_stop", e);
        }
        let s = &self.sim;
        c.positive("sim.dt", s.dt);
        c.positive("sim.capture_pos_tol", s.capture_pos_tol);
        c.positive("sim.capture_vel_tol", s.capture_vel_tol);
        if !(s.horizon_factor >= 1.0) {
            c.error("sim.horizon_factor", format!("must be at least 1, got {}", s.horizon_factor));
        }
        if self.output.every == 0 {
            c.error("output.every", "must be at least 1");
        }

        if let (Some(model), Some(robot)) = (&model, &robot) {
            let cond = arm_condition(model, robot);
            let key = if self.robot.joint_angles.is_some() { "robot.joint_angles" } else { "robot" };
            if !(cond <= JM_COND_LIMIT) {
                c.push(
                    singular,
                    key,
                    format!("arm Jacobian is singular at the initial pose (condition number {cond:.3e})"),
                );
            } else if cond > CONDITION_WARNING {
                c.warn(key, format!("initial arm pose is near singular (condition number {cond:.3e})"));
            }
        }

        if c.findings.iter().any(|f| f.severity == Severity::Error) {
            return Err(ConfigError::Invalid(c.findings));
        }
        let (Some(inertia), Some(attitude), Some(model), Some(robot)) = (inertia, attitude, model, robot) else {
            unreachable!("missing pieces are reported as errors")
        };
        let invalid = |key: &str, msg: String| {
            ConfigError::Invalid(vec![Finding {
                severity: Severity::Error,
                line: locate(src, key),
                key: key.into(),
                message: msg,
            }])
        };
        let target =
            TargetParams::new(t.mass, inertia, vec3(t.grapple)).map_err(|e| invalid("target", e.to_string()))?;
        let target_state = TargetState {
            attitude,
            omega: vec3(t.angular_velocity),
            position: vec3(t.position),
            velocity: vec3(t.velocity),
        };
        let weights = PrecaptureWeights::new(p.w1, p.w2).map_err(|e| invalid("planner", e.to_string()))?;
        let gains = Gains::new(
            k.base_p.matrix(),
            k.base_d.matrix(),
            k.hand_p.matrix(),
            k.hand_d.matrix(),
            k.pos_p.matrix(),
            k.pos_d.matrix(),
        )
        .map_err(|e| invalid("controller", e.to_string()))?;
        let detumble =
            DetumbleParams::new(d.tau_max, d.eps_stop, d.dt).map_err(|e| invalid("detumble", e.to_string()))?;
        let mut scenario = Scenario::new(model, robot, target, target_state, weights, gains, detumble);
        scenario.window = (p.window[0], p.window[1]);
        scenario.grasp = grasp.flatten();
        scenario.base_attitude_ref = base_ref.flatten();
        scenario.model_scale = k.model_scale;
        scenario.settings = SimSettings {
            dt: s.dt,
            capture_pos_tol: s.capture_pos_tol,
            capture_vel_tol: s.capture_vel_tol,
            horizon_factor: s.horizon_factor,
        };
        Ok(Built { scenario, findings: c.findings })
    }

    fn robot(&self, c: &mut Checker<'_>) -> (Option<RobotModel>, Option<RobotState>) {
        let r = &self.robot;
        let base = r.base.clone().unwrap_or_default();
        c.finite("robot.base.position", &base.position);
        c.finite("robot.base.velocity", &base.velocity);
        c.finite("robot.base.angular_velocity", &base.angular_velocity);
        let base_attitude = c.quaternion("robot.base.attitude", base.attitude);

        let model = match r.preset.as_deref() {
            Some("nominal") => {
                if r.links.is_some() || r.hand.is_some() || base.mass.is_some() || base.inertia.is_some() {
                    c.error(
                        "robot.preset",
                        "the nominal preset fixes the model; drop links, hand and base mass/inertia",
                    );
                    None
                } else {
                    Some(RobotModel::nominal())
                }
            }
            Some(other) => {
                c.error("robot.preset", format!("unknown preset {other:?} (known: \"nominal\")"));
                None
            }
            None if r.links.is_none() && r.hand.is_none() && r.base.is_none() => Some(RobotModel::nominal()),
            None => self.custom_model(c, &base),
        };

        let mut angles = match (&r.links, &model) {
            (Some(links), _) if links.len() == 6 => Vec6::from_iterator(links.iter().map(|l| l.angle)),
            _ => RobotModel::nominal_joint_angles(),
        };
        let mut rates = match &r.links {
            Some(links) if links.len() == 6 => Vec6::from_iterator(links.iter().map(|l| l.rate)),
            _ => Vec6::zeros(),
        };
        if let Some(a) = r.joint_angles {
            c.finite("robot.joint_angles", &a);
            angles = Vec6::from(a);
        }
        if let Some(v) = r.joint_rates {
            c.finite("robot.joint_rates", &v);
            rates = Vec6::from(v);
        }
        let state = base_attitude.map(|att| RobotState {
            base_position: vec3(base.position),
            base_attitude: att,
            base_velocity: vec3(base.velocity),
            base_omega: vec3(base.angular_velocity),
            joint_angles: angles,
            joint_rates: rates,
        });
        (model, state)
    }

    fn custom_model(&self, c: &mut Checker<'_>, base: &BaseSection) -> Option<RobotModel> {
        let r = &self.robot;
        let mut ok = true;
        let base_mass = base.mass.unwrap_or_else(|| {
            c.error("robot.base.mass", "required for a custom robot");
            ok = false;
            f64::NAN
        });
        c.positive("robot.base.mass", base_mass);
        let base_inertia = match base.inertia {
            Some(e) => c.rigid_inertia("robot.base.inertia", e),
            None => {
                c.error("robot.base.inertia", "required for a custom robot");
                None
            }
        };
        let links = r.links.clone().unwrap_or_default();
        if links.len() != 6 {
            c.error("robot.links", format!("exactly 6 [[robot.links]] entries are required, got {}", links.len()));
            return None;
        }
        let mut built = Vec::with_capacity(6);
        for (i, l) in links.iter().enumerate() {
            let key = |k: &str| format!("robot.links.{i}.{k}");
            c.positive(&key("mass"), l.mass);
            if vec3(l.axis).norm() == 0.0 {
                c.error(&key("axis"), "joint axis must be nonzero");
                ok = false;
            }
            c.finite(&key("offset"), &l.offset);
            c.finite(&key("com"), &l.com);
            match c.rigid_inertia(&key("inertia"), l.inertia) {
                Some(inertia) => built.push(Link {
                    axis: vec3(l.axis),
                    offset: vec3(l.offset),
                    mass: l.mass,
                    com: vec3(l.com),
                    inertia,
                }),
                None => ok = false,
            }
        }
        let Some(hand) = &r.hand else {
            c.error("robot.hand", "required for a custom robot");
            return None;
        };
        let hand_rotation = c.quaternion("robot.hand.attitude", hand.attitude);
        let (Some(base_inertia), Some(hand_rotation), true) = (base_inertia, hand_rotation, ok) else {
            return None;
        };
        let links: [Link; 6] = built.try_into().ok()?;
        match RobotModel::new(base_mass, base_inertia, links, vec3(hand.offset), hand_rotation) {
            Ok(m) => Some(m),
            Err(e) => {
                c.error("robot", e.to_string());
                None
            }
        }
    }

    /// Validation report: all findings, errors and warnings alike.
    pub fn validate(&self, src: &str) -> Vec<Finding> {
        match self.build_with(src, Severity::Error) {
            Ok(b) => b.findings,
            Err(ConfigError::Invalid(f)) => f,
            Err(e) => {
                vec![Finding { severity: Severity::Error, line: None, key: String::new(), message: e.to_string() }]
            }
        }
    }
}

/// Parses and builds in one go.
pub fn load(src: &str) -> Result<(Config, Built), ConfigError> {
    let cfg = Config::parse(src)?;
    let built = cfg.build(src)?;
    Ok((cfg, built))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const NOMINAL: &str = r#"
[target]
mass = 200.0
inertia = [30.0, 40.0, 50.0, 0.0, 0.0, 0.0]
grapple = [0.6, 0.0, 0.2]
angular_velocity = [0.05, 0.08, 0.04]
position = [1.0, 0.0, 0.0]

[planner]
w1 = 1.0
w2 = 25.0

[controller]
base_p = 4.0
base_d = 4.0
hand_p = 20.0
hand_d = 6.0
pos_p = 4.0
pos_d = 4.0

[detumble]
tau_max = 1.0
"#;

    #[test]
    fn partial_sim_section_keeps_other_defaults() {
        let src = format!("{NOMINAL}\n[sim]\ndt = 0.002\n");
        let sim = Config::parse(&src).unwrap().sim;
        assert_eq!(sim.dt, 0.002);
        assert_eq!(sim.capture_pos_tol, SimSection::default().capture_pos_tol);
    }

    #[test]
    fn minimal_file_builds_with_defaults() {
        let (cfg, built) = load(NOMINAL).unwrap();
        assert_eq!(cfg.planner.samples, 500);
        assert_eq!(cfg.sim, SimSection::default());
        assert_eq!(built.scenario.model, RobotModel::nominal());
        assert_eq!(built.scenario.robot.joint_angles, RobotModel::nominal_joint_angles());
        assert!(built.findings.is_empty());
    }

    #[test]
    fn unknown_key_is_rejected_with_its_line() {
        let src = NOMINAL.replace("w2 = 25.0", "w2 = 25.0\nw3 = 1.0");
        let err = Config::parse(&src).unwrap_err().to_string();
        assert!(err.contains("w3"), "{err}");
        assert!(err.contains("line 12"), "{err}");
    }

    #[test]
    fn triangle_violation_is_named_and_anchored() {
        let src = NOMINAL.replace("[30.0, 40.0, 50.0,", "[10.0, 10.0, 50.0,");
        let cfg = Config::parse(&src).unwrap();
        let findings = cfg.validate(&src);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].line, Some(4));
        assert!(findings[0].message.contains("triangle inequality"));
    }

    #[test]
    fn bad_values_are_all_reported() {
        let src = NOMINAL
            .replace("mass = 200.0", "mass = -1.0")
            .replace("pos_d = 4.0", "pos_d = [1.0, 0.0, 1.0]")
            .replace("tau_max = 1.0", "tau_max = 1.0\neps_stop = 0.0");
        let findings = Config::parse(&src).unwrap().validate(&src);
        let keys: Vec<&str> = findings.iter().map(|f| f.key.as_str()).collect();
        assert_eq!(keys, ["target.mass", "controller.pos_d", "detumble.eps_stop"]);
        assert_eq!(findings[0].line, Some(3));
    }

    #[test]
    fn non_unit_quaternion_is_rejected() {
        let src = NOMINAL.replace("position = [1.0, 0.0, 0.0]", "attitude = [0.0, 0.0, 0.5, 0.5]");
        let findings = Config::parse(&src).unwrap().validate(&src);
        assert_eq!(findings[0].key, "target.attitude");
        assert_eq!(findings[0].line, Some(7));
    }

    #[test]
    fn near_singular_pose_warns_and_singular_fails() {
        let near = format!("{NOMINAL}\n[robot]\njoint_angles = [0.0, -0.6, 1.2, 0.2, -0.002, 0.1]\n");
        let built = load(&near).unwrap().1;
        assert_eq!(built.findings.len(), 1);
        assert_eq!(built.findings[0].severity, Severity::Warning);
        assert!(built.findings[0].message.contains("condition number"));
        let singular = near.replace("-0.002", "0.0");
        let findings = Config::parse(&singular).unwrap().validate(&singular);
        assert_eq!(findings[0].severity, Severity::Error);
        assert_eq!(findings[0].line, Some(25));
        let built = load(&singular).unwrap().1;
        assert_eq!(built.findings[0].severity, Severity::Warning);
    }

    #[test]
    fn custom_robot_round_trips_the_nominal_one() {
        let m = RobotModel::nominal();
        let mut src = format!(
            "{NOMINAL}\n[robot.base]\nmass = {}\ninertia = [{}, {}, {}, 0.0, 0.0, 0.0]\n",
            m.base_mass,
            m.base_inertia[(0, 0)],
            m.base_inertia[(1, 1)],
            m.base_inertia[(2, 2)]
        );
        let angles = RobotModel::nominal_joint_angles();
        for (l, a) in m.links.iter().zip(angles.iter()) {
            let f = |v: &Vec3| format!("[{:?}, {:?}, {:?}]", v.x, v.y, v.z);
            let i = &l.inertia;
            src += &format!(
                "\n[[robot.links]]\naxis = {}\noffset = {}\nmass = {:?}\ncom = {}\ninertia = [{:?}, {:?}, {:?}, {:?}, {:?}, {:?}]\nangle = {a:?}\n",
                f(&l.axis),
                f(&l.offset),
                l.mass,
                f(&l.com),
                i[(0, 0)],
                i[(1, 1)],
                i[(2, 2)],
                i[(0, 1)],
                i[(0, 2)],
                i[(1, 2)]
            );
        }
        src += &format!("\n[robot.hand]\noffset = [{:?}, 0.0, 0.0]\n", m.hand_offset.x);
        let built = load(&src).unwrap().1;
        assert_eq!(built.scenario.model, m);
        assert_eq!(built.scenario.robot.joint_angles, angles);

        let broken = src.replacen("mass = 2.0", "mass = 0.0", 1);
        let findings = Config::parse(&broken).unwrap().validate(&broken);
        assert_eq!(findings[0].key, "robot.links.3.mass");
        let line = broken.lines().nth(findings[0].line.unwrap() - 1).unwrap();
        assert_eq!(line, "mass = 0.0");
    }
}
