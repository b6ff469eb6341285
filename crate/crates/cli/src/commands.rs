//! Subcommand implementations. Each returns a [`CliError`] carrying the
//! process exit code on failure.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use orbitgrasp::config::{Config, ConfigError, Finding, Severity};
use orbitgrasp::controller::Measured;
use orbitgrasp::detumble::{detumble_duration, plan_detumble as detumble_plan, verify_costate, DetumbleError};
use orbitgrasp::precapture::{plan, HandStart, PrecaptureError};
use orbitgrasp::sim::{run, EventKind, LogRecord, Phase, Scenario, SimError, Simulator, StepError};
use orbitgrasp::target::{grapple_position, grapple_velocity, propagate_for, TargetPredictor, TargetState};
use orbitgrasp::Vec3;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::output::{create_dir, write_csv, write_gnuplot, write_json, Panel};

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NO_ROOT: u8 = 2;
pub const EXIT_CAPTURE: u8 = 3;
pub const EXIT_DETUMBLE: u8 = 4;

/// Step used to predict the target for output tables (s).
const PREDICT_DT: f64 = 1e-3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(EXIT_CONFIG, format!("{}: {e}", path.display()))
    }
}

/// A validated scenario file.
struct Loaded {
    config: Config,
    scenario: Scenario,
    sha256: String,
}

fn read_config(path: &Path) -> Result<(String, Config), CliError> {
    let src = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let config = Config::parse(&src).map_err(|e| CliError::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    Ok((src, config))
}

fn load(path: &Path) -> Result<Loaded, CliError> {
    let (src, config) = read_config(path)?;
    let sha256 = format!("{:x}", Sha256::digest(src.as_bytes()));
    match config.build(&src) {
        Ok(built) => {
            for f in &built.findings {
                warn!("{}: {f}", path.display());
            }
            Ok(Loaded { config, scenario: built.scenario, sha256 })
        }
        Err(ConfigError::Invalid(findings)) => Err(CliError::new(EXIT_CONFIG, report(path, &findings))),
        Err(e) => Err(CliError::new(EXIT_CONFIG, format!("{}: {e}", path.display()))),
    }
}

fn report(path: &Path, findings: &[Finding]) -> String {
    findings.iter().map(|f| format!("{}: {f}", path.display())).collect::<Vec<_>>().join("\n")
}

fn xyz(prefix: &str) -> [String; 3] {
    ["x", "y", "z"].map(|a| format!("{prefix}_{a}"))
}

fn precapture_code(e: &PrecaptureError) -> u8 {
    match e {
        PrecaptureError::NoRoot { .. } => EXIT_NO_ROOT,
        _ => EXIT_CAPTURE,
    }
}

pub fn plan_precapture(path: &Path, t0: f64, out: &Path, gnuplot: bool) -> Result<(), CliError> {
    let loaded = load(path)?;
    if !(t0 >= 0.0 && t0.is_finite()) {
        return Err(CliError::new(EXIT_CONFIG, format!("--t0 must be a non-negative time, got {t0}")));
    }
    let sc = &loaded.scenario;
    let p = &loaded.config.planner;
    let measured = Measured::from_robot(&sc.model, &sc.robot);
    let hand = HandStart {
        position: p.hand_position.map(Vec3::from).unwrap_or(measured.hand_position),
        velocity: p.hand_velocity.map(Vec3::from).unwrap_or(measured.hand_velocity),
    };
    let fail =
        |e: orbitgrasp::target::TargetError| CliError::new(EXIT_CAPTURE, format!("target prediction failed: {e}"));
    let start = propagate_for(&sc.target_state, &sc.target, t0, PREDICT_DT).map_err(fail)?;
    create_dir(out)?;

    let result = plan(&hand, &start, &sc.target, &sc.weights, sc.window);
    let plan = match result {
        Ok(plan) => plan,
        Err(e) => {
            if let PrecaptureError::NoRoot { samples, .. } = &e {
                let csv = out.join("precapture_hamiltonian.csv");
                let rows = samples.iter().map(|&(t, h)| vec![t0 + t, t, h]);
                write_csv(&csv, &["t_f1".into(), "horizon".into(), "hamiltonian".into()], rows)?;
                if gnuplot || loaded.config.output.gnuplot {
                    let panel = Panel { title: "terminal Hamiltonian", ylabel: "H", columns: &["hamiltonian"] };
                    write_gnuplot(&csv, "t_f1", &[panel])?;
                }
                write_json(
                    &out.join("precapture_plan.json"),
                    &json!({ "config_sha256": loaded.sha256, "status": "NO_ROOT", "t0": t0, "error": e.to_string() }),
                )?;
            }
            return Err(CliError::new(precapture_code(&e), format!("{}: {e}", path.display())));
        }
    };

    let mut predictor = TargetPredictor::new(start, sc.target.clone(), PREDICT_DT).map_err(fail)?;
    let rho = *sc.target.grapple();
    let n = p.samples;
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let s = plan.t_f1 * k as f64 / (n - 1) as f64;
        let r = plan.eval_clamped(s);
        let x = predictor.state_at(s).map_err(fail)?;
        let mut row = vec![t0 + s];
        for v in [r.position, r.velocity, r.acceleration, grapple_position(&x, &rho), grapple_velocity(&x, &rho)] {
            row.extend(v.iter());
        }
        rows.push(row);
    }
    let mut columns = vec!["t".to_string()];
    for prefix in ["r", "r_dot", "r_ddot", "r_c", "r_c_dot"] {
        columns.extend(xyz(prefix));
    }
    let csv = out.join("precapture_trajectory.csv");
    write_csv(&csv, &columns, rows)?;
    if gnuplot || loaded.config.output.gnuplot {
        let panels = [
            Panel {
                title: "hand and grapple position",
                ylabel: "m",
                columns: &["r_x", "r_y", "r_z", "r_c_x", "r_c_y", "r_c_z"],
            },
            Panel { title: "hand acceleration", ylabel: "m/s^2", columns: &["r_ddot_x", "r_ddot_y", "r_ddot_z"] },
        ];
        write_gnuplot(&csv, "t", &panels)?;
    }

    let end = plan.eval_clamped(plan.t_f1);
    let x_end = predictor.state_at(plan.t_f1).map_err(fail)?;
    let begin = plan.eval_clamped(0.0);
    let residuals = json!({
        "start_position": (begin.position - hand.position).norm(),
        "start_velocity": (begin.velocity - hand.velocity).norm(),
        "end_position": (end.position - grapple_position(&x_end, &rho)).norm(),
        "end_velocity": (end.velocity - grapple_velocity(&x_end, &rho)).norm(),
    });
    info!("rendezvous {:.6} s after t0 = {t0}", plan.t_f1);
    write_json(
        &out.join("precapture_plan.json"),
        &json!({
            "config_sha256": loaded.sha256,
            "status": "ok",
            "t0": t0,
            "t_f1": plan.t_f1,
            "rendezvous_time": t0 + plan.t_f1,
            "sigma": plan.sigma,
            "kappa": plan.kappa,
            "terminal_hamiltonian": plan.hamiltonian,
            "performance_index": plan.performance_index(1000),
            "boundary_residuals": residuals,
            "hand_start": { "position": hand.position, "velocity": hand.velocity },
            "weights": plan.weights,
            "rendezvous": target_json(&plan.rendezvous),
        }),
    )
}

fn target_json(x: &TargetState) -> serde_json::Value {
    json!({
        "attitude": x.attitude.to_vector4().as_slice(),
        "angular_velocity": x.omega,
        "position": x.position,
        "velocity": x.velocity,
    })
}

pub fn plan_detumble(path: &Path, out: &Path, gnuplot: bool) -> Result<(), CliError> {
    let loaded = load(path)?;
    let sc = &loaded.scenario;
    let fail = |e: DetumbleError| CliError::new(EXIT_DETUMBLE, format!("{}: {e}", path.display()));
    let plan = detumble_plan(&sc.target_state, &sc.target, &sc.detumble).map_err(fail)?;
    let grasp =
        *Simulator::new(sc).map_err(|e| CliError::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?.grasp();
    create_dir(out)?;

    let mut columns = vec!["t".to_string()];
    columns.extend(xyz("omega"));
    columns.extend(["qx", "qy", "qz", "qs"].map(|a| format!("q_{a}")));
    columns.extend(xyz("tau"));
    columns.push("momentum_norm".into());
    for prefix in ["hand_pos", "hand_vel", "hand_acc"] {
        columns.extend(xyz(prefix));
    }
    let mut rows = Vec::with_capacity(plan.samples.len());
    for s in &plan.samples {
        let r = plan.hand_reference(s.t, &grasp).map_err(fail)?.translation;
        let mut row = vec![s.t];
        row.extend(s.state.omega.iter());
        row.extend(s.state.attitude.to_vector4().iter());
        row.extend(s.torque.iter());
        row.push(s.momentum);
        for v in [r.position, r.velocity, r.acceleration] {
            row.extend(v.iter());
        }
        rows.push(row);
    }
    let csv = out.join("detumble_plan.csv");
    write_csv(&csv, &columns, rows)?;
    if gnuplot || loaded.config.output.gnuplot {
        let panels = [
            Panel { title: "angular velocity", ylabel: "rad/s", columns: &["omega_x", "omega_y", "omega_z"] },
            Panel { title: "angular momentum norm", ylabel: "N m s", columns: &["momentum_norm"] },
            Panel { title: "torque", ylabel: "N m", columns: &["tau_x", "tau_y", "tau_z"] },
        ];
        write_gnuplot(&csv, "t", &panels)?;
    }

    let costate = (plan.samples.len() >= 5).then(|| verify_costate(&plan));
    write_json(
        &out.join("detumble_summary.json"),
        &json!({
            "config_sha256": loaded.sha256,
            "status": "ok",
            "t_f2": plan.t_f2,
            "closed_form_duration": detumble_duration(&sc.target_state.omega, sc.target.inertia(), plan.tau_max),
            "initial_momentum": plan.initial_momentum,
            "eps_stop": plan.eps_stop,
            "tau_max": plan.tau_max,
            "dt": plan.dt,
            "samples": plan.samples.len(),
            "affine_decay_deviation": plan.affine_decay_deviation(),
            "costate_residual": costate.map(|c| c.max_residual),
            "max_hamiltonian": costate.map(|c| c.max_hamiltonian),
        }),
    )
}

/// Event times of a finished run, for batch reports.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RunReport {
    pub capture: Option<f64>,
    pub detumbled: Option<f64>,
}

fn sim_code(e: &SimError) -> u8 {
    match (&e.error, e.phase) {
        (StepError::Precapture(PrecaptureError::NoRoot { .. }), _) => EXIT_NO_ROOT,
        (_, Phase::Capture) => EXIT_CAPTURE,
        (_, Phase::Detumble) => EXIT_DETUMBLE,
    }
}

pub fn simulate(path: &Path, out_dir: &Path, gnuplot: bool) -> Result<RunReport, CliError> {
    let loaded = load(path)?;
    create_dir(out_dir)?;
    let summary_path = out_dir.join("sim_summary.json");
    let log = match run(&loaded.scenario) {
        Ok(log) => log,
        Err(e) => {
            write_json(
                &summary_path,
                &json!({
                    "config_sha256": loaded.sha256,
                    "status": "error",
                    "phase": e.phase.to_string(),
                    "error": e.error.to_string(),
                }),
            )?;
            return Err(CliError::new(sim_code(&e), format!("{}: {e}", path.display())));
        }
    };

    let every = loaded.config.output.every;
    let last = log.records.len().saturating_sub(1);
    let rows = log.records.iter().enumerate().filter(|(i, _)| i % every == 0 || *i == last).map(|(_, r)| r.values());
    let csv = out_dir.join("sim_log.csv");
    write_csv(&csv, &LogRecord::columns(), rows)?;
    if gnuplot || loaded.config.output.gnuplot {
        let panels = [
            Panel {
                title: "hand position and reference",
                ylabel: "m",
                columns: &["hand_pos_x", "hand_pos_y", "hand_pos_z", "ref_pos_x", "ref_pos_y", "ref_pos_z"],
            },
            Panel { title: "target angular momentum norm", ylabel: "N m s", columns: &["target_momentum_norm"] },
            Panel { title: "linear momentum", ylabel: "kg m/s", columns: &["momentum_x", "momentum_y", "momentum_z"] },
            Panel { title: "tracking errors", ylabel: "", columns: &["err_base_att", "err_hand_att", "err_pos"] },
        ];
        write_gnuplot(&csv, "t", &panels)?;
    }

    let event = |kind: EventKind| log.events.iter().find(|e| e.kind == kind).map(|e| e.t);
    let report = RunReport { capture: event(EventKind::Capture), detumbled: event(EventKind::Detumbled) };
    let detumble = log.detumble.as_ref().map(|p| {
        json!({ "t_f2": p.t_f2, "eps_stop": p.eps_stop, "tau_max": p.tau_max, "initial_momentum": p.initial_momentum })
    });
    write_json(
        &summary_path,
        &json!({
            "config_sha256": loaded.sha256,
            "status": "ok",
            "events": log.events,
            "summary": log.summary,
            "precapture": log.precapture,
            "detumble": detumble,
            "records": log.records.len(),
        }),
    )?;
    info!("{}: capture {:?}, detumbled {:?}", path.display(), report.capture, report.detumbled);
    Ok(report)
}

pub fn validate(path: &Path) -> Result<(), CliError> {
    let (src, config) = read_config(path)?;
    let findings = config.validate(&src);
    let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
    for f in &findings {
        println!("{}: {f}", path.display());
    }
    if errors > 0 {
        return Err(CliError::new(EXIT_CONFIG, format!("{}: {errors} error(s)", path.display())));
    }
    println!("{}: ok ({} warning(s))", path.display(), findings.len());
    Ok(())
}

pub fn batch(configs: &[PathBuf], out_dir: &Path, gnuplot: bool) -> Result<(), CliError> {
    create_dir(out_dir)?;
    let dirs: Vec<PathBuf> = configs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let stem = c.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
            out_dir.join(format!("{i:03}_{stem}"))
        })
        .collect();
    let results: Vec<Result<RunReport, CliError>> =
        configs.par_iter().zip(&dirs).map(|(c, d)| simulate(c, d, gnuplot)).collect();

    let mut entries = Vec::with_capacity(results.len());
    let mut first_failure = None;
    for ((config, dir), result) in configs.iter().zip(&dirs).zip(&results) {
        let (code, report, message) = match result {
            Ok(r) => (0, Some(r), None),
            Err(e) => (e.code, None, Some(e.message.clone())),
        };
        println!("{}: exit {code}", config.display());
        if code != 0 {
            first_failure.get_or_insert(code);
        }
        entries.push(json!({
            "config": config.display().to_string(),
            "output": dir.display().to_string(),
            "exit_code": code,
            "events": report,
            "error": message,
        }));
    }
    write_json(&out_dir.join("batch_summary.json"), &entries)?;
    match first_failure {
        None => Ok(()),
        Some(code) => Err(CliError::new(code, "batch: some scenarios failed")),
    }
}
