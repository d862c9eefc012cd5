//! Command implementations behind the batch front end.
//!
//! Each command loads its inputs from the paths in [`RunConfig`], runs one
//! pipeline, writes machine-readable artifacts into the output directory,
//! and returns the main artifact so callers (and tests) can inspect it
//! without re-reading files:
//!
//! * `size` — scale a design and report the vehicle (`size_report.json`);
//! * `tune` — tune the 16 gains on a fixed design (`tuning_result.json`,
//!   `gains.json`);
//! * `simulate` — fly the mission with given gains and an optional rotor
//!   failure (`trace.csv`, `sim_summary.json`);
//! * `codesign` — the full nested design search (`history.csv`,
//!   `best_design.json`, `best_gains.json`, `codesign_report.json`).
//!
//! Every run also writes `metadata.json` (command, version, wall-clock
//! time). That file is the only place a timestamp appears: all other
//! artifacts are byte-identical when a command is rerun with the same
//! configuration and seed. JSON artifacts serialize non-finite numbers as
//! `null` (they are write-only reports, never read back by the tool).
//!
//! Commands that finish their search without a feasible result still write
//! all artifacts, then fail with the infeasibility error so batch callers
//! see a nonzero exit but keep the data for inspection.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{load_mission, FaultConfig, RunConfig};
use crate::control::ControlGains;
use crate::designopt::{
    evaluate_candidate, optimize_with, CandidateEvaluation, DesignProblem, Objective,
    CONSTRAINT_NAMES, N_CONSTRAINTS,
};
use crate::dynamics::{recovery_time, simulate_mission, Mission, SimMetrics, TraceRow};
use crate::error::{Error, Result};
use crate::htune::{synthesize, TuningProblem, TuningResult};
use crate::sizing::{
    assemble_vehicle, mass_breakdown, HoverPoint, MassBreakdown, PlantDesign,
    ReferenceComponents, VehicleParams, N_ROTORS,
};

/// Position band for the hover-recovery time reported after a fault \[m\].
pub const RECOVERY_POS_TOL: f64 = 0.1;
/// Attitude band for the hover-recovery time (2°) \[rad\].
pub const RECOVERY_ATT_TOL: f64 = 2.0 * std::f64::consts::PI / 180.0;

// ---------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------

fn load_reference(config: &RunConfig) -> Result<ReferenceComponents> {
    ReferenceComponents::load(&config.reference)
}

fn config_design(config: &RunConfig) -> PlantDesign {
    PlantDesign::from_array(config.design)
}

fn prepare_out(config: &RunConfig, command: &str) -> Result<()> {
    std::fs::create_dir_all(&config.out)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", config.out.display())))?;
    #[derive(Serialize)]
    struct Metadata<'a> {
        command: &'a str,
        tool: &'a str,
        version: &'a str,
        /// Seconds since the Unix epoch; the only timestamp in any artifact.
        unix_time: u64,
    }
    let meta = Metadata {
        command,
        tool: "octodesign",
        version: env!("CARGO_PKG_VERSION"),
        unix_time: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    write_json(&config.out, "metadata.json", &meta)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

/// One design variable with its value and change against the reference.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DesignVariable {
    pub name: &'static str,
    pub value: f64,
    /// Relative change versus the reference vehicle (value − 1).
    pub rel_change: f64,
}

fn design_variables(design: &PlantDesign) -> Vec<DesignVariable> {
    PlantDesign::FIELD_NAMES
        .iter()
        .zip(design.to_array())
        .map(|(name, value)| DesignVariable { name, value, rel_change: value - 1.0 })
        .collect()
}

/// A named constraint value (canonical order, ≤ 0 means satisfied).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NamedConstraint {
    pub name: &'static str,
    pub value: f64,
}

fn named_constraints(c: &[f64; N_CONSTRAINTS]) -> Vec<NamedConstraint> {
    CONSTRAINT_NAMES.iter().zip(c).map(|(name, v)| NamedConstraint { name, value: *v }).collect()
}

// ---------------------------------------------------------------------
// size
// ---------------------------------------------------------------------

/// Everything `size` reports about one scaled design.
#[derive(Debug, Clone, Serialize)]
pub struct SizeReport {
    pub design: Vec<DesignVariable>,
    pub masses: MassBreakdown,
    /// Take-off mass \[kg\].
    pub m_total: f64,
    /// Body inertia diagonal \[kg·m²\].
    pub inertia: [f64; 3],
    /// Arm hub-to-tip length \[m\].
    pub arm_length: f64,
    /// Rotor radius \[m\].
    pub rotor_radius: f64,
    /// Steady hover operating point of one rotor/motor unit.
    pub hover: HoverPoint,
    pub limits: Limits,
}

/// The component limits the design constraints check against.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Limits {
    /// Motor torque \[N·m\].
    pub motor_torque: f64,
    /// Steady winding temperature rise \[K\].
    pub motor_temp_rise: f64,
    /// Rotor speed \[rad/s\].
    pub rotor_speed: f64,
    /// Battery continuous power \[W\].
    pub battery_power: f64,
    /// Battery energy \[J\].
    pub battery_energy: f64,
    /// Bus voltage \[V\].
    pub battery_voltage: f64,
    /// Arm bending stress \[Pa\].
    pub arm_stress: f64,
}

fn limits(p: &VehicleParams) -> Limits {
    Limits {
        motor_torque: p.motor.t_max,
        motor_temp_rise: p.motor.theta_max,
        rotor_speed: p.rotor.omega_max,
        battery_power: p.battery.p_bat,
        battery_energy: p.battery.e_bat,
        battery_voltage: p.battery.u_bat,
        arm_stress: p.arm.sigma_allow,
    }
}

/// Scales the configured design and writes `size_report.json`.
pub fn cmd_size(config: &RunConfig) -> Result<SizeReport> {
    let re = load_reference(config)?;
    let design = config_design(config);
    let params = assemble_vehicle(&design, &re)?;
    let report = SizeReport {
        design: design_variables(&design),
        masses: mass_breakdown(&params, &re),
        m_total: params.m_total,
        inertia: params.inertia,
        arm_length: params.arm.l,
        rotor_radius: params.rotor.r,
        hover: params.hover(),
        limits: limits(&params),
    };
    prepare_out(config, "size")?;
    write_json(&config.out, "size_report.json", &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------
// tune
// ---------------------------------------------------------------------

/// Tunes the 16 gains on the configured design and writes
/// `tuning_result.json` plus the flat `gains.json`.
///
/// With `ftc` on, the requirements cover the nominal plant and all eight
/// single-rotor-failure plants (9 models); off, the nominal plant only.
pub fn cmd_tune(config: &RunConfig) -> Result<TuningResult> {
    let re = load_reference(config)?;
    let params = assemble_vehicle(&config_design(config), &re)?;
    let problem = TuningProblem::new(
        &params,
        config.ftc,
        config.tune.nominal,
        config.tune.degraded,
        config.tune.hinf_rel_tol,
        config.tune.restarts,
        config.seed,
    )?;
    log::info!(
        "tuning {} model(s), budget {}, {} restart(s)",
        problem.models.len(),
        config.tune.budget,
        config.tune.restarts
    );
    let result = synthesize(&problem, None, config.tune.budget)?;
    prepare_out(config, "tune")?;
    write_json(&config.out, "tuning_result.json", &result)?;
    result.gains.save(&config.out.join("gains.json"))?;
    log::info!(
        "tuned: objective {:.4}, feasible {}, {} evaluations",
        result.objective,
        result.feasible,
        result.evaluations
    );
    if !(result.converged && result.feasible) {
        return Err(Error::Infeasible(format!(
            "tuning finished without a feasible gain set (objective {}, worst constraint {})",
            result.objective, result.report.worst_constraint
        )));
    }
    Ok(result)
}

// ---------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------

/// What `simulate` reports next to the trace.
#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    /// Mission duration \[s\].
    pub duration: f64,
    /// Trace rows written.
    pub samples: usize,
    pub fault: Option<FaultConfig>,
    /// Time from the fault back to quiet hover bands (0.1 m, 2°), when a
    /// fault was injected and the flight settled.
    pub recovery_time: Option<f64>,
    pub metrics: SimMetrics,
    /// Steady per-rotor commands over the last 10 % of the flight \[V\].
    pub final_voltages: [f64; N_ROTORS],
}

/// Flies the configured mission and writes `trace.csv` and
/// `sim_summary.json`. Requires a gains file (`gains` in the config or
/// `--gains`).
pub fn cmd_simulate(config: &RunConfig) -> Result<SimSummary> {
    let re = load_reference(config)?;
    let params = assemble_vehicle(&config_design(config), &re)?;
    let gains_path = config
        .gains
        .as_ref()
        .ok_or_else(|| Error::Config("simulate needs a gains file (--gains)".into()))?;
    let gains = ControlGains::load(gains_path)?;
    let mission = load_mission(&config.mission)?;
    let fault = config.fault.map(FaultConfig::to_fault);
    let opts = config.sim.options(fault);
    log::info!(
        "simulating {:.1} s at dt {} s{}",
        mission.duration(),
        opts.dt,
        match &config.fault {
            Some(f) => format!(", rotor {} fails at {} s", f.rotor, f.time),
            None => String::new(),
        }
    );
    let result = simulate_mission(&params, &gains, &mission, &opts)?;
    let recovery = fault.and_then(|f| {
        recovery_time(&result.trace, &mission, f.time, RECOVERY_POS_TOL, RECOVERY_ATT_TOL)
    });
    let summary = SimSummary {
        duration: mission.duration(),
        samples: result.trace.len(),
        fault: config.fault,
        recovery_time: recovery,
        metrics: result.metrics,
        final_voltages: steady_voltages(&result.trace, &mission),
    };
    prepare_out(config, "simulate")?;
    write_text(&config.out, "trace.csv", &trace_csv(&result.trace))?;
    write_json(&config.out, "sim_summary.json", &summary)?;
    Ok(summary)
}

/// Mean per-rotor voltage over the last tenth of the mission — the steady
/// command pattern (after a fault: the re-trimmed distribution).
fn steady_voltages(trace: &[TraceRow], mission: &Mission) -> [f64; N_ROTORS] {
    let t_from = 0.9 * mission.duration();
    let mut sum = [0.0; N_ROTORS];
    let mut count = 0usize;
    for row in trace.iter().filter(|r| r.t >= t_from) {
        for j in 0..N_ROTORS {
            sum[j] += row.voltage[j];
        }
        count += 1;
    }
    if count > 0 {
        for v in sum.iter_mut() {
            *v /= count as f64;
        }
    }
    sum
}

fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("t,x,y,z,vx,vy,vz,roll,pitch,yaw,p,q,r");
    for group in ["omega", "temp_rise", "voltage", "current"] {
        for j in 1..=N_ROTORS {
            let _ = write!(s, ",{group}_{j}");
        }
    }
    s.push_str(",power,energy,pos_err\n");
    for r in trace {
        let _ = write!(s, "{}", r.t);
        for v in r.pos.iter().chain(&r.vel).chain(&r.att).chain(&r.rates) {
            let _ = write!(s, ",{v}");
        }
        for v in r.omega.iter().chain(&r.temp_rise).chain(&r.voltage).chain(&r.current) {
            let _ = write!(s, ",{v}");
        }
        let _ = writeln!(s, ",{},{},{}", r.power, r.energy, r.pos_err);
    }
    s
}

// ---------------------------------------------------------------------
// codesign
// ---------------------------------------------------------------------

/// Headline report of a co-design run (details live in `history.csv` and
/// `best_design.json`).
#[derive(Debug, Clone, Serialize)]
pub struct CodesignReport {
    pub objective: Objective,
    /// Candidate evaluations spent.
    pub evaluations: usize,
    /// Whether the best design satisfies every constraint.
    pub feasible: bool,
    /// Best objective value (mission energy \[J\] or take-off mass \[kg\]).
    pub best_objective: f64,
    /// All-ones reference design objective value, for comparison (the
    /// reference is always the first evaluated candidate).
    pub reference_objective: f64,
    /// Best versus reference, relative.
    pub rel_improvement: f64,
    pub best_design: Vec<DesignVariable>,
    /// Design constraints at the optimum, canonical order.
    pub constraints: Vec<NamedConstraint>,
    pub masses: MassBreakdown,
    /// Take-off mass of the best design \[kg\].
    pub m_total: f64,
    /// Mission energy of the best design \[J\] (if it flew).
    pub mission_energy: Option<f64>,
}

/// Runs the nested design search and writes `history.csv`,
/// `best_design.json`, `best_gains.json`, and `codesign_report.json`.
pub fn cmd_codesign(config: &RunConfig) -> Result<CodesignReport> {
    let re = load_reference(config)?;
    let mission = load_mission(&config.mission)?;
    let mut problem = DesignProblem::new(re.clone(), mission);
    problem.objective = config.objective;
    problem.bounds = config.codesign.bounds.clone();
    problem.ftc_in_sizing = config.ftc;
    problem.fault_scenarios = config.codesign.faults.iter().map(|f| f.to_fault()).collect();
    problem.nominal_tier = config.tune.nominal;
    problem.degraded_tier = config.tune.degraded;
    problem.inner_budget = config.codesign.inner_budget;
    problem.inner_restarts = config.codesign.inner_restarts;
    problem.outer_budget = config.codesign.outer_budget;
    problem.init_samples = config.codesign.init_samples;
    problem.hinf_rel_tol = config.tune.hinf_rel_tol;
    problem.eta_dod = config.codesign.eta_dod;
    problem.power_margin = config.codesign.power_margin;
    problem.sim = config.sim.options(None);
    problem.seed = config.seed;

    log::info!(
        "co-design: {:?} objective, {} evaluations ({} initial), ftc {}",
        problem.objective,
        problem.outer_budget,
        problem.init_samples,
        problem.ftc_in_sizing
    );
    let mut n = 0usize;
    let result = optimize_with(&problem, |design, warm| {
        n += 1;
        let e = evaluate_candidate(design, &problem, warm);
        log::info!(
            "candidate {n}/{}: objective {:.6}, feasible {}",
            problem.outer_budget,
            e.objective,
            e.feasible
        );
        e
    })?;

    let best_params = assemble_vehicle(&result.best.design, &re)?;
    let report = CodesignReport {
        objective: problem.objective,
        evaluations: result.history.len(),
        feasible: result.feasible,
        best_objective: result.best.objective,
        reference_objective: result.history[0].objective,
        rel_improvement: result.best.objective / result.history[0].objective - 1.0,
        best_design: design_variables(&result.best.design),
        constraints: named_constraints(&result.best.constraints),
        masses: mass_breakdown(&best_params, &re),
        m_total: best_params.m_total,
        mission_energy: result.best.metrics.as_ref().map(|m| m.energy),
    };

    prepare_out(config, "codesign")?;
    write_text(&config.out, "history.csv", &history_csv(&result.history))?;
    write_json(&config.out, "best_design.json", &result.best)?;
    if let Some(tuning) = &result.best.tuning {
        tuning.gains.save(&config.out.join("best_gains.json"))?;
    }
    write_json(&config.out, "codesign_report.json", &report)?;
    if !result.feasible {
        return Err(Error::Infeasible(format!(
            "no design satisfied all constraints within {} evaluations",
            result.history.len()
        )));
    }
    Ok(report)
}

fn history_csv(history: &[CandidateEvaluation]) -> String {
    let mut s = String::from("eval");
    for name in PlantDesign::FIELD_NAMES {
        let _ = write!(s, ",{name}");
    }
    s.push_str(",objective,feasible");
    for name in CONSTRAINT_NAMES {
        let _ = write!(s, ",{name}");
    }
    s.push_str(",tuner_evaluations,tuner_objective\n");
    for (i, e) in history.iter().enumerate() {
        let _ = write!(s, "{}", i + 1);
        for v in e.design.to_array() {
            let _ = write!(s, ",{v}");
        }
        let _ = write!(s, ",{},{}", e.objective, u8::from(e.feasible));
        for v in e.constraints {
            let _ = write!(s, ",{v}");
        }
        match &e.tuning {
            Some(t) => {
                let _ = writeln!(s, ",{},{}", t.evaluations, t.objective);
            }
            None => {
                let _ = writeln!(s, ",0,inf");
            }
        }
    }
    s
}
