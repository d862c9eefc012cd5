//! Outer-loop plant design optimization.
//!
//! Minimizes mission energy (or take-off mass) over the six normalized
//! plant ratios. Every candidate evaluation nests the full inner pipeline:
//! scale the vehicle, tune the sixteen gains against the H∞ requirements,
//! fly the mission on the nonlinear simulator, and score seven normalized
//! design constraints (negative = satisfied):
//!
//! 1. peak motor torque vs. the scaled motor's limit,
//! 2. peak winding temperature rise vs. the allowed rise,
//! 3. peak rotor speed vs. the tip-speed limit,
//! 4. rotor overlap: adjacent-arm tip clearance of the four-arm layout,
//! 5. peak electrical power vs. the battery's continuous rating,
//! 6. mission energy vs. the usable battery energy,
//! 7. arm root bending stress at the peak per-arm thrust vs. the allowable.
//!
//! Constraint 6 closes the energy–mass loop without a fixed-point
//! iteration: battery size is a free design variable and consistency
//! (enough usable energy for the mission the sized vehicle actually flies)
//! is just another inequality — the normalized-variable pattern.
//!
//! Because one evaluation costs seconds, the search is surrogate-assisted:
//! a space-filling initial sample (the reference design first, then Latin
//! hypercube points), a cubic radial-basis model of the exact-penalty
//! objective, and infill points that minimize the surrogate minus a
//! distance bonus, with every fifth infill ignoring the surrogate entirely
//! and probing the least-sampled region. Everything is deterministic for a
//! given seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::ControlGains;
use crate::dynamics::{simulate_mission, Fault, Mission, SimMetrics, SimOptions};
use crate::error::{Error, Result};
use crate::htune::{synthesize, TierSpec, TuningProblem, TuningResult, FEASIBLE_TOL};
use crate::sizing::{assemble_vehicle, PlantDesign, ReferenceComponents, VehicleParams};

/// What the outer loop minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Mission energy drawn from the battery \[J\].
    Energy,
    /// Take-off mass \[kg\].
    Mass,
}

/// Number of design variables.
pub const N_DESIGN: usize = 6;

/// Number of design constraints, in the canonical order of
/// [`CONSTRAINT_NAMES`].
pub const N_CONSTRAINTS: usize = 7;

/// Canonical constraint names (order is stable across file outputs).
pub const CONSTRAINT_NAMES: [&str; N_CONSTRAINTS] = [
    "motor_torque",
    "motor_temp",
    "rotor_speed",
    "rotor_overlap",
    "battery_power",
    "battery_energy",
    "arm_stress",
];

/// Box bounds on the design ratios, in [`PlantDesign::FIELD_NAMES`] order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignBounds {
    pub lo: [f64; N_DESIGN],
    pub hi: [f64; N_DESIGN],
}

impl Default for DesignBounds {
    /// Half-to-double on every ratio except blade pitch, whose scaling law
    /// is only trusted in a narrower window.
    fn default() -> Self {
        let theta0 = crate::sizing::THETA0_RANGE;
        DesignBounds {
            lo: [0.5, 0.5, theta0.0, 0.5, 0.5, 0.5],
            hi: [2.0, 2.0, theta0.1, 2.0, 2.0, 2.0],
        }
    }
}

impl DesignBounds {
    pub fn validate(&self) -> Result<()> {
        let ones = PlantDesign::ones().to_array();
        for i in 0..N_DESIGN {
            let name = PlantDesign::FIELD_NAMES[i];
            if !(self.lo[i].is_finite() && self.hi[i].is_finite()) {
                return Err(Error::Config(format!("bounds for {name} must be finite")));
            }
            if self.lo[i] <= 0.0 || self.hi[i] <= self.lo[i] {
                return Err(Error::Config(format!("bounds for {name} must satisfy 0 < lo < hi")));
            }
            if !(self.lo[i]..=self.hi[i]).contains(&ones[i]) {
                return Err(Error::Config(format!(
                    "bounds for {name} must contain the reference value 1"
                )));
            }
        }
        let theta0 = crate::sizing::THETA0_RANGE;
        if self.lo[2] < theta0.0 || self.hi[2] > theta0.1 {
            return Err(Error::Config(format!(
                "theta0_star bounds must stay within the validated window [{}, {}]",
                theta0.0, theta0.1
            )));
        }
        Ok(())
    }

    /// Maps a design to the unit box.
    fn normalize(&self, x: &PlantDesign) -> [f64; N_DESIGN] {
        let a = x.to_array();
        let mut u = [0.0; N_DESIGN];
        for i in 0..N_DESIGN {
            u[i] = (a[i] - self.lo[i]) / (self.hi[i] - self.lo[i]);
        }
        u
    }

    /// Maps a unit-box point back to a design.
    fn denormalize(&self, u: &[f64; N_DESIGN]) -> PlantDesign {
        let mut a = [0.0; N_DESIGN];
        for i in 0..N_DESIGN {
            a[i] = self.lo[i] + u[i].clamp(0.0, 1.0) * (self.hi[i] - self.lo[i]);
        }
        PlantDesign::from_array(a)
    }
}

/// The full outer-loop problem definition.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    /// Reference data set the scaling laws are anchored to.
    pub reference: ReferenceComponents,
    /// Mission the candidate must fly.
    pub mission: Mission,
    pub objective: Objective,
    pub bounds: DesignBounds,
    /// Tune (and optionally size) against the eight single-rotor failures.
    pub ftc_in_sizing: bool,
    /// Fault scenarios simulated for the constraints when
    /// `ftc_in_sizing` is on (constraints take the worst case over the
    /// nominal mission and these runs).
    pub fault_scenarios: Vec<Fault>,
    pub nominal_tier: TierSpec,
    pub degraded_tier: TierSpec,
    /// Requirement-evaluation budget of each inner tuning run.
    pub inner_budget: usize,
    /// Restarts of each inner tuning run.
    pub inner_restarts: usize,
    /// Total candidate evaluations (including the initial sample).
    pub outer_budget: usize,
    /// Initial space-filling sample size.
    pub init_samples: usize,
    /// H∞ tolerance handed to the inner tuner.
    pub hinf_rel_tol: f64,
    /// Usable battery fraction (depth of discharge) in constraint 6.
    pub eta_dod: f64,
    /// Battery continuous-power margin factor in constraint 5.
    pub power_margin: f64,
    /// Simulation options for the mission runs (any fault here is ignored;
    /// faults come from `fault_scenarios`).
    pub sim: SimOptions,
    pub seed: u64,
}

impl DesignProblem {
    /// Desk-scale defaults around a reference data set and mission.
    pub fn new(reference: ReferenceComponents, mission: Mission) -> Self {
        DesignProblem {
            reference,
            mission,
            objective: Objective::Energy,
            bounds: DesignBounds::default(),
            ftc_in_sizing: false,
            fault_scenarios: Vec::new(),
            nominal_tier: TierSpec::nominal_default(),
            degraded_tier: TierSpec::degraded_default(),
            inner_budget: 400,
            inner_restarts: 1,
            outer_budget: 80,
            init_samples: 20,
            hinf_rel_tol: 1e-2,
            eta_dod: 0.8,
            power_margin: 1.0,
            sim: SimOptions::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        self.mission.validate()?;
        if self.inner_budget == 0 || self.inner_restarts == 0 {
            return Err(Error::Config("inner budget and restarts must be at least 1".into()));
        }
        if self.init_samples == 0 {
            return Err(Error::Config("initial sample must have at least 1 point".into()));
        }
        if self.outer_budget < self.init_samples {
            return Err(Error::Config(format!(
                "outer budget {} is smaller than the initial sample {}",
                self.outer_budget, self.init_samples
            )));
        }
        if !(self.eta_dod > 0.0 && self.eta_dod <= 1.0) {
            return Err(Error::Config("eta_dod must lie in (0, 1]".into()));
        }
        if !(self.power_margin.is_finite() && self.power_margin > 0.0) {
            return Err(Error::Config("power_margin must be positive".into()));
        }
        if !(self.hinf_rel_tol.is_finite() && self.hinf_rel_tol > 0.0) {
            return Err(Error::Config("hinf_rel_tol must be positive".into()));
        }
        for f in &self.fault_scenarios {
            if f.rotor >= crate::sizing::N_ROTORS || !(f.time.is_finite() && f.time >= 0.0) {
                return Err(Error::Config("invalid fault scenario".into()));
            }
        }
        Ok(())
    }
}

/// The seven normalized design constraints (≤ 0 means satisfied), in
/// [`CONSTRAINT_NAMES`] order. `None` metrics mark a run that diverged or
/// never produced a trace: every constraint reports `+1`.
pub fn design_constraints(
    metrics: Option<&SimMetrics>,
    params: &VehicleParams,
    problem: &DesignProblem,
) -> [f64; N_CONSTRAINTS] {
    let Some(m) = metrics else {
        return [1.0; N_CONSTRAINTS];
    };
    let overlap = 2.0 * params.rotor.r / (2f64.sqrt() * params.arm.l) - 1.0;
    let bending = m.peak_arm_thrust * params.arm.l / params.arm.z_section;
    [
        m.peak_torque / params.motor.t_max - 1.0,
        m.peak_temp_rise / params.motor.theta_max - 1.0,
        m.peak_omega / params.rotor.omega_max - 1.0,
        overlap,
        m.peak_power / (problem.power_margin * params.battery.p_bat) - 1.0,
        m.energy / (problem.eta_dod * params.battery.e_bat) - 1.0,
        bending / params.arm.sigma_allow - 1.0,
    ]
}

/// One fully evaluated design candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateEvaluation {
    pub design: PlantDesign,
    /// Selector value; `+∞` marks a candidate that could not be evaluated.
    pub objective: f64,
    /// Normalized constraints in [`CONSTRAINT_NAMES`] order.
    pub constraints: [f64; N_CONSTRAINTS],
    /// Every constraint within the feasibility slack (1e−6).
    pub feasible: bool,
    /// Inner tuning outcome (`None` when the vehicle could not even be
    /// assembled or trimmed).
    pub tuning: Option<TuningResult>,
    /// Nominal-mission metrics (`None` when the simulation failed).
    pub metrics: Option<SimMetrics>,
}

impl CandidateEvaluation {
    fn failed(design: PlantDesign, tuning: Option<TuningResult>) -> Self {
        CandidateEvaluation {
            design,
            objective: f64::INFINITY,
            constraints: [1.0; N_CONSTRAINTS],
            feasible: false,
            tuning,
            metrics: None,
        }
    }

    /// Exact-penalty value used by the surrogate and by the all-infeasible
    /// fallback ordering.
    pub fn penalized(&self) -> f64 {
        let violation: f64 = self.constraints.iter().map(|c| c.max(0.0)).sum();
        self.objective + PENALTY_WEIGHT * violation
    }
}

/// Exact-penalty weight folding constraints into the surrogate objective.
const PENALTY_WEIGHT: f64 = 1e3;

/// Evaluates one candidate through the nested pipeline: scale, tune, fly,
/// score. Never fails — candidates that cannot be assembled, trimmed, tuned
/// to the requirements, or flown come back as infeasible markers
/// (`objective = +∞`, all constraints `+1`) so the search can keep moving.
///
/// `warm` seeds the inner tuner (nearby designs have nearby controllers).
pub fn evaluate_candidate(
    design: &PlantDesign,
    problem: &DesignProblem,
    warm: Option<&ControlGains>,
) -> CandidateEvaluation {
    let Ok(params) = assemble_vehicle(design, &problem.reference) else {
        return CandidateEvaluation::failed(*design, None);
    };
    let Ok(tuning_problem) = TuningProblem::new(
        &params,
        problem.ftc_in_sizing,
        problem.nominal_tier,
        problem.degraded_tier,
        problem.hinf_rel_tol,
        problem.inner_restarts,
        problem.seed,
    ) else {
        return CandidateEvaluation::failed(*design, None);
    };
    let Ok(tuning) = synthesize(&tuning_problem, warm, problem.inner_budget) else {
        return CandidateEvaluation::failed(*design, None);
    };
    if !(tuning.converged && tuning.feasible) {
        // The control requirements are part of design feasibility: a plant
        // that cannot be tuned to them is not a viable vehicle.
        return CandidateEvaluation::failed(*design, Some(tuning));
    }

    let nominal_opts = SimOptions { fault: None, ..problem.sim };
    let nominal = simulate_mission(&params, &tuning.gains, &problem.mission, &nominal_opts);
    let Ok(nominal) = nominal else {
        // Diverged (or invalid) flight: constraints all +1. The mass
        // objective is still the assembled mass; mission energy is unknown.
        let objective = match problem.objective {
            Objective::Energy => f64::INFINITY,
            Objective::Mass => params.m_total,
        };
        return CandidateEvaluation {
            design: *design,
            objective,
            constraints: [1.0; N_CONSTRAINTS],
            feasible: false,
            tuning: Some(tuning),
            metrics: None,
        };
    };

    let mut constraints = design_constraints(Some(&nominal.metrics), &params, problem);
    if problem.ftc_in_sizing {
        // Worst case over the fault scenarios, element-wise. The objective
        // stays the nominal mission's (faults are certification runs, not
        // the sizing mission).
        for fault in &problem.fault_scenarios {
            let opts = SimOptions { fault: Some(*fault), ..problem.sim };
            match simulate_mission(&params, &tuning.gains, &problem.mission, &opts) {
                Ok(run) => {
                    let c = design_constraints(Some(&run.metrics), &params, problem);
                    for i in 0..N_CONSTRAINTS {
                        constraints[i] = constraints[i].max(c[i]);
                    }
                }
                Err(_) => {
                    constraints = [1.0; N_CONSTRAINTS];
                    break;
                }
            }
        }
    }

    let objective = match problem.objective {
        Objective::Energy => nominal.metrics.energy,
        Objective::Mass => params.m_total,
    };
    let feasible = constraints.iter().all(|c| *c <= FEASIBLE_TOL);
    CandidateEvaluation {
        design: *design,
        objective,
        constraints,
        feasible,
        tuning: Some(tuning),
        metrics: Some(nominal.metrics),
    }
}

/// Outcome of the outer search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignResult {
    /// Best feasible candidate, or — when nothing was feasible — the
    /// lowest-penalty candidate (`feasible` says which).
    pub best: CandidateEvaluation,
    /// Every evaluation in order.
    pub history: Vec<CandidateEvaluation>,
    /// Whether `best` satisfies all constraints.
    pub feasible: bool,
}

/// Cubic radial-basis interpolant with a linear polynomial tail on the
/// unit box.
struct Rbf {
    centers: Vec<[f64; N_DESIGN]>,
    weights: Vec<f64>,
    poly: [f64; N_DESIGN + 1],
}

fn dist(a: &[f64; N_DESIGN], b: &[f64; N_DESIGN]) -> f64 {
    let mut s = 0.0;
    for i in 0..N_DESIGN {
        s += (a[i] - b[i]).powi(2);
    }
    s.sqrt()
}

impl Rbf {
    /// Fits the interpolant; `None` when the system is singular (e.g.
    /// duplicate points) or has no finite values to work with.
    fn fit(points: &[[f64; N_DESIGN]], values: &[f64]) -> Option<Rbf> {
        let n = points.len();
        if n < N_DESIGN + 1 || values.iter().all(|v| !v.is_finite()) {
            return None;
        }
        // Cap non-finite (failed-candidate) values above the finite range
        // so the surrogate steers away from them without poisoning the fit.
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            if v.is_finite() {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        let cap = hi + 2.0 * (hi - lo).max(1.0);
        let f: Vec<f64> = values.iter().map(|v| if v.is_finite() { *v } else { cap }).collect();

        let m = n + N_DESIGN + 1;
        let mut sys = nalgebra::DMatrix::zeros(m, m);
        let mut rhs = nalgebra::DVector::zeros(m);
        for i in 0..n {
            for j in 0..n {
                sys[(i, j)] = dist(&points[i], &points[j]).powi(3);
            }
            sys[(i, n)] = 1.0;
            sys[(n, i)] = 1.0;
            for k in 0..N_DESIGN {
                sys[(i, n + 1 + k)] = points[i][k];
                sys[(n + 1 + k, i)] = points[i][k];
            }
            rhs[i] = f[i];
        }
        let sol = sys.lu().solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut poly = [0.0; N_DESIGN + 1];
        for k in 0..=N_DESIGN {
            poly[k] = sol[n + k];
        }
        Some(Rbf { centers: points.to_vec(), weights: sol.as_slice()[..n].to_vec(), poly })
    }

    fn predict(&self, u: &[f64; N_DESIGN]) -> f64 {
        let mut s = self.poly[0];
        for k in 0..N_DESIGN {
            s += self.poly[1 + k] * u[k];
        }
        for (c, w) in self.centers.iter().zip(&self.weights) {
            s += w * dist(c, u).powi(3);
        }
        s
    }
}

/// Latin-hypercube sample of `n` points on the unit box.
fn latin_hypercube(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; N_DESIGN]> {
    let mut pts = vec![[0.0; N_DESIGN]; n];
    for dim in 0..N_DESIGN {
        let mut strata: Vec<usize> = (0..n).collect();
        // Fisher–Yates with the shared stream keeps the sample reproducible.
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            strata.swap(i, j);
        }
        for (p, s) in pts.iter_mut().zip(&strata) {
            p[dim] = (*s as f64 + rng.gen_range(0.0..1.0)) / n as f64;
        }
    }
    pts
}

/// Distance from `u` to the nearest sampled point.
fn min_distance(u: &[f64; N_DESIGN], points: &[[f64; N_DESIGN]]) -> f64 {
    points.iter().map(|p| dist(p, u)).fold(f64::INFINITY, f64::min)
}

/// Distance-bonus weights cycled across surrogate infills (relative to the
/// sampled value spread); every fifth infill is pure exploration instead.
const BONUS_CYCLE: [f64; 4] = [0.3, 0.1, 0.03, 0.0];

/// Runs the outer search with a caller-supplied candidate evaluator.
///
/// The evaluator receives the candidate design and the gains of the best
/// candidate so far (for warm-starting an inner tuner; synthetic
/// evaluators may ignore it). Identical `(problem, evaluator)` pairs
/// reproduce identical histories, bit for bit.
pub fn optimize_with<F>(problem: &DesignProblem, mut eval: F) -> Result<DesignResult>
where
    F: FnMut(&PlantDesign, Option<&ControlGains>) -> CandidateEvaluation,
{
    problem.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);

    // Initial sample: the reference design first (the bounds are required
    // to contain it), then a Latin hypercube over the box.
    let n0 = problem.init_samples.min(problem.outer_budget);
    let mut points: Vec<[f64; N_DESIGN]> = Vec::with_capacity(problem.outer_budget);
    points.push(problem.bounds.normalize(&PlantDesign::ones()));
    points.extend(latin_hypercube(n0.saturating_sub(1), &mut rng));

    let mut history: Vec<CandidateEvaluation> = Vec::with_capacity(problem.outer_budget);
    let mut values: Vec<f64> = Vec::with_capacity(problem.outer_budget);
    // Index of the incumbent: best feasible by objective, else best
    // penalized.
    let mut best: Option<usize> = None;

    let run_one = |u: &[f64; N_DESIGN],
                       history: &mut Vec<CandidateEvaluation>,
                       values: &mut Vec<f64>,
                       best: &mut Option<usize>,
                       eval: &mut F| {
        let design = problem.bounds.denormalize(u);
        let warm = best
            .map(|i| &history[i])
            .and_then(|e: &CandidateEvaluation| e.tuning.as_ref())
            .map(|t| t.gains);
        let e = eval(&design, warm.as_ref());
        values.push(e.penalized());
        history.push(e);
        let i = history.len() - 1;
        let better = match *best {
            None => true,
            Some(b) => {
                let (eb, ei) = (&history[b], &history[i]);
                match (eb.feasible, ei.feasible) {
                    (false, true) => true,
                    (true, false) => false,
                    (true, true) => ei.objective < eb.objective,
                    (false, false) => ei.penalized() < eb.penalized(),
                }
            }
        };
        if better {
            *best = Some(i);
        }
    };

    for i in 0..points.len() {
        let u = points[i];
        run_one(&u, &mut history, &mut values, &mut best, &mut eval);
    }

    // Infill loop.
    let mut infill_index = 0usize;
    while history.len() < problem.outer_budget {
        let u = propose_infill(&points, &values, infill_index, &mut rng);
        points.push(u);
        run_one(&u, &mut history, &mut values, &mut best, &mut eval);
        infill_index += 1;
    }

    let best_idx = best.expect("at least one evaluation");
    let best = history[best_idx].clone();
    let feasible = best.feasible;
    Ok(DesignResult { best, history, feasible })
}

/// Chooses the next sample point: usually the minimizer of the surrogate
/// minus a distance bonus over a random candidate cloud (polished by a
/// short pattern search), every fifth time the most remote candidate, and
/// always at least a tiny step away from existing samples.
fn propose_infill(
    points: &[[f64; N_DESIGN]],
    values: &[f64],
    infill_index: usize,
    rng: &mut ChaCha8Rng,
) -> [f64; N_DESIGN] {
    // Candidate cloud: uniform coverage plus a cluster around the best
    // sampled point (drawn every call to keep the stream advancing
    // identically whether or not the surrogate fit succeeds).
    let n_uniform = 1536;
    let n_local = 512;
    let mut cloud: Vec<[f64; N_DESIGN]> = Vec::with_capacity(n_uniform + n_local);
    for _ in 0..n_uniform {
        let mut u = [0.0; N_DESIGN];
        for v in u.iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        cloud.push(u);
    }
    let best_idx = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let anchor = points[best_idx];
    for _ in 0..n_local {
        let mut u = anchor;
        for v in u.iter_mut() {
            *v = (*v + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0);
        }
        cloud.push(u);
    }

    let explore = infill_index % 5 == 4;
    let rbf = if explore { None } else { Rbf::fit(points, values) };

    let chosen = match &rbf {
        None => {
            // Pure exploration: the candidate farthest from any sample.
            *cloud
                .iter()
                .max_by(|a, b| min_distance(a, points).total_cmp(&min_distance(b, points)))
                .unwrap()
        }
        Some(model) => {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in values.iter().filter(|v| v.is_finite()) {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
            let spread = (hi - lo).max(1e-9);
            let beta = BONUS_CYCLE[infill_index % BONUS_CYCLE.len()] * spread;
            let score =
                |u: &[f64; N_DESIGN]| model.predict(u) - beta * min_distance(u, points);
            let mut best_u = cloud[0];
            let mut best_s = score(&best_u);
            for u in &cloud[1..] {
                let s = score(u);
                if s < best_s {
                    best_s = s;
                    best_u = *u;
                }
            }
            // Short coordinate polish on the surrogate (cheap predictions).
            let mut step = 0.05;
            while step > 1e-3 {
                let mut improved = false;
                for k in 0..N_DESIGN {
                    for sgn in [1.0, -1.0] {
                        let mut trial = best_u;
                        trial[k] = (trial[k] + sgn * step).clamp(0.0, 1.0);
                        let s = score(&trial);
                        if s < best_s {
                            best_s = s;
                            best_u = trial;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            best_u
        }
    };

    // Never resample an existing point: re-evaluating tells the search
    // nothing, and duplicates would make the next fit singular.
    if min_distance(&chosen, points) < 1e-6 {
        return *cloud
            .iter()
            .max_by(|a, b| min_distance(a, points).total_cmp(&min_distance(b, points)))
            .unwrap();
    }
    chosen
}

/// Runs the outer search with the real nested evaluator.
pub fn optimize(problem: &DesignProblem) -> Result<DesignResult> {
    optimize_with(problem, |design, warm| evaluate_candidate(design, problem, warm))
}
