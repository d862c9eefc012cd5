//! Run configuration and input-file schemas for the command-line front end.
//!
//! One JSON file configures every subcommand; command-line flags override
//! individual values after loading. All fields have desk-scale defaults, so
//! an empty object `{}` is a valid configuration. Unknown keys are rejected
//! (typos should fail loudly, not silently fall back to defaults).
//!
//! Missions are written as an ordered list of flight segments (take-off,
//! climb, cruise, hover, descend, land); each segment starts where the
//! previous one ends, so the profile is continuous by construction. The
//! segments compile into the time-stamped waypoint form the simulator
//! consumes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::designopt::{DesignBounds, Objective};
use crate::dynamics::{Fault, Mission, SimOptions, Waypoint};
use crate::error::{Error, Result};
use crate::htune::TierSpec;
use crate::sizing::{PlantDesign, N_ROTORS};

/// Configuration shared by all subcommands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Reference component data set (JSON).
    pub reference: PathBuf,
    /// Mission profile (JSON, flight-segment schema).
    pub mission: PathBuf,
    /// Output directory (created if missing).
    pub out: PathBuf,
    /// Seed for every stochastic search.
    pub seed: u64,
    /// What the co-design minimizes.
    pub objective: Objective,
    /// Tune (and certify) against all eight single-rotor failures.
    pub ftc: bool,
    /// Design ratios used by `size`, `tune`, and `simulate`, in
    /// [`PlantDesign::FIELD_NAMES`] order.
    pub design: [f64; 6],
    /// Gains file consumed by `simulate`.
    pub gains: Option<PathBuf>,
    /// Rotor failure injected by `simulate`.
    pub fault: Option<FaultConfig>,
    pub tune: TuneConfig,
    pub codesign: CodesignConfig,
    pub sim: SimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            reference: PathBuf::from("fixtures/reference.json"),
            mission: PathBuf::from("fixtures/mission.json"),
            out: PathBuf::from("out"),
            seed: 0,
            objective: Objective::Energy,
            ftc: true,
            design: PlantDesign::ones().to_array(),
            gains: None,
            fault: None,
            tune: TuneConfig::default(),
            codesign: CodesignConfig::default(),
            sim: SimConfig::default(),
        }
    }
}

impl RunConfig {
    /// Loads and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad config file {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        PlantDesign::from_array(self.design).validate()?;
        if let Some(f) = &self.fault {
            f.validate()?;
        }
        self.tune.validate()?;
        self.codesign.validate()?;
        self.sim.validate()?;
        Ok(())
    }
}

/// A rotor failure, numbered as on the airframe (1–8).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    /// Rotor number, 1–8 (1–4 top ring, 5–8 bottom).
    pub rotor: usize,
    /// Failure time since mission start \[s\].
    pub time: f64,
}

impl FaultConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rotor == 0 || self.rotor > N_ROTORS {
            return Err(Error::Config(format!(
                "fault rotor must be 1..={N_ROTORS}, got {}",
                self.rotor
            )));
        }
        if !(self.time.is_finite() && self.time >= 0.0) {
            return Err(Error::Config("fault time must be a finite non-negative number".into()));
        }
        Ok(())
    }

    /// Converts to the zero-indexed internal form.
    pub fn to_fault(self) -> Fault {
        Fault { rotor: self.rotor - 1, time: self.time }
    }

    /// Parses the command-line form `ROTOR:TIME`, e.g. `1:3.0`.
    pub fn parse(s: &str) -> Result<Self> {
        let (rotor, time) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("fault must be ROTOR:TIME, got {s:?}")))?;
        let f = FaultConfig {
            rotor: rotor
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad fault rotor {rotor:?}")))?,
            time: time
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad fault time {time:?}")))?,
        };
        f.validate()?;
        Ok(f)
    }
}

/// Knobs of the standalone gain tuner (`tune`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    /// Requirement-evaluation budget.
    pub budget: usize,
    /// Multi-start restarts.
    pub restarts: usize,
    /// Relative tolerance of the H∞ norm inside the search.
    pub hinf_rel_tol: f64,
    /// Requirement tier for the healthy vehicle.
    pub nominal: TierSpec,
    /// Relaxed tier for the single-failure vehicles.
    pub degraded: TierSpec,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            budget: 400,
            restarts: 3,
            hinf_rel_tol: 1e-2,
            nominal: TierSpec::nominal_default(),
            degraded: TierSpec::degraded_default(),
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 || self.restarts == 0 {
            return Err(Error::Config("tune budget and restarts must be at least 1".into()));
        }
        if !(self.hinf_rel_tol.is_finite() && self.hinf_rel_tol > 0.0) {
            return Err(Error::Config("tune hinf_rel_tol must be positive".into()));
        }
        self.nominal.validate()?;
        self.degraded.validate()?;
        Ok(())
    }
}

/// Knobs of the outer design search (`codesign`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodesignConfig {
    /// Total candidate evaluations (including the initial sample).
    pub outer_budget: usize,
    /// Space-filling initial sample size.
    pub init_samples: usize,
    /// Requirement-evaluation budget of each nested tuning run.
    pub inner_budget: usize,
    /// Restarts of each nested tuning run.
    pub inner_restarts: usize,
    /// Usable battery fraction (depth of discharge).
    pub eta_dod: f64,
    /// Battery continuous-power margin factor.
    pub power_margin: f64,
    /// Box bounds on the design ratios.
    pub bounds: DesignBounds,
    /// Fault scenarios flown for the design constraints when `ftc` is on.
    pub faults: Vec<FaultConfig>,
}

impl Default for CodesignConfig {
    fn default() -> Self {
        CodesignConfig {
            outer_budget: 80,
            init_samples: 20,
            inner_budget: 400,
            inner_restarts: 1,
            eta_dod: 0.8,
            power_margin: 1.0,
            bounds: DesignBounds::default(),
            faults: Vec::new(),
        }
    }
}

impl CodesignConfig {
    pub fn validate(&self) -> Result<()> {
        // Budget consistency is checked by the design problem itself; here
        // only the file-level well-formedness.
        self.bounds.validate()?;
        for f in &self.faults {
            f.validate()?;
        }
        if !(self.eta_dod > 0.0 && self.eta_dod <= 1.0) {
            return Err(Error::Config("codesign eta_dod must lie in (0, 1]".into()));
        }
        if !(self.power_margin.is_finite() && self.power_margin > 0.0) {
            return Err(Error::Config("codesign power_margin must be positive".into()));
        }
        Ok(())
    }
}

/// Simulation step sizes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Integration and control step \[s\].
    pub dt: f64,
    /// Keep every n-th sample in trace files.
    pub record_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { dt: 0.005, record_every: 10 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= 0.1) {
            return Err(Error::Config("sim dt must lie in (0, 0.1] seconds".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("sim record_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Simulator options with a fault slot.
    pub fn options(&self, fault: Option<Fault>) -> SimOptions {
        SimOptions { dt: self.dt, record_every: self.record_every, fault }
    }
}

/// A mission written as flight segments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionSpec {
    /// Start position, world frame \[m\] (default: origin).
    #[serde(default)]
    pub start: [f64; 3],
    /// Start heading \[rad\].
    #[serde(default)]
    pub start_yaw: f64,
    pub segments: Vec<Segment>,
}

/// One flight segment. Each segment begins where the previous one ends.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    #[serde(rename = "type")]
    pub kind: SegmentKind,
    /// Segment duration \[s\].
    pub duration: f64,
    /// Target altitude \[m\] — required for take-off, climb, and descend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alt: Option<f64>,
    /// Horizontal target (x, y) \[m\] — required for cruise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<[f64; 2]>,
    /// Final heading \[rad\] (held from the previous segment if absent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Takeoff,
    Climb,
    Cruise,
    Hover,
    Descend,
    Land,
}

impl MissionSpec {
    /// Loads a segment-form mission file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad mission file {}: {e}", path.display())))
    }

    /// Compiles the segments into the waypoint form the simulator flies.
    pub fn compile(&self) -> Result<Mission> {
        if self.segments.is_empty() {
            return Err(Error::Config("mission needs at least one segment".into()));
        }
        let mut t = 0.0;
        let mut pos = self.start;
        let mut yaw = self.start_yaw;
        let mut points = vec![Waypoint { t, pos, yaw }];
        for (i, seg) in self.segments.iter().enumerate() {
            let at = |what: &str| format!("segment {} ({:?}): {what}", i + 1, seg.kind);
            if !(seg.duration.is_finite() && seg.duration > 0.0) {
                return Err(Error::Config(at("duration must be positive")));
            }
            match seg.kind {
                SegmentKind::Takeoff | SegmentKind::Climb => {
                    let alt = seg.alt.ok_or_else(|| Error::Config(at("needs alt")))?;
                    if !(alt.is_finite() && alt > pos[2]) {
                        return Err(Error::Config(at("alt must exceed the current altitude")));
                    }
                    pos[2] = alt;
                }
                SegmentKind::Descend => {
                    let alt = seg.alt.ok_or_else(|| Error::Config(at("needs alt")))?;
                    if !(alt.is_finite() && alt >= 0.0 && alt < pos[2]) {
                        return Err(Error::Config(at("alt must be below the current altitude")));
                    }
                    pos[2] = alt;
                }
                SegmentKind::Land => pos[2] = 0.0,
                SegmentKind::Cruise => {
                    let to = seg.to.ok_or_else(|| Error::Config(at("needs to")))?;
                    if !to.iter().all(|v| v.is_finite()) {
                        return Err(Error::Config(at("to must be finite")));
                    }
                    pos[0] = to[0];
                    pos[1] = to[1];
                }
                SegmentKind::Hover => {}
            }
            if let Some(y) = seg.yaw {
                if !y.is_finite() {
                    return Err(Error::Config(at("yaw must be finite")));
                }
                yaw = y;
            }
            t += seg.duration;
            points.push(Waypoint { t, pos, yaw });
        }
        let mission = Mission { points };
        mission.validate()?;
        Ok(mission)
    }
}

/// Loads a mission file (segment schema) straight into waypoint form.
pub fn load_mission(path: &Path) -> Result<Mission> {
    MissionSpec::load(path)?.compile()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn profile() -> MissionSpec {
        MissionSpec {
            start: [0.0, 0.0, 0.0],
            start_yaw: 0.0,
            segments: vec![
                Segment {
                    kind: SegmentKind::Takeoff,
                    duration: 5.0,
                    alt: Some(2.0),
                    to: None,
                    yaw: None,
                },
                Segment {
                    kind: SegmentKind::Cruise,
                    duration: 20.0,
                    alt: None,
                    to: Some([30.0, 0.0]),
                    yaw: None,
                },
                Segment { kind: SegmentKind::Hover, duration: 5.0, alt: None, to: None, yaw: None },
                Segment { kind: SegmentKind::Land, duration: 5.0, alt: None, to: None, yaw: None },
            ],
        }
    }

    #[test]
    fn segments_compile_to_a_continuous_waypoint_profile() {
        let mission = profile().compile().unwrap();
        assert_eq!(mission.points.len(), 5);
        assert_eq!(mission.duration(), 35.0);
        // Continuity: each waypoint is the start of the next segment.
        assert_eq!(mission.points[1].pos, [0.0, 0.0, 2.0]);
        assert_eq!(mission.points[2].pos, [30.0, 0.0, 2.0]);
        assert_eq!(mission.points[3].pos, [30.0, 0.0, 2.0]);
        assert_eq!(mission.points[4].pos, [30.0, 0.0, 0.0]);
        // Cruise velocity feedforward: 30 m over 20 s.
        let sp = mission.setpoint_at(15.0);
        assert_relative_eq!(sp.vel[0], 1.5, max_relative = 1e-12);
    }

    #[test]
    fn segment_semantics_are_enforced() {
        let mut bad = profile();
        bad.segments[0].alt = None;
        assert!(bad.compile().is_err(), "takeoff without alt");

        let mut bad = profile();
        bad.segments[0].alt = Some(-1.0);
        assert!(bad.compile().is_err(), "takeoff below ground");

        let mut bad = profile();
        bad.segments[1].to = None;
        assert!(bad.compile().is_err(), "cruise without target");

        let mut bad = profile();
        bad.segments[2].duration = 0.0;
        assert!(bad.compile().is_err(), "zero duration");

        let mut bad = profile();
        bad.segments.clear();
        assert!(bad.compile().is_err(), "empty mission");
    }

    #[test]
    fn config_defaults_round_trip_and_reject_unknown_keys() {
        let empty: RunConfig = serde_json::from_str("{}").unwrap();
        assert!(empty.validate().is_ok());
        assert_eq!(empty.seed, 0);
        assert_eq!(empty.tune.budget, 400);
        assert_eq!(empty.codesign.outer_budget, 80);

        let json = serde_json::to_string(&empty).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.design, empty.design);

        let partial: RunConfig =
            serde_json::from_str(r#"{"tune": {"budget": 32}, "seed": 9}"#).unwrap();
        assert_eq!(partial.tune.budget, 32);
        assert_eq!(partial.tune.restarts, 3, "other tune fields keep defaults");
        assert_eq!(partial.seed, 9);

        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"tune": {"bugdet": 1}}"#).is_err());
    }

    #[test]
    fn fault_flag_parses_airframe_numbering() {
        let f = FaultConfig::parse("1:3.0").unwrap();
        assert_eq!(f.rotor, 1);
        assert_eq!(f.to_fault(), Fault { rotor: 0, time: 3.0 });
        assert_eq!(FaultConfig::parse("8: 12").unwrap().to_fault().rotor, 7);
        assert!(FaultConfig::parse("0:1.0").is_err(), "rotors are numbered from 1");
        assert!(FaultConfig::parse("9:1.0").is_err());
        assert!(FaultConfig::parse("1").is_err());
        assert!(FaultConfig::parse("1:-2").is_err());
        assert!(FaultConfig::parse("x:1").is_err());
    }
}
