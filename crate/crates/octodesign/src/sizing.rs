//! Plant sizing: scaling laws that map a normalized design vector onto a
//! concrete set of vehicle parameters.
//!
//! Every design variable is a dimensionless ratio ("star value") relative to a
//! catalogued reference component. Component properties then follow power laws
//! in that ratio, so the whole six-variable design space is spanned by one
//! reference data set:
//!
//! | component | property | law |
//! |-----------|----------|-----|
//! | motor     | winding resistance `R`    | `R_ref / l*`        |
//! | motor     | torque constant `Ke`      | `Ke_ref · l*²`      |
//! | motor     | viscous friction `Kd`     | `Kd_ref · l*³`      |
//! | motor     | rotor inertia `J`         | `J_ref · l*⁵`       |
//! | motor     | mass `m`                  | `m_ref · l*³`       |
//! | motor     | thermal resistance `Rth`  | `Rth_ref · l*⁻²`    |
//! | motor     | thermal time const `τ_th` | constant            |
//! | motor     | peak torque `T_max`       | `T_max_ref · l*³·⁵` |
//! | rotor     | radius `r`                | `r_ref · r*`        |
//! | rotor     | disk area `S`             | `S_ref · r*²`       |
//! | rotor     | inertia `J`               | `J_ref · r*⁵`       |
//! | rotor     | mass `m`                  | `m_ref · r*³`       |
//! | rotor     | thrust coefficient `ct0`  | `ct0_ref · (0.3 + 0.7·θ0*)`    |
//! | rotor     | drag coefficient `cq0`    | `cq0_ref · (0.15 + 0.85·θ0*²)` |
//! | rotor     | speed limit `ω_max`       | `ω_max_tip / (r_ref · r*)`     |
//! | battery   | mass / energy             | linear in `v*`      |
//! | arm       | thin-walled tube          | `d = d_ref·e*`, `e = e_ref·e*`, `l = l_ref·l*` |
//!
//! The vehicle is a coaxial octorotor: four arms in an X at 45°/135°/225°/315°
//! azimuth, each carrying a counter-rotating motor/rotor pair at its tip.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of motor/rotor units (two per arm).
pub const N_ROTORS: usize = 8;
/// Number of structural arms.
pub const N_ARMS: usize = 4;
/// Air density, ISA sea level \[kg/m³\].
pub const RHO_AIR: f64 = 1.225;
/// Gravitational acceleration \[m/s²\].
pub const GRAVITY: f64 = 9.81;

/// Allowed window for the blade-pitch ratio `theta0_star`; the affine
/// thrust/drag coefficient fits are only valid (and monotone) inside it.
pub const THETA0_RANGE: (f64, f64) = (0.6, 1.4);

/// Normalized plant design vector. Each entry scales one reference component;
/// the all-ones design reproduces the reference vehicle exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantDesign {
    /// Motor size ratio.
    pub l_mot_star: f64,
    /// Rotor radius ratio.
    pub r_rot_star: f64,
    /// Blade pitch ratio.
    pub theta0_star: f64,
    /// Battery size ratio (parallel capacity; pack voltage is fixed).
    pub v_bat_star: f64,
    /// Arm length ratio.
    pub l_arm_star: f64,
    /// Arm tube wall/diameter ratio.
    pub e_arm_star: f64,
}

impl PlantDesign {
    /// The reference design: every ratio equal to one.
    pub fn ones() -> Self {
        PlantDesign {
            l_mot_star: 1.0,
            r_rot_star: 1.0,
            theta0_star: 1.0,
            v_bat_star: 1.0,
            l_arm_star: 1.0,
            e_arm_star: 1.0,
        }
    }

    /// Fixed field order used wherever the design is treated as a vector.
    pub const FIELD_NAMES: [&'static str; 6] =
        ["l_mot_star", "r_rot_star", "theta0_star", "v_bat_star", "l_arm_star", "e_arm_star"];

    /// Design as a fixed-order array (see [`PlantDesign::FIELD_NAMES`]).
    pub fn to_array(self) -> [f64; 6] {
        [self.l_mot_star, self.r_rot_star, self.theta0_star, self.v_bat_star, self.l_arm_star, self.e_arm_star]
    }

    /// Inverse of [`PlantDesign::to_array`].
    pub fn from_array(x: [f64; 6]) -> Self {
        PlantDesign {
            l_mot_star: x[0],
            r_rot_star: x[1],
            theta0_star: x[2],
            v_bat_star: x[3],
            l_arm_star: x[4],
            e_arm_star: x[5],
        }
    }

    /// Checks positivity of every ratio and the pitch-window constraint.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in Self::FIELD_NAMES.iter().zip(self.to_array()) {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let (lo, hi) = THETA0_RANGE;
        if !(lo..=hi).contains(&self.theta0_star) {
            return Err(Error::Domain(format!(
                "theta0_star must lie in [{lo}, {hi}], got {}",
                self.theta0_star
            )));
        }
        Ok(())
    }
}

/// Reference motor data (catalogue values the scaling laws are anchored to).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotorRef {
    /// Winding resistance \[Ω\].
    #[serde(rename = "R_ref")]
    pub r_ref: f64,
    /// Torque/back-EMF constant \[N·m/A = V·s/rad\].
    #[serde(rename = "Ke_ref")]
    pub ke_ref: f64,
    /// Viscous friction coefficient \[N·m·s/rad\].
    #[serde(rename = "Kd_ref")]
    pub kd_ref: f64,
    /// Rotor (shaft) inertia \[kg·m²\].
    #[serde(rename = "J_ref")]
    pub j_ref: f64,
    /// Mass \[kg\].
    pub m_ref: f64,
    /// Winding-to-ambient thermal resistance \[K/W\].
    #[serde(rename = "Rth_ref")]
    pub rth_ref: f64,
    /// Thermal time constant \[s\].
    pub tau_th_ref: f64,
    /// Peak torque \[N·m\].
    #[serde(rename = "T_max_ref")]
    pub t_max_ref: f64,
    /// Admissible steady winding temperature rise over ambient \[K\].
    #[serde(rename = "Theta_max")]
    pub theta_max: f64,
}

/// Reference rotor (propeller) data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotorRef {
    /// Radius \[m\].
    pub r_ref: f64,
    /// Disk area \[m²\].
    #[serde(rename = "S_ref")]
    pub s_ref: f64,
    /// Collective pitch at the reference design \[rad\] (informational).
    pub theta0_ref: f64,
    /// Thrust coefficient at reference pitch (thrust = `ct0·ρ·S·(ωr)²`).
    pub ct0_ref: f64,
    /// Drag-torque coefficient at reference pitch (torque = `cq0·ρ·S·(ωr)²·r`).
    pub cq0_ref: f64,
    /// Spin inertia \[kg·m²\].
    #[serde(rename = "J_ref")]
    pub j_ref: f64,
    /// Mass \[kg\].
    pub m_ref: f64,
    /// Structural tip-speed limit \[m/s\]; divides by radius to give `ω_max`.
    pub omega_max_tip: f64,
}

/// Reference battery data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatteryRef {
    /// Series cell count of the pack (sets the bus voltage).
    pub v_ref: f64,
    /// Mass \[kg\].
    pub m_ref: f64,
    /// Stored energy \[J\].
    #[serde(rename = "E_ref")]
    pub e_ref: f64,
    /// Nominal cell voltage \[V\].
    pub u_cell_nom: f64,
    /// Maximum cell voltage \[V\].
    pub u_cell_max: f64,
    /// Energy-density ratio relative to the catalogue cell (usually 1).
    #[serde(rename = "d_E")]
    pub d_e: f64,
}

/// Reference arm data (thin-walled circular tube).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmRef {
    /// Hub-to-tip length \[m\].
    pub l_ref: f64,
    /// Wall thickness \[m\].
    pub e_ref: f64,
    /// Outer diameter \[m\].
    pub d_ref: f64,
    /// Mass \[kg\].
    pub m_ref: f64,
    /// Allowable bending stress \[Pa\].
    pub sigma_allow: f64,
}

/// Complete reference data set, loaded from `reference.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceComponents {
    pub motor: MotorRef,
    pub rotor: RotorRef,
    pub battery: BatteryRef,
    pub arm: ArmRef,
    /// Mass of everything the design vector does not touch (airframe hub,
    /// avionics, payload, harness) \[kg\].
    pub fixed_mass: f64,
    /// Radius of the uniform sphere standing in for the central mass when the
    /// body inertia is assembled \[m\].
    pub fixed_mass_radius: f64,
}

impl ReferenceComponents {
    /// Loads and validates a reference data set from a JSON file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let r: ReferenceComponents = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad reference data in {}: {e}", path.display())))?;
        r.validate()?;
        Ok(r)
    }

    /// Every physical quantity must be positive and finite.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("motor.R_ref", self.motor.r_ref),
            ("motor.Ke_ref", self.motor.ke_ref),
            ("motor.Kd_ref", self.motor.kd_ref),
            ("motor.J_ref", self.motor.j_ref),
            ("motor.m_ref", self.motor.m_ref),
            ("motor.Rth_ref", self.motor.rth_ref),
            ("motor.tau_th_ref", self.motor.tau_th_ref),
            ("motor.T_max_ref", self.motor.t_max_ref),
            ("motor.Theta_max", self.motor.theta_max),
            ("rotor.r_ref", self.rotor.r_ref),
            ("rotor.S_ref", self.rotor.s_ref),
            ("rotor.theta0_ref", self.rotor.theta0_ref),
            ("rotor.ct0_ref", self.rotor.ct0_ref),
            ("rotor.cq0_ref", self.rotor.cq0_ref),
            ("rotor.J_ref", self.rotor.j_ref),
            ("rotor.m_ref", self.rotor.m_ref),
            ("rotor.omega_max_tip", self.rotor.omega_max_tip),
            ("battery.v_ref", self.battery.v_ref),
            ("battery.m_ref", self.battery.m_ref),
            ("battery.E_ref", self.battery.e_ref),
            ("battery.u_cell_nom", self.battery.u_cell_nom),
            ("battery.u_cell_max", self.battery.u_cell_max),
            ("battery.d_E", self.battery.d_e),
            ("arm.l_ref", self.arm.l_ref),
            ("arm.e_ref", self.arm.e_ref),
            ("arm.d_ref", self.arm.d_ref),
            ("arm.m_ref", self.arm.m_ref),
            ("arm.sigma_allow", self.arm.sigma_allow),
            ("fixed_mass", self.fixed_mass),
            ("fixed_mass_radius", self.fixed_mass_radius),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("reference field {name} must be positive, got {v}")));
            }
        }
        if self.battery.u_cell_nom > self.battery.u_cell_max {
            return Err(Error::Config("u_cell_nom exceeds u_cell_max".into()));
        }
        Ok(())
    }
}

/// Scaled motor parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MotorParams {
    /// Winding resistance \[Ω\].
    pub r_ohm: f64,
    /// Torque/back-EMF constant \[N·m/A\].
    pub ke: f64,
    /// Viscous friction \[N·m·s/rad\].
    pub kd: f64,
    /// Shaft inertia \[kg·m²\].
    pub j: f64,
    /// Mass \[kg\].
    pub m: f64,
    /// Thermal resistance \[K/W\].
    pub rth: f64,
    /// Thermal time constant \[s\].
    pub tau_th: f64,
    /// Peak torque \[N·m\].
    pub t_max: f64,
    /// Admissible temperature rise \[K\].
    pub theta_max: f64,
}

/// Scaled rotor parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RotorParams {
    /// Radius \[m\].
    pub r: f64,
    /// Disk area \[m²\].
    pub s: f64,
    /// Thrust coefficient (dimensionless, `T = ct0·ρ·S·(ωr)²`).
    pub ct0: f64,
    /// Drag-torque coefficient (dimensionless, `Q = cq0·ρ·S·(ωr)²·r`).
    pub cq0: f64,
    /// Spin inertia \[kg·m²\].
    pub j: f64,
    /// Mass \[kg\].
    pub m: f64,
    /// Speed limit \[rad/s\].
    pub omega_max: f64,
}

/// Scaled battery parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BatteryParams {
    /// Maximum continuous electrical power \[W\].
    pub p_bat: f64,
    /// Mass \[kg\].
    pub m: f64,
    /// Stored energy \[J\].
    pub e_bat: f64,
    /// Bus voltage \[V\].
    pub u_bat: f64,
}

/// Scaled arm parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ArmParams {
    /// Hub-to-tip length \[m\].
    pub l: f64,
    /// Tube wall thickness \[m\].
    pub e: f64,
    /// Tube outer diameter \[m\].
    pub d: f64,
    /// Mass \[kg\].
    pub m: f64,
    /// Moment of inertia of the arm about the hub \[kg·m²\].
    pub j_hub: f64,
    /// Bending section modulus `(π/4)·d²·e` \[m³\].
    pub z_section: f64,
    /// Allowable bending stress \[Pa\].
    pub sigma_allow: f64,
}

/// Fully assembled vehicle: scaled components plus rigid-body and layout data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VehicleParams {
    pub motor: MotorParams,
    pub rotor: RotorParams,
    pub battery: BatteryParams,
    pub arm: ArmParams,
    /// Central non-sized mass \[kg\].
    pub fixed_mass: f64,
    /// Take-off mass \[kg\].
    pub m_total: f64,
    /// Diagonal of the body inertia tensor `(Ixx, Iyy, Izz)` \[kg·m²\].
    pub inertia: [f64; 3],
    /// Rotor tip positions in the body frame `(x, y)` \[m\]; rotors `0..4` are
    /// the upper ring (one per arm), rotors `4..8` the lower ring on the same
    /// arms.
    pub rotor_xy: [[f64; 2]; N_ROTORS],
    /// Spin direction per rotor: `+1` = counter-clockwise about body +z.
    /// Coaxial partners counter-rotate; neighbouring arms alternate.
    pub spin: [f64; N_ROTORS],
    /// Air density \[kg/m³\].
    pub rho: f64,
    /// Gravitational acceleration \[m/s²\].
    pub g: f64,
}

/// Steady operating point of one rotor/motor unit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HoverPoint {
    /// Thrust per rotor \[N\].
    pub thrust: f64,
    /// Rotor speed \[rad/s\].
    pub omega: f64,
    /// Aerodynamic drag torque \[N·m\].
    pub torque: f64,
    /// Motor current \[A\].
    pub current: f64,
    /// Motor terminal voltage \[V\].
    pub voltage: f64,
    /// Total electrical power of all eight units \[W\].
    pub power_total: f64,
}

impl VehicleParams {
    /// Drag-torque produced per unit thrust \[m\]: `κ = cq0·r/ct0`.
    pub fn kappa(&self) -> f64 {
        self.rotor.cq0 * self.rotor.r / self.rotor.ct0
    }

    /// Index of the coaxial partner sharing rotor `j`'s arm.
    pub fn coax_partner(j: usize) -> usize {
        (j + N_ARMS) % N_ROTORS
    }

    /// Arm index (0..4) carrying rotor `j`.
    pub fn arm_of(j: usize) -> usize {
        j % N_ARMS
    }

    /// Thrust of one rotor at speed `omega`: `ct0·ρ·S·(ω·r)²`.
    pub fn rotor_thrust(&self, omega: f64) -> f64 {
        self.rotor.ct0 * self.rho * self.rotor.s * (omega * self.rotor.r).powi(2)
    }

    /// Aerodynamic drag torque of one rotor at speed `omega`:
    /// `cq0·ρ·S·(ω·r)²·r`.
    pub fn rotor_torque(&self, omega: f64) -> f64 {
        self.rotor.cq0 * self.rho * self.rotor.s * (omega * self.rotor.r).powi(2) * self.rotor.r
    }

    /// Rotor speed producing thrust `t` (inverse of [`Self::rotor_thrust`]);
    /// non-positive thrust maps to zero speed.
    pub fn rotor_speed_for_thrust(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        (t / (self.rotor.ct0 * self.rho * self.rotor.s)).sqrt() / self.rotor.r
    }

    /// Terminal voltage holding the motor at steady speed `omega` against the
    /// rotor drag and viscous friction: `u = R·i + Ke·ω` with
    /// `i = (Q(ω) + Kd·ω)/Ke`.
    pub fn steady_voltage_for_speed(&self, omega: f64) -> f64 {
        let load = self.rotor_torque(omega) + self.motor.kd * omega;
        let current = load / self.motor.ke;
        self.motor.r_ohm * current + self.motor.ke * omega
    }

    /// Per-rotor thrust carrying the vehicle weight: `m·g / 8`.
    pub fn hover_thrust(&self) -> f64 {
        self.m_total * self.g / N_ROTORS as f64
    }

    /// Hover operating point of each rotor/motor unit (all eight identical).
    pub fn hover(&self) -> HoverPoint {
        let thrust = self.hover_thrust();
        let omega = self.rotor_speed_for_thrust(thrust);
        let torque = self.rotor_torque(omega);
        let current = (torque + self.motor.kd * omega) / self.motor.ke;
        let voltage = self.motor.r_ohm * current + self.motor.ke * omega;
        HoverPoint {
            thrust,
            omega,
            torque,
            current,
            voltage,
            power_total: N_ROTORS as f64 * voltage * current,
        }
    }
}

fn check_star(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

/// Scales the reference motor by the size ratio `l_star`.
pub fn scale_motor(l_star: f64, re: &ReferenceComponents) -> Result<MotorParams> {
    check_star("l_mot_star", l_star)?;
    let m = &re.motor;
    Ok(MotorParams {
        r_ohm: m.r_ref / l_star,
        ke: m.ke_ref * l_star.powi(2),
        kd: m.kd_ref * l_star.powi(3),
        j: m.j_ref * l_star.powi(5),
        m: m.m_ref * l_star.powi(3),
        rth: m.rth_ref * l_star.powi(-2),
        tau_th: m.tau_th_ref,
        t_max: m.t_max_ref * l_star.powf(3.5),
        theta_max: m.theta_max,
    })
}

/// Scales the reference rotor by radius ratio `r_star` and pitch ratio
/// `theta0_star` (validated against [`THETA0_RANGE`]).
pub fn scale_rotor(r_star: f64, theta0_star: f64, re: &ReferenceComponents) -> Result<RotorParams> {
    check_star("r_rot_star", r_star)?;
    check_star("theta0_star", theta0_star)?;
    let (lo, hi) = THETA0_RANGE;
    if !(lo..=hi).contains(&theta0_star) {
        return Err(Error::Domain(format!("theta0_star must lie in [{lo}, {hi}], got {theta0_star}")));
    }
    let r = &re.rotor;
    Ok(RotorParams {
        r: r.r_ref * r_star,
        s: r.s_ref * r_star.powi(2),
        ct0: r.ct0_ref * (0.3 + 0.7 * theta0_star),
        cq0: r.cq0_ref * (0.15 + 0.85 * theta0_star.powi(2)),
        j: r.j_ref * r_star.powi(5),
        m: r.m_ref * r_star.powi(3),
        omega_max: r.omega_max_tip / (r.r_ref * r_star),
    })
}

/// Scales the reference battery by the capacity ratio `v_star`. Capacity is
/// added in parallel, so mass and energy grow linearly while the bus voltage
/// `u_bat = u_cell_nom · v_ref` stays fixed. The continuous power limit is a
/// 5C-equivalent rating derated by the nominal/maximum cell-voltage ratio.
pub fn scale_battery(v_star: f64, re: &ReferenceComponents) -> Result<BatteryParams> {
    check_star("v_bat_star", v_star)?;
    let b = &re.battery;
    Ok(BatteryParams {
        p_bat: 5.0 * b.d_e * (b.u_cell_nom / b.u_cell_max) * v_star * (b.e_ref / 3600.0),
        m: b.m_ref * v_star,
        e_bat: b.e_ref * b.d_e * v_star,
        u_bat: b.u_cell_nom * b.v_ref,
    })
}

/// Scales the reference arm. The tube keeps its proportions in the wall
/// direction: diameter and wall thickness both follow `e_star`, length follows
/// `l_star`, so mass scales as `e*² · l*`.
pub fn scale_arm(l_star: f64, e_star: f64, re: &ReferenceComponents) -> Result<ArmParams> {
    check_star("l_arm_star", l_star)?;
    check_star("e_arm_star", e_star)?;
    let a = &re.arm;
    let l = a.l_ref * l_star;
    let e = a.e_ref * e_star;
    let d = a.d_ref * e_star;
    let m = a.m_ref * (d / a.d_ref) * (e / a.e_ref) * (l / a.l_ref);
    Ok(ArmParams {
        l,
        e,
        d,
        m,
        j_hub: m * l * l / 3.0,
        z_section: std::f64::consts::FRAC_PI_4 * d * d * e,
        sigma_allow: a.sigma_allow,
    })
}

/// Assembles the full vehicle for a design point.
///
/// Mass rollup: `m_total = fixed + 8·(m_mot + m_rot) + 4·m_arm + m_bat`.
///
/// Body inertia model: motor/rotor pairs as point masses at the arm tips,
/// arms as uniform rods about the hub, and the central mass (fixed equipment
/// plus battery) as a uniform solid sphere of radius `fixed_mass_radius`.
/// Symmetry makes the tensor diagonal with `Ixx = Iyy`.
pub fn assemble_vehicle(design: &PlantDesign, re: &ReferenceComponents) -> Result<VehicleParams> {
    design.validate()?;
    re.validate()?;
    let motor = scale_motor(design.l_mot_star, re)?;
    let rotor = scale_rotor(design.r_rot_star, design.theta0_star, re)?;
    let battery = scale_battery(design.v_bat_star, re)?;
    let arm = scale_arm(design.l_arm_star, design.e_arm_star, re)?;

    let m_total = re.fixed_mass
        + N_ROTORS as f64 * (motor.m + rotor.m)
        + N_ARMS as f64 * arm.m
        + battery.m;

    let l2 = arm.l * arm.l;
    let m_tip = 2.0 * (motor.m + rotor.m);
    let sphere = 0.4 * (re.fixed_mass + battery.m) * re.fixed_mass_radius.powi(2);
    // Arms at ±45°/±135°: sin²φ = cos²φ = 1/2 for every arm.
    let ixx = 2.0 * m_tip * l2 + (2.0 / 3.0) * arm.m * l2 + sphere;
    let izz = 4.0 * m_tip * l2 + (4.0 / 3.0) * arm.m * l2 + sphere;

    let mut rotor_xy = [[0.0; 2]; N_ROTORS];
    let mut spin = [0.0; N_ROTORS];
    for j in 0..N_ROTORS {
        let arm_idx = VehicleParams::arm_of(j);
        let az = std::f64::consts::FRAC_PI_4 + std::f64::consts::FRAC_PI_2 * arm_idx as f64;
        rotor_xy[j] = [arm.l * az.cos(), arm.l * az.sin()];
        let upper = j < N_ARMS;
        let base = if arm_idx % 2 == 0 { 1.0 } else { -1.0 };
        spin[j] = if upper { base } else { -base };
    }

    Ok(VehicleParams {
        motor,
        rotor,
        battery,
        arm,
        fixed_mass: re.fixed_mass,
        m_total,
        inertia: [ixx, ixx, izz],
        rotor_xy,
        spin,
        rho: RHO_AIR,
        g: GRAVITY,
    })
}

/// One line of the mass budget.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MassEntry {
    /// Absolute mass \[kg\].
    pub mass: f64,
    /// Fraction of take-off mass.
    pub share: f64,
    /// Relative change versus the reference vehicle.
    pub rel_change: f64,
}

/// Five-part mass budget of an assembled vehicle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MassBreakdown {
    pub fixed: MassEntry,
    pub motors: MassEntry,
    pub rotors: MassEntry,
    pub arms: MassEntry,
    pub battery: MassEntry,
    /// Take-off mass \[kg\].
    pub total: f64,
    /// Take-off mass relative change versus the reference vehicle.
    pub total_rel_change: f64,
}

/// Splits the take-off mass into its five budget lines, each with its share of
/// the total and its relative change against the reference vehicle.
pub fn mass_breakdown(p: &VehicleParams, re: &ReferenceComponents) -> MassBreakdown {
    let parts = [
        p.fixed_mass,
        N_ROTORS as f64 * p.motor.m,
        N_ROTORS as f64 * p.rotor.m,
        N_ARMS as f64 * p.arm.m,
        p.battery.m,
    ];
    let ref_parts = [
        re.fixed_mass,
        N_ROTORS as f64 * re.motor.m_ref,
        N_ROTORS as f64 * re.rotor.m_ref,
        N_ARMS as f64 * re.arm.m_ref,
        re.battery.m_ref,
    ];
    let total: f64 = parts.iter().sum();
    let ref_total: f64 = ref_parts.iter().sum();
    let entry = |i: usize| MassEntry {
        mass: parts[i],
        share: parts[i] / total,
        rel_change: (parts[i] - ref_parts[i]) / ref_parts[i],
    };
    MassBreakdown {
        fixed: entry(0),
        motors: entry(1),
        rotors: entry(2),
        arms: entry(3),
        battery: entry(4),
        total,
        total_rel_change: (total - ref_total) / ref_total,
    }
}

/// Test-only helper: the reference data set bundled with the workspace.
#[cfg(test)]
pub(crate) fn test_reference() -> ReferenceComponents {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/reference.json");
    ReferenceComponents::load(std::path::Path::new(path)).expect("bundled reference data")
}
