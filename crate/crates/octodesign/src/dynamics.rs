//! Nonlinear vehicle dynamics and closed-loop mission simulation.
//!
//! The continuous state has thirty components:
//!
//! | slice   | meaning                                   |
//! |---------|-------------------------------------------|
//! | 0..3    | position, world frame, z up \[m\]          |
//! | 3..6    | velocity, world frame \[m/s\]              |
//! | 6..10   | attitude quaternion `(w, x, y, z)`, world ← body |
//! | 10..13  | body angular rates `(p, q, r)` \[rad/s\]   |
//! | 13..21  | rotor speeds \[rad/s\]                     |
//! | 21..29  | winding temperature rise over ambient \[K\]|
//! | 29      | electrical energy drawn from the battery \[J\] |
//!
//! Controller integrators live outside this vector (the controller owns
//! them); the simulation applies their rates between integration steps with
//! anti-windup: a saturated mixer freezes the integrators for that step.
//!
//! Physics per rotor/motor unit `j` (speed `ω`, applied voltage `u`):
//! thrust `T = ct0·ρ·S·(ωr)·|ωr|`, drag torque `Q = cq0·ρ·S·(ωr)·|ωr|·r`,
//! current `i = (u − Ke·ω)/R`, shaft `J·ω̇ = Ke·i − Q − Kd·ω`, winding
//! `τ_th·ΔṪ = Rth·R·i² − ΔT`. A failed unit is an open circuit (`i = 0`);
//! its rotor windmills down under drag and friction. The rigid body sees
//! thrust moments, drag-reaction and spin-up-reaction yaw torques, and the
//! gyroscopic torque of the net rotor angular momentum.

use serde::{Deserialize, Serialize};

use crate::control::{
    controller_step, ControlGains, IntegratorState, Measurement, Mixer, Setpoint,
};
use crate::error::{Error, Result};
use crate::sizing::{VehicleParams, N_ROTORS};

/// Number of continuous states.
pub const NX: usize = 30;

/// First index of each state slice.
pub mod idx {
    pub const POS: usize = 0;
    pub const VEL: usize = 3;
    pub const QUAT: usize = 6;
    pub const RATES: usize = 10;
    pub const OMEGA: usize = 13;
    pub const TEMP: usize = 21;
    pub const ENERGY: usize = 29;
}

/// Continuous vehicle state (see the module docs for the layout).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State(pub [f64; NX]);

impl State {
    pub fn zeros() -> Self {
        let mut x = [0.0; NX];
        x[idx::QUAT] = 1.0;
        State(x)
    }

    pub fn pos(&self) -> [f64; 3] {
        [self.0[idx::POS], self.0[idx::POS + 1], self.0[idx::POS + 2]]
    }

    pub fn vel(&self) -> [f64; 3] {
        [self.0[idx::VEL], self.0[idx::VEL + 1], self.0[idx::VEL + 2]]
    }

    pub fn quat(&self) -> [f64; 4] {
        [self.0[idx::QUAT], self.0[idx::QUAT + 1], self.0[idx::QUAT + 2], self.0[idx::QUAT + 3]]
    }

    pub fn rates(&self) -> [f64; 3] {
        [self.0[idx::RATES], self.0[idx::RATES + 1], self.0[idx::RATES + 2]]
    }

    pub fn omega(&self, j: usize) -> f64 {
        self.0[idx::OMEGA + j]
    }

    pub fn temp(&self, j: usize) -> f64 {
        self.0[idx::TEMP + j]
    }

    pub fn energy(&self) -> f64 {
        self.0[idx::ENERGY]
    }

    /// Roll, pitch, yaw of the attitude quaternion (intrinsic Z-Y-X).
    pub fn euler(&self) -> [f64; 3] {
        quat_to_euler(&self.quat())
    }

    /// What the controller sees.
    pub fn measurement(&self) -> Measurement {
        Measurement { pos: self.pos(), vel: self.vel(), att: self.euler(), rates: self.rates() }
    }
}

/// Quaternion `(w, x, y, z)` → roll, pitch, yaw (intrinsic Z-Y-X).
pub fn quat_to_euler(q: &[f64; 4]) -> [f64; 3] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
    let pitch = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0).asin();
    let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
    [roll, pitch, yaw]
}

/// Roll, pitch, yaw (intrinsic Z-Y-X) → quaternion `(w, x, y, z)`.
pub fn euler_to_quat(e: &[f64; 3]) -> [f64; 4] {
    let (hr, hp, hy) = (0.5 * e[0], 0.5 * e[1], 0.5 * e[2]);
    let (sr, cr) = hr.sin_cos();
    let (sp, cp) = hp.sin_cos();
    let (sy, cy) = hy.sin_cos();
    [
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ]
}

/// Rotates a body-frame vector into the world frame.
pub fn quat_rotate(q: &[f64; 4], v: &[f64; 3]) -> [f64; 3] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    // v' = v + 2·qv × (qv × v + w·v)
    let t = [
        2.0 * (y * v[2] - z * v[1]),
        2.0 * (z * v[0] - x * v[2]),
        2.0 * (x * v[1] - y * v[0]),
    ];
    [
        v[0] + w * t[0] + y * t[2] - z * t[1],
        v[1] + w * t[1] + z * t[0] - x * t[2],
        v[2] + w * t[2] + x * t[1] - y * t[0],
    ]
}

/// Euler-angle kinematics: rates of roll/pitch/yaw given body rates.
pub fn euler_rates(att: &[f64; 3], rates: &[f64; 3]) -> [f64; 3] {
    let (sr, cr) = att[0].sin_cos();
    let (_, cp) = att[1].sin_cos();
    let tp = att[1].tan();
    let (p, q, r) = (rates[0], rates[1], rates[2]);
    [p + sr * tp * q + cr * tp * r, cr * q - sr * r, (sr * q + cr * r) / cp]
}

/// Time-derivative of the full state for given motor voltages.
///
/// `failed[j] = true` marks an open-circuited motor: no current, no torque,
/// the rotor windmills down. Voltages are clamped to `[0, u_bat]` (the power
/// stage cannot invert or exceed the bus).
pub fn derivatives(
    p: &VehicleParams,
    x: &State,
    voltages: &[f64; N_ROTORS],
    failed: &[bool; N_ROTORS],
) -> State {
    let mut dx = [0.0; NX];
    let q = x.quat();
    let rates = x.rates();
    let j_spin = p.motor.j + p.rotor.j;

    // Per-rotor electromechanics.
    let mut thrust_total = 0.0;
    let mut tau = [0.0; 3];
    let mut spin_momentum = 0.0;
    let mut power = 0.0;
    for j in 0..N_ROTORS {
        let w = x.omega(j);
        let u = voltages[j].clamp(0.0, p.battery.u_bat);
        let (current, tau_m) = if failed[j] {
            (0.0, 0.0)
        } else {
            let i = (u - p.motor.ke * w) / p.motor.r_ohm;
            (i, p.motor.ke * i)
        };
        // Signed-square laws so a transient negative overshoot self-corrects.
        let wr = w * p.rotor.r;
        let thrust = p.rotor.ct0 * p.rho * p.rotor.s * wr * wr.abs();
        let drag = p.rotor.cq0 * p.rho * p.rotor.s * wr * wr.abs() * p.rotor.r;
        let w_dot = (tau_m - drag - p.motor.kd * w) / j_spin;
        dx[idx::OMEGA + j] = w_dot;

        thrust_total += thrust;
        tau[0] += p.rotor_xy[j][1] * thrust;
        tau[1] -= p.rotor_xy[j][0] * thrust;
        // Drag reaction plus spin-up reaction of the whole rotating assembly.
        tau[2] -= p.spin[j] * (drag + j_spin * w_dot);
        spin_momentum += j_spin * p.spin[j] * w;

        // Winding heating and battery drain (no regeneration).
        let loss = p.motor.r_ohm * current * current;
        dx[idx::TEMP + j] = (p.motor.rth * loss - x.temp(j)) / p.motor.tau_th;
        power += (u * current).max(0.0);
    }
    dx[idx::ENERGY] = power;

    // Translation: thrust along body z, gravity down.
    let f_world = quat_rotate(&q, &[0.0, 0.0, thrust_total]);
    dx[idx::POS] = x.0[idx::VEL];
    dx[idx::POS + 1] = x.0[idx::VEL + 1];
    dx[idx::POS + 2] = x.0[idx::VEL + 2];
    dx[idx::VEL] = f_world[0] / p.m_total;
    dx[idx::VEL + 1] = f_world[1] / p.m_total;
    dx[idx::VEL + 2] = f_world[2] / p.m_total - p.g;

    // Attitude kinematics: q̇ = ½ q ⊗ (0, ω).
    let (p_r, q_r, r_r) = (rates[0], rates[1], rates[2]);
    dx[idx::QUAT] = 0.5 * (-q[1] * p_r - q[2] * q_r - q[3] * r_r);
    dx[idx::QUAT + 1] = 0.5 * (q[0] * p_r + q[2] * r_r - q[3] * q_r);
    dx[idx::QUAT + 2] = 0.5 * (q[0] * q_r - q[1] * r_r + q[3] * p_r);
    dx[idx::QUAT + 3] = 0.5 * (q[0] * r_r + q[1] * q_r - q[2] * p_r);

    // Rotation: Euler equations with diagonal inertia plus the gyroscopic
    // torque of the net rotor spin momentum (along body z).
    let (ixx, iyy, izz) = (p.inertia[0], p.inertia[1], p.inertia[2]);
    dx[idx::RATES] = (tau[0] - (izz - iyy) * q_r * r_r - q_r * spin_momentum) / ixx;
    dx[idx::RATES + 1] = (tau[1] - (ixx - izz) * r_r * p_r + p_r * spin_momentum) / iyy;
    dx[idx::RATES + 2] = tau[2] / izz;

    State(dx)
}

/// One classical Runge–Kutta step with zero-order-hold voltages, followed by
/// quaternion renormalization.
pub fn step_rk4(
    p: &VehicleParams,
    x: &State,
    voltages: &[f64; N_ROTORS],
    failed: &[bool; N_ROTORS],
    dt: f64,
) -> State {
    let add = |a: &State, b: &State, s: f64| {
        let mut out = [0.0; NX];
        for k in 0..NX {
            out[k] = a.0[k] + s * b.0[k];
        }
        State(out)
    };
    let k1 = derivatives(p, x, voltages, failed);
    let k2 = derivatives(p, &add(x, &k1, 0.5 * dt), voltages, failed);
    let k3 = derivatives(p, &add(x, &k2, 0.5 * dt), voltages, failed);
    let k4 = derivatives(p, &add(x, &k3, dt), voltages, failed);
    let mut out = [0.0; NX];
    for k in 0..NX {
        out[k] =
            x.0[k] + dt / 6.0 * (k1.0[k] + 2.0 * k2.0[k] + 2.0 * k3.0[k] + k4.0[k]);
    }
    // Keep the quaternion on the unit sphere (drift is O(dt⁵) per step).
    let n = (out[idx::QUAT].powi(2)
        + out[idx::QUAT + 1].powi(2)
        + out[idx::QUAT + 2].powi(2)
        + out[idx::QUAT + 3].powi(2))
    .sqrt();
    if (n - 1.0).abs() > 1e-12 && n > 0.0 {
        for k in idx::QUAT..idx::QUAT + 4 {
            out[k] /= n;
        }
    }
    State(out)
}

/// A steady operating point of the closed loop: the physical state, the
/// motor voltages holding it, the virtual command and commanded thrusts that
/// produce those voltages through the (always nominal) mixer, and the
/// controller integrator values that produce that virtual command with zero
/// tracking error.
#[derive(Debug, Clone)]
pub struct Trim {
    pub state: State,
    pub voltages: [f64; N_ROTORS],
    pub virtual_cmd: [f64; 4],
    /// Thrusts commanded through the mixer (the failed rotor's command is
    /// nonzero — it simply produces nothing).
    pub commanded_thrusts: [f64; N_ROTORS],
    /// Thrusts physically realized (zero at a failed rotor).
    pub realized_thrusts: [f64; N_ROTORS],
    pub integrators: IntegratorState,
}

/// Computes the hover trim at a position/yaw, nominal or with one rotor out.
///
/// With a failure, the realized thrusts follow the minimum-norm
/// redistribution over the seven live rotors, and the integrator offsets are
/// the unique values that make the *nominal* mixer command exactly that
/// pattern — the fixed point the passive fault tolerance converges to. All
/// four integral gains must be nonzero for such a fixed point to exist.
pub fn trim_hover(
    p: &VehicleParams,
    gains: &ControlGains,
    pos: [f64; 3],
    yaw: f64,
    fault: Option<usize>,
) -> Result<Trim> {
    let weight = p.m_total * p.g;
    let v_h = [weight, 0.0, 0.0, 0.0];
    let nominal_pinv = crate::control::masked_pinv(p, &[true; N_ROTORS])?;

    let (virtual_cmd, realized) = match fault {
        None => (v_h, [p.hover_thrust(); N_ROTORS]),
        Some(f) => {
            if f >= N_ROTORS {
                return Err(Error::Domain(format!("fault rotor index {f} out of range")));
            }
            let mut mask = [true; N_ROTORS];
            mask[f] = false;
            let masked = crate::control::masked_pinv(p, &mask)?;
            let v = nalgebra::Vector4::from_column_slice(&v_h);
            let t = masked * v;
            let mut realized = [0.0; N_ROTORS];
            for j in 0..N_ROTORS {
                realized[j] = t[j];
                if t[j] < -1e-9 {
                    return Err(Error::Trim(format!(
                        "post-fault trim demands negative thrust at rotor {j}"
                    )));
                }
            }
            // The nominal mixer reproduces the redistribution when the
            // virtual command is offset along the failed rotor's allocation
            // column by twice its hover share.
            let b = crate::control::allocation_matrix(p);
            let dv = 2.0 * p.hover_thrust();
            let mut vc = v_h;
            for k in 0..4 {
                vc[k] += dv * b[(k, f)];
            }
            (vc, realized)
        }
    };

    // Commanded thrusts through the nominal mixer.
    let vc = nalgebra::Vector4::from_column_slice(&virtual_cmd);
    let tc = &nominal_pinv * vc;
    let mut commanded = [0.0; N_ROTORS];
    let mut voltages = [0.0; N_ROTORS];
    for j in 0..N_ROTORS {
        commanded[j] = tc[j];
        if tc[j] < -1e-9 {
            return Err(Error::Trim(format!(
                "trim commands negative thrust at rotor {j} ({:.3} N)",
                tc[j]
            )));
        }
        let w_cmd = p.rotor_speed_for_thrust(tc[j].max(0.0));
        voltages[j] = p.steady_voltage_for_speed(w_cmd);
        if voltages[j] > p.battery.u_bat + 1e-9 {
            return Err(Error::Trim(format!(
                "trim voltage {:.2} V at rotor {j} exceeds the {:.2} V bus",
                voltages[j], p.battery.u_bat
            )));
        }
    }

    // Integrator values producing the virtual-command offset at zero error.
    let dv = [virtual_cmd[0] - weight, virtual_cmd[1], virtual_cmd[2], virtual_cmd[3]];
    let mut ints = IntegratorState::default();
    let needs = |name: &str, num: f64, den: f64| -> Result<f64> {
        if num == 0.0 {
            return Ok(0.0);
        }
        if den == 0.0 {
            return Err(Error::Trim(format!(
                "passive recovery needs a nonzero {name} integral gain"
            )));
        }
        Ok(num / den)
    };
    ints.vel[2] = needs("vertical velocity", dv[0], p.m_total * gains.ki_vel_z)?;
    ints.vel[1] = needs(
        "lateral velocity",
        dv[1],
        -p.inertia[0] * gains.kp_rate_p * gains.kp_att_roll * gains.ki_vel_y / p.g,
    )?;
    ints.vel[0] = needs(
        "longitudinal velocity",
        dv[2],
        p.inertia[1] * gains.kp_rate_q * gains.kp_att_pitch * gains.ki_vel_x / p.g,
    )?;
    ints.yaw_rate = needs("yaw-rate", dv[3], p.inertia[2] * gains.ki_rate_r)?;

    // Physical state at the trim.
    let mut x = State::zeros();
    x.0[idx::POS] = pos[0];
    x.0[idx::POS + 1] = pos[1];
    x.0[idx::POS + 2] = pos[2];
    let q = euler_to_quat(&[0.0, 0.0, yaw]);
    x.0[idx::QUAT..idx::QUAT + 4].copy_from_slice(&q);
    for j in 0..N_ROTORS {
        let failed_here = fault == Some(j);
        let w = if failed_here { 0.0 } else { p.rotor_speed_for_thrust(realized[j].max(0.0)) };
        x.0[idx::OMEGA + j] = w;
        let i = if failed_here {
            0.0
        } else {
            (p.rotor_torque(w) + p.motor.kd * w) / p.motor.ke
        };
        x.0[idx::TEMP + j] = p.motor.rth * p.motor.r_ohm * i * i;
    }

    Ok(Trim {
        state: x,
        voltages,
        virtual_cmd,
        commanded_thrusts: commanded,
        realized_thrusts: realized,
        integrators: ints,
    })
}

/// A mission: time-stamped waypoints, linearly interpolated. The setpoint
/// between waypoints ramps position (with the matching velocity feedforward)
/// and yaw; before the first and after the last waypoint it holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mission {
    pub points: Vec<Waypoint>,
}

/// One mission waypoint.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Waypoint {
    /// Time since mission start \[s\].
    pub t: f64,
    /// Position, world frame \[m\].
    pub pos: [f64; 3],
    /// Heading \[rad\].
    pub yaw: f64,
}

impl Mission {
    /// Loads and validates a mission from a JSON file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let m: Mission = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad mission file {}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    /// At least two waypoints, starting at `t = 0`, strictly increasing, all
    /// values finite.
    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::Config("mission needs at least two waypoints".into()));
        }
        if self.points[0].t != 0.0 {
            return Err(Error::Config("mission must start at t = 0".into()));
        }
        for w in &self.points {
            let finite =
                w.t.is_finite() && w.yaw.is_finite() && w.pos.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::Config("mission waypoint has non-finite values".into()));
            }
        }
        for pair in self.points.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(Error::Config("mission waypoint times must strictly increase".into()));
            }
        }
        Ok(())
    }

    /// Mission duration \[s\].
    pub fn duration(&self) -> f64 {
        self.points.last().map(|w| w.t).unwrap_or(0.0)
    }

    /// Interpolated setpoint at time `t`.
    pub fn setpoint_at(&self, t: f64) -> Setpoint {
        let first = &self.points[0];
        if t <= first.t {
            return Setpoint { pos: first.pos, vel: [0.0; 3], att: [0.0, 0.0, first.yaw] };
        }
        for pair in self.points.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if t <= b.t {
                let span = b.t - a.t;
                let s = (t - a.t) / span;
                let mut pos = [0.0; 3];
                let mut vel = [0.0; 3];
                for k in 0..3 {
                    pos[k] = a.pos[k] + s * (b.pos[k] - a.pos[k]);
                    vel[k] = (b.pos[k] - a.pos[k]) / span;
                }
                let yaw = a.yaw + s * (b.yaw - a.yaw);
                return Setpoint { pos, vel, att: [0.0, 0.0, yaw] };
            }
        }
        let last = self.points.last().unwrap();
        Setpoint { pos: last.pos, vel: [0.0; 3], att: [0.0, 0.0, last.yaw] }
    }
}

/// A single-rotor open-circuit failure injected at a given time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    /// Rotor index, `0..8`.
    pub rotor: usize,
    /// Failure time since mission start \[s\].
    pub time: f64,
}

/// Simulation options.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Integration and control step \[s\].
    pub dt: f64,
    /// Keep every n-th sample in the trace (the final sample is always kept).
    pub record_every: usize,
    /// Optional rotor failure.
    pub fault: Option<Fault>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { dt: 0.005, record_every: 10, fault: None }
    }
}

/// One recorded sample of a mission simulation.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub t: f64,
    pub pos: [f64; 3],
    pub vel: [f64; 3],
    pub att: [f64; 3],
    pub rates: [f64; 3],
    pub omega: [f64; N_ROTORS],
    pub temp_rise: [f64; N_ROTORS],
    pub voltage: [f64; N_ROTORS],
    pub current: [f64; N_ROTORS],
    /// Instantaneous electrical power \[W\].
    pub power: f64,
    /// Energy drawn since mission start \[J\].
    pub energy: f64,
    /// Position-tracking error magnitude \[m\].
    pub pos_err: f64,
}

/// Aggregates the whole run for the design constraints.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimMetrics {
    /// Energy drawn from the battery \[J\].
    pub energy: f64,
    /// Peak instantaneous electrical power \[W\].
    pub peak_power: f64,
    /// Peak motor current magnitude \[A\].
    pub peak_current: f64,
    /// Peak motor torque magnitude \[N·m\].
    pub peak_torque: f64,
    /// Peak rotor speed \[rad/s\].
    pub peak_omega: f64,
    /// Peak transient winding temperature rise \[K\].
    pub peak_temp_rise: f64,
    /// Peak per-arm thrust (coaxial pair sum) \[N\] — sizes the arm bending.
    pub peak_arm_thrust: f64,
    /// Largest position-tracking error \[m\].
    pub max_pos_err: f64,
    /// Largest roll/pitch magnitude \[rad\].
    pub max_tilt: f64,
    /// Fraction of control steps with a saturated mixer.
    pub saturated_fraction: f64,
    /// Position error at the final sample \[m\].
    pub final_pos_err: f64,
}

/// Result of a closed-loop mission simulation.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub trace: Vec<TraceRow>,
    pub metrics: SimMetrics,
}

/// Flies the mission under the cascaded controller with the always-nominal
/// mixer. Faults are injected as open circuits; recovery is purely passive
/// (the integrators re-trim the vehicle).
///
/// Fails with [`Error::Diverged`] if the state leaves a generous envelope or
/// stops being finite — the gain tuner and design search rely on that signal
/// instead of NaN propagation.
pub fn simulate_mission(
    p: &VehicleParams,
    gains: &ControlGains,
    mission: &Mission,
    opts: &SimOptions,
) -> Result<SimResult> {
    gains.validate()?;
    mission.validate()?;
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {}", opts.dt)));
    }
    if opts.record_every == 0 {
        return Err(Error::Config("record_every must be at least 1".into()));
    }
    if let Some(f) = opts.fault {
        if f.rotor >= N_ROTORS {
            return Err(Error::Config(format!("fault rotor index {} out of range", f.rotor)));
        }
        if !(f.time.is_finite() && f.time >= 0.0) {
            return Err(Error::Config(format!("fault time must be non-negative, got {}", f.time)));
        }
    }

    let sp0 = mission.setpoint_at(0.0);
    let trim = trim_hover(p, gains, sp0.pos, sp0.att[2], None)?;
    let mixer = Mixer::new(p, &[true; N_ROTORS])?;

    let mut x = trim.state;
    let mut ints = trim.integrators;
    let n_steps = (mission.duration() / opts.dt).round() as usize;
    let mut trace = Vec::with_capacity(n_steps / opts.record_every + 2);
    let mut saturated_steps = 0usize;

    let mut metrics = SimMetrics {
        energy: 0.0,
        peak_power: 0.0,
        peak_current: 0.0,
        peak_torque: 0.0,
        peak_omega: 0.0,
        peak_temp_rise: 0.0,
        peak_arm_thrust: 0.0,
        max_pos_err: 0.0,
        max_tilt: 0.0,
        saturated_fraction: 0.0,
        final_pos_err: 0.0,
    };

    for step in 0..=n_steps {
        let t = step as f64 * opts.dt;
        let sp = mission.setpoint_at(t);
        let meas = x.measurement();
        let cmd = controller_step(gains, p, &sp, &meas, &ints);
        let out = mixer.mix(&cmd.virtual_cmd);

        let mut failed = [false; N_ROTORS];
        if let Some(f) = opts.fault {
            failed[f.rotor] = t >= f.time;
        }

        // Observability bookkeeping at the step boundary.
        let mut power = 0.0;
        let mut currents = [0.0; N_ROTORS];
        for j in 0..N_ROTORS {
            let i = if failed[j] {
                0.0
            } else {
                (out.voltages[j] - p.motor.ke * x.omega(j)) / p.motor.r_ohm
            };
            currents[j] = i;
            power += (out.voltages[j] * i).max(0.0);
            metrics.peak_current = metrics.peak_current.max(i.abs());
            metrics.peak_torque = metrics.peak_torque.max((p.motor.ke * i).abs());
            metrics.peak_omega = metrics.peak_omega.max(x.omega(j).abs());
            metrics.peak_temp_rise = metrics.peak_temp_rise.max(x.temp(j));
        }
        for arm in 0..4 {
            let pair = p.rotor_thrust(x.omega(arm)) + p.rotor_thrust(x.omega(arm + 4));
            metrics.peak_arm_thrust = metrics.peak_arm_thrust.max(pair);
        }
        let pe = {
            let d = [sp.pos[0] - meas.pos[0], sp.pos[1] - meas.pos[1], sp.pos[2] - meas.pos[2]];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        };
        metrics.max_pos_err = metrics.max_pos_err.max(pe);
        metrics.max_tilt = metrics.max_tilt.max(meas.att[0].abs()).max(meas.att[1].abs());
        metrics.peak_power = metrics.peak_power.max(power);
        if out.saturated {
            saturated_steps += 1;
        }

        if step % opts.record_every == 0 || step == n_steps {
            let mut temp_rise = [0.0; N_ROTORS];
            let mut omega = [0.0; N_ROTORS];
            for j in 0..N_ROTORS {
                temp_rise[j] = x.temp(j);
                omega[j] = x.omega(j);
            }
            trace.push(TraceRow {
                t,
                pos: meas.pos,
                vel: meas.vel,
                att: meas.att,
                rates: meas.rates,
                omega,
                temp_rise,
                voltage: out.voltages,
                current: currents,
                power,
                energy: x.energy(),
                pos_err: pe,
            });
        }

        if step == n_steps {
            metrics.final_pos_err = pe;
            break;
        }

        // Integrate one control period, then apply the integrator rates —
        // frozen while the mixer saturates (anti-windup).
        x = step_rk4(p, &x, &out.voltages, &failed, opts.dt);
        if !out.saturated {
            ints.vel[0] += cmd.integrator_rates.vel[0] * opts.dt;
            ints.vel[1] += cmd.integrator_rates.vel[1] * opts.dt;
            ints.vel[2] += cmd.integrator_rates.vel[2] * opts.dt;
            ints.yaw_rate += cmd.integrator_rates.yaw_rate * opts.dt;
        }

        let finite = x.0.iter().all(|v| v.is_finite());
        let bounded = meas.pos.iter().all(|v| v.abs() < 1e4)
            && meas.rates.iter().all(|v| v.abs() < 1e3);
        if !finite || !bounded {
            return Err(Error::Diverged(format!("state diverged at t = {t:.3} s")));
        }
    }

    metrics.energy = x.energy();
    metrics.saturated_fraction = saturated_steps as f64 / (n_steps + 1) as f64;
    Ok(SimResult { trace, metrics })
}

/// Time from a fault to the first trace sample after which the flight stays
/// inside both tolerance bands — position error and largest attitude error
/// against the mission setpoint — for the whole remainder of the trace.
/// `None` if it never settles (the last excursion runs to the end).
pub fn recovery_time(
    trace: &[TraceRow],
    mission: &Mission,
    fault_time: f64,
    pos_tol: f64,
    att_tol: f64,
) -> Option<f64> {
    let mut settled_since: Option<f64> = None;
    for row in trace.iter().filter(|r| r.t >= fault_time) {
        let sp = mission.setpoint_at(row.t);
        let att_err = row
            .att
            .iter()
            .zip(&sp.att)
            .map(|(a, r)| (a - r).abs())
            .fold(0.0, f64::max);
        if row.pos_err <= pos_tol && att_err <= att_tol {
            settled_since.get_or_insert(row.t);
        } else {
            settled_since = None;
        }
    }
    settled_since.map(|t| (t - fault_time).max(0.0))
}
