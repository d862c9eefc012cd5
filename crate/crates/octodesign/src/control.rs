//! Cascaded flight controller and control allocation (mixer).
//!
//! The controller is a fixed-structure cascade with sixteen scalar gains:
//!
//! ```text
//! position P ─▶ velocity PI ─▶ tilt/thrust inversion ─▶ attitude P ─▶ rate P (roll/pitch)
//!                                                                     rate PI (yaw)
//! ```
//!
//! Gains are normalized: the velocity loop commands accelerations (thrust is
//! `m·(g + a_z)`), the rate loops command angular accelerations (torques are
//! inertia-scaled). A gain set therefore transfers meaningfully between plants
//! of different size, which the outer design loop exploits for warm starts.
//!
//! The mixer maps the four-dimensional virtual command (total thrust and three
//! body torques) to eight rotor thrusts through the minimum-norm right inverse
//! of the allocation matrix, then to motor voltages through the steady-state
//! motor/rotor characteristic. Allocation never reconfigures in flight: fault
//! tolerance is passive, carried entirely by the cascade integrators. Masked
//! variants of the allocation exist for analysis of the degraded plant (trim
//! and linearization with a rotor out), not for the flight path.
//!
//! [`controller_lti`] is the exact small-signal realization of the cascade
//! around hover, used by the gain tuner; its state vector consists of exactly
//! those integrators whose gain is nonzero, so zero-integral gain sets stay
//! controllable and Hurwitz-testable.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::StateSpace;
use crate::sizing::{VehicleParams, N_ROTORS};

/// Number of controller gains.
pub const N_GAINS: usize = 16;

/// The sixteen controller gains.
///
/// Position and attitude loops are proportional; the velocity loop and the
/// yaw-rate loop carry integrators (`ki_*`). Roll/pitch rate loops are purely
/// proportional — their plants are double integrators already closed by the
/// attitude loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    pub kp_pos_x: f64,
    pub kp_pos_y: f64,
    pub kp_pos_z: f64,
    pub kp_vel_x: f64,
    pub kp_vel_y: f64,
    pub kp_vel_z: f64,
    pub ki_vel_x: f64,
    pub ki_vel_y: f64,
    pub ki_vel_z: f64,
    pub kp_att_roll: f64,
    pub kp_att_pitch: f64,
    pub kp_att_yaw: f64,
    pub kp_rate_p: f64,
    pub kp_rate_q: f64,
    pub kp_rate_r: f64,
    pub ki_rate_r: f64,
}

impl ControlGains {
    /// Fixed field order used wherever the gains are treated as a vector.
    pub const FIELD_NAMES: [&'static str; 16] = [
        "kp_pos_x",
        "kp_pos_y",
        "kp_pos_z",
        "kp_vel_x",
        "kp_vel_y",
        "kp_vel_z",
        "ki_vel_x",
        "ki_vel_y",
        "ki_vel_z",
        "kp_att_roll",
        "kp_att_pitch",
        "kp_att_yaw",
        "kp_rate_p",
        "kp_rate_q",
        "kp_rate_r",
        "ki_rate_r",
    ];

    /// Gains as a fixed-order array (see [`ControlGains::FIELD_NAMES`]).
    pub fn to_array(self) -> [f64; 16] {
        [
            self.kp_pos_x,
            self.kp_pos_y,
            self.kp_pos_z,
            self.kp_vel_x,
            self.kp_vel_y,
            self.kp_vel_z,
            self.ki_vel_x,
            self.ki_vel_y,
            self.ki_vel_z,
            self.kp_att_roll,
            self.kp_att_pitch,
            self.kp_att_yaw,
            self.kp_rate_p,
            self.kp_rate_q,
            self.kp_rate_r,
            self.ki_rate_r,
        ]
    }

    /// Inverse of [`ControlGains::to_array`].
    pub fn from_array(x: [f64; 16]) -> Self {
        ControlGains {
            kp_pos_x: x[0],
            kp_pos_y: x[1],
            kp_pos_z: x[2],
            kp_vel_x: x[3],
            kp_vel_y: x[4],
            kp_vel_z: x[5],
            ki_vel_x: x[6],
            ki_vel_y: x[7],
            ki_vel_z: x[8],
            kp_att_roll: x[9],
            kp_att_pitch: x[10],
            kp_att_yaw: x[11],
            kp_rate_p: x[12],
            kp_rate_q: x[13],
            kp_rate_r: x[14],
            ki_rate_r: x[15],
        }
    }

    /// Every gain must be finite and non-negative (integral gains may be
    /// exactly zero, which removes the corresponding integrator state).
    pub fn validate(&self) -> Result<()> {
        for (name, v) in Self::FIELD_NAMES.iter().zip(self.to_array()) {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!(
                    "gain {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Loads gains from a JSON file (all sixteen fields required).
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let g: ControlGains = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad gain file {}: {e}", path.display())))?;
        g.validate()?;
        Ok(g)
    }

    /// Writes gains to a JSON file (pretty-printed, stable field order).
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Commanded trajectory point. Roll/pitch entries of `att` are additive
/// offsets on top of what the velocity loop demands (zero in normal flight;
/// the loop-shaping model uses them as reference inputs); the yaw entry is an
/// absolute heading reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    /// Position reference \[m\].
    pub pos: [f64; 3],
    /// Velocity feedforward \[m/s\].
    pub vel: [f64; 3],
    /// Attitude reference \[rad\]: roll offset, pitch offset, yaw.
    pub att: [f64; 3],
}

impl Setpoint {
    /// Hold a position with zero feedforward and level heading-zero attitude.
    pub fn hold(pos: [f64; 3]) -> Self {
        Setpoint { pos, vel: [0.0; 3], att: [0.0; 3] }
    }
}

/// What the controller measures: position, velocity, attitude (roll, pitch,
/// yaw) and body rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub pos: [f64; 3],
    pub vel: [f64; 3],
    pub att: [f64; 3],
    pub rates: [f64; 3],
}

/// Integrator states of the cascade: three velocity-error integrals and the
/// yaw-rate-error integral.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IntegratorState {
    pub vel: [f64; 3],
    pub yaw_rate: f64,
}

/// One controller evaluation: the virtual command (total thrust \[N\] and
/// body torques \[N·m\]) plus the integrator time-derivatives the caller
/// should apply — unless anti-windup freezes them because the mixer
/// saturated on the previous step.
#[derive(Debug, Clone, Copy)]
pub struct ControlCommand {
    /// `[thrust, torque_x, torque_y, torque_z]`.
    pub virtual_cmd: [f64; 4],
    /// Time-derivatives of [`IntegratorState`].
    pub integrator_rates: IntegratorState,
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = a % two_pi;
    if w > std::f64::consts::PI {
        w -= two_pi;
    } else if w <= -std::f64::consts::PI {
        w += two_pi;
    }
    w
}

/// One pass through the cascade. Pure function: integrator updates are
/// returned as rates, not applied.
pub fn controller_step(
    gains: &ControlGains,
    p: &VehicleParams,
    sp: &Setpoint,
    m: &Measurement,
    ints: &IntegratorState,
) -> ControlCommand {
    // Position P loop commands velocity; velocity feedforward adds on top.
    let vel_cmd = [
        sp.vel[0] + gains.kp_pos_x * (sp.pos[0] - m.pos[0]),
        sp.vel[1] + gains.kp_pos_y * (sp.pos[1] - m.pos[1]),
        sp.vel[2] + gains.kp_pos_z * (sp.pos[2] - m.pos[2]),
    ];
    let vel_err = [vel_cmd[0] - m.vel[0], vel_cmd[1] - m.vel[1], vel_cmd[2] - m.vel[2]];

    // Velocity PI loop commands world-frame acceleration.
    let a_cmd = [
        gains.kp_vel_x * vel_err[0] + gains.ki_vel_x * ints.vel[0],
        gains.kp_vel_y * vel_err[1] + gains.ki_vel_y * ints.vel[1],
        gains.kp_vel_z * vel_err[2] + gains.ki_vel_z * ints.vel[2],
    ];

    // Small-tilt inversion: horizontal acceleration comes from tilting the
    // thrust vector (≈ g per radian), rotated into the current heading.
    let (s_psi, c_psi) = m.att[2].sin_cos();
    let phi_d = (a_cmd[0] * s_psi - a_cmd[1] * c_psi) / p.g + sp.att[0];
    let theta_d = (a_cmd[0] * c_psi + a_cmd[1] * s_psi) / p.g + sp.att[1];

    // Vertical axis: thrust with tilt compensation (clamped so an extreme
    // attitude cannot command unbounded thrust).
    let tilt = (m.att[0].cos() * m.att[1].cos()).max(0.5);
    let thrust = p.m_total * (p.g + a_cmd[2]) / tilt;

    // Attitude P loop commands body rates.
    let p_cmd = gains.kp_att_roll * (phi_d - m.att[0]);
    let q_cmd = gains.kp_att_pitch * (theta_d - m.att[1]);
    let r_cmd = gains.kp_att_yaw * wrap_angle(sp.att[2] - m.att[2]);

    // Rate loops command angular accelerations; torques are inertia-scaled.
    // Yaw carries an integrator: its control authority (rotor drag) is weak
    // and a rotor failure leaves a torque bias only integral action removes.
    let tau_x = p.inertia[0] * gains.kp_rate_p * (p_cmd - m.rates[0]);
    let tau_y = p.inertia[1] * gains.kp_rate_q * (q_cmd - m.rates[1]);
    let r_err = r_cmd - m.rates[2];
    let tau_z = p.inertia[2] * (gains.kp_rate_r * r_err + gains.ki_rate_r * ints.yaw_rate);

    ControlCommand {
        virtual_cmd: [thrust, tau_x, tau_y, tau_z],
        integrator_rates: IntegratorState { vel: vel_err, yaw_rate: r_err },
    }
}

/// Allocation matrix `B` (4×8): maps rotor thrusts to
/// `[total thrust, torque_x, torque_y, torque_z]`. Row 0 is all ones; rows
/// 1–2 are the thrust moment arms `(y_j, −x_j)`; row 3 is the reaction torque
/// per unit thrust `−κ·spin_j`.
pub fn allocation_matrix(p: &VehicleParams) -> DMatrix<f64> {
    let kappa = p.kappa();
    DMatrix::from_fn(4, N_ROTORS, |i, j| match i {
        0 => 1.0,
        1 => p.rotor_xy[j][1],
        2 => -p.rotor_xy[j][0],
        _ => -kappa * p.spin[j],
    })
}

/// Minimum-norm right inverse of the allocation matrix with the masked-out
/// rotors' columns removed; returns an 8×4 matrix whose masked rows are zero.
/// Fails if the remaining rotors cannot span the four-dimensional wrench
/// space (fewer than four active rotors, or a degenerate geometry).
pub fn masked_pinv(p: &VehicleParams, mask: &[bool; N_ROTORS]) -> Result<DMatrix<f64>> {
    let b = allocation_matrix(p);
    let mut bm = b.clone();
    for j in 0..N_ROTORS {
        if !mask[j] {
            bm.column_mut(j).fill(0.0);
        }
    }
    // B⁺ = Bᵀ(BBᵀ)⁻¹ over the active columns.
    let gram = &bm * bm.transpose();
    let inv = gram.clone().try_inverse().ok_or_else(|| {
        Error::Infeasible(format!(
            "control allocation is singular with mask {mask:?}"
        ))
    })?;
    // Guard against a numerically near-singular Gram matrix: require the
    // reconstruction to be a genuine right inverse.
    let residual = (&bm * bm.transpose() * &inv - DMatrix::<f64>::identity(4, 4)).amax();
    if !residual.is_finite() || residual > 1e-6 {
        return Err(Error::Infeasible(format!(
            "control allocation is near-singular with mask {mask:?} (residual {residual:.2e})"
        )));
    }
    Ok(bm.transpose() * inv)
}

/// Mixer result: per-rotor commanded thrusts, the steady rotor speeds they
/// correspond to, the motor voltages that hold those speeds, and whether any
/// command had to be clamped (thrust below zero or voltage outside
/// `[0, u_bat]`).
#[derive(Debug, Clone)]
pub struct MixerOutput {
    pub thrusts: [f64; N_ROTORS],
    pub speeds: [f64; N_ROTORS],
    pub voltages: [f64; N_ROTORS],
    pub saturated: bool,
}

/// Control allocator with a precomputed inverse. Construct once per flight
/// (or per analysis case) and call [`Mixer::mix`] at the control rate.
#[derive(Debug, Clone)]
pub struct Mixer {
    pinv: DMatrix<f64>,
    params: VehicleParams,
}

impl Mixer {
    /// Builds the mixer for a given rotor availability mask. The flight
    /// configuration is `[true; 8]` — fault tolerance is passive and the
    /// in-flight allocation never reconfigures; masked mixers exist for
    /// analysing the degraded plant.
    pub fn new(p: &VehicleParams, mask: &[bool; N_ROTORS]) -> Result<Self> {
        Ok(Mixer { pinv: masked_pinv(p, mask)?, params: p.clone() })
    }

    /// Allocates a virtual command to rotor thrusts and motor voltages.
    pub fn mix(&self, virtual_cmd: &[f64; 4]) -> MixerOutput {
        let v = nalgebra::Vector4::from_column_slice(virtual_cmd);
        let t = &self.pinv * v;
        let mut thrusts = [0.0; N_ROTORS];
        let mut speeds = [0.0; N_ROTORS];
        let mut voltages = [0.0; N_ROTORS];
        let mut saturated = false;
        let u_max = self.params.battery.u_bat;
        for j in 0..N_ROTORS {
            let mut tj = t[j];
            if tj < 0.0 {
                tj = 0.0;
                saturated = true;
            }
            let w = self.params.rotor_speed_for_thrust(tj);
            let mut u = self.params.steady_voltage_for_speed(w);
            if u > u_max {
                u = u_max;
                saturated = true;
            }
            thrusts[j] = tj;
            speeds[j] = w;
            voltages[j] = u;
        }
        MixerOutput { thrusts, speeds, voltages, saturated }
    }
}

/// Measurement vector layout produced by the plant models and consumed by the
/// controller realization: position (3), velocity (3), attitude (3), body
/// rates (3).
pub const MEAS_LABELS: [&str; 12] = [
    "pos_x", "pos_y", "pos_z", "vel_x", "vel_y", "vel_z", "roll", "pitch", "yaw", "rate_p",
    "rate_q", "rate_r",
];

/// Reference vector layout of the tracking model: position (3) and attitude
/// (3; roll/pitch offsets, yaw).
pub const REF_LABELS: [&str; 6] = ["ref_x", "ref_y", "ref_z", "ref_roll", "ref_pitch", "ref_yaw"];

/// Indices of the tracked outputs within [`MEAS_LABELS`] (position and
/// attitude — the channels the references compare against).
pub const TRACKED_MEAS: [usize; 6] = [0, 1, 2, 6, 7, 8];

/// Exact small-signal realization of the cascade around hover (level
/// attitude, zero heading).
///
/// Inputs: the six references of [`REF_LABELS`] followed by the twelve
/// measurements of [`MEAS_LABELS`]. Outputs: the four virtual commands
/// (deviations from the hover trim `[m·g, 0, 0, 0]`). States: the integrators
/// whose gain is nonzero, in the order `[vel_x, vel_y, vel_z, yaw_rate]` —
/// zero-gain integrators are dropped entirely so they cannot appear as
/// uncontrollable marginal modes in closed-loop analysis.
pub fn controller_lti(gains: &ControlGains, p: &VehicleParams) -> Result<StateSpace> {
    gains.validate()?;
    let g = p.g;
    let (ixx, iyy, izz) = (p.inertia[0], p.inertia[1], p.inertia[2]);

    // Which integrators exist structurally.
    let keep = [
        gains.ki_vel_x != 0.0,
        gains.ki_vel_y != 0.0,
        gains.ki_vel_z != 0.0,
        gains.ki_rate_r != 0.0,
    ];
    let nx = keep.iter().filter(|&&k| k).count();
    let n_in = REF_LABELS.len() + MEAS_LABELS.len();

    // Input indices.
    let (rx, ry, rz, rphi, rtheta, rpsi) = (0, 1, 2, 3, 4, 5);
    let off = REF_LABELS.len();
    let (px, py, pz) = (off, off + 1, off + 2);
    let (vx, vy, vz) = (off + 3, off + 4, off + 5);
    let (phi, theta, psi) = (off + 6, off + 7, off + 8);
    let (wp, wq, wr) = (off + 9, off + 10, off + 11);

    // Velocity-error sensitivities (rows: x, y, z integrator inputs).
    // vel_err_i = kp_pos_i·(r_i − pos_i) − vel_i.
    let kp_pos = [gains.kp_pos_x, gains.kp_pos_y, gains.kp_pos_z];
    let ref_idx = [rx, ry, rz];
    let pos_idx = [px, py, pz];
    let vel_idx = [vx, vy, vz];

    // A stays zero: the controller's only dynamics are pure integrators.
    let a = DMatrix::zeros(nx, nx);
    let mut b = DMatrix::zeros(nx, n_in);
    let mut c = DMatrix::zeros(4, nx);
    let mut d = DMatrix::zeros(4, n_in);

    // State bookkeeping: map of kept integrators to state indices.
    let mut state_of = [usize::MAX; 4];
    {
        let mut s = 0;
        for (k, kept) in keep.iter().enumerate() {
            if *kept {
                state_of[k] = s;
                s += 1;
            }
        }
    }

    for axis in 0..3 {
        if keep[axis] {
            let s = state_of[axis];
            b[(s, ref_idx[axis])] = kp_pos[axis];
            b[(s, pos_idx[axis])] = -kp_pos[axis];
            b[(s, vel_idx[axis])] = -1.0;
        }
    }
    if keep[3] {
        let s = state_of[3];
        b[(s, rpsi)] = gains.kp_att_yaw;
        b[(s, psi)] = -gains.kp_att_yaw;
        b[(s, wr)] = -1.0;
    }

    // Row 0: thrust = m·(g + a_z)/tilt; at trim the tilt factor contributes
    // nothing to first order, so δT = m·δa_z.
    let m_tot = p.m_total;
    d[(0, rz)] = m_tot * gains.kp_vel_z * gains.kp_pos_z;
    d[(0, pz)] = -m_tot * gains.kp_vel_z * gains.kp_pos_z;
    d[(0, vz)] = -m_tot * gains.kp_vel_z;
    if keep[2] {
        c[(0, state_of[2])] = m_tot * gains.ki_vel_z;
    }

    // Row 1: roll torque. At zero heading φ_d = −a_y/g + r_φ.
    let kx = ixx * gains.kp_rate_p;
    let ka_roll = kx * gains.kp_att_roll;
    d[(1, ry)] = -ka_roll * gains.kp_vel_y * gains.kp_pos_y / g;
    d[(1, py)] = ka_roll * gains.kp_vel_y * gains.kp_pos_y / g;
    d[(1, vy)] = ka_roll * gains.kp_vel_y / g;
    d[(1, rphi)] = ka_roll;
    d[(1, phi)] = -ka_roll;
    d[(1, wp)] = -kx;
    if keep[1] {
        c[(1, state_of[1])] = -ka_roll * gains.ki_vel_y / g;
    }

    // Row 2: pitch torque. At zero heading θ_d = a_x/g + r_θ.
    let ky = iyy * gains.kp_rate_q;
    let ka_pitch = ky * gains.kp_att_pitch;
    d[(2, rx)] = ka_pitch * gains.kp_vel_x * gains.kp_pos_x / g;
    d[(2, px)] = -ka_pitch * gains.kp_vel_x * gains.kp_pos_x / g;
    d[(2, vx)] = -ka_pitch * gains.kp_vel_x / g;
    d[(2, rtheta)] = ka_pitch;
    d[(2, theta)] = -ka_pitch;
    d[(2, wq)] = -ky;
    if keep[0] {
        c[(2, state_of[0])] = ka_pitch * gains.ki_vel_x / g;
    }

    // Row 3: yaw torque.
    let kz = izz * gains.kp_rate_r;
    d[(3, rpsi)] = kz * gains.kp_att_yaw;
    d[(3, psi)] = -kz * gains.kp_att_yaw;
    d[(3, wr)] = -kz;
    if keep[3] {
        c[(3, state_of[3])] = izz * gains.ki_rate_r;
    }

    StateSpace::new(a, b, c, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sizing::{assemble_vehicle, PlantDesign};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_vehicle() -> VehicleParams {
        let re = crate::sizing::test_reference();
        assemble_vehicle(&PlantDesign::ones(), &re).unwrap()
    }

    fn sample_gains(rng: &mut ChaCha8Rng) -> ControlGains {
        let mut x = [0.0; 16];
        for v in x.iter_mut() {
            *v = rng.gen_range(0.1..12.0);
        }
        // Sometimes drop integrators to exercise the structural reduction.
        if rng.gen_bool(0.3) {
            x[6] = 0.0;
        }
        if rng.gen_bool(0.3) {
            x[8] = 0.0;
        }
        if rng.gen_bool(0.3) {
            x[15] = 0.0;
        }
        ControlGains::from_array(x)
    }

    fn nominal_gains() -> ControlGains {
        ControlGains {
            kp_pos_x: 0.8,
            kp_pos_y: 0.8,
            kp_pos_z: 1.0,
            kp_vel_x: 2.5,
            kp_vel_y: 2.5,
            kp_vel_z: 3.0,
            ki_vel_x: 0.8,
            ki_vel_y: 0.8,
            ki_vel_z: 1.2,
            kp_att_roll: 6.0,
            kp_att_pitch: 6.0,
            kp_att_yaw: 3.0,
            kp_rate_p: 15.0,
            kp_rate_q: 15.0,
            kp_rate_r: 8.0,
            ki_rate_r: 4.0,
        }
    }

    fn hover_measurement() -> Measurement {
        Measurement { pos: [0.0; 3], vel: [0.0; 3], att: [0.0; 3], rates: [0.0; 3] }
    }

    #[test]
    fn gains_json_uses_canonical_names() {
        let g = nominal_gains();
        let text = serde_json::to_string(&g).unwrap();
        for name in ControlGains::FIELD_NAMES {
            assert!(text.contains(&format!("\"{name}\"")), "missing field {name}");
        }
        let back: ControlGains = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(ControlGains::from_array(g.to_array()), g);
    }

    #[test]
    fn hover_trim_produces_weight_and_zero_torque() {
        let p = reference_vehicle();
        let cmd = controller_step(
            &nominal_gains(),
            &p,
            &Setpoint::hold([0.0; 3]),
            &hover_measurement(),
            &IntegratorState::default(),
        );
        assert_relative_eq!(cmd.virtual_cmd[0], p.m_total * p.g, max_relative = 1e-14);
        assert_eq!(cmd.virtual_cmd[1], 0.0);
        assert_eq!(cmd.virtual_cmd[2], 0.0);
        assert_eq!(cmd.virtual_cmd[3], 0.0);
        assert_eq!(cmd.integrator_rates.vel, [0.0; 3]);
        assert_eq!(cmd.integrator_rates.yaw_rate, 0.0);
    }

    #[test]
    fn vertical_cascade_hand_trace() {
        // One metre of climb demand propagates as
        // ΔT = m·kp_vel_z·kp_pos_z·(1 m).
        let p = reference_vehicle();
        let g = nominal_gains();
        let cmd = controller_step(
            &g,
            &p,
            &Setpoint::hold([0.0, 0.0, 1.0]),
            &hover_measurement(),
            &IntegratorState::default(),
        );
        let expected = p.m_total * (p.g + g.kp_vel_z * g.kp_pos_z);
        assert_relative_eq!(cmd.virtual_cmd[0], expected, max_relative = 1e-14);
        // And charges the z velocity integrator at kp_pos_z·(1 m) per second.
        assert_relative_eq!(cmd.integrator_rates.vel[2], g.kp_pos_z, max_relative = 1e-14);
    }

    #[test]
    fn lateral_error_maps_to_tilt_with_correct_signs() {
        let p = reference_vehicle();
        let g = nominal_gains();
        // Vehicle displaced +1 m in y ⇒ must accelerate toward −y ⇒ roll
        // positive... φ_d = −a_y/g with a_y < 0 ⇒ φ_d > 0 ⇒ positive roll
        // torque demand.
        let m = Measurement { pos: [0.0, 1.0, 0.0], ..hover_measurement() };
        let cmd = controller_step(&g, &p, &Setpoint::hold([0.0; 3]), &m, &IntegratorState::default());
        assert!(cmd.virtual_cmd[1] > 0.0, "roll torque {}", cmd.virtual_cmd[1]);
        assert_eq!(cmd.virtual_cmd[2], 0.0);

        // Displaced +1 m in x ⇒ accelerate toward −x ⇒ pitch negative.
        let m = Measurement { pos: [1.0, 0.0, 0.0], ..hover_measurement() };
        let cmd = controller_step(&g, &p, &Setpoint::hold([0.0; 3]), &m, &IntegratorState::default());
        assert!(cmd.virtual_cmd[2] < 0.0, "pitch torque {}", cmd.virtual_cmd[2]);
        assert_eq!(cmd.virtual_cmd[1], 0.0);
    }

    #[test]
    fn yaw_error_wraps_across_pi() {
        let p = reference_vehicle();
        let g = nominal_gains();
        let sp = Setpoint { att: [0.0, 0.0, std::f64::consts::PI - 0.1], ..Setpoint::hold([0.0; 3]) };
        let m = Measurement { att: [0.0, 0.0, -std::f64::consts::PI + 0.1], ..hover_measurement() };
        let cmd = controller_step(&g, &p, &sp, &m, &IntegratorState::default());
        // Shortest path is −0.2 rad (through ±π), not +2π−0.2.
        let expected = p.inertia[2] * g.kp_rate_r * g.kp_att_yaw * (-0.2);
        assert_relative_eq!(cmd.virtual_cmd[3], expected, max_relative = 1e-10);
    }

    #[test]
    fn allocation_matrix_gram_is_diagonal() {
        let p = reference_vehicle();
        let b = allocation_matrix(&p);
        let gram = &b * b.transpose();
        let c2 = p.arm.l * p.arm.l / 2.0;
        let kappa2 = p.kappa() * p.kappa();
        assert_relative_eq!(gram[(0, 0)], 8.0, max_relative = 1e-14);
        assert_relative_eq!(gram[(1, 1)], 8.0 * c2, max_relative = 1e-13);
        assert_relative_eq!(gram[(2, 2)], 8.0 * c2, max_relative = 1e-13);
        assert_relative_eq!(gram[(3, 3)], 8.0 * kappa2, max_relative = 1e-13);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(gram[(i, j)].abs() < 1e-12, "gram[{i}][{j}] = {}", gram[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn nominal_mixer_reproduces_hover_oracle() {
        let p = reference_vehicle();
        let mixer = Mixer::new(&p, &[true; N_ROTORS]).unwrap();
        let out = mixer.mix(&[p.m_total * p.g, 0.0, 0.0, 0.0]);
        assert!(!out.saturated);
        for j in 0..N_ROTORS {
            assert_relative_eq!(out.thrusts[j], 12.2625, max_relative = 1e-12);
            assert_relative_eq!(out.speeds[j], 407.37644611466027, max_relative = 1e-12);
            assert_relative_eq!(out.voltages[j], 15.168868719061336, max_relative = 1e-12);
        }
    }

    #[test]
    fn mixer_reconstructs_feasible_wrenches() {
        let p = reference_vehicle();
        let b = allocation_matrix(&p);
        let mixer = Mixer::new(&p, &[true; N_ROTORS]).unwrap();
        let w_h = p.m_total * p.g;
        for cmd in [
            [w_h, 0.5, -0.3, 0.05],
            [w_h * 1.2, -1.0, 0.4, -0.1],
            [w_h * 0.8, 0.0, 1.1, 0.2],
        ] {
            let out = mixer.mix(&cmd);
            assert!(!out.saturated);
            let t = nalgebra::DVector::from_column_slice(&out.thrusts);
            let v = &b * t;
            for k in 0..4 {
                assert_relative_eq!(v[k], cmd[k], max_relative = 1e-10, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn differential_commands_split_symmetrically() {
        let p = reference_vehicle();
        let mixer = Mixer::new(&p, &[true; N_ROTORS]).unwrap();
        let w_h = p.m_total * p.g;
        // Pure roll torque: left rotors (y > 0) up, right rotors down.
        let out = mixer.mix(&[w_h, 1.0, 0.0, 0.0]);
        for j in 0..N_ROTORS {
            let dy = p.rotor_xy[j][1].signum();
            assert!((out.thrusts[j] - 12.2625) * dy > 0.0, "rotor {j}");
        }
        // Pure yaw torque: thrust moves with −spin (reaction torque).
        let out = mixer.mix(&[w_h, 0.0, 0.0, 0.1]);
        for j in 0..N_ROTORS {
            assert!((out.thrusts[j] - 12.2625) * p.spin[j] < 0.0, "rotor {j}");
        }
    }

    #[test]
    fn masked_allocation_matches_closed_form_redistribution() {
        // Losing rotor 0 (arm 0, upper ring) redistributes hover thrust as
        // T_h·[0, 1, 1, 1, 1.5, 1.5, 0.5, 1.5]: the failed rotor's ring
        // neighbours stay nominal, the lower ring picks up the slack, and the
        // diagonally opposite lower rotor is the one that slows down.
        let p = reference_vehicle();
        let mut mask = [true; N_ROTORS];
        mask[0] = false;
        let mixer = Mixer::new(&p, &mask).unwrap();
        let out = mixer.mix(&[p.m_total * p.g, 0.0, 0.0, 0.0]);
        let th = 12.2625;
        let expected = [0.0, 1.0, 1.0, 1.0, 1.5, 1.5, 0.5, 1.5];
        for j in 0..N_ROTORS {
            assert_relative_eq!(out.thrusts[j], th * expected[j], max_relative = 1e-10, epsilon = 1e-12);
        }
        // The redistribution still produces the requested wrench through the
        // active rotors.
        let b = allocation_matrix(&p);
        let t = nalgebra::DVector::from_column_slice(&out.thrusts);
        let v = &b * t;
        assert_relative_eq!(v[0], p.m_total * p.g, max_relative = 1e-12);
        for k in 1..4 {
            assert!(v[k].abs() < 1e-10, "wrench component {k} = {}", v[k]);
        }
    }

    #[test]
    fn every_single_fault_keeps_allocation_feasible() {
        let p = reference_vehicle();
        for f in 0..N_ROTORS {
            let mut mask = [true; N_ROTORS];
            mask[f] = false;
            let mixer = Mixer::new(&p, &mask).unwrap();
            let out = mixer.mix(&[p.m_total * p.g, 0.0, 0.0, 0.0]);
            assert_eq!(out.thrusts[f], 0.0);
            assert!(!out.saturated, "fault {f} saturates at hover");
            // Coax partner of the diagonally opposite arm runs slowest.
            let slowest = (0..N_ROTORS)
                .filter(|&j| j != f)
                .min_by(|&a, &b| out.thrusts[a].total_cmp(&out.thrusts[b]))
                .unwrap();
            let opposite_arm = (VehicleParams::arm_of(f) + 2) % 4;
            assert_eq!(VehicleParams::arm_of(slowest), opposite_arm, "fault {f}");
            assert_relative_eq!(out.thrusts[slowest], 0.5 * 12.2625, max_relative = 1e-10);
        }
    }

    #[test]
    fn mixer_flags_saturation_and_clamps() {
        let p = reference_vehicle();
        let mixer = Mixer::new(&p, &[true; N_ROTORS]).unwrap();
        // Huge climb command: voltages clamp at the bus voltage.
        let out = mixer.mix(&[10.0 * p.m_total * p.g, 0.0, 0.0, 0.0]);
        assert!(out.saturated);
        for u in out.voltages {
            assert!(u <= p.battery.u_bat + 1e-12);
        }
        // Huge roll command: some thrusts clamp at zero.
        let out = mixer.mix(&[p.m_total * p.g, 500.0, 0.0, 0.0]);
        assert!(out.saturated);
        assert!(out.thrusts.iter().any(|&t| t == 0.0));
        assert!(out.voltages.iter().all(|&u| (0.0..=p.battery.u_bat).contains(&u)));
    }

    #[test]
    fn too_many_failures_are_rejected() {
        let p = reference_vehicle();
        // Three arms entirely out: only thrust+yaw span remains.
        let mask = [true, false, false, false, true, false, false, false];
        assert!(Mixer::new(&p, &mask).is_err());
    }

    /// Numerically differentiates the nonlinear cascade at the hover trim and
    /// compares against the closed-form small-signal realization.
    #[test]
    fn lti_realization_matches_nonlinear_cascade() {
        let p = reference_vehicle();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let delta = 1e-5;
        let trim_v = [p.m_total * p.g, 0.0, 0.0, 0.0];

        for trial in 0..100 {
            let gains = sample_gains(&mut rng);
            let sys = controller_lti(&gains, &p).unwrap();
            let keep = [
                gains.ki_vel_x != 0.0,
                gains.ki_vel_y != 0.0,
                gains.ki_vel_z != 0.0,
                gains.ki_rate_r != 0.0,
            ];
            assert_eq!(sys.nx(), keep.iter().filter(|&&k| k).count());
            assert_eq!(sys.nu(), 18);
            assert_eq!(sys.ny(), 4);
            assert_eq!(sys.a().amax(), 0.0);

            // Evaluate the nonlinear cascade for a perturbation vector
            // [r; y; ξ] and return (virtual deviation, integrator rates).
            let eval = |x: &[f64]| -> ([f64; 4], [f64; 4]) {
                let sp = Setpoint {
                    pos: [x[0], x[1], x[2]],
                    vel: [0.0; 3],
                    att: [x[3], x[4], x[5]],
                };
                let m = Measurement {
                    pos: [x[6], x[7], x[8]],
                    vel: [x[9], x[10], x[11]],
                    att: [x[12], x[13], x[14]],
                    rates: [x[15], x[16], x[17]],
                };
                let ints = IntegratorState { vel: [x[18], x[19], x[20]], yaw_rate: x[21] };
                let cmd = controller_step(&gains, &p, &sp, &m, &ints);
                let dv = [
                    cmd.virtual_cmd[0] - trim_v[0],
                    cmd.virtual_cmd[1],
                    cmd.virtual_cmd[2],
                    cmd.virtual_cmd[3],
                ];
                let xi_dot = [
                    cmd.integrator_rates.vel[0],
                    cmd.integrator_rates.vel[1],
                    cmd.integrator_rates.vel[2],
                    cmd.integrator_rates.yaw_rate,
                ];
                (dv, xi_dot)
            };

            // Central differences in every input and integrator direction.
            for col in 0..22 {
                let mut xp = [0.0; 22];
                let mut xm = [0.0; 22];
                xp[col] = delta;
                xm[col] = -delta;
                let (vp, ip) = eval(&xp);
                let (vm, im) = eval(&xm);
                for row in 0..4 {
                    let fd_v = (vp[row] - vm[row]) / (2.0 * delta);
                    let model_v = if col < 18 {
                        sys.d()[(row, col)]
                    } else if keep[col - 18] {
                        let s = keep[..col - 18].iter().filter(|&&k| k).count();
                        sys.c()[(row, s)]
                    } else {
                        // A dropped integrator cannot influence any output.
                        0.0
                    };
                    let tol = 1e-6 * model_v.abs().max(1.0);
                    assert!(
                        (fd_v - model_v).abs() <= tol,
                        "trial {trial}: output {row} / direction {col}: fd {fd_v} vs model {model_v}"
                    );

                    // Integrator-rate rows exist only for kept integrators;
                    // a zero-gain integrator's rate is computed by the
                    // nonlinear cascade but is disconnected, so the LTI
                    // rightly has no row for it.
                    if keep[row] {
                        let s = keep[..row].iter().filter(|&&k| k).count();
                        let fd_i = (ip[row] - im[row]) / (2.0 * delta);
                        // ξ̇ never depends on ξ (A = 0).
                        let model_i = if col < 18 { sys.b()[(s, col)] } else { 0.0 };
                        let tol = 1e-6 * model_i.abs().max(1.0);
                        assert!(
                            (fd_i - model_i).abs() <= tol,
                            "trial {trial}: integrator {row} / direction {col}: fd {fd_i} vs model {model_i}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn zero_integral_gains_drop_states() {
        let p = reference_vehicle();
        let mut g = nominal_gains();
        assert_eq!(controller_lti(&g, &p).unwrap().nx(), 4);
        g.ki_vel_y = 0.0;
        assert_eq!(controller_lti(&g, &p).unwrap().nx(), 3);
        g.ki_vel_x = 0.0;
        g.ki_vel_z = 0.0;
        g.ki_rate_r = 0.0;
        assert_eq!(controller_lti(&g, &p).unwrap().nx(), 0);
    }

    #[test]
    fn rejects_negative_or_nonfinite_gains() {
        let mut g = nominal_gains();
        g.kp_att_yaw = -0.1;
        assert!(g.validate().is_err());
        let mut g = nominal_gains();
        g.ki_vel_z = f64::NAN;
        assert!(g.validate().is_err());
        assert!(nominal_gains().validate().is_ok());
    }

    #[test]
    fn wrap_angle_covers_the_circle() {
        use std::f64::consts::PI;
        assert_relative_eq!(wrap_angle(0.0), 0.0);
        assert_relative_eq!(wrap_angle(3.0 * PI), PI, max_relative = 1e-12);
        assert_relative_eq!(wrap_angle(-3.0 * PI), PI, max_relative = 1e-12);
        assert_relative_eq!(wrap_angle(2.0 * PI + 0.3), 0.3, max_relative = 1e-12);
        assert_relative_eq!(wrap_angle(-0.4), -0.4);
    }
}
