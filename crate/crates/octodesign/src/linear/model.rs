//! Small-signal models of the vehicle and its closed loop.
//!
//! The linear plant state is `[position (3), velocity (3), roll/pitch/yaw
//! (3), body rates (3), live rotor speeds (8, or 7 with one rotor failed)]`.
//! Attitude is represented by Euler angles rather than the quaternion so the
//! model matches the controller's measurement vector and has no redundant
//! coordinate. Winding temperatures and drawn energy are excluded: they do
//! not feed back into the motion (resistance is taken at its rated value).
//!
//! A failed rotor's speed state is dropped. It is input-decoupled (open
//! circuit), asymptotically stable on its own (windmill friction), and at
//! the post-fault trim (`ω = 0`) its residual coupling into the body is the
//! bearing-friction reaction — orders of magnitude below every retained
//! term — so keeping it would only add an uncontrollable mode.
//!
//! All Jacobians are central finite differences of the full nonlinear
//! right-hand side; there is deliberately no second, hand-derived model that
//! could drift from the simulation.

use nalgebra::{DMatrix, DVector};

use crate::control::{controller_lti, ControlGains, Mixer, TRACKED_MEAS};
use crate::dynamics::{derivatives, euler_rates, euler_to_quat, idx, trim_hover, State, Trim};
use crate::error::{Error, Result};
use crate::linear::StateSpace;
use crate::sizing::{VehicleParams, N_ROTORS};

/// Number of measured outputs (matches the controller's measurement vector).
pub const N_MEAS: usize = 12;
/// Number of reference inputs (position plus attitude offsets/heading).
pub const N_REF: usize = 6;

/// Relative step for central differences, applied to `max(|x|, 1)`.
const FD_REL_STEP: f64 = 1e-6;

fn fd_step(scale: f64) -> f64 {
    FD_REL_STEP * scale.abs().max(1.0)
}

/// Indices of the live rotors (all eight, or seven with a fault).
fn live_rotors(fault: Option<usize>) -> Vec<usize> {
    (0..N_ROTORS).filter(|&j| Some(j) != fault).collect()
}

/// Builds the full nonlinear state behind a linear-model state vector.
fn embed_state(x_lin: &DVector<f64>, trim: &Trim, fault: Option<usize>) -> State {
    let mut x = State::zeros();
    for k in 0..3 {
        x.0[idx::POS + k] = x_lin[k];
        x.0[idx::VEL + k] = x_lin[3 + k];
        x.0[idx::RATES + k] = x_lin[9 + k];
    }
    let q = euler_to_quat(&[x_lin[6], x_lin[7], x_lin[8]]);
    x.0[idx::QUAT..idx::QUAT + 4].copy_from_slice(&q);
    for (slot, &j) in live_rotors(fault).iter().enumerate() {
        x.0[idx::OMEGA + j] = x_lin[12 + slot];
    }
    // Temperatures and energy are charted from the trim; they do not couple
    // into the retained derivatives.
    for j in 0..N_ROTORS {
        x.0[idx::TEMP + j] = trim.state.0[idx::TEMP + j];
    }
    x
}

/// Right-hand side in linear-model coordinates.
fn reduced_rhs(
    p: &VehicleParams,
    x_lin: &DVector<f64>,
    voltages: &[f64; N_ROTORS],
    trim: &Trim,
    fault: Option<usize>,
) -> DVector<f64> {
    let live = live_rotors(fault);
    let mut failed = [false; N_ROTORS];
    if let Some(f) = fault {
        failed[f] = true;
    }
    let x = embed_state(x_lin, trim, fault);
    let d = derivatives(p, &x, voltages, &failed);
    let att = [x_lin[6], x_lin[7], x_lin[8]];
    let rates = [x_lin[9], x_lin[10], x_lin[11]];
    let er = euler_rates(&att, &rates);
    let mut out = DVector::zeros(12 + live.len());
    for k in 0..3 {
        out[k] = d.0[idx::POS + k];
        out[3 + k] = d.0[idx::VEL + k];
        out[6 + k] = er[k];
        out[9 + k] = d.0[idx::RATES + k];
    }
    for (slot, &j) in live.iter().enumerate() {
        out[12 + slot] = d.0[idx::OMEGA + j];
    }
    out
}

/// Linearizes the open-loop vehicle about a trim point.
///
/// Inputs are the eight motor voltages; outputs are the twelve measurements
/// (position, velocity, attitude, rates). With a fault, the failed rotor's
/// speed state is dropped and its voltage column is structurally zero.
pub fn linearize_plant(
    p: &VehicleParams,
    trim: &Trim,
    fault: Option<usize>,
) -> Result<StateSpace> {
    let live = live_rotors(fault);
    let nx = 12 + live.len();

    // Trim point in linear coordinates.
    let mut x0 = DVector::zeros(nx);
    for k in 0..3 {
        x0[k] = trim.state.0[idx::POS + k];
        x0[3 + k] = trim.state.0[idx::VEL + k];
        x0[9 + k] = trim.state.0[idx::RATES + k];
    }
    let att = trim.state.euler();
    x0[6] = att[0];
    x0[7] = att[1];
    x0[8] = att[2];
    for (slot, &j) in live.iter().enumerate() {
        x0[12 + slot] = trim.state.0[idx::OMEGA + j];
    }

    let mut a = DMatrix::zeros(nx, nx);
    for i in 0..nx {
        let h = fd_step(x0[i]);
        let mut xp = x0.clone();
        xp[i] += h;
        let mut xm = x0.clone();
        xm[i] -= h;
        let fp = reduced_rhs(p, &xp, &trim.voltages, trim, fault);
        let fm = reduced_rhs(p, &xm, &trim.voltages, trim, fault);
        for r in 0..nx {
            a[(r, i)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }

    let mut b = DMatrix::zeros(nx, N_ROTORS);
    for j in 0..N_ROTORS {
        let h = fd_step(trim.voltages[j]);
        let mut up = trim.voltages;
        up[j] += h;
        let mut um = trim.voltages;
        um[j] -= h;
        let fp = reduced_rhs(p, &x0, &up, trim, fault);
        let fm = reduced_rhs(p, &x0, &um, trim, fault);
        for r in 0..nx {
            b[(r, j)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }

    // Measurements are the first twelve states verbatim.
    let mut c = DMatrix::zeros(N_MEAS, nx);
    for k in 0..N_MEAS {
        c[(k, k)] = 1.0;
    }
    let d = DMatrix::zeros(N_MEAS, N_ROTORS);
    StateSpace::new(a, b, c, d)
}

/// Linearizes the (always nominal) mixer about a virtual command:
/// the 8×4 sensitivity of motor voltages to the virtual command.
///
/// Fails if the mixer saturates at the linearization point — a saturated
/// channel has no meaningful local gain.
pub fn mixer_jacobian(p: &VehicleParams, v_trim: &[f64; 4]) -> Result<DMatrix<f64>> {
    let mixer = Mixer::new(p, &[true; N_ROTORS])?;
    if mixer.mix(v_trim).saturated {
        return Err(Error::Trim(
            "mixer saturates at the linearization point; no local model exists".into(),
        ));
    }
    let mut m = DMatrix::zeros(N_ROTORS, 4);
    for k in 0..4 {
        let h = fd_step(v_trim[k]);
        let mut vp = *v_trim;
        vp[k] += h;
        let mut vm = *v_trim;
        vm[k] -= h;
        let up = mixer.mix(&vp);
        let um = mixer.mix(&vm);
        if up.saturated || um.saturated {
            return Err(Error::Trim(
                "mixer saturates within the linearization stencil".into(),
            ));
        }
        for j in 0..N_ROTORS {
            m[(j, k)] = (up.voltages[j] - um.voltages[j]) / (2.0 * h);
        }
    }
    Ok(m)
}

/// Closes a feedback loop: the controller sees `[r; y]` and drives the
/// plant. Returns the system from the `n_ref` references to the stacked
/// outputs `[y (plant outputs); u (plant inputs)]`.
///
/// Well-posedness of the algebraic loop through the direct feedthroughs is
/// checked; a singular `I − D_p·D_cy` yields [`Error::AlgebraicLoop`].
pub fn connect_feedback(
    plant: &StateSpace,
    ctrl: &StateSpace,
    n_ref: usize,
) -> Result<StateSpace> {
    let (np, nc) = (plant.nx(), ctrl.nx());
    let (m_in, p_out) = (plant.nu(), plant.ny());
    if ctrl.nu() != n_ref + p_out {
        return Err(Error::Shape(format!(
            "controller expects {} inputs, loop provides {} refs + {} measurements",
            ctrl.nu(),
            n_ref,
            p_out
        )));
    }
    if ctrl.ny() != m_in {
        return Err(Error::Shape(format!(
            "controller outputs {} channels, plant takes {}",
            ctrl.ny(),
            m_in
        )));
    }

    let b_cr = ctrl.b().columns(0, n_ref).into_owned();
    let b_cy = ctrl.b().columns(n_ref, p_out).into_owned();
    let d_cr = ctrl.d().columns(0, n_ref).into_owned();
    let d_cy = ctrl.d().columns(n_ref, p_out).into_owned();

    // Resolve the algebraic loop: y = C_p x_p + D_p u, u = C_c x_c + D_cy y + D_cr r.
    let loop_gain = DMatrix::identity(p_out, p_out) - plant.d() * &d_cy;
    let lu = loop_gain.clone().lu();
    let minv = lu
        .try_inverse()
        .ok_or_else(|| Error::AlgebraicLoop("feedthrough loop is singular".into()))?;
    let residual = (&loop_gain * &minv - DMatrix::identity(p_out, p_out)).norm();
    if !residual.is_finite() || residual > 1e-6 {
        return Err(Error::AlgebraicLoop(format!(
            "feedthrough loop is numerically singular (residual {residual:.2e})"
        )));
    }

    // y as a function of the loop state and r.
    let y_xp = &minv * plant.c();
    let y_xc = &minv * plant.d() * ctrl.c();
    let y_r = &minv * plant.d() * &d_cr;
    // u follows by substitution.
    let u_xp = &d_cy * &y_xp;
    let u_xc = ctrl.c() + &d_cy * &y_xc;
    let u_r = &d_cr + &d_cy * &y_r;

    let n = np + nc;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (np, np)).copy_from(&(plant.a() + plant.b() * &u_xp));
    a.view_mut((0, np), (np, nc)).copy_from(&(plant.b() * &u_xc));
    a.view_mut((np, 0), (nc, np)).copy_from(&(&b_cy * &y_xp));
    a.view_mut((np, np), (nc, nc)).copy_from(&(ctrl.a() + &b_cy * &y_xc));

    let mut b = DMatrix::zeros(n, n_ref);
    b.view_mut((0, 0), (np, n_ref)).copy_from(&(plant.b() * &u_r));
    b.view_mut((np, 0), (nc, n_ref)).copy_from(&(&b_cr + &b_cy * &y_r));

    let mut c = DMatrix::zeros(p_out + m_in, n);
    c.view_mut((0, 0), (p_out, np)).copy_from(&y_xp);
    c.view_mut((0, np), (p_out, nc)).copy_from(&y_xc);
    c.view_mut((p_out, 0), (m_in, np)).copy_from(&u_xp);
    c.view_mut((p_out, np), (m_in, nc)).copy_from(&u_xc);

    let mut d = DMatrix::zeros(p_out + m_in, n_ref);
    d.view_mut((0, 0), (p_out, n_ref)).copy_from(&y_r);
    d.view_mut((p_out, 0), (m_in, n_ref)).copy_from(&u_r);

    StateSpace::new(a, b, c, d)
}

/// The closed loop of one plant condition (nominal or one rotor out) under
/// the cascaded controller, as seen from the six references.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    /// References (6) → `[tracking error (6); virtual-command deviation (4)]`.
    pub sys: StateSpace,
    /// The rotor that is out, if any.
    pub fault: Option<usize>,
}

impl ClosedLoop {
    /// Sensitivity: references → tracking errors (6×6).
    pub fn sensitivity(&self) -> Result<StateSpace> {
        self.sys.select_outputs(&[0, 1, 2, 3, 4, 5])
    }

    /// Control effort: references → virtual-command deviation (4×6).
    pub fn control_effort(&self) -> Result<StateSpace> {
        self.sys.select_outputs(&[6, 7, 8, 9])
    }

    /// Largest closed-loop pole real part.
    pub fn spectral_abscissa(&self) -> Result<f64> {
        self.sys.spectral_abscissa()
    }
}

/// Linearizes the plant-plus-mixer cascade about the hover trim of a given
/// condition: virtual commands (4) → measurements (12).
///
/// This model does not depend on the controller gains: the trim thrusts,
/// rotor speeds and voltages follow from the redistribution geometry alone
/// (the gains only determine which *integrator values* hold the trim, and
/// integrators are controller state). The gain tuner therefore builds these
/// once per vehicle and reuses them for every candidate.
pub fn plant_with_mixer(p: &VehicleParams, fault: Option<usize>) -> Result<StateSpace> {
    // Any all-positive integral gains give the same trim state; see above.
    let unit_gains = ControlGains::from_array([1.0; 16]);
    let trim = trim_hover(p, &unit_gains, [0.0; 3], 0.0, fault)?;
    let plant_v = linearize_plant(p, &trim, fault)?;
    let m = mixer_jacobian(p, &trim.virtual_cmd)?;
    plant_v.input_transform(&m)
}

/// Closes the loop between a plant-plus-mixer model (from
/// [`plant_with_mixer`]) and the controller realization for `gains`.
pub fn assemble_closed_loop(
    plant: &StateSpace,
    p: &VehicleParams,
    gains: &ControlGains,
    fault: Option<usize>,
) -> Result<ClosedLoop> {
    let ctrl = controller_lti(gains, p)?;
    let full = connect_feedback(plant, &ctrl, N_REF)?;

    // Outputs of `full` are [y (12); u_v (4)]. Replace y by the tracking
    // error e = r − y_tracked and keep u_v.
    let n = full.nx();
    let mut c = DMatrix::zeros(N_REF + 4, n);
    let mut d = DMatrix::zeros(N_REF + 4, N_REF);
    for (row, &meas) in TRACKED_MEAS.iter().enumerate() {
        for k in 0..n {
            c[(row, k)] = -full.c()[(meas, k)];
        }
        for k in 0..N_REF {
            d[(row, k)] = -full.d()[(meas, k)];
        }
        d[(row, row)] += 1.0;
    }
    for row in 0..4 {
        for k in 0..n {
            c[(N_REF + row, k)] = full.c()[(N_MEAS + row, k)];
        }
        for k in 0..N_REF {
            d[(N_REF + row, k)] = full.d()[(N_MEAS + row, k)];
        }
    }
    let sys = StateSpace::new(full.a().clone(), full.b().clone(), c, d)?;
    Ok(ClosedLoop { sys, fault })
}

/// Convenience: trim, linearize and close the loop in one call.
pub fn closed_loop(
    p: &VehicleParams,
    gains: &ControlGains,
    fault: Option<usize>,
) -> Result<ClosedLoop> {
    let plant = plant_with_mixer(p, fault)?;
    assemble_closed_loop(&plant, p, gains, fault)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sizing::{assemble_vehicle, PlantDesign};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn reference_vehicle() -> VehicleParams {
        let re = crate::sizing::test_reference();
        assemble_vehicle(&PlantDesign::ones(), &re).unwrap()
    }

    fn test_gains() -> ControlGains {
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

    #[test]
    fn scalar_integrator_under_unit_feedback() {
        // Plant 1/s, static controller u = k·(r − y): the loop has
        // bandwidth k, |S(jk)| = |T(jk)| = 1/√2, and S + T = 1.
        let plant = StateSpace::new(dmatrix![0.0], dmatrix![1.0], dmatrix![1.0], dmatrix![0.0]).unwrap();
        let k = 2.0;
        let ctrl = StateSpace::static_gain(dmatrix![k, -k]);
        let loop_sys = connect_feedback(&plant, &ctrl, 1).unwrap();
        assert_eq!(loop_sys.nu(), 1);
        assert_eq!(loop_sys.ny(), 2);
        let r = loop_sys.freq_response(k).unwrap();
        let t = r[(0, 0)];
        assert_relative_eq!(t.norm(), std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-12);
        // S = 1 − T has the same magnitude at the bandwidth.
        let s = nalgebra::Complex::new(1.0, 0.0) - t;
        assert_relative_eq!(s.norm(), std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-12);
        // DC: the integrator wipes out steady-state error.
        let dc = loop_sys.freq_response(0.0).unwrap()[(0, 0)];
        assert_relative_eq!(dc.re, 1.0, max_relative = 1e-12);
        assert_relative_eq!(dc.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn algebraic_loop_is_detected() {
        // Unity-feedthrough plant with unity positive feedback: I − D·D = 0.
        let plant = StateSpace::static_gain(dmatrix![1.0]);
        let ctrl = StateSpace::static_gain(dmatrix![0.0, 1.0]);
        let err = connect_feedback(&plant, &ctrl, 1).unwrap_err();
        assert!(matches!(err, Error::AlgebraicLoop(_)), "got {err:?}");
    }

    #[test]
    fn nominal_plant_shape_and_gravity_coupling() {
        let p = reference_vehicle();
        let trim = trim_hover(&p, &test_gains(), [0.0; 3], 0.0, None).unwrap();
        let sys = linearize_plant(&p, &trim, None).unwrap();
        assert_eq!(sys.nx(), 20);
        assert_eq!(sys.nu(), 8);
        assert_eq!(sys.ny(), 12);
        // Kinematics: position rates are the velocities.
        for k in 0..3 {
            assert_relative_eq!(sys.a()[(k, 3 + k)], 1.0, max_relative = 1e-9);
        }
        // Tilt couples gravity into lateral acceleration: ∂v̇x/∂θ = g,
        // ∂v̇y/∂φ = −g.
        assert_relative_eq!(sys.a()[(3, 7)], p.g, max_relative = 1e-6);
        assert_relative_eq!(sys.a()[(4, 6)], -p.g, max_relative = 1e-6);
        // Vertical thrust sensitivity is uniform across rotors at hover:
        // ∂v̇z/∂ω = 2·ct0·ρ·S·r²·ω_h / m.
        let h = p.hover();
        let expect = 2.0 * p.rotor.ct0 * p.rho * p.rotor.s * p.rotor.r.powi(2) * h.omega / p.m_total;
        for slot in 0..8 {
            assert_relative_eq!(sys.a()[(5, 12 + slot)], expect, max_relative = 1e-6);
        }
        // Motor drive: ∂ω̇/∂u = Ke/(R·J_spin) on the diagonal.
        let j_spin = p.motor.j + p.rotor.j;
        let drive = p.motor.ke / (p.motor.r_ohm * j_spin);
        for j in 0..8 {
            assert_relative_eq!(sys.b()[(12 + j, j)], drive, max_relative = 1e-6);
            // Voltage reaches the rigid body only through the yaw spin-up
            // reaction: ∂ṙ/∂u = −s_j·Ke/(R·Izz). Everything else is zero.
            for r in 0..11 {
                assert_relative_eq!(sys.b()[(r, j)], 0.0, epsilon = 1e-9);
            }
            let react = -p.spin[j] * p.motor.ke / (p.motor.r_ohm * p.inertia[2]);
            assert_relative_eq!(sys.b()[(11, j)], react, max_relative = 1e-6);
        }
        // Measurements select the first twelve states with no feedthrough.
        assert_eq!(sys.d().norm(), 0.0);
    }

    #[test]
    fn faulty_plant_drops_state_and_input_column() {
        let p = reference_vehicle();
        let f = 2;
        let trim = trim_hover(&p, &test_gains(), [0.0; 3], 0.0, Some(f)).unwrap();
        let sys = linearize_plant(&p, &trim, Some(f)).unwrap();
        assert_eq!(sys.nx(), 19);
        assert_eq!(sys.nu(), 8);
        // The failed motor's voltage column is structurally zero.
        for r in 0..sys.nx() {
            assert_eq!(sys.b()[(r, f)], 0.0, "row {r}");
        }
        // Live columns are not.
        assert!(sys.b().column(0).norm() > 0.0);
    }

    #[test]
    fn jacobian_remainder_is_second_order()
    {
        // ‖f(x₀+hv) − f(x₀) − h·A·v‖ must shrink like h² — the acid test
        // that A is the true Jacobian and not a lucky pattern.
        let p = reference_vehicle();
        let trim = trim_hover(&p, &test_gains(), [0.0; 3], 0.0, None).unwrap();
        let sys = linearize_plant(&p, &trim, None).unwrap();
        let nx = sys.nx();

        let mut x0 = DVector::zeros(nx);
        let att = trim.state.euler();
        for k in 0..3 {
            x0[6 + k] = att[k];
        }
        for j in 0..8 {
            x0[12 + j] = trim.state.0[idx::OMEGA + j];
        }
        let f0 = reduced_rhs(&p, &x0, &trim.voltages, &trim, None);

        // A deterministic direction touching every state with varied signs.
        let v = DVector::from_fn(nx, |i, _| ((i as f64) * 0.7).sin() + 0.1);
        let remainder = |h: f64| -> f64 {
            let x = &x0 + &v * h;
            let f = reduced_rhs(&p, &x, &trim.voltages, &trim, None);
            let lin = &f0 + sys.a() * (&v * h);
            (f - lin).norm()
        };
        let (r1, r2) = (remainder(1e-3), remainder(5e-4));
        assert!(
            r1 / r2 > 3.5 && r1 / r2 < 4.5,
            "remainder ratio {:.2} (r1 {r1:.3e}, r2 {r2:.3e})",
            r1 / r2
        );
    }

    #[test]
    fn mixer_jacobian_matches_thrust_chain_slope() {
        let p = reference_vehicle();
        let v_h = [p.m_total * p.g, 0.0, 0.0, 0.0];
        let m = mixer_jacobian(&p, &v_h).unwrap();
        // Collective sensitivity: each rotor sees 1/8 of a thrust change,
        // so ∂u_j/∂T_total = (du/dT)/8 with du/dT the per-rotor slope.
        let h = p.hover_thrust();
        let fd = {
            let d = 1e-4;
            let wp = p.rotor_speed_for_thrust(h + d);
            let wm = p.rotor_speed_for_thrust(h - d);
            (p.steady_voltage_for_speed(wp) - p.steady_voltage_for_speed(wm)) / (2.0 * d)
        };
        for j in 0..8 {
            assert_relative_eq!(m[(j, 0)], fd / 8.0, max_relative = 1e-4);
        }
        // Saturated linearization points are refused.
        let heavy = [8.0 * p.m_total * p.g, 0.0, 0.0, 0.0];
        assert!(mixer_jacobian(&p, &heavy).is_err());
    }

    #[test]
    fn zero_gain_controller_gives_identity_sensitivity() {
        let p = reference_vehicle();
        let gains = ControlGains::from_array([0.0; 16]);
        let cl = closed_loop(&p, &gains, None).unwrap();
        let s = cl.sensitivity().unwrap();
        // No feedback at all: the error equals the reference at any
        // frequency, and the virtual command never moves. (ω = 0 itself is
        // excluded: the open-loop kinematic integrators make the resolvent
        // singular there, which freq_response reports rather than hides.)
        for w in [0.01, 0.3, 2.0] {
            let r = s.freq_response(w).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert_relative_eq!(r[(i, j)].re, want, epsilon = 1e-9);
                    assert_relative_eq!(r[(i, j)].im, 0.0, epsilon = 1e-9);
                }
            }
        }
        let u = cl.control_effort().unwrap();
        assert_relative_eq!(u.freq_response(1.0).unwrap().norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sensitivity_and_complement_sum_to_identity() {
        let p = reference_vehicle();
        let gains = test_gains();
        for fault in [None, Some(0)] {
            let trim = trim_hover(&p, &gains, [0.0; 3], 0.0, fault).unwrap();
            let plant = linearize_plant(&p, &trim, fault)
                .unwrap()
                .input_transform(&mixer_jacobian(&p, &trim.virtual_cmd).unwrap())
                .unwrap();
            let ctrl = controller_lti(&gains, &p).unwrap();
            let full = connect_feedback(&plant, &ctrl, N_REF).unwrap();
            let cl = closed_loop(&p, &gains, fault).unwrap();
            let s = cl.sensitivity().unwrap();
            for w in [0.05, 0.7, 4.0] {
                let rs = s.freq_response(w).unwrap();
                let ry = full.freq_response(w).unwrap();
                for (row, &meas) in TRACKED_MEAS.iter().enumerate() {
                    for col in 0..N_REF {
                        let t = ry[(meas, col)];
                        let want = if row == col { 1.0 } else { 0.0 };
                        let sum = rs[(row, col)] + t;
                        assert_relative_eq!(sum.re, want, epsilon = 1e-8);
                        assert_relative_eq!(sum.im, 0.0, epsilon = 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn closed_loop_is_stable_for_every_single_fault() {
        let p = reference_vehicle();
        let gains = test_gains();
        let nominal = closed_loop(&p, &gains, None).unwrap();
        let alpha0 = nominal.spectral_abscissa().unwrap();
        assert!(alpha0 < -0.05, "nominal {alpha0}");
        assert_eq!(nominal.sys.nx(), 24);
        for f in 0..N_ROTORS {
            let cl = closed_loop(&p, &gains, Some(f)).unwrap();
            assert_eq!(cl.sys.nx(), 23);
            let alpha = cl.spectral_abscissa().unwrap();
            assert!(alpha < -0.05, "fault {f}: abscissa {alpha}");
        }
    }

    #[test]
    fn position_error_rejected_at_dc() {
        let p = reference_vehicle();
        let cl = closed_loop(&p, &test_gains(), None).unwrap();
        let s = cl.sensitivity().unwrap();
        let dc = s.freq_response(0.0).unwrap();
        // Integral action in the velocity loops drives steady position
        // error to zero.
        for row in 0..3 {
            for col in 0..3 {
                assert_relative_eq!(dc[(row, col)].norm(), 0.0, epsilon = 1e-8);
            }
        }
        // Yaw too (yaw-rate integrator plus the attitude loop).
        assert_relative_eq!(dc[(5, 5)].norm(), 0.0, epsilon = 1e-8);
    }
}
