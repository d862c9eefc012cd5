//! Frequency-domain design weights for the mixed-sensitivity requirements.

use nalgebra::{dmatrix, DMatrix};

use super::StateSpace;
use crate::error::{Error, Result};

/// Performance weight on the output sensitivity, one channel:
///
/// `W1(s) = (s/M + ω_b) / (s + ω_b·ε)`
///
/// Enforcing `‖W1·S‖∞ ≤ 1` caps `|S|` at `ε` below the bandwidth `ω_b` and at
/// `M` far above it — i.e. good low-frequency tracking with a bounded
/// sensitivity peak.
pub fn weight_w1(omega_b: f64, m_peak: f64, eps: f64) -> Result<StateSpace> {
    if !(omega_b.is_finite() && omega_b > 0.0) {
        return Err(Error::Domain(format!("W1 bandwidth must be positive, got {omega_b}")));
    }
    if !(m_peak.is_finite() && m_peak > 1.0) {
        return Err(Error::Domain(format!("W1 peak bound must exceed 1, got {m_peak}")));
    }
    if !(eps.is_finite() && eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("W1 floor must lie in (0,1), got {eps}")));
    }
    let a = omega_b * eps;
    // W1 = 1/M + (ω_b − a/M)/(s + a).
    StateSpace::new(
        dmatrix![-a],
        dmatrix![1.0],
        dmatrix![omega_b - a / m_peak],
        dmatrix![1.0 / m_peak],
    )
}

/// Actuator-effort weight on the control sensitivity, one channel:
///
/// `W2(s) = gain_hf · s / (s + ω_c)`
///
/// The weight rises at +20 dB/decade below the corner `ω_c` and flattens at
/// `gain_hf`, penalizing high-frequency actuator activity while leaving the
/// low-frequency control authority free.
pub fn weight_w2(gain_hf: f64, omega_c: f64) -> Result<StateSpace> {
    if !(gain_hf.is_finite() && gain_hf > 0.0) {
        return Err(Error::Domain(format!("W2 gain must be positive, got {gain_hf}")));
    }
    if !(omega_c.is_finite() && omega_c > 0.0) {
        return Err(Error::Domain(format!("W2 corner must be positive, got {omega_c}")));
    }
    // W2 = gain_hf − gain_hf·ω_c/(s + ω_c).
    StateSpace::new(
        dmatrix![-omega_c],
        dmatrix![1.0],
        dmatrix![-gain_hf * omega_c],
        dmatrix![gain_hf],
    )
}

/// `n` independent copies of a SISO weight as one diagonal MIMO system.
pub fn replicate_diag(w: &StateSpace, n: usize) -> Result<StateSpace> {
    if w.nu() != 1 || w.ny() != 1 {
        return Err(Error::Shape("replicate_diag expects a SISO weight".into()));
    }
    let mut out = w.clone();
    for _ in 1..n {
        out = out.append(w);
    }
    if n == 0 {
        return Ok(StateSpace::static_gain(DMatrix::zeros(0, 0)));
    }
    Ok(out)
}
