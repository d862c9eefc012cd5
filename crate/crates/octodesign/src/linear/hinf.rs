//! Certified H∞ norm computation.
//!
//! The norm is bracketed and then bisected using the classical Hamiltonian
//! test: for a Hurwitz system `G = (A, B, C, D)` and `γ > σ_max(D)`,
//! `‖G‖∞ ≥ γ` exactly when the Hamiltonian matrix
//!
//! ```text
//!        ⎡ A + B R⁻¹ Dᵀ C        γ B R⁻¹ Bᵀ       ⎤
//! H(γ) = ⎢                                        ⎥ ,  R = γ²I − DᵀD,
//!        ⎣ −γ Cᵀ S⁻¹ C      −(A + B R⁻¹ Dᵀ C)ᵀ    ⎦    S = γ²I − DDᵀ
//! ```
//!
//! has an eigenvalue on the imaginary axis. The initial bracket comes from a
//! coarse frequency grid (lower bound, refined by a golden-section polish) and
//! `1.5×` that value (upper bound, verified and doubled until clean), so the
//! bisection typically certifies the norm in a handful of eigensolves.
//!
//! Near a coalescing peak the on-axis eigenvalue classification becomes
//! unreliable (the off-axis splitting scales like `√(γ − ‖G‖∞)` and falls
//! below rounding), so every "crossing" verdict is verified by evaluating the
//! actual gain at the reported crossing frequencies and their midpoints;
//! genuine crossings sharpen the lower bound to an observed gain, spurious
//! ones are overruled. This keeps the certified interval honest down to tight
//! tolerances and usually converges much faster than plain bisection.
//!
//! Unstable or marginally stable systems get `+∞` rather than an error: the
//! gain tuner relies on that marker when it walks through destabilizing gain
//! regions.

use nalgebra::{Complex, DMatrix};

use super::StateSpace;
use crate::error::{Error, Result};

/// Largest singular value of a complex matrix.
pub fn sigma_max(m: &DMatrix<Complex<f64>>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Relative real-part threshold below which a Hamiltonian eigenvalue counts
/// as lying on the imaginary axis.
const IMAG_AXIS_TOL: f64 = 1e-8;

/// Stability margin: spectral abscissa above `-1e-9·scale` counts as not
/// Hurwitz (the H∞ norm is unbounded or astronomically large there anyway).
const HURWITZ_TOL: f64 = 1e-9;

/// Frequency-sweep helper: one Hessenberg reduction of `A`, then each
/// frequency costs only an `O(n²)` structured solve instead of a dense LU.
pub(crate) struct ResolventSweep {
    h: DMatrix<f64>,
    bt: DMatrix<f64>,
    ct: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl ResolventSweep {
    pub fn new(sys: &StateSpace) -> Self {
        let n = sys.nx();
        if n == 0 {
            return ResolventSweep {
                h: DMatrix::zeros(0, 0),
                bt: sys.b().clone(),
                ct: sys.c().clone(),
                d: sys.d().clone(),
            };
        }
        let hess = sys.a().clone().hessenberg();
        let q = hess.q();
        let h = hess.h();
        ResolventSweep {
            bt: q.transpose() * sys.b(),
            ct: sys.c() * q,
            h,
            d: sys.d().clone(),
        }
    }

    /// `G(jω)` via the Hessenberg-structured solve.
    pub fn gain_at(&self, omega: f64) -> DMatrix<Complex<f64>> {
        let n = self.h.nrows();
        let to_c = |m: &DMatrix<f64>| m.map(|v| Complex::new(v, 0.0));
        if n == 0 {
            return to_c(&self.d);
        }
        // M = jωI − H is upper Hessenberg; eliminate its subdiagonal with
        // adjacent-row partial pivoting, then back-substitute.
        let mut m = DMatrix::from_fn(n, n, |i, j| {
            Complex::new(-self.h[(i, j)], if i == j { omega } else { 0.0 })
        });
        let mut rhs = to_c(&self.bt);
        let nrhs = rhs.ncols();
        for k in 0..n.saturating_sub(1) {
            if m[(k + 1, k)].norm() > m[(k, k)].norm() {
                m.swap_rows(k, k + 1);
                rhs.swap_rows(k, k + 1);
            }
            let piv = m[(k, k)];
            if piv.norm() == 0.0 {
                continue;
            }
            let f = m[(k + 1, k)] / piv;
            if f.norm() != 0.0 {
                for j in k..n {
                    let v = m[(k, j)];
                    m[(k + 1, j)] -= f * v;
                }
                for j in 0..nrhs {
                    let v = rhs[(k, j)];
                    rhs[(k + 1, j)] -= f * v;
                }
            }
        }
        // Back-substitution on the (now upper-triangular) system.
        for j in 0..nrhs {
            for i in (0..n).rev() {
                let mut acc = rhs[(i, j)];
                for k in i + 1..n {
                    acc -= m[(i, k)] * rhs[(k, j)];
                }
                let piv = m[(i, i)];
                rhs[(i, j)] = if piv.norm() == 0.0 { Complex::new(0.0, 0.0) } else { acc / piv };
            }
        }
        to_c(&self.ct) * rhs + to_c(&self.d)
    }

    pub fn sigma_at(&self, omega: f64) -> f64 {
        sigma_max(&self.gain_at(omega))
    }
}

/// Outcome of one Hamiltonian test at a trial gain level.
enum HamTest {
    /// No eigenvalue near the imaginary axis: `γ > ‖G‖∞` certified.
    Clean,
    /// Near-axis eigenvalues found; their frequencies (positive imaginary
    /// parts) are candidate crossings of the singular-value curve with `γ`.
    Crossings(Vec<f64>),
}

/// Tests whether `H(γ)` has an eigenvalue numerically on the imaginary axis.
fn hamiltonian_test(sys: &StateSpace, gamma: f64, sigma_d: f64) -> Result<HamTest> {
    // At or below the feedthrough gain the answer is known: ‖G‖∞ ≥ σ_max(D).
    if gamma <= sigma_d * (1.0 + 1e-12) {
        return Ok(HamTest::Crossings(vec![0.0]));
    }
    let n = sys.nx();
    let (a, b, c, d) = (sys.a(), sys.b(), sys.c(), sys.d());
    let (ny, nu) = (sys.ny(), sys.nu());
    let g2 = gamma * gamma;

    let r = DMatrix::identity(nu, nu) * g2 - d.transpose() * d;
    let s = DMatrix::identity(ny, ny) * g2 - d * d.transpose();
    let r_lu = r.lu();
    let s_lu = s.lu();
    let rinv_bt = r_lu
        .solve(&b.transpose())
        .ok_or_else(|| Error::Numerical(format!("γ²I − DᵀD singular at γ={gamma}")))?;
    let sinv_c = s_lu
        .solve(c)
        .ok_or_else(|| Error::Numerical(format!("γ²I − DDᵀ singular at γ={gamma}")))?;

    let x = rinv_bt.transpose(); // B R⁻¹
    let h11 = a + &x * (d.transpose() * c);
    let h12 = (&x * b.transpose()) * gamma;
    let h21 = (c.transpose() * sinv_c) * (-gamma);

    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&h11);
    h.view_mut((0, n), (n, n)).copy_from(&h12);
    h.view_mut((n, 0), (n, n)).copy_from(&h21);
    h.view_mut((n, n), (n, n)).copy_from(&(-h11.transpose()));

    let eigs = super::eigenvalues_robust(&h)?;
    let mut ws: Vec<f64> = eigs
        .iter()
        .filter(|l| l.re.abs() <= IMAG_AXIS_TOL * l.norm().max(1.0))
        .map(|l| l.im.abs())
        .collect();
    if ws.is_empty() {
        return Ok(HamTest::Clean);
    }
    ws.sort_by(f64::total_cmp);
    ws.dedup_by(|a, b| *a - *b <= 1e-9 * a.max(1.0));
    Ok(HamTest::Crossings(ws))
}

/// Largest gain observed at candidate crossing frequencies and at midpoints
/// of adjacent pairs. If the crossings are genuine — the singular-value curve
/// really does cross the tested level — the curve exceeds that level between
/// two adjacent crossings, so some probe must come back above it.
fn probe_crossings(sweep: &ResolventSweep, ws: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (i, &w) in ws.iter().enumerate() {
        best = best.max(sweep.sigma_at(w));
        if i + 1 < ws.len() {
            best = best.max(sweep.sigma_at(0.5 * (w + ws[i + 1])));
        }
    }
    best
}

/// Golden-section polish of a gain peak near `w` (log-frequency bracket
/// spanning `spread` each way). Returns the best gain seen.
fn polish_peak(sweep: &ResolventSweep, w: f64, spread: f64) -> f64 {
    if w <= 0.0 {
        return sweep.sigma_at(0.0);
    }
    let phi = 0.5 * (3.0 - 5f64.sqrt());
    let (mut lo, mut hi) = ((w / spread).ln(), (w * spread).ln());
    for _ in 0..32 {
        let m1 = lo + phi * (hi - lo);
        let m2 = hi - phi * (hi - lo);
        if sweep.sigma_at(m1.exp()) > sweep.sigma_at(m2.exp()) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    sweep.sigma_at((0.5 * (lo + hi)).exp()).max(sweep.sigma_at(w))
}

/// Best-effort norm estimate by dense frequency sweep: a fine log grid over
/// `[w_lo, w_hi]` joined with the seed frequencies, then a golden-section
/// polish of every local maximum. Used when the Hamiltonian eigensolver fails
/// to converge — which happens exactly at near-coalescent peaks, where the
/// singular-value curve is broad and flat and a polished sweep nails it.
fn dense_sweep_peak(sweep: &ResolventSweep, w_lo: f64, w_hi: f64, seeds: &[f64]) -> f64 {
    const N_GRID: usize = 4000;
    let mut ws: Vec<f64> = (0..N_GRID)
        .map(|i| w_lo * (w_hi / w_lo).powf(i as f64 / (N_GRID - 1) as f64))
        .collect();
    ws.extend(seeds.iter().copied().filter(|w| *w > 0.0));
    ws.sort_by(f64::total_cmp);
    ws.dedup();
    let gains: Vec<f64> = ws.iter().map(|&w| sweep.sigma_at(w)).collect();

    let mut best = sweep.sigma_at(0.0);
    for (i, &g) in gains.iter().enumerate() {
        best = best.max(g);
        let at_edge = i == 0 || i + 1 == gains.len();
        if !at_edge && g >= gains[i - 1] && g >= gains[i + 1] {
            let spread = (ws[i + 1] / ws[i]).max(ws[i] / ws[i - 1]).max(1.0 + 1e-9);
            best = best.max(polish_peak(sweep, ws[i], spread * spread));
        }
    }
    best
}

/// H∞ norm of a continuous-time system, certified by Hamiltonian bisection.
///
/// Returns an upper bound `γ` satisfying `(γ_hi − γ_lo)/γ_lo ≤ rel_tol` around
/// the true norm. Unstable or marginally stable systems yield `+∞`. Static
/// systems (and systems with zero `B` or `C`) return `σ_max(D)` exactly.
///
/// If the Hamiltonian eigensolver fails to converge (broad coalescent peaks
/// pinch its eigenvalues onto the imaginary axis), the result degrades to a
/// densely swept and polished observed peak instead of an error — accurate in
/// exactly the cases that defeat the eigensolver, but no longer a one-sided
/// bound.
pub fn hinf_norm(sys: &StateSpace, rel_tol: f64) -> Result<f64> {
    if !(rel_tol.is_finite() && rel_tol > 0.0) {
        return Err(Error::Domain(format!("rel_tol must be positive, got {rel_tol}")));
    }
    let sigma_d = sigma_max(&sys.d().map(|v| Complex::new(v, 0.0)));
    if sys.nx() == 0 || sys.b().amax() == 0.0 || sys.c().amax() == 0.0 {
        return Ok(sigma_d);
    }

    let eigs = super::eigenvalues_robust(sys.a())?;
    let rho = eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let abscissa = eigs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= -HURWITZ_TOL * rho.max(1.0) {
        return Ok(f64::INFINITY);
    }

    // Coarse 200-point log grid spanning the pole magnitudes, plus the pole
    // resonance frequencies themselves.
    let sweep = ResolventSweep::new(sys);
    let lam_min = eigs.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min);
    let w_lo = (1e-3 * lam_min).max(1e-8);
    let w_hi = (1e3 * rho).max(w_lo * 10.0);
    let n_grid = 200;
    let mut omegas: Vec<f64> = (0..n_grid)
        .map(|i| w_lo * (w_hi / w_lo).powf(i as f64 / (n_grid - 1) as f64))
        .collect();
    for l in eigs.iter() {
        if l.im.abs() > 0.0 {
            omegas.push(l.im.abs());
        }
        omegas.push(l.norm());
    }
    omegas.push(0.0);

    let (mut w_best, mut g_best) = (0.0, -1.0);
    for &w in &omegas {
        let s = sweep.sigma_at(w);
        if s > g_best {
            g_best = s;
            w_best = w;
        }
    }
    // Golden-section polish of the grid peak (in log frequency).
    if w_best > 0.0 {
        g_best = g_best.max(polish_peak(&sweep, w_best, 2.0));
    }

    let gamma_floor = g_best.max(sigma_d);
    if gamma_floor < 1e-300 {
        return Ok(sigma_d);
    }

    // Every "crossing" verdict below is cross-checked by evaluating the gain
    // at the reported crossing frequencies: near a coalescing peak the
    // Hamiltonian eigenvalues are too ill-conditioned to classify reliably
    // (their distance from the axis scales like √(γ − ‖G‖∞)), but direct gain
    // evaluations are machine-accurate and settle the verdict either way.
    // Genuine crossings also sharpen the lower bound to an observed gain,
    // which converges far faster than plain bisection.
    let certify = |mut gamma_lo: f64| -> Result<f64> {
        let mut gamma_hi = 1.5 * gamma_lo;
        let mut ok = false;
        for _ in 0..60 {
            match hamiltonian_test(sys, gamma_hi, sigma_d)? {
                HamTest::Crossings(ws) => {
                    let observed = probe_crossings(&sweep, &ws);
                    if observed > gamma_hi {
                        gamma_lo = observed;
                        gamma_hi = (2.0 * gamma_hi).max(1.5 * observed);
                    } else {
                        gamma_lo = gamma_lo.max(observed);
                        ok = true;
                        break;
                    }
                }
                HamTest::Clean => {
                    ok = true;
                    break;
                }
            }
        }
        if !ok {
            return Err(Error::Numerical("H∞ upper bracket did not close".into()));
        }

        let mut iter = 0;
        while gamma_hi - gamma_lo > rel_tol * gamma_lo {
            let gamma = (gamma_lo * gamma_hi).sqrt();
            match hamiltonian_test(sys, gamma, sigma_d)? {
                HamTest::Crossings(ws) => {
                    let observed = probe_crossings(&sweep, &ws);
                    if observed > gamma {
                        gamma_lo = observed;
                    } else {
                        // The claimed crossings are contradicted by the
                        // measured gains: a spurious near-coalescent verdict.
                        // The level is actually above the norm.
                        gamma_lo = gamma_lo.max(observed);
                        gamma_hi = gamma;
                    }
                }
                HamTest::Clean => gamma_hi = gamma,
            }
            iter += 1;
            if iter > 200 {
                return Err(Error::Numerical("H∞ bisection failed to converge".into()));
            }
        }
        Ok(gamma_hi)
    };

    // The Hamiltonian eigensolver can fail to converge when the tested level
    // pinches eigenvalues onto the imaginary axis — the very situation of a
    // broad coalescent peak. The peak being broad is what makes the dense
    // sweep reliable there, so fall back to it rather than reporting a stable
    // system as unbounded.
    match certify(gamma_floor) {
        Ok(gamma) => Ok(gamma),
        Err(_) => Ok(dense_sweep_peak(&sweep, w_lo, w_hi, &omegas).max(gamma_floor)),
    }
}
