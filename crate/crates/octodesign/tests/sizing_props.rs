//! Property tests for the sizing laws: exact power-law behaviour over the
//! documented domain, monotonicity of the pitch fits, and rollup consistency.

use octodesign::sizing::*;
use proptest::prelude::*;

fn reference() -> ReferenceComponents {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/reference.json");
    ReferenceComponents::load(std::path::Path::new(path)).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #[test]
    fn motor_power_laws_are_exact(l in 0.3f64..3.0) {
        let re = reference();
        let m = scale_motor(l, &re).unwrap();
        // Independent evaluation via powf only.
        prop_assert!(rel_err(m.r_ohm, re.motor.r_ref * l.powf(-1.0)) < 1e-12);
        prop_assert!(rel_err(m.ke, re.motor.ke_ref * l.powf(2.0)) < 1e-12);
        prop_assert!(rel_err(m.kd, re.motor.kd_ref * l.powf(3.0)) < 1e-12);
        prop_assert!(rel_err(m.j, re.motor.j_ref * l.powf(5.0)) < 1e-12);
        prop_assert!(rel_err(m.m, re.motor.m_ref * l.powf(3.0)) < 1e-12);
        prop_assert!(rel_err(m.rth, re.motor.rth_ref * l.powf(-2.0)) < 1e-12);
        prop_assert!(rel_err(m.t_max, re.motor.t_max_ref * l.powf(3.5)) < 1e-12);
    }

    #[test]
    fn rotor_power_laws_are_exact(r in 0.3f64..3.0, t in 0.6f64..1.4) {
        let re = reference();
        let ro = scale_rotor(r, t, &re).unwrap();
        prop_assert!(rel_err(ro.s, re.rotor.s_ref * r.powf(2.0)) < 1e-12);
        prop_assert!(rel_err(ro.j, re.rotor.j_ref * r.powf(5.0)) < 1e-12);
        prop_assert!(rel_err(ro.m, re.rotor.m_ref * r.powf(3.0)) < 1e-12);
        prop_assert!(rel_err(ro.omega_max, re.rotor.omega_max_tip / (re.rotor.r_ref * r)) < 1e-12);
        prop_assert!(rel_err(ro.ct0, re.rotor.ct0_ref * (0.3 + 0.7 * t)) < 1e-12);
        prop_assert!(rel_err(ro.cq0, re.rotor.cq0_ref * (0.15 + 0.85 * t * t)) < 1e-12);
    }

    #[test]
    fn pitch_fits_are_monotone(t in 0.6f64..1.399) {
        let re = reference();
        let a = scale_rotor(1.0, t, &re).unwrap();
        let b = scale_rotor(1.0, t + 1e-3, &re).unwrap();
        prop_assert!(b.ct0 > a.ct0);
        prop_assert!(b.cq0 > a.cq0);
    }

    #[test]
    fn rollup_is_exact_and_positive(
        lm in 0.3f64..3.0, rr in 0.3f64..3.0, th in 0.6f64..1.4,
        vb in 0.3f64..3.0, la in 0.3f64..3.0, ea in 0.3f64..3.0,
    ) {
        let re = reference();
        let d = PlantDesign {
            l_mot_star: lm, r_rot_star: rr, theta0_star: th,
            v_bat_star: vb, l_arm_star: la, e_arm_star: ea,
        };
        let p = assemble_vehicle(&d, &re).unwrap();
        let expect = re.fixed_mass
            + 8.0 * (re.motor.m_ref * lm.powf(3.0) + re.rotor.m_ref * rr.powf(3.0))
            + 4.0 * re.arm.m_ref * ea.powf(2.0) * la
            + re.battery.m_ref * vb;
        prop_assert!(rel_err(p.m_total, expect) < 1e-12);
        prop_assert!(p.inertia.iter().all(|i| *i > 0.0));
        // Flat disk-like layout: Izz is the largest principal moment.
        prop_assert!(p.inertia[2] > p.inertia[0]);
        let b = mass_breakdown(&p, &re);
        prop_assert!(rel_err(b.total, p.m_total) < 1e-14);
    }
}
