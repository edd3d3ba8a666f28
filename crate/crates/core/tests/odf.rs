use std::f64::consts::PI;

use drumhead::constants::HBAR;
use drumhead::odf::{
    acss_null_angle, deg, effective_wavevector, force_from_intensity, lattice_wavelength, state_dependent_forces,
    BeamGeometry, DriveConfig, ForceProfile, PulseSequence, StarkCoefficients, FORCE_PER_INTENSITY,
};
use proptest::prelude::*;

fn beams(theta: f64) -> BeamGeometry {
    BeamGeometry { wavelength: 313.133e-9, theta_r: theta, waist_z: 100e-6, waist_x: 1e-3, misalignment_err: 0.0 }
}

#[test]
fn operating_point_lattice() {
    let g = BeamGeometry::new(313.133e-9, deg(4.8)).unwrap();
    let dk = effective_wavevector(&g);
    assert!((dk - 1.681e6).abs() / 1.681e6 < 1e-3);
    assert!((lattice_wavelength(&g) - 3.7e-6).abs() / 3.7e-6 < 0.02);
}

#[test]
fn counter_propagating_limit() {
    let k = 2.0 * PI / 313.133e-9;
    assert!((effective_wavevector(&beams(PI)) - 2.0 * k).abs() / k < 1e-15);
    assert_eq!(effective_wavevector(&beams(0.0)), 0.0);
}

#[test]
fn force_anchor_is_exact() {
    assert_eq!(force_from_intensity(1.0).unwrap(), 1.5e-23);
    assert_eq!(force_from_intensity(0.0).unwrap(), 0.0);
    assert!((force_from_intensity(2.0).unwrap() - 3.0e-23).abs() < 1e-38);
    assert!(force_from_intensity(-1.0).is_err());
    assert!(force_from_intensity(f64::NAN).is_err());
}

#[test]
fn drive_rejects_bad_inputs() {
    let ok = DriveConfig {
        force: ForceProfile::Uniform(1e-23),
        mu_r: 5e6,
        gamma: 0.0,
        sequence: PulseSequence::SpinEcho { tau: 5e-4, t_pi: 6.5e-5 },
    };
    assert!(ok.validate(3).is_ok());
    assert!(DriveConfig { force: ForceProfile::PerIon(vec![1e-23; 2]), ..ok.clone() }.validate(3).is_err());
    assert!(DriveConfig { gamma: -1.0, ..ok.clone() }.validate(3).is_err());
    assert!(DriveConfig { sequence: PulseSequence::Ramsey { tau: 0.0 }, ..ok.clone() }.validate(3).is_err());
    let spread = DriveConfig { force: ForceProfile::PerIon(vec![1.0, 1.3, 1.0]), ..ok };
    assert!(spread.validate(3).is_ok());
    assert!(spread.inhomogeneous());
}

#[test]
fn forces_use_hbar_and_dk() {
    let c = StarkCoefficients { a_up: 1e3, a_dn: -1e3, b_up: 0.0, b_dn: 0.0 };
    let f = state_dependent_forces(&c, 0.0, 1.0);
    assert!((f.f_up - 2.0 * HBAR * 1e3).abs() < 1e-40);
    assert!(f.antisymmetric);
}

proptest! {
    #[test]
    fn wavevector_monotone_in_angle(a in 1e-4f64..(PI - 1e-3), b in 1e-4f64..(PI - 1e-3)) {
        prop_assume!(a < b);
        prop_assert!(effective_wavevector(&beams(a)) < effective_wavevector(&beams(b)));
    }

    #[test]
    fn null_angle_zeroes_the_shift(
        da in prop_oneof![-1e6f64..-1e-3, 1e-3f64..1e6],
        db_mag in 1e-3f64..1e6,
        a_dn in -1e5f64..1e5,
        b_dn in -1e5f64..1e5,
    ) {
        let db = -da.signum() * db_mag;
        let c = StarkCoefficients { a_up: a_dn + da, a_dn, b_up: b_dn + db, b_dn };
        let phi = acss_null_angle(&c).unwrap();
        prop_assert!(phi > 0.0 && phi < PI / 2.0);
        let scale = (c.a_up - c.a_dn).abs().max((c.b_up - c.b_dn).abs());
        prop_assert!(c.transition_shift(phi).abs() <= 1e-12 * scale);
    }

    #[test]
    fn no_null_for_same_sign(da in 1e-3f64..1e6, db in 1e-3f64..1e6, s in prop::bool::ANY) {
        let sign = if s { 1.0 } else { -1.0 };
        let c = StarkCoefficients { a_up: sign * da, a_dn: 0.0, b_up: sign * db, b_dn: 0.0 };
        prop_assert!(acss_null_angle(&c).is_err());
    }

    #[test]
    fn force_linear_in_intensity(a in 0.0f64..100.0, b in 0.0f64..100.0) {
        let sum = force_from_intensity(a + b).unwrap();
        let parts = force_from_intensity(a).unwrap() + force_from_intensity(b).unwrap();
        prop_assert!((sum - parts).abs() <= 1e-14 * FORCE_PER_INTENSITY * (a + b).max(1.0));
    }
}
