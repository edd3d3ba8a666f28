mod common;

use common::{cached, solve, trap};
use drumhead::constants::COULOMB_K;
use drumhead::crystal::{
    beta, lattice_stats, potential_gradient, solve_equilibrium, solve_equilibrium_logged, total_potential,
    CrystalError, SolverOptions, TrapParams,
};
use proptest::prelude::*;

fn k_q2(p: &TrapParams) -> f64 {
    COULOMB_K * p.charge * p.charge
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn beta_at_midpoint_is_one_half() {
    let wc = 2.0;
    assert!((beta(wc / 2.0, wc, wc / 2.0).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn beta_rejects_deconfined_rotation() {
    let p = TrapParams::from_hz(795e3, 7.6e6, 1e3, 0.0);
    assert!(matches!(p, Err(CrystalError::NoRadialConfinement { .. })));
}

#[test]
fn single_ion_at_origin() {
    let l = solve(1, 43.2e3);
    assert!(l.positions[0].iter().all(|v| v.abs() < 1e-15));
    assert!(total_potential(&l.positions, &l.params).unwrap() < 1e-40);
    assert_eq!(total_potential(&[[0.0; 3]], &l.params).unwrap(), 0.0);
    let s = lattice_stats(&l);
    assert_eq!(s.mean_spacing, None);
    assert_eq!(s.diameter, 0.0);
}

#[test]
fn zero_ions_rejected() {
    let r = solve_equilibrium(&trap(43.2e3), 0, None, &SolverOptions::default());
    assert!(matches!(r, Err(CrystalError::InvalidInput(_))));
}

#[test]
fn coincident_ions_rejected() {
    let p = trap(43.2e3);
    let r = total_potential(&[[1e-6, 0.0, 0.0], [1e-6, 0.0, 0.0]], &p);
    assert!(matches!(r, Err(CrystalError::CoincidentIons(0, 1))));
}

#[test]
fn two_ion_energy_closed_form() {
    let p = trap(44.7e3);
    let b = p.beta().unwrap();
    let d = 30e-6;
    let e = total_potential(&[[d / 2.0, 0.0, 0.0], [-d / 2.0, 0.0, 0.0]], &p).unwrap();
    let expect = 0.25 * p.mass * p.omega_1.powi(2) * b * d * d + k_q2(&p) / d;
    assert!(rel(e, expect) < 1e-14);
}

#[test]
fn two_ion_separation_and_stats() {
    let l = solve(2, 44.7e3);
    let p = &l.params;
    let d = (2.0 * k_q2(p) / (p.mass * p.omega_1.powi(2) * p.beta().unwrap())).cbrt();
    let s = lattice_stats(&l);
    assert!(rel(s.mean_spacing.unwrap(), d) < 1e-8);
    assert!(rel(s.diameter, d) < 1e-8);
}

#[test]
fn three_ions_form_equilateral_triangle() {
    let l = solve(3, 43.2e3);
    let p = &l.params;
    let a = (k_q2(p) / (3f64.sqrt() * p.mass * p.omega_1.powi(2) * p.beta().unwrap())).cbrt();
    assert!((a - 2.79e-5).abs() < 0.01e-5, "a = {a:e}");
    for q in &l.positions {
        let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
        assert!(rel(r, a) < 1e-8, "r = {r:e}, a = {a:e}");
    }
    let s = lattice_stats(&l);
    assert!(rel(s.mean_spacing.unwrap(), 3f64.sqrt() * a) < 1e-8);
}

#[test]
fn triangle_radius_matches_brute_force_scan() {
    let p = trap(43.2e3);
    let tri = |r: f64| -> Vec<[f64; 3]> {
        (0..3)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 3.0;
                [r * t.cos(), r * t.sin(), 0.0]
            })
            .collect()
    };
    let e = |r: f64| total_potential(&tri(r), &p).unwrap();
    // Golden-section scan over the radius, independent of the solver.
    let (mut lo, mut hi) = (1e-5, 1e-4);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if e(a) < e(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let r_scan = 0.5 * (lo + hi);
    let l = solve(3, 43.2e3);
    let r_solver = (l.positions[0][0].powi(2) + l.positions[0][1].powi(2)).sqrt();
    assert!(rel(r_solver, r_scan) < 1e-7);
    assert!(rel(e(r_scan), l.energy) < 1e-10);
}

#[test]
fn descent_is_monotone() {
    let (l, log) = solve_equilibrium_logged(&trap(43.2e3), 60, None, &SolverOptions::default()).unwrap();
    assert!(l.converged);
    assert!(!log.accepted_changes.is_empty());
    assert!(log.accepted_changes.iter().all(|&c| c <= 0.0));
    assert!(log.final_energy <= log.initial_energy);
}

#[test]
fn gradient_at_solution_below_residual() {
    let l = solve(40, 44.7e3);
    let g = potential_gradient(&l.positions, &l.params).unwrap();
    let max = g.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(max <= l.residual_force_max * (1.0 + 1e-6) + 1e-30);
    assert!(max < 1e-10 * l.params.force_scale());
}

#[test]
fn crystal_is_centered_without_wall() {
    for n in [7, 30, 100] {
        let l = solve(n, 43.2e3);
        let c = l.center_of_charge();
        let scale = lattice_stats(&l).mean_spacing.unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-8 * scale), "n = {n}: {c:?}");
    }
}

#[test]
fn single_plane_window_at_345() {
    for f in [42.2e3, 43.2e3, 44.7e3] {
        let l = solve(345, f);
        assert!(l.planar, "rotation {f} Hz gave max |z| {:e}", l.max_abs_z());
    }
}

#[test]
fn size_matches_quoted_crystal_scale() {
    let (l, _) = cached(190, 44.7e3);
    let s = lattice_stats(l);
    assert!((300e-6..=500e-6).contains(&s.diameter), "diameter {:e}", s.diameter);
    let a = s.mean_spacing.unwrap();
    assert!((15e-6..=30e-6).contains(&a), "spacing {a:e}");
}

#[test]
fn same_seed_same_lattice() {
    let a = solve(50, 43.2e3);
    let b = solve(50, 43.2e3);
    assert_eq!(a, b);
    assert_eq!(a.content_hash(), b.content_hash());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_rotation_invariant(angle in 0.0f64..std::f64::consts::TAU) {
        let (l, _) = cached(30, 43.2e3);
        let (s, c) = angle.sin_cos();
        let rotated: Vec<[f64; 3]> = l.positions.iter().map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]).collect();
        let e0 = total_potential(&l.positions, &l.params).unwrap();
        let e1 = total_potential(&rotated, &l.params).unwrap();
        prop_assert!(rel(e1, e0) < 1e-12);
    }

    #[test]
    fn energy_translation_along_axis_costs(dz in 1e-7f64..1e-5) {
        let (l, _) = cached(30, 43.2e3);
        let shifted: Vec<[f64; 3]> = l.positions.iter().map(|p| [p[0], p[1], p[2] + dz]).collect();
        let e0 = total_potential(&l.positions, &l.params).unwrap();
        let e1 = total_potential(&shifted, &l.params).unwrap();
        prop_assert!(e1 > e0);
    }
}
