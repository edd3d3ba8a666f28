mod common;

use common::{cached, solve, trap};
use drumhead::crystal::{solve_equilibrium, SolverOptions, TrapParams};
use drumhead::modes::{diagonalize, mode_histogram, transverse_stiffness, ModesError};
use proptest::prelude::*;

#[test]
fn two_ion_modes_closed_form() {
    let (_, s) = cached(2, 44.7e3);
    let w1 = s.omega_1_trap;
    let b = trap(44.7e3).beta().unwrap();
    assert!(((s.omega[0] - w1) / w1).abs() < 1e-12);
    assert!(((s.omega[1] - w1 * (1.0 - b).sqrt()) / w1).abs() < 1e-9);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!((s.b(0, 0) - h).abs() < 1e-12 && (s.b(1, 0) - h).abs() < 1e-12);
    assert!((s.b(0, 1).abs() - h).abs() < 1e-12 && (s.b(0, 1) + s.b(1, 1)).abs() < 1e-12);
}

#[test]
fn stiffness_symmetric_with_axial_row_sums() {
    let (l, _) = cached(100, 43.2e3);
    let k = transverse_stiffness(l, &l.params).unwrap();
    assert!(k.asymmetry() < 1e-12);
    let w1sq = l.params.omega_1.powi(2);
    assert!(k.row_sums().iter().all(|r| ((r - w1sq) / w1sq).abs() < 1e-9));
}

#[test]
fn orthonormal_and_complete() {
    for n in [7, 50, 190] {
        let (_, s) = cached(n, 44.7e3);
        let gram = s.vectors.transpose() * &s.vectors;
        let outer = &s.vectors * s.vectors.transpose();
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - e).abs() < 1e-9, "n = {n}, gram ({i},{j})");
                assert!((outer[(i, j)] - e).abs() < 1e-9, "n = {n}, outer ({i},{j})");
            }
        }
    }
}

#[test]
fn com_is_highest_and_bounds_the_band() {
    for (n, f) in [(20, 43.2e3), (190, 44.7e3), (345, 43.2e3)] {
        let (_, s) = cached(n, f);
        assert!(s.is_stable());
        let w1 = s.omega_1_trap;
        assert!(((s.omega[0] - w1) / w1).abs() < 1e-9);
        assert!(s.omega.iter().all(|&w| w <= w1 * (1.0 + 1e-12)));
        assert!(s.omega.windows(2).all(|p| p[0] >= p[1] * (1.0 - 1e-10)));
    }
}

#[test]
fn low_modes_alternate_between_neighbors() {
    let (l, s) = cached(331, 44.7e3);
    let n = l.n_ions();
    let spacing = drumhead::crystal::lattice_stats(l).mean_spacing.unwrap();
    let mut pairs = Vec::new();
    for j in 0..n {
        for k in (j + 1)..n {
            let p = &l.positions;
            let d = ((p[j][0] - p[k][0]).powi(2) + (p[j][1] - p[k][1]).powi(2)).sqrt();
            if d < 1.3 * spacing {
                pairs.push((j, k));
            }
        }
    }
    let flips = |m: usize| pairs.iter().filter(|&&(j, k)| s.b(j, m) * s.b(k, m) < 0.0).count();
    for m in (n - 50)..n {
        assert!(flips(m) > n / 2, "mode {m}: {} flips over {} pairs", flips(m), pairs.len());
    }
    assert_eq!(flips(0), 0);
}

#[test]
fn histogram_counts_every_mode() {
    for (n, f) in [(1, 43.2e3), (2, 44.7e3), (190, 44.7e3)] {
        let (_, s) = cached(n, f);
        let h = mode_histogram(s, 10e3).unwrap();
        assert_eq!(h.total(), n);
        assert_eq!(h.count_at(s.frequencies_hz()[0]) >= 1, true);
        assert_eq!(h.lower_edge(0) % 10e3, 0.0);
    }
    let (_, s) = cached(1, 43.2e3);
    assert!(matches!(mode_histogram(s, 0.0), Err(ModesError::InvalidBinWidth(_))));
}

#[test]
fn narrower_band_at_lower_rotation() {
    let lo = &cached(345, 43.2e3).1;
    let hi = &cached(345, 44.7e3).1;
    assert!(lo.span() < hi.span());
}

#[test]
fn weaker_confinement_raises_every_mode() {
    for n in [10, 50] {
        let a = &cached(n, 43.2e3).1;
        let b = &cached(n, 44.7e3).1;
        for m in 0..n {
            assert!(a.omega[m] >= b.omega[m] * (1.0 - 1e-12), "n = {n}, mode {m}");
        }
    }
}

#[test]
fn wall_splits_degenerate_clusters() {
    let n = 19;
    let (_, plain) = cached(n, 44.7e3);
    let degenerate = plain.clusters.windows(2).filter(|p| p[0] == p[1]).count();
    assert!(degenerate > 0);
    let p = TrapParams::from_hz(795e3, 7.6e6, 44.7e3, 1e-3).unwrap();
    let l = solve_equilibrium(&p, n, None, &SolverOptions::default()).unwrap();
    let s = diagonalize(&transverse_stiffness(&l, &p).unwrap()).unwrap();
    let still = s.clusters.windows(2).filter(|p| p[0] == p[1]).count();
    assert!(still < degenerate, "{still} vs {degenerate}");
}

#[test]
fn deterministic_sign_convention() {
    let a = solve(40, 43.2e3);
    let ka = transverse_stiffness(&a, &a.params).unwrap();
    let s1 = diagonalize(&ka).unwrap();
    let s2 = diagonalize(&ka).unwrap();
    assert_eq!(s1, s2);
    for m in 0..s1.n() {
        let col = s1.vectors.column(m);
        let lead = col.iter().copied().fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        assert!(lead > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn com_eigenvector_for_any_size(n in 1usize..40, f in 42.5e3f64..44.9e3) {
        let l = solve(n, f);
        let s = diagonalize(&transverse_stiffness(&l, &l.params).unwrap()).unwrap();
        let u = 1.0 / (n as f64).sqrt();
        prop_assert!(((s.eigenvalues[0] - l.params.omega_1.powi(2)) / l.params.omega_1.powi(2)).abs() < 1e-9);
        for j in 0..n {
            prop_assert!((s.b(j, 0) - u).abs() < 1e-9);
        }
        let sum: f64 = s.eigenvalues.iter().sum();
        let trace: f64 = transverse_stiffness(&l, &l.params).unwrap().entries.trace();
        prop_assert!(((sum - trace) / trace).abs() < 1e-10);
    }
}
