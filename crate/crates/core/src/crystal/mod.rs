//! Rotating-frame trap potential and zero-temperature planar crystal equilibria.
//!
//! In a frame rotating with the crystal at `omega_r` the confinement is
//! harmonic: `1/2 M omega_1^2 (z^2 + beta r^2)`, plus a weak rotating-wall
//! quadrupole `1/2 M omega_1^2 delta_wall (x^2 - y^2)`. Ions repel through the
//! bare Coulomb interaction.

mod minimize;
mod potential;
mod seed;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constants::{hz_to_angular, BE9_ION_MASS, COULOMB_K, ELEMENTARY_CHARGE};
use minimize::{lbfgs, LbfgsSettings, Objective};
use potential::Coefficients;

#[derive(Debug, Error)]
pub enum CrystalError {
    #[error("invalid trap parameters: {0}")]
    InvalidParams(String),
    #[error("no radial confinement: beta = {beta} <= 0")]
    NoRadialConfinement { beta: f64 },
    #[error("ions {0} and {1} coincide")]
    CoincidentIons(usize, usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(
        "minimizer did not converge after {iterations} iterations (max force {:.3e} N)",
        best.residual_force_max
    )]
    NotConverged { best: Box<CrystalLattice>, iterations: usize },
}

/// Trap and ion constants. Angular frequencies in rad/s, SI otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapParams {
    /// Axial center-of-mass frequency.
    pub omega_1: f64,
    /// Cyclotron frequency.
    pub omega_c: f64,
    /// Crystal rotation frequency.
    pub omega_r: f64,
    /// Dimensionless rotating-wall strength.
    pub delta_wall: f64,
    pub mass: f64,
    pub charge: f64,
}

/// `omega_r (Omega_c - omega_r) / omega_1^2 - 1/2`.
pub fn beta(omega_1: f64, omega_c: f64, omega_r: f64) -> Result<f64, CrystalError> {
    let b = omega_r * (omega_c - omega_r) / (omega_1 * omega_1) - 0.5;
    if b > 0.0 {
        Ok(b)
    } else {
        Err(CrystalError::NoRadialConfinement { beta: b })
    }
}

impl TrapParams {
    /// 9Be+ in a trap given by angular frequencies.
    pub fn new(omega_1: f64, omega_c: f64, omega_r: f64, delta_wall: f64) -> Result<Self, CrystalError> {
        let p = TrapParams {
            omega_1,
            omega_c,
            omega_r,
            delta_wall,
            mass: BE9_ION_MASS,
            charge: ELEMENTARY_CHARGE,
        };
        p.validate()?;
        Ok(p)
    }

    /// 9Be+ in a trap given by ordinary frequencies (Hz).
    pub fn from_hz(f_1: f64, f_c: f64, f_r: f64, delta_wall: f64) -> Result<Self, CrystalError> {
        Self::new(hz_to_angular(f_1), hz_to_angular(f_c), hz_to_angular(f_r), delta_wall)
    }

    pub fn with_species(mut self, mass: f64, charge: f64) -> Result<Self, CrystalError> {
        self.mass = mass;
        self.charge = charge;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CrystalError> {
        let bad = |m: &str| Err(CrystalError::InvalidParams(m.to_string()));
        if !(self.omega_1 > 0.0 && self.omega_1.is_finite()) {
            return bad("omega_1 must be positive");
        }
        if !(self.omega_c > 0.0 && self.omega_c.is_finite()) {
            return bad("cyclotron frequency must be positive");
        }
        if !(self.omega_r > 0.0 && self.omega_r < self.omega_c) {
            return bad("rotation frequency must satisfy 0 < omega_r < Omega_c");
        }
        if !(self.mass > 0.0 && self.charge != 0.0 && self.charge.is_finite()) {
            return bad("mass must be positive and charge nonzero");
        }
        let b = self.beta()?;
        if !(self.delta_wall >= 0.0 && self.delta_wall < b) {
            return Err(CrystalError::InvalidParams(format!(
                "rotating-wall strength {} must lie in [0, beta = {b})",
                self.delta_wall
            )));
        }
        Ok(())
    }

    pub fn beta(&self) -> Result<f64, CrystalError> {
        beta(self.omega_1, self.omega_c, self.omega_r)
    }

    /// `k q^2 / M` [m^3/s^2].
    pub(crate) fn coulomb_over_mass(&self) -> f64 {
        COULOMB_K * self.charge * self.charge / self.mass
    }

    /// Natural length `(k q^2 / (M omega_1^2))^(1/3)`.
    pub fn length_scale(&self) -> f64 {
        (self.coulomb_over_mass() / (self.omega_1 * self.omega_1)).cbrt()
    }

    /// Force unit matching [`Self::length_scale`]: `M omega_1^2 l0`.
    pub fn force_scale(&self) -> f64 {
        self.mass * self.omega_1 * self.omega_1 * self.length_scale()
    }

    fn si_coefficients(&self) -> Result<Coefficients, CrystalError> {
        let b = self.beta()?;
        let k = self.mass * self.omega_1 * self.omega_1;
        Ok(Coefficients {
            trap: [k * (b + self.delta_wall), k * (b - self.delta_wall), k],
            coulomb: COULOMB_K * self.charge * self.charge,
        })
    }

    fn scaled_coefficients(&self) -> Result<Coefficients, CrystalError> {
        let b = self.beta()?;
        Ok(Coefficients { trap: [b + self.delta_wall, b - self.delta_wall, 1.0], coulomb: 1.0 })
    }
}

fn flatten(positions: &[[f64; 3]]) -> Vec<f64> {
    positions.iter().flatten().copied().collect()
}

fn check_coincident(flat: &[f64]) -> Result<(), CrystalError> {
    match potential::coincident_pair(flat) {
        Some((j, k)) => Err(CrystalError::CoincidentIons(j, k)),
        None => Ok(()),
    }
}

/// Total trap plus Coulomb energy [J] of ions at `positions` (meters).
pub fn total_potential(positions: &[[f64; 3]], params: &TrapParams) -> Result<f64, CrystalError> {
    let flat = flatten(positions);
    check_coincident(&flat)?;
    Ok(potential::energy(&flat, &params.si_coefficients()?))
}

/// `V(to) - V(from)` [J], accurate to the size of the difference.
pub fn potential_difference(
    from: &[[f64; 3]],
    to: &[[f64; 3]],
    params: &TrapParams,
) -> Result<f64, CrystalError> {
    if from.len() != to.len() {
        return Err(CrystalError::InvalidInput("configurations differ in ion count".into()));
    }
    let x = flatten(from);
    check_coincident(&x)?;
    check_coincident(&flatten(to))?;
    let step: Vec<f64> = to.iter().zip(from).flat_map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]]).collect();
    Ok(potential::energy_change(&x, &step, &params.si_coefficients()?))
}

/// Gradient of the total potential [N] (negative of the force on each ion).
pub fn potential_gradient(positions: &[[f64; 3]], params: &TrapParams) -> Result<Vec<[f64; 3]>, CrystalError> {
    let flat = flatten(positions);
    check_coincident(&flat)?;
    let mut g = vec![0.0; flat.len()];
    potential::gradient(&flat, &params.si_coefficients()?, &mut g);
    Ok(g.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

/// Equilibrium configuration in the rotating frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CrystalLattice {
    pub params: TrapParams,
    /// Ion positions [m].
    pub positions: Vec<[f64; 3]>,
    pub converged: bool,
    /// Largest gradient component at `positions` [N].
    pub residual_force_max: f64,
    pub planar: bool,
    /// Total potential energy [J].
    pub energy: f64,
    pub iterations: usize,
    /// Seed used for the initial jitter.
    pub seed: u64,
}

impl CrystalLattice {
    pub fn n_ions(&self) -> usize {
        self.positions.len()
    }

    pub fn max_abs_z(&self) -> f64 {
        self.positions.iter().fold(0.0_f64, |m, p| m.max(p[2].abs()))
    }

    /// SHA-256 over the trap parameters and position bits, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        let p = &self.params;
        for v in [p.omega_1, p.omega_c, p.omega_r, p.delta_wall, p.mass, p.charge] {
            h.update(v.to_le_bytes());
        }
        for v in self.positions.iter().flatten() {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn center_of_charge(&self) -> [f64; 3] {
        let n = self.positions.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.positions {
            for a in 0..3 {
                c[a] += p[a] / n;
            }
        }
        c
    }
}

/// Minimizer settings. `gtol` is in units of [`TrapParams::force_scale`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub gtol: f64,
    pub ftol_rel: f64,
    pub max_iterations: usize,
    pub memory: usize,
    pub seed: u64,
    /// Uniform in-plane jitter amplitude, as a fraction of the seed spacing.
    pub jitter: f64,
    /// Out-of-plane jitter amplitude, as a fraction of the seed spacing.
    pub z_jitter: f64,
    /// Planar when `max |z| <= planarity_tol * mean spacing`.
    pub planarity_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gtol: 1e-10,
            ftol_rel: 1e-12,
            max_iterations: 200_000,
            memory: 16,
            seed: 0x5eed_0001,
            jitter: 0.05,
            z_jitter: 1e-3,
            planarity_tol: 1e-6,
        }
    }
}

/// Per-step energy changes [J] of an accepted descent path.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentLog {
    pub initial_energy: f64,
    pub final_energy: f64,
    pub accepted_changes: Vec<f64>,
}

struct ScaledProblem {
    coeffs: Coefficients,
}

impl Objective for ScaledProblem {
    fn value(&self, x: &[f64]) -> f64 {
        potential::energy(x, &self.coeffs)
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        potential::gradient(x, &self.coeffs, g)
    }
    fn change(&self, x: &[f64], step: &[f64]) -> f64 {
        potential::energy_change(x, step, &self.coeffs)
    }
}

/// Local minimum of [`total_potential`] for `n_ions` ions.
///
/// Without a seed configuration the search starts from a jittered
/// triangular patch; the jitter is drawn from `opts.seed`.
pub fn solve_equilibrium(
    params: &TrapParams,
    n_ions: usize,
    seed_config: Option<&[[f64; 3]]>,
    opts: &SolverOptions,
) -> Result<CrystalLattice, CrystalError> {
    solve_equilibrium_logged(params, n_ions, seed_config, opts).map(|(lattice, _)| lattice)
}

pub fn solve_equilibrium_logged(
    params: &TrapParams,
    n_ions: usize,
    seed_config: Option<&[[f64; 3]]>,
    opts: &SolverOptions,
) -> Result<(CrystalLattice, DescentLog), CrystalError> {
    params.validate()?;
    if n_ions == 0 {
        return Err(CrystalError::InvalidInput("n_ions must be at least 1".into()));
    }
    let beta = params.beta()?;
    let l0 = params.length_scale();
    let x0: Vec<f64> = match seed_config {
        Some(cfg) => {
            if cfg.len() != n_ions {
                return Err(CrystalError::InvalidInput(format!(
                    "seed configuration has {} ions, expected {n_ions}",
                    cfg.len()
                )));
            }
            cfg.iter().flatten().map(|v| v / l0).collect()
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            seed::jittered_patch(n_ions, beta, opts.jitter, opts.z_jitter, &mut rng)
        }
    };
    check_coincident(&x0)?;

    let problem = ScaledProblem { coeffs: params.scaled_coefficients()? };
    let settings = LbfgsSettings {
        gtol: opts.gtol,
        ftol_rel: opts.ftol_rel,
        max_iterations: opts.max_iterations,
        memory: opts.memory,
        max_step: 0.25,
    };
    let initial = problem.value(&x0);
    let out = lbfgs(&problem, x0, &settings);

    let energy_unit = params.force_scale() * l0;
    let positions: Vec<[f64; 3]> = out.x.chunks_exact(3).map(|c| [c[0] * l0, c[1] * l0, c[2] * l0]).collect();
    let mut lattice = CrystalLattice {
        params: *params,
        planar: false,
        converged: out.converged,
        residual_force_max: out.grad_max * params.force_scale(),
        energy: out.value * energy_unit,
        iterations: out.iterations,
        seed: opts.seed,
        positions,
    };
    lattice.planar = is_planar(&lattice, opts.planarity_tol);
    let log = DescentLog {
        initial_energy: initial * energy_unit,
        final_energy: lattice.energy,
        accepted_changes: out.accepted_changes.iter().map(|c| c * energy_unit).collect(),
    };
    if !lattice.converged {
        return Err(CrystalError::NotConverged { iterations: out.iterations, best: Box::new(lattice) });
    }
    Ok((lattice, log))
}

fn is_planar(lattice: &CrystalLattice, tol: f64) -> bool {
    let scale = nearest_neighbor_distances(&lattice.positions)
        .map(|d| d.iter().sum::<f64>() / d.len() as f64)
        .unwrap_or_else(|| lattice.params.length_scale());
    lattice.max_abs_z() <= tol * scale
}

fn nearest_neighbor_distances(positions: &[[f64; 3]]) -> Option<Vec<f64>> {
    if positions.len() < 2 {
        return None;
    }
    Some(
        positions
            .iter()
            .enumerate()
            .map(|(j, p)| {
                positions
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != j)
                    .map(|(_, q)| distance(p, q))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect(),
    )
}

pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Geometric summary of a lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeStats {
    pub n_ions: usize,
    /// Mean nearest-neighbor distance [m]; `None` for a single ion.
    pub mean_spacing: Option<f64>,
    /// Largest ion-ion distance [m].
    pub diameter: f64,
}

pub fn lattice_stats(lattice: &CrystalLattice) -> LatticeStats {
    let p = &lattice.positions;
    let mean_spacing = nearest_neighbor_distances(p).map(|d| d.iter().sum::<f64>() / d.len() as f64);
    let mut diameter: f64 = 0.0;
    for j in 0..p.len() {
        for k in (j + 1)..p.len() {
            diameter = diameter.max(distance(&p[j], &p[k]));
        }
    }
    LatticeStats { n_ions: p.len(), mean_spacing, diameter }
}
