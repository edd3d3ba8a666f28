//! Transverse (drumhead) normal modes of a planar crystal.
//!
//! At a planar equilibrium the out-of-plane coordinates decouple from the
//! in-plane ones. Expanding the potential to second order in `z_j` gives the
//! mass-normalized stiffness
//!
//! ```text
//! K_jj = omega_1^2 - sum_{k != j} (k q^2 / M) / d_jk^3
//! K_jk = (k q^2 / M) / d_jk^3
//! ```
//!
//! whose eigenpairs are `(omega_m^2, b_m)`. Every row sums to `omega_1^2`, so
//! the uniform vector is always the center-of-mass mode.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::constants::angular_to_hz;
use crate::crystal::{distance, CrystalLattice, TrapParams};

#[derive(Debug, Error, PartialEq)]
pub enum ModesError {
    #[error("lattice is not planar (max |z| = {max_z:.3e} m)")]
    NonPlanar { max_z: f64 },
    #[error("lattice is not a converged equilibrium")]
    NotConverged,
    #[error("stiffness matrix is not square and symmetric")]
    NotSymmetric,
    #[error("histogram bin width must be positive, got {0}")]
    InvalidBinWidth(f64),
    #[error("inconsistent mode data: {0}")]
    Inconsistent(String),
}

/// Mass-normalized transverse stiffness [(rad/s)^2].
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessMatrix {
    pub entries: DMatrix<f64>,
    /// Trap axial frequency the matrix was built with [rad/s].
    pub omega_1: f64,
    pub mass: f64,
    pub source_lattice_hash: String,
}

impl StiffnessMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Largest `|K_jk - K_kj|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let k = &self.entries;
        let scale = k.amax().max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for j in 0..k.nrows() {
            for i in 0..j {
                worst = worst.max((k[(i, j)] - k[(j, i)]).abs());
            }
        }
        worst / scale
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.row_iter().map(|r| r.sum()).collect()
    }
}

/// Build the transverse stiffness at a converged planar equilibrium.
pub fn transverse_stiffness(lattice: &CrystalLattice, params: &TrapParams) -> Result<StiffnessMatrix, ModesError> {
    if !lattice.converged {
        return Err(ModesError::NotConverged);
    }
    if !lattice.planar {
        return Err(ModesError::NonPlanar { max_z: lattice.max_abs_z() });
    }
    let n = lattice.n_ions();
    let w1sq = params.omega_1 * params.omega_1;
    let kq2m = params.coulomb_over_mass();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let d = distance(&lattice.positions[i], &lattice.positions[j]);
            let c = kq2m / (d * d * d);
            k[(i, j)] = c;
            k[(j, i)] = c;
        }
    }
    for j in 0..n {
        // Sum the off-diagonal couplings in a fixed order so the row-sum
        // identity holds to rounding.
        let screen: f64 = (0..n).filter(|&i| i != j).map(|i| k[(j, i)]).sum();
        k[(j, j)] = w1sq - screen;
    }
    Ok(StiffnessMatrix {
        entries: k,
        omega_1: params.omega_1,
        mass: params.mass,
        source_lattice_hash: lattice.content_hash(),
    })
}

/// Sorted transverse modes.
///
/// `omega[m]` is `sqrt(eigenvalue)`; an unstable direction (negative
/// eigenvalue) is stored as `-sqrt(|eigenvalue|)` and listed in `unstable`.
/// Mode `0` is the highest-frequency (center-of-mass) mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpectrum {
    pub omega: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    /// Column `m` is the unit eigenvector `b_m`; entry `(j, m)` is `b_jm`.
    pub vectors: DMatrix<f64>,
    pub unstable: Vec<usize>,
    /// Degeneracy cluster label of each mode (equal labels are degenerate).
    pub clusters: Vec<usize>,
    pub omega_1_trap: f64,
    pub mass: f64,
    pub source_lattice_hash: String,
}

/// Relative frequency gap below which modes count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

impl ModeSpectrum {
    pub fn n(&self) -> usize {
        self.omega.len()
    }

    pub fn is_stable(&self) -> bool {
        self.unstable.is_empty()
    }

    pub fn b(&self, j: usize, m: usize) -> f64 {
        self.vectors[(j, m)]
    }

    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.omega.iter().map(|&w| angular_to_hz(w)).collect()
    }

    /// `omega_1 - omega_N` [rad/s].
    pub fn span(&self) -> f64 {
        self.omega[0] - self.omega[self.n() - 1]
    }

    /// Assemble a spectrum from stored frequencies and eigenvectors, checking
    /// shapes and normalization.
    pub fn from_parts(
        omega: Vec<f64>,
        vectors: DMatrix<f64>,
        omega_1_trap: f64,
        mass: f64,
        source_lattice_hash: String,
    ) -> Result<Self, ModesError> {
        let n = omega.len();
        if vectors.nrows() != n || vectors.ncols() != n || n == 0 {
            return Err(ModesError::Inconsistent(format!(
                "{n} frequencies but a {}x{} eigenvector matrix",
                vectors.nrows(),
                vectors.ncols()
            )));
        }
        for (m, col) in vectors.column_iter().enumerate() {
            if (col.norm_squared() - 1.0).abs() > 1e-6 {
                return Err(ModesError::Inconsistent(format!("eigenvector {m} is not normalized")));
            }
        }
        let eigenvalues: Vec<f64> = omega.iter().map(|w| w.signum() * w * w).collect();
        let unstable = (0..n).filter(|&m| omega[m] < 0.0).collect();
        let clusters = cluster_labels(&omega);
        Ok(ModeSpectrum { omega, eigenvalues, vectors, unstable, clusters, omega_1_trap, mass, source_lattice_hash })
    }
}

fn cluster_labels(omega: &[f64]) -> Vec<usize> {
    let mut labels = Vec::with_capacity(omega.len());
    let mut label = 0;
    for (m, w) in omega.iter().enumerate() {
        if m > 0 {
            let prev = omega[m - 1];
            let scale = w.abs().max(prev.abs()).max(f64::MIN_POSITIVE);
            if (prev - w).abs() / scale >= DEGENERACY_TOL {
                label += 1;
            }
        }
        labels.push(label);
    }
    labels
}

fn first_significant(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .find(|(_, x)| x.abs() > 1e-6)
        .map(|(i, &x)| (i, x))
        .unwrap_or((v.len(), 0.0))
}

/// Eigen-decompose the stiffness into a sorted [`ModeSpectrum`].
///
/// Modes are sorted by descending frequency, each eigenvector's
/// largest-magnitude component is made positive, and members of a degenerate
/// cluster are ordered by their first significant component.
pub fn diagonalize(stiffness: &StiffnessMatrix) -> Result<ModeSpectrum, ModesError> {
    let k = &stiffness.entries;
    if k.nrows() != k.ncols() || k.nrows() == 0 || stiffness.asymmetry() > 1e-12 {
        return Err(ModesError::NotSymmetric);
    }
    let n = k.nrows();
    let eig = SymmetricEigen::new(k.clone());

    let mut modes: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|m| {
            let mut v: Vec<f64> = eig.eigenvectors.column(m).iter().copied().collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut lead = 0;
            for (i, x) in v.iter().enumerate() {
                if x.abs() > v[lead].abs() {
                    lead = i;
                }
            }
            let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
            for x in v.iter_mut() {
                *x *= sign / norm;
            }
            (eig.eigenvalues[m], v)
        })
        .collect();
    modes.sort_by(|a, b| b.0.total_cmp(&a.0));

    let omega_of = |lambda: f64| lambda.signum() * lambda.abs().sqrt();
    let omega: Vec<f64> = modes.iter().map(|(l, _)| omega_of(*l)).collect();
    let clusters = cluster_labels(&omega);

    // Reorder within degenerate clusters.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && clusters[end] == clusters[start] {
            end += 1;
        }
        if end - start > 1 {
            modes[start..end].sort_by(|a, b| {
                let (ia, va) = first_significant(&a.1);
                let (ib, vb) = first_significant(&b.1);
                ia.cmp(&ib).then(vb.total_cmp(&va))
            });
        }
        start = end;
    }

    let eigenvalues: Vec<f64> = modes.iter().map(|(l, _)| *l).collect();
    let omega: Vec<f64> = eigenvalues.iter().map(|&l| omega_of(l)).collect();
    let vectors = DMatrix::from_fn(n, n, |j, m| modes[m].1[j]);
    let unstable = (0..n).filter(|&m| eigenvalues[m] < 0.0).collect();
    Ok(ModeSpectrum {
        omega,
        eigenvalues,
        vectors,
        unstable,
        clusters,
        omega_1_trap: stiffness.omega_1,
        mass: stiffness.mass,
        source_lattice_hash: stiffness.source_lattice_hash.clone(),
    })
}

/// Mode counts in bins `[i w, (i + 1) w)` anchored at 0 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeHistogram {
    pub bin_width_hz: f64,
    /// Index `i` of the first bin.
    pub first_bin: i64,
    pub counts: Vec<usize>,
}

impl ModeHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn lower_edge(&self, k: usize) -> f64 {
        (self.first_bin + k as i64) as f64 * self.bin_width_hz
    }

    pub fn center(&self, k: usize) -> f64 {
        (self.first_bin as f64 + k as f64 + 0.5) * self.bin_width_hz
    }

    /// Count of the bin containing `f_hz` (zero outside the histogram).
    pub fn count_at(&self, f_hz: f64) -> usize {
        let i = bin_index(f_hz, self.bin_width_hz) - self.first_bin;
        if i < 0 {
            return 0;
        }
        self.counts.get(i as usize).copied().unwrap_or(0)
    }
}

fn bin_index(f_hz: f64, width: f64) -> i64 {
    (f_hz / width).floor() as i64
}

pub fn mode_histogram(spectrum: &ModeSpectrum, bin_width_hz: f64) -> Result<ModeHistogram, ModesError> {
    if !(bin_width_hz > 0.0 && bin_width_hz.is_finite()) {
        return Err(ModesError::InvalidBinWidth(bin_width_hz));
    }
    let idx: Vec<i64> = spectrum.frequencies_hz().iter().map(|&f| bin_index(f, bin_width_hz)).collect();
    let lo = idx.iter().copied().min().unwrap_or(0);
    let hi = idx.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for i in idx {
        counts[(i - lo) as usize] += 1;
    }
    Ok(ModeHistogram { bin_width_hz, first_bin: lo, counts })
}
