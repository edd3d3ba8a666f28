//! Spin-dependent displacements, bright-state probability lineshapes and the
//! spin-spin coupling guardrail.
//!
//! A drive `-F_j cos(mu_R t + phi) z_j sigma^z_j` displaces mode `m` by
//!
//! ```text
//! alpha_jm(t, phi) = F_j b_jm z0m / (hbar (mu^2 - w^2))
//!     * [w cos(phi) - i mu sin(phi) - e^{i w t} (w cos(mu t + phi) - i mu sin(mu t + phi))]
//! ```
//!
//! per spin state, with `z0m = sqrt(hbar / 2 M w_m)`. The spin echo combines
//! the arms as `alpha(tau, 0) - alpha(tau, (tau + t_pi)(mu - w_m))`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::constants::{hz_to_angular, HBAR};
use crate::modes::ModeSpectrum;
use crate::odf::{DriveConfig, PulseSequence};
use crate::thermometry::temperature_to_occupation;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("mode spectrum has unstable modes {0:?}")]
    UnstableSpectrum(Vec<usize>),
    #[error("operation requires a spin-echo sequence")]
    NotSpinEcho,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Below this `|mu - w| / w` the closed form is replaced by its expansion
/// about resonance.
pub const RESONANCE_SWITCH: f64 = 1e-8;

/// Ground-state length `sqrt(hbar / (2 M omega))` [m].
pub fn ground_state_length(mass: f64, omega: f64) -> f64 {
    (HBAR / (2.0 * mass * omega)).sqrt()
}

/// Bracketed closed form divided by `mu^2 - w^2`, i.e. `alpha` per unit
/// `F b z0 / hbar` [s].
pub fn unit_displacement(mu: f64, w: f64, t: f64, phi: f64) -> Complex64 {
    if (mu - w).abs() >= RESONANCE_SWITCH * w {
        displacement_closed(mu, w, t, phi)
    } else {
        displacement_series(mu, w, t, phi)
    }
}

fn displacement_closed(mu: f64, w: f64, t: f64, phi: f64) -> Complex64 {
    let rot = Complex64::from_polar(1.0, w * t);
    let theta = mu * t + phi;
    let bracket =
        Complex64::new(w * phi.cos(), -mu * phi.sin()) - rot * Complex64::new(w * theta.cos(), -mu * theta.sin());
    bracket / ((mu - w) * (mu + w))
}

/// Taylor expansion of the bracket `N(mu)` about `mu = w`, where `N(w) = 0`.
fn displacement_series(mu: f64, w: f64, t: f64, phi: f64) -> Complex64 {
    let delta = mu - w;
    let rot = Complex64::from_polar(1.0, w * t);
    let theta = w * t + phi;
    let (s, c) = theta.sin_cos();
    let i = Complex64::i();
    let g1 = -w * t * s - i * s - i * w * t * c;
    let g2 = -w * t * t * c - 2.0 * i * t * c + i * w * t * t * s;
    let g3 = w * t.powi(3) * s + 3.0 * i * t * t * s + i * w * t.powi(3) * c;
    let n1 = -i * phi.sin() - rot * g1;
    let n2 = -rot * g2;
    let n3 = -rot * g3;
    (n1 + n2 * (delta / 2.0) + n3 * (delta * delta / 6.0)) / (2.0 * w + delta)
}

fn check_spectrum(spectrum: &ModeSpectrum) -> Result<(), DynamicsError> {
    if spectrum.is_stable() {
        Ok(())
    } else {
        Err(DynamicsError::UnstableSpectrum(spectrum.unstable.clone()))
    }
}

fn check_drive(drive: &DriveConfig, spectrum: &ModeSpectrum) -> Result<(), DynamicsError> {
    check_spectrum(spectrum)?;
    drive.validate(spectrum.n()).map_err(|e| DynamicsError::InvalidInput(e.to_string()))
}

/// Which displacement a [`DisplacementField`] holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldKind {
    SingleArm { tau: f64, phi: f64 },
    SpinEcho { tau: f64, t_pi: f64 },
}

/// `alpha[(j, m)]`: displacement of mode `m` from the spin of ion `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub alpha: DMatrix<Complex64>,
    pub kind: FieldKind,
    pub mu_r: f64,
}

fn mode_prefactors(spectrum: &ModeSpectrum) -> Vec<f64> {
    spectrum.omega.iter().map(|&w| ground_state_length(spectrum.mass, w) / HBAR).collect()
}

fn field_from_modes(drive: &DriveConfig, spectrum: &ModeSpectrum, unit: &[Complex64]) -> DMatrix<Complex64> {
    let pre = mode_prefactors(spectrum);
    DMatrix::from_fn(spectrum.n(), spectrum.n(), |j, m| {
        unit[m] * (drive.force.at(j) * spectrum.b(j, m) * pre[m])
    })
}

/// `alpha_jm(tau, phi)` with the same drive phase `phi` for every mode.
pub fn alpha_single_arm(
    drive: &DriveConfig,
    spectrum: &ModeSpectrum,
    tau: f64,
    phi: f64,
) -> Result<DisplacementField, DynamicsError> {
    check_drive(drive, spectrum)?;
    if !(tau > 0.0) {
        return Err(DynamicsError::InvalidInput(format!("arm duration must be positive, got {tau}")));
    }
    let unit: Vec<Complex64> = spectrum.omega.iter().map(|&w| unit_displacement(drive.mu_r, w, tau, phi)).collect();
    Ok(DisplacementField {
        alpha: field_from_modes(drive, spectrum, &unit),
        kind: FieldKind::SingleArm { tau, phi },
        mu_r: drive.mu_r,
    })
}

fn echo_unit(mu: f64, w: f64, tau: f64, t_pi: f64) -> Complex64 {
    let phi = (tau + t_pi) * (mu - w);
    unit_displacement(mu, w, tau, 0.0) - unit_displacement(mu, w, tau, phi)
}

/// Net spin-echo displacement `alpha(tau, 0) - alpha(tau, phi_m)`.
pub fn alpha_spin_echo(drive: &DriveConfig, spectrum: &ModeSpectrum) -> Result<DisplacementField, DynamicsError> {
    check_drive(drive, spectrum)?;
    let PulseSequence::SpinEcho { tau, t_pi } = drive.sequence else {
        return Err(DynamicsError::NotSpinEcho);
    };
    let unit: Vec<Complex64> = spectrum.omega.iter().map(|&w| echo_unit(drive.mu_r, w, tau, t_pi)).collect();
    Ok(DisplacementField {
        alpha: field_from_modes(drive, spectrum, &unit),
        kind: FieldKind::SpinEcho { tau, t_pi },
        mu_r: drive.mu_r,
    })
}

/// Net displacement for whichever sequence `drive` specifies.
pub fn alpha_for_sequence(drive: &DriveConfig, spectrum: &ModeSpectrum) -> Result<DisplacementField, DynamicsError> {
    match drive.sequence {
        PulseSequence::Ramsey { tau } => alpha_single_arm(drive, spectrum, tau, 0.0),
        PulseSequence::SpinEcho { .. } => alpha_spin_echo(drive, spectrum),
    }
}

/// Mean thermal occupation of every mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState {
    pub nbar: Vec<f64>,
}

impl ThermalState {
    pub fn new(nbar: Vec<f64>) -> Result<Self, DynamicsError> {
        if let Some(n) = nbar.iter().find(|n| !(**n >= 0.0 && n.is_finite())) {
            return Err(DynamicsError::InvalidInput(format!("occupation must be non-negative, got {n}")));
        }
        Ok(ThermalState { nbar })
    }

    /// Every mode at temperature `t_kelvin`, `nbar_m = k_B T / (hbar w_m)`.
    pub fn uniform_temperature(spectrum: &ModeSpectrum, t_kelvin: f64) -> Result<Self, DynamicsError> {
        Self::new(spectrum.omega.iter().map(|&w| temperature_to_occupation(t_kelvin, w)).collect())
    }

    pub fn with_mode(mut self, m: usize, nbar: f64) -> Result<Self, DynamicsError> {
        if m >= self.nbar.len() || !(nbar >= 0.0) {
            return Err(DynamicsError::InvalidInput(format!("cannot set occupation {nbar} on mode {m}")));
        }
        self.nbar[m] = nbar;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrightProbability {
    pub per_ion: Vec<f64>,
    pub mean: f64,
}

fn bright_from_exponent(exponent: f64, background: f64) -> f64 {
    0.5 * (1.0 - background * (-2.0 * exponent).exp())
}

/// `P_j = 1/2 [1 - exp(-Gamma T_odf) exp(-2 sum_m |alpha_jm|^2 (2 nbar_m + 1))]`
/// and its mean over ions; `total_odf_time` is `tau` for Ramsey and `2 tau`
/// for the spin echo.
pub fn bright_probability(
    field: &DisplacementField,
    thermal: &ThermalState,
    gamma: f64,
    total_odf_time: f64,
) -> Result<BrightProbability, DynamicsError> {
    let (n_ions, n_modes) = field.alpha.shape();
    if thermal.nbar.len() != n_modes {
        return Err(DynamicsError::DimensionMismatch(format!(
            "{} occupations for {n_modes} modes",
            thermal.nbar.len()
        )));
    }
    let background = (-gamma * total_odf_time).exp();
    let per_ion: Vec<f64> = (0..n_ions)
        .map(|j| {
            let s: f64 = (0..n_modes).map(|m| field.alpha[(j, m)].norm_sqr() * (2.0 * thermal.nbar[m] + 1.0)).sum();
            bright_from_exponent(s, background)
        })
        .collect();
    let mean = per_ion.iter().sum::<f64>() / n_ions as f64;
    Ok(BrightProbability { per_ion, mean })
}

/// Mean bright probability versus beat frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTrace {
    pub mu_over_2pi: Vec<f64>,
    pub p_up_mean: Vec<f64>,
    /// `per_ion[k][j]` at grid point `k`, when requested.
    pub per_ion: Option<Vec<Vec<f64>>>,
}

/// Pure background level `1/2 (1 - exp(-Gamma T_odf))`.
pub fn background_probability(gamma: f64, total_odf_time: f64) -> f64 {
    0.5 * (1.0 - (-gamma * total_odf_time).exp())
}

/// Per-ion exponent `sum_m |alpha_jm|^2 (2 nbar_m + 1)` at one beat frequency.
pub(crate) fn thermal_exponents(
    drive: &DriveConfig,
    spectrum: &ModeSpectrum,
    weights: &[f64],
    mu: f64,
) -> Vec<f64> {
    let n = spectrum.n();
    let w_m: Vec<f64> = spectrum
        .omega
        .iter()
        .zip(weights)
        .map(|(&w, &wt)| {
            let u = match drive.sequence {
                PulseSequence::Ramsey { tau } => unit_displacement(mu, w, tau, 0.0),
                PulseSequence::SpinEcho { tau, t_pi } => echo_unit(mu, w, tau, t_pi),
            };
            let pre = ground_state_length(spectrum.mass, w) / HBAR;
            u.norm_sqr() * pre * pre * wt
        })
        .collect();
    (0..n)
        .map(|j| {
            let f = drive.force.at(j);
            let s: f64 = (0..n).map(|m| spectrum.b(j, m).powi(2) * w_m[m]).sum();
            f * f * s
        })
        .collect()
}

/// Evaluate the bright probability at every grid frequency (Hz). Points are
/// computed in parallel; the output follows the grid order.
pub fn sweep_spectrum(
    drive: &DriveConfig,
    spectrum: &ModeSpectrum,
    thermal: &ThermalState,
    mu_grid_hz: &[f64],
    keep_per_ion: bool,
) -> Result<SpectrumTrace, DynamicsError> {
    check_drive(drive, spectrum)?;
    if thermal.nbar.len() != spectrum.n() {
        return Err(DynamicsError::DimensionMismatch(format!(
            "{} occupations for {} modes",
            thermal.nbar.len(),
            spectrum.n()
        )));
    }
    if mu_grid_hz.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(DynamicsError::InvalidInput("frequency grid must be sorted".into()));
    }
    let weights: Vec<f64> = thermal.nbar.iter().map(|n| 2.0 * n + 1.0).collect();
    let background = (-drive.gamma * drive.sequence.odf_time()).exp();
    let points: Vec<Vec<f64>> = mu_grid_hz
        .par_iter()
        .map(|&f| {
            thermal_exponents(drive, spectrum, &weights, hz_to_angular(f))
                .into_iter()
                .map(|s| bright_from_exponent(s, background))
                .collect()
        })
        .collect();
    let n = spectrum.n() as f64;
    let p_up_mean = points.iter().map(|p| p.iter().sum::<f64>() / n).collect();
    Ok(SpectrumTrace {
        mu_over_2pi: mu_grid_hz.to_vec(),
        p_up_mean,
        per_ion: keep_per_ion.then_some(points),
    })
}

/// Sampled `alpha_jm(t)` path through the sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Elapsed time since the start of the first arm [s].
    pub t: Vec<f64>,
    pub alpha: Vec<Complex64>,
}

/// Phase-space path of one ion's contribution to `mode`, `n_samples` points
/// per arm. The second echo arm starts from the end of the first.
pub fn phase_space_trajectory(
    drive: &DriveConfig,
    spectrum: &ModeSpectrum,
    mode: usize,
    ion: usize,
    n_samples: usize,
) -> Result<Trajectory, DynamicsError> {
    check_drive(drive, spectrum)?;
    if mode >= spectrum.n() || ion >= spectrum.n() {
        return Err(DynamicsError::InvalidInput(format!("mode {mode} or ion {ion} out of range")));
    }
    if n_samples < 2 {
        return Err(DynamicsError::InvalidInput("need at least two samples per arm".into()));
    }
    let w = spectrum.omega[mode];
    let scale = drive.force.at(ion) * spectrum.b(ion, mode) * ground_state_length(spectrum.mass, w) / HBAR;
    let tau = drive.sequence.tau();
    let times = |k: usize| tau * k as f64 / (n_samples - 1) as f64;
    let mut t = Vec::new();
    let mut alpha = Vec::new();
    for k in 0..n_samples {
        t.push(times(k));
        alpha.push(unit_displacement(drive.mu_r, w, times(k), 0.0) * scale);
    }
    if let PulseSequence::SpinEcho { t_pi, .. } = drive.sequence {
        let end = alpha[n_samples - 1];
        let phi = (tau + t_pi) * (drive.mu_r - w);
        for k in 0..n_samples {
            t.push(tau + t_pi + times(k));
            alpha.push(end - unit_displacement(drive.mu_r, w, times(k), phi) * scale);
        }
    }
    Ok(Trajectory { t, alpha })
}

/// How a per-spin displacement is turned into an ion excursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcursionConvention {
    /// RMS over the uniform spin superposition: mode amplitude
    /// `sqrt(sum_j |alpha_jm|^2)`, ion excursion scaled by `rms_j |b_jm|`.
    /// For the COM mode this is `2 z01 |alpha_j1|`.
    SuperpositionRms,
    /// All spins aligned to add coherently: amplitude `sum_j |alpha_jm|`,
    /// ion excursion scaled by `max_j |b_jm|`. For the COM mode this is
    /// `2 z01 sqrt(N) |alpha_j1|`.
    SpinAligned,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excursion {
    pub meters: f64,
    pub convention: ExcursionConvention,
}

/// Ion displacement amplitude [m] associated with the displacement of `mode`.
pub fn mean_excursion(
    field: &DisplacementField,
    spectrum: &ModeSpectrum,
    mode: usize,
    convention: ExcursionConvention,
) -> Result<Excursion, DynamicsError> {
    let n = spectrum.n();
    if mode >= n || field.alpha.shape() != (n, n) {
        return Err(DynamicsError::DimensionMismatch(format!("mode {mode} of a {n}-mode spectrum")));
    }
    let z0 = ground_state_length(spectrum.mass, spectrum.omega[mode]);
    let column = field.alpha.column(mode);
    let meters = match convention {
        ExcursionConvention::SuperpositionRms => {
            let amp = column.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            2.0 * z0 * amp / (n as f64).sqrt()
        }
        ExcursionConvention::SpinAligned => {
            let amp: f64 = column.iter().map(|a| a.norm()).sum();
            let bmax = (0..n).map(|j| spectrum.b(j, mode).abs()).fold(0.0, f64::max);
            2.0 * z0 * amp * bmax
        }
    };
    Ok(Excursion { meters, convention })
}

/// `sin(x t) / x`, continuous at `x = 0`.
fn sin_over(x: f64, t: f64) -> f64 {
    if x == 0.0 {
        t
    } else {
        (x * t).sin() / x
    }
}

/// Braced four-term expression divided by `mu^2 - w^2` [s^2].
fn coupling_kernel(mu: f64, w: f64, t: f64) -> f64 {
    if (mu - w).abs() >= RESONANCE_SWITCH * w {
        coupling_closed(mu, w, t)
    } else {
        coupling_series(mu, w, t)
    }
}

fn coupling_closed(mu: f64, w: f64, t: f64) -> f64 {
    let delta = mu - w;
    let braces = w * sin_over(delta, t) + w * sin_over(mu + w, t) - w * sin_over(2.0 * mu, t) - w * t;
    braces / (delta * (mu + w))
}

fn coupling_series(mu: f64, w: f64, t: f64) -> f64 {
    let delta = mu - w;
    // The two outer terms cancel to O(delta^2); the middle pair vanishes at
    // resonance with slope `-t cos(2wt)/2 + sin(2wt)/(4w)`.
    let slope = -0.5 * t * (2.0 * w * t).cos() + (2.0 * w * t).sin() / (4.0 * w);
    (slope - w * delta * t.powi(3) / 6.0) / (2.0 * w + delta)
}

/// Pairwise spin-spin coupling `J_jk(t)` [rad] generated by the drive.
pub fn spin_spin_coupling(drive: &DriveConfig, spectrum: &ModeSpectrum, t: f64) -> Result<DMatrix<f64>, DynamicsError> {
    check_drive(drive, spectrum)?;
    if !(t > 0.0) {
        return Err(DynamicsError::InvalidInput(format!("time must be positive, got {t}")));
    }
    let n = spectrum.n();
    let per_mode: Vec<f64> = spectrum
        .omega
        .iter()
        .map(|&w| ground_state_length(spectrum.mass, w).powi(2) * coupling_kernel(drive.mu_r, w, t))
        .collect();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let s: f64 = (0..n).map(|m| spectrum.b(a, m) * spectrum.b(b, m) * per_mode[m]).sum();
            let v = drive.force.at(a) * drive.force.at(b) / (2.0 * HBAR * HBAR) * s;
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
    }
    Ok(j)
}

/// Secular COM coupling rate `J = F^2 z01^2 w1 / (2 hbar^2 N (mu^2 - w1^2))`
/// bounding `|J(t)| <~ J t` near the COM resonance.
pub fn com_coupling_rate(force: f64, z01: f64, n_ions: usize, mu: f64, omega_1: f64) -> f64 {
    force * force * z01 * z01 * omega_1 / (2.0 * HBAR * HBAR * n_ions as f64 * (mu - omega_1) * (mu + omega_1))
}

/// Spin-spin to spin-motion signal ratio and whether it is large enough to
/// question neglecting the spin-spin term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityEstimate {
    pub ratio: f64,
    pub warning: bool,
}

/// Ratio above which [`ValidityEstimate::warning`] is set.
pub const VALIDITY_WARNING: f64 = 0.1;

/// `P_SS / P_SM ~ F^2 z01^2 t^2 / (4 hbar^2 (2 nbar + 1))`.
pub fn validity_ratio(force: f64, z01: f64, nbar: f64, t: f64) -> ValidityEstimate {
    let ratio = force * force * z01 * z01 * t * t / (4.0 * HBAR * HBAR * (2.0 * nbar + 1.0));
    ValidityEstimate { ratio, warning: ratio > VALIDITY_WARNING }
}
