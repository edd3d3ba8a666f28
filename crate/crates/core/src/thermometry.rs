//! Mode thermometry: occupation and temperature conversions, background
//! decoherence from off-resonant points, and single-parameter lineshape fits.
//!
//! Occupation and temperature follow `nbar = k_B T / (hbar w)` with no `+1/2`.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{hz_to_angular, HBAR, K_B};
use crate::dynamics::{thermal_exponents, DynamicsError, ThermalState};
use crate::modes::ModeSpectrum;
use crate::odf::{DriveConfig, PulseSequence};

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("data do not span the resonance of mode {mode}: {reason}")]
    InsufficientSpan { mode: usize, reason: String },
    #[error("fit did not converge: {0}")]
    NonConvergence(String),
    #[error("background probability {p_bar} is at or above saturation")]
    UnphysicalBackground { p_bar: f64 },
    #[error(transparent)]
    Model(#[from] DynamicsError),
}

/// `T = nbar hbar w / k_B`.
pub fn occupation_to_temperature(nbar: f64, omega: f64) -> f64 {
    nbar * HBAR * omega / K_B
}

/// `nbar = k_B T / (hbar w)`.
pub fn temperature_to_occupation(t_kelvin: f64, omega: f64) -> f64 {
    t_kelvin * K_B / (HBAR * omega)
}

/// Side information attached to measured data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservedMetadata {
    #[serde(default)]
    pub n_ions: Option<usize>,
    #[serde(default)]
    pub n_ions_uncertainty: Option<f64>,
    #[serde(default)]
    pub tau_s: Option<f64>,
    #[serde(default)]
    pub t_pi_s: Option<f64>,
    /// Full beam crossing angle [rad].
    #[serde(default)]
    pub theta_r_rad: Option<f64>,
    /// Relative uncertainty of the crossing angle, e.g. `0.05`.
    #[serde(default)]
    pub theta_r_rel_uncertainty: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPoint {
    pub mu_over_2pi: f64,
    pub p_up: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservedSpectrum {
    pub points: Vec<DataPoint>,
    pub metadata: ObservedMetadata,
}

impl ObservedSpectrum {
    pub fn validate(&self) -> Result<(), FitError> {
        for (k, p) in self.points.iter().enumerate() {
            if !p.mu_over_2pi.is_finite() {
                return Err(FitError::InvalidData(format!("point {k}: non-finite frequency")));
            }
            if !(0.0..=1.0).contains(&p.p_up) {
                return Err(FitError::InvalidData(format!("point {k}: probability {} outside [0, 1]", p.p_up)));
            }
            if !(p.sigma > 0.0 && p.sigma.is_finite()) {
                return Err(FitError::InvalidData(format!("point {k}: sigma {} must be positive", p.sigma)));
            }
        }
        Ok(())
    }

    /// Sort points by frequency.
    pub fn sorted(mut self) -> Self {
        self.points.sort_by(|a, b| a.mu_over_2pi.total_cmp(&b.mu_over_2pi));
        self
    }
}

/// Minimum detuning, in units of `1/tau` (Hz), for a point to count as
/// off-resonant in [`fit_background_gamma`].
pub const BACKGROUND_MIN_DETUNING: f64 = 5.0;

/// `Gamma = -ln(1 - 2 P) / T_odf`.
pub fn gamma_from_background(p_bar: f64, total_odf_time: f64) -> Result<f64, FitError> {
    if !(total_odf_time > 0.0) {
        return Err(FitError::InvalidData(format!("ODF time must be positive, got {total_odf_time}")));
    }
    if p_bar >= 0.5 {
        return Err(FitError::UnphysicalBackground { p_bar });
    }
    if p_bar <= 0.0 {
        return Ok(0.0);
    }
    Ok(-(1.0 - 2.0 * p_bar).ln() / total_odf_time)
}

/// Background decoherence rate from points far from every mode.
pub fn fit_background_gamma(
    data: &ObservedSpectrum,
    spectrum: &ModeSpectrum,
    sequence: &PulseSequence,
) -> Result<f64, FitError> {
    data.validate()?;
    if data.points.len() < 3 {
        return Err(FitError::InvalidData(format!("need at least 3 off-resonant points, got {}", data.points.len())));
    }
    let tau = sequence.tau();
    for p in &data.points {
        let nearest = spectrum
            .frequencies_hz()
            .iter()
            .map(|f| (p.mu_over_2pi - f).abs())
            .fold(f64::INFINITY, f64::min);
        if nearest * tau < BACKGROUND_MIN_DETUNING {
            return Err(FitError::InvalidData(format!(
                "point at {} Hz lies within {} linewidths of a mode",
                p.mu_over_2pi, BACKGROUND_MIN_DETUNING
            )));
        }
    }
    let (num, den) = data.points.iter().fold((0.0, 0.0), |(n, d), p| {
        let w = 1.0 / (p.sigma * p.sigma);
        (n + w * p.p_up, d + w)
    });
    gamma_from_background(num / den, sequence.odf_time())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// Best fit sits at `nbar = 0`: the data show no mode feature.
    InsufficientSignal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub target_mode: usize,
    pub omega_target: f64,
    pub nbar: f64,
    /// Total one-sigma error, statistical and systematic in quadrature.
    pub nbar_err: f64,
    pub nbar_stat_err: f64,
    pub nbar_sys_err: Option<f64>,
    pub temperature_k: f64,
    pub temperature_err_k: f64,
    pub gamma_used: f64,
    pub chi2_reduced: f64,
    pub systematic_note: String,
    pub flag: Option<FitFlag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Override for the background rate; `None` uses the drive's value.
    pub gamma: Option<f64>,
    pub nbar_max: f64,
    pub rel_tol: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { gamma: None, nbar_max: 1e6, rel_tol: 1e-12, max_iterations: 500 }
    }
}

/// Lineshape linear in `2 nbar + 1` of the target mode inside the exponent:
/// `P_j = 1/2 [1 - bg exp(-2 (a_j + c_j (2 nbar + 1)))]`.
struct Linearized {
    background: f64,
    /// Per point, per ion: exponent from all other modes.
    base: Vec<Vec<f64>>,
    /// Per point, per ion: coefficient of `2 nbar + 1`.
    coef: Vec<Vec<f64>>,
    p: Vec<f64>,
    inv_var: Vec<f64>,
}

impl Linearized {
    fn build(
        data: &ObservedSpectrum,
        drive: &DriveConfig,
        spectrum: &ModeSpectrum,
        thermal: &ThermalState,
        mode: usize,
        gamma: f64,
    ) -> Self {
        let mut base_w: Vec<f64> = thermal.nbar.iter().map(|n| 2.0 * n + 1.0).collect();
        base_w[mode] = 0.0;
        let mut unit_w = vec![0.0; spectrum.n()];
        unit_w[mode] = 1.0;
        let mut base = Vec::with_capacity(data.points.len());
        let mut coef = Vec::with_capacity(data.points.len());
        for pt in &data.points {
            let mu = hz_to_angular(pt.mu_over_2pi);
            base.push(thermal_exponents(drive, spectrum, &base_w, mu));
            coef.push(thermal_exponents(drive, spectrum, &unit_w, mu));
        }
        Linearized {
            background: (-gamma * drive.sequence.odf_time()).exp(),
            base,
            coef,
            p: data.points.iter().map(|p| p.p_up).collect(),
            inv_var: data.points.iter().map(|p| 1.0 / (p.sigma * p.sigma)).collect(),
        }
    }

    /// Model value and its derivative in `nbar` at point `k`, with the
    /// exponent scaled by `s2` (force scale squared).
    fn model(&self, k: usize, nbar: f64, s2: f64) -> (f64, f64) {
        let x = 2.0 * nbar + 1.0;
        let n = self.base[k].len() as f64;
        let (mut p, mut dp) = (0.0, 0.0);
        for (a, c) in self.base[k].iter().zip(&self.coef[k]) {
            let e = self.background * (-2.0 * s2 * (a + c * x)).exp();
            p += 0.5 * (1.0 - e);
            dp += 2.0 * s2 * c * e;
        }
        (p / n, dp / n)
    }

    fn chi2(&self, nbar: f64, s2: f64) -> f64 {
        (0..self.p.len())
            .map(|k| {
                let r = self.p[k] - self.model(k, nbar, s2).0;
                r * r * self.inv_var[k]
            })
            .sum()
    }

    /// Inverse curvature from the Gauss-Newton approximation, `1 / sum J^2 / sigma^2`.
    fn variance(&self, nbar: f64, s2: f64) -> f64 {
        let info: f64 = (0..self.p.len())
            .map(|k| {
                let d = self.model(k, nbar, s2).1;
                d * d * self.inv_var[k]
            })
            .sum();
        1.0 / info
    }

    fn gauss_newton_step(&self, nbar: f64, s2: f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..self.p.len() {
            let (m, d) = self.model(k, nbar, s2);
            num += (self.p[k] - m) * d * self.inv_var[k];
            den += d * d * self.inv_var[k];
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// Bounded minimisation of chi^2 over `[0, nbar_max]`.
    fn minimize(&self, s2: f64, opts: &FitOptions) -> Result<f64, FitError> {
        let mut grid = vec![0.0];
        let decades = opts.nbar_max.log10() + 3.0;
        let steps = (decades * 10.0).ceil() as usize;
        grid.extend((0..=steps).map(|i| 1e-3 * 10f64.powf(i as f64 / 10.0)).filter(|v| *v < opts.nbar_max));
        grid.push(opts.nbar_max);
        let values: Vec<f64> = grid.iter().map(|&n| self.chi2(n, s2)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonConvergence("non-finite residuals".into()));
        }
        let best = (0..grid.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
        if best == grid.len() - 1 {
            return Err(FitError::NonConvergence(format!("best fit at the upper bound {}", opts.nbar_max)));
        }
        let lo = grid[best.saturating_sub(1)];
        let hi = grid[best + 1];
        let mut x = golden_section(|n| self.chi2(n, s2), lo, hi, opts.rel_tol, opts.max_iterations)
            .ok_or_else(|| FitError::NonConvergence("golden section did not reach tolerance".into()))?;
        // Polish: the bracket search is limited by chi^2 flatness near the minimum.
        for _ in 0..5 {
            let trial = (x + self.gauss_newton_step(x, s2)).clamp(0.0, opts.nbar_max);
            if self.chi2(trial, s2) <= self.chi2(x, s2) {
                x = trial;
            } else {
                break;
            }
        }
        if self.chi2(0.0, s2) <= self.chi2(x, s2) {
            x = 0.0;
        }
        Ok(x)
    }
}

/// Absolute bracket width [occupation] at which the search stops near zero.
const GOLDEN_ABS_TOL: f64 = 1e-12;

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64, max_iter: usize) -> Option<f64> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..max_iter {
        if (b - a) <= rel_tol * (a.abs() + b.abs()) + GOLDEN_ABS_TOL {
            return Some(0.5 * (a + b));
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    None
}

/// Below this occupation a fit is treated as sitting on the `nbar = 0` boundary.
pub const BOUNDARY_NBAR: f64 = 1e-6;

/// Fit the occupation of `target_mode` with every other mode held at
/// `thermal`. The crossing-angle systematic is added when the metadata carry
/// both the angle and its relative uncertainty.
pub fn fit_occupation(
    data: &ObservedSpectrum,
    spectrum: &ModeSpectrum,
    drive: &DriveConfig,
    thermal: &ThermalState,
    target_mode: usize,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    data.validate()?;
    if target_mode >= spectrum.n() {
        return Err(FitError::InvalidData(format!("mode {target_mode} out of range")));
    }
    if thermal.nbar.len() != spectrum.n() {
        return Err(FitError::InvalidData(format!(
            "{} occupations for {} modes",
            thermal.nbar.len(),
            spectrum.n()
        )));
    }
    if !spectrum.is_stable() {
        return Err(DynamicsError::UnstableSpectrum(spectrum.unstable.clone()).into());
    }
    drive.validate(spectrum.n()).map_err(|e| FitError::InvalidData(e.to_string()))?;
    let omega = spectrum.omega[target_mode];
    let tau = drive.sequence.tau();
    let f_mode = omega / std::f64::consts::TAU;
    let detunings: Vec<f64> = data.points.iter().map(|p| (p.mu_over_2pi - f_mode).abs() * tau).collect();
    if !detunings.iter().any(|d| *d < 0.5) {
        return Err(FitError::InsufficientSpan {
            mode: target_mode,
            reason: "no point within half a linewidth".into(),
        });
    }
    if !detunings.iter().any(|d| *d > 1.0) {
        return Err(FitError::InsufficientSpan { mode: target_mode, reason: "no point beyond one linewidth".into() });
    }
    let gamma = opts.gamma.unwrap_or(drive.gamma);
    if !(gamma >= 0.0) {
        return Err(FitError::InvalidData(format!("background rate must be non-negative, got {gamma}")));
    }

    // Sums run in a fixed point order so the result does not depend on input order.
    let mut ordered = data.clone();
    ordered.points.sort_by(|a, b| {
        a.mu_over_2pi.total_cmp(&b.mu_over_2pi).then(a.p_up.total_cmp(&b.p_up)).then(a.sigma.total_cmp(&b.sigma))
    });
    let model = Linearized::build(&ordered, drive, spectrum, thermal, target_mode, gamma);
    let nbar = model.minimize(1.0, opts)?;
    let at_boundary = nbar < BOUNDARY_NBAR;
    let nbar_stat_err = model.variance(nbar, 1.0).sqrt();
    let dof = data.points.len().saturating_sub(1).max(1);
    let chi2_reduced = model.chi2(nbar, 1.0) / dof as f64;

    let meta = &data.metadata;
    let (nbar_sys_err, systematic_note) = match (meta.theta_r_rad, meta.theta_r_rel_uncertainty) {
        (Some(theta), Some(u)) if theta > 0.0 && u > 0.0 && !at_boundary => {
            let base = (theta / 2.0).sin();
            let mut dev: f64 = 0.0;
            for sign in [-1.0, 1.0] {
                let s = (theta * (1.0 + sign * u) / 2.0).sin() / base;
                let refit = model.minimize(s * s, opts)?;
                dev = dev.max((refit - nbar).abs());
            }
            (Some(dev), format!("crossing angle {:.4} rad +/- {:.1}% refit, max shift {dev:.4}", theta, 100.0 * u))
        }
        _ => (None, "no crossing-angle uncertainty supplied".to_string()),
    };
    let nbar_err = (nbar_stat_err.powi(2) + nbar_sys_err.unwrap_or(0.0).powi(2)).sqrt();
    Ok(FitResult {
        target_mode,
        omega_target: omega,
        nbar: if at_boundary { 0.0 } else { nbar },
        nbar_err,
        nbar_stat_err,
        nbar_sys_err,
        temperature_k: occupation_to_temperature(if at_boundary { 0.0 } else { nbar }, omega),
        temperature_err_k: occupation_to_temperature(nbar_err, omega),
        gamma_used: gamma,
        chi2_reduced,
        systematic_note,
        flag: at_boundary.then_some(FitFlag::InsufficientSignal),
    })
}

/// Forward-model data on `mu_hz`, optionally with Gaussian noise of standard
/// deviation `sigma`, clamped to `[0, 1]`. Each point carries `sigma`.
pub fn synthetic_spectrum<R: Rng + ?Sized>(
    drive: &DriveConfig,
    spectrum: &ModeSpectrum,
    thermal: &ThermalState,
    mu_hz: &[f64],
    sigma: f64,
    noise: Option<&mut R>,
) -> Result<ObservedSpectrum, FitError> {
    if !(sigma > 0.0) {
        return Err(FitError::InvalidData(format!("sigma must be positive, got {sigma}")));
    }
    let trace = crate::dynamics::sweep_spectrum(drive, spectrum, thermal, mu_hz, false)?;
    let mut p = trace.p_up_mean;
    if let Some(rng) = noise {
        let normal = Normal::new(0.0, sigma).map_err(|e| FitError::InvalidData(e.to_string()))?;
        for v in p.iter_mut() {
            *v = (*v + normal.sample(rng)).clamp(0.0, 1.0);
        }
    }
    Ok(ObservedSpectrum {
        points: mu_hz
            .iter()
            .zip(p)
            .map(|(&mu_over_2pi, p_up)| DataPoint { mu_over_2pi, p_up, sigma })
            .collect(),
        metadata: ObservedMetadata {
            n_ions: Some(spectrum.n()),
            tau_s: Some(drive.sequence.tau()),
            t_pi_s: match drive.sequence {
                PulseSequence::SpinEcho { t_pi, .. } => Some(t_pi),
                PulseSequence::Ramsey { .. } => None,
            },
            ..Default::default()
        },
    })
}

/// [`synthetic_spectrum`] with noise drawn from a ChaCha8 stream seeded by `seed`.
pub fn synthetic_spectrum_seeded(
    drive: &DriveConfig,
    spectrum: &ModeSpectrum,
    thermal: &ThermalState,
    mu_hz: &[f64],
    sigma: f64,
    seed: u64,
) -> Result<ObservedSpectrum, FitError> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    synthetic_spectrum(drive, spectrum, thermal, mu_hz, sigma, Some(&mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::BE9_ION_MASS;
    use crate::odf::ForceProfile;
    use nalgebra::DMatrix;
    use std::f64::consts::TAU;

    const W1: f64 = TAU * 795e3;

    #[test]
    fn conversions() {
        let t = occupation_to_temperature(60.0, W1);
        assert!((t - 2.289e-3).abs() < 1e-6, "{t}");
        let n = temperature_to_occupation(0.43e-3, W1);
        assert!((n - 11.27).abs() < 0.01, "{n}");
        assert_eq!(occupation_to_temperature(0.0, W1), 0.0);
        assert!((temperature_to_occupation(t, W1) - 60.0).abs() < 1e-12);
    }

    #[test]
    fn background_rate() {
        assert_eq!(gamma_from_background(0.0, 1e-3).unwrap(), 0.0);
        let g = gamma_from_background(0.1, 1e-3).unwrap();
        assert!((g - 223.1).abs() < 0.1, "{g}");
        assert_eq!(gamma_from_background(0.5, 1e-3), Err(FitError::UnphysicalBackground { p_bar: 0.5 }));
    }

    fn single_mode() -> ModeSpectrum {
        ModeSpectrum::from_parts(vec![W1], DMatrix::from_element(1, 1, 1.0), W1, BE9_ION_MASS, String::new()).unwrap()
    }

    fn drive() -> DriveConfig {
        DriveConfig {
            force: ForceProfile::Uniform(1.5e-23),
            mu_r: W1,
            gamma: 223.0,
            sequence: PulseSequence::SpinEcho { tau: 500e-6, t_pi: 65e-6 },
        }
    }

    fn grid() -> Vec<f64> {
        (-40..=40).map(|k| 795e3 + k as f64 * 0.1 / 500e-6).collect()
    }

    #[test]
    fn off_resonant_background() {
        let s = single_mode();
        let far: Vec<f64> = vec![700e3, 720e3, 900e3];
        // Weak force so that off-resonant displacement is negligible.
        let d = DriveConfig { force: ForceProfile::Uniform(1e-27), ..drive() };
        let data =
            synthetic_spectrum::<rand_chacha::ChaCha8Rng>(&d, &s, &ThermalState::new(vec![60.0]).unwrap(), &far, 0.02, None)
                .unwrap();
        let g = fit_background_gamma(&data, &s, &d.sequence).unwrap();
        assert!((g - 223.0).abs() < 1e-3, "{g}");
        let near = synthetic_spectrum::<rand_chacha::ChaCha8Rng>(
            &d,
            &s,
            &ThermalState::new(vec![60.0]).unwrap(),
            &[700e3, 795e3, 900e3],
            0.02,
            None,
        )
        .unwrap();
        assert!(fit_background_gamma(&near, &s, &d.sequence).is_err());
    }

    #[test]
    fn noiseless_round_trip_single_mode() {
        let s = single_mode();
        let d = drive();
        for nbar in [0.5, 10.0, 60.0, 300.0] {
            let th = ThermalState::new(vec![nbar]).unwrap();
            let data = synthetic_spectrum::<rand_chacha::ChaCha8Rng>(&d, &s, &th, &grid(), 0.02, None).unwrap();
            let fit = fit_occupation(&data, &s, &d, &th, 0, &FitOptions::default()).unwrap();
            assert!((fit.nbar - nbar).abs() / nbar < 1e-6, "{nbar}: {}", fit.nbar);
            assert!(fit.flag.is_none());
        }
    }

    #[test]
    fn flat_background_hits_boundary() {
        let s = single_mode();
        let d = drive();
        let bg = 0.5 * (1.0 - (-d.gamma * d.sequence.odf_time()).exp());
        let data = ObservedSpectrum {
            points: grid().into_iter().map(|mu| DataPoint { mu_over_2pi: mu, p_up: bg, sigma: 0.02 }).collect(),
            metadata: Default::default(),
        };
        let fit = fit_occupation(&data, &s, &d, &ThermalState::new(vec![10.0]).unwrap(), 0, &FitOptions::default()).unwrap();
        assert_eq!(fit.flag, Some(FitFlag::InsufficientSignal));
        assert_eq!(fit.nbar, 0.0);
    }

    #[test]
    fn span_is_checked() {
        let s = single_mode();
        let d = drive();
        let th = ThermalState::new(vec![10.0]).unwrap();
        let far: Vec<f64> = (0..10).map(|k| 800e3 + 100.0 * k as f64).collect();
        let data = synthetic_spectrum::<rand_chacha::ChaCha8Rng>(&d, &s, &th, &far, 0.02, None).unwrap();
        assert!(matches!(
            fit_occupation(&data, &s, &d, &th, 0, &FitOptions::default()),
            Err(FitError::InsufficientSpan { .. })
        ));
        let close: Vec<f64> = (0..10).map(|k| 795e3 + 50.0 * k as f64).collect();
        let data = synthetic_spectrum::<rand_chacha::ChaCha8Rng>(&d, &s, &th, &close, 0.02, None).unwrap();
        assert!(matches!(
            fit_occupation(&data, &s, &d, &th, 0, &FitOptions::default()),
            Err(FitError::InsufficientSpan { .. })
        ));
    }

    #[test]
    fn systematic_added_with_metadata() {
        let s = single_mode();
        let d = drive();
        let th = ThermalState::new(vec![60.0]).unwrap();
        let mut data = synthetic_spectrum::<rand_chacha::ChaCha8Rng>(&d, &s, &th, &grid(), 0.02, None).unwrap();
        data.metadata.theta_r_rad = Some(4.8f64.to_radians());
        data.metadata.theta_r_rel_uncertainty = Some(0.05);
        let fit = fit_occupation(&data, &s, &d, &th, 0, &FitOptions::default()).unwrap();
        let sys = fit.nbar_sys_err.unwrap();
        // nbar scales roughly as 1/F^2 for fixed dip depth.
        assert!(sys > 0.05 * 60.0 && sys < 0.2 * 60.0, "{sys}");
        assert!(fit.nbar_err >= fit.nbar_stat_err);
    }

    #[test]
    fn invalid_points_rejected() {
        let bad = ObservedSpectrum {
            points: vec![DataPoint { mu_over_2pi: 1.0, p_up: 1.2, sigma: 0.1 }],
            metadata: Default::default(),
        };
        assert!(bad.validate().is_err());
        let bad = ObservedSpectrum {
            points: vec![DataPoint { mu_over_2pi: 1.0, p_up: 0.2, sigma: 0.0 }],
            metadata: Default::default(),
        };
        assert!(bad.validate().is_err());
    }
}
