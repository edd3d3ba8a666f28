//! Two-beam optical dipole force (ODF): beam geometry, polarization algebra
//! and drive configuration.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use thiserror::Error;

use crate::constants::HBAR;

#[derive(Debug, Error, PartialEq)]
pub enum OdfError {
    #[error("invalid beam geometry: {0}")]
    InvalidGeometry(String),
    #[error("no AC Stark shift null: (A_up - A_dn) = {da:e} and (B_up - B_dn) = {db:e} do not have opposite signs")]
    NoNull { da: f64, db: f64 },
    #[error("invalid drive: {0}")]
    InvalidDrive(String),
}

/// Crossing-beam geometry. Lengths in meters, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamGeometry {
    pub wavelength: f64,
    /// Full crossing angle between the beams.
    pub theta_r: f64,
    pub waist_z: f64,
    pub waist_x: f64,
    /// Wave-front tilt relative to the crystal plane; carried for reporting.
    pub misalignment_err: f64,
}

impl BeamGeometry {
    pub fn new(wavelength: f64, theta_r: f64) -> Result<Self, OdfError> {
        let g = BeamGeometry { wavelength, theta_r, waist_z: 100e-6, waist_x: 1e-3, misalignment_err: 0.0 };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), OdfError> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(OdfError::InvalidGeometry("wavelength must be positive".into()));
        }
        if !(self.theta_r > 0.0 && self.theta_r < FRAC_PI_2) {
            return Err(OdfError::InvalidGeometry("crossing angle must lie in (0, 90) degrees".into()));
        }
        if !(self.waist_z > 0.0 && self.waist_x > 0.0) {
            return Err(OdfError::InvalidGeometry("beam waists must be positive".into()));
        }
        Ok(())
    }
}

/// `|k_U - k_L| = 2 k sin(theta_R / 2)` [1/m].
///
/// Only the wavelength and crossing angle enter, so this is defined for any
/// angle in `[0, pi]`, including the counter-propagating limit.
pub fn effective_wavevector(geom: &BeamGeometry) -> f64 {
    2.0 * (TAU / geom.wavelength) * (0.5 * geom.theta_r).sin()
}

/// Period of the moving optical lattice, `2 pi / dk` [m].
pub fn lattice_wavelength(geom: &BeamGeometry) -> f64 {
    TAU / effective_wavevector(geom)
}

/// Single-beam AC Stark shifts [rad/s] of the two qubit states for pi- (`a_*`)
/// and sigma-polarized (`b_*`) light.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarkCoefficients {
    pub a_up: f64,
    pub a_dn: f64,
    pub b_up: f64,
    pub b_dn: f64,
}

impl StarkCoefficients {
    /// Qubit-transition shift from one beam at polarization angle `phi_p`.
    pub fn transition_shift(&self, phi_p: f64) -> f64 {
        let (s, c) = phi_p.sin_cos();
        (self.a_up - self.a_dn) * c * c + (self.b_up - self.b_dn) * s * s
    }
}

/// Polarization angle in `(0, pi/2)` at which a single beam leaves the qubit
/// transition unshifted: `tan^2 phi_p = -(A_up - A_dn) / (B_up - B_dn)`.
pub fn acss_null_angle(c: &StarkCoefficients) -> Result<f64, OdfError> {
    let da = c.a_up - c.a_dn;
    let db = c.b_up - c.b_dn;
    if !(da * db < 0.0) {
        return Err(OdfError::NoNull { da, db });
    }
    // atan2 keeps the ratio well conditioned when either difference is tiny.
    Ok(da.abs().sqrt().atan2(db.abs().sqrt()))
}

/// Peak state-dependent forces from the interfering beams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateForces {
    /// Force on `|up>` [N].
    pub f_up: f64,
    /// Force on `|down>` [N].
    pub f_dn: f64,
    /// `|F_up + F_dn| / |F_up| < 1e-6`.
    pub antisymmetric: bool,
}

/// `F_s = 2 dk hbar (A_s cos^2 phi_p - B_s sin^2 phi_p)`.
pub fn state_dependent_forces(c: &StarkCoefficients, phi_p: f64, dk: f64) -> StateForces {
    let (s, co) = phi_p.sin_cos();
    let f = |a: f64, b: f64| 2.0 * dk * HBAR * (a * co * co - b * s * s);
    let f_up = f(c.a_up, c.b_up);
    let f_dn = f(c.a_dn, c.b_dn);
    let antisymmetric = f_up != 0.0 && (f_up + f_dn).abs() / f_up.abs() < 1e-6;
    StateForces { f_up, f_dn, antisymmetric }
}

/// Calibrated force at the standard operating point (313.133 nm, 4.8 degree
/// crossing, Stark-null polarizations): 1.5e-23 N per W/cm^2.
pub const FORCE_PER_INTENSITY: f64 = 1.5e-23;

/// Force [N] from the single-beam intensity `I_R` [W/cm^2].
pub fn force_from_intensity(intensity_w_cm2: f64) -> Result<f64, OdfError> {
    if !(intensity_w_cm2 >= 0.0 && intensity_w_cm2.is_finite()) {
        return Err(OdfError::InvalidDrive(format!("intensity must be non-negative, got {intensity_w_cm2}")));
    }
    Ok(FORCE_PER_INTENSITY * intensity_w_cm2)
}

/// Per-ion force amplitude along z.
#[derive(Debug, Clone, PartialEq)]
pub enum ForceProfile {
    Uniform(f64),
    PerIon(Vec<f64>),
}

impl ForceProfile {
    pub fn at(&self, j: usize) -> f64 {
        match self {
            ForceProfile::Uniform(f) => *f,
            ForceProfile::PerIon(v) => v[j],
        }
    }

    pub fn scaled(&self, factor: f64) -> ForceProfile {
        match self {
            ForceProfile::Uniform(f) => ForceProfile::Uniform(f * factor),
            ForceProfile::PerIon(v) => ForceProfile::PerIon(v.iter().map(|f| f * factor).collect()),
        }
    }

    /// `(max - min) / mean`, zero for a uniform profile.
    pub fn relative_spread(&self) -> f64 {
        match self {
            ForceProfile::Uniform(_) => 0.0,
            ForceProfile::PerIon(v) if v.is_empty() => 0.0,
            ForceProfile::PerIon(v) => {
                let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = v.iter().copied().fold(f64::INFINITY, f64::min);
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                if mean > 0.0 {
                    (max - min) / mean
                } else {
                    0.0
                }
            }
        }
    }
}

/// Pulse sequence in which the ODF is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseSequence {
    /// pi/2 - tau - pi/2, ODF during the single arm.
    Ramsey { tau: f64 },
    /// pi/2 - tau - pi - tau - pi/2, ODF during both arms.
    SpinEcho { tau: f64, t_pi: f64 },
}

impl PulseSequence {
    pub fn tau(&self) -> f64 {
        match *self {
            PulseSequence::Ramsey { tau } | PulseSequence::SpinEcho { tau, .. } => tau,
        }
    }

    /// Total time the ODF beams are on.
    pub fn odf_time(&self) -> f64 {
        match *self {
            PulseSequence::Ramsey { tau } => tau,
            PulseSequence::SpinEcho { tau, .. } => 2.0 * tau,
        }
    }
}

/// Relative force spread above which a drive is flagged as inhomogeneous.
pub const FORCE_SPREAD_LIMIT: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct DriveConfig {
    pub force: ForceProfile,
    /// Beat frequency of the two beams [rad/s].
    pub mu_r: f64,
    /// Spontaneous-emission decoherence rate [1/s].
    pub gamma: f64,
    pub sequence: PulseSequence,
}

impl DriveConfig {
    pub fn validate(&self, n_ions: usize) -> Result<(), OdfError> {
        let bad = |m: String| Err(OdfError::InvalidDrive(m));
        match &self.force {
            ForceProfile::Uniform(f) if !(*f >= 0.0 && f.is_finite()) => {
                return bad(format!("force must be non-negative, got {f}"));
            }
            ForceProfile::PerIon(v) => {
                if v.len() != n_ions {
                    return bad(format!("per-ion force list has {} entries for {n_ions} ions", v.len()));
                }
                if let Some(f) = v.iter().find(|f| !(**f >= 0.0 && f.is_finite())) {
                    return bad(format!("force must be non-negative, got {f}"));
                }
            }
            _ => {}
        }
        if !(self.mu_r.is_finite() && self.mu_r >= 0.0) {
            return bad(format!("beat frequency must be non-negative, got {}", self.mu_r));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("decoherence rate must be non-negative, got {}", self.gamma));
        }
        match self.sequence {
            PulseSequence::Ramsey { tau } | PulseSequence::SpinEcho { tau, .. } if !(tau > 0.0) => {
                bad(format!("arm duration must be positive, got {tau}"))
            }
            PulseSequence::SpinEcho { t_pi, .. } if !(t_pi >= 0.0) => bad(format!("pi-pulse time must be >= 0, got {t_pi}")),
            _ => Ok(()),
        }
    }

    /// Force spread exceeds [`FORCE_SPREAD_LIMIT`].
    pub fn inhomogeneous(&self) -> bool {
        self.force.relative_spread() > FORCE_SPREAD_LIMIT
    }

    pub fn with_mu(&self, mu_r: f64) -> DriveConfig {
        DriveConfig { mu_r, ..self.clone() }
    }
}

/// Degrees to radians, for file boundaries.
pub fn deg(x: f64) -> f64 {
    x * PI / 180.0
}
