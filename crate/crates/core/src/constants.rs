//! Physical constants (CODATA 2018, SI units) and unit helpers.

use std::f64::consts::{PI, TAU};

/// Reduced Planck constant [J s].
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant [J/K].
pub const K_B: f64 = 1.380_649e-23;
/// Elementary charge [C].
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Vacuum permittivity [F/m].
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Coulomb constant 1/(4 pi eps0) [N m^2 / C^2].
pub const COULOMB_K: f64 = 1.0 / (4.0 * PI * EPSILON_0);
/// Atomic mass unit [kg].
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Electron mass in atomic mass units.
const ELECTRON_MASS_U: f64 = 5.485_799_090_65e-4;
/// Mass of a singly ionized 9Be atom [kg].
pub const BE9_ION_MASS: f64 = (9.012_183_065 - ELECTRON_MASS_U) * ATOMIC_MASS_UNIT;

/// Ordinary frequency [Hz] to angular frequency [rad/s].
#[inline]
pub fn hz_to_angular(f_hz: f64) -> f64 {
    TAU * f_hz
}

/// Angular frequency [rad/s] to ordinary frequency [Hz].
#[inline]
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / TAU
}
