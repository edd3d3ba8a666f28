#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Mutex, OnceLock};

use drumhead::constants::{hz_to_angular, HBAR};
use drumhead::crystal::{solve_equilibrium, CrystalLattice, SolverOptions, TrapParams};
use drumhead::dynamics::{ground_state_length, sweep_spectrum, ThermalState};
use drumhead::modes::{diagonalize, transverse_stiffness, ModeSpectrum};
use drumhead::odf::{DriveConfig, ForceProfile, PulseSequence};
use num_complex::Complex64;

pub const AXIAL_HZ: f64 = 795e3;
pub const CYCLOTRON_HZ: f64 = 7.6e6;

pub fn trap(rotation_hz: f64) -> TrapParams {
    TrapParams::from_hz(AXIAL_HZ, CYCLOTRON_HZ, rotation_hz, 0.0).unwrap()
}

pub fn solve(n: usize, rotation_hz: f64) -> CrystalLattice {
    let l = solve_equilibrium(&trap(rotation_hz), n, None, &SolverOptions::default()).unwrap();
    assert!(l.converged);
    l
}

/// Lattice and modes, computed once per test binary for each `(n, rotation)`.
pub fn cached(n: usize, rotation_hz: f64) -> &'static (CrystalLattice, ModeSpectrum) {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), &'static (CrystalLattice, ModeSpectrum)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (n, rotation_hz.to_bits());
    if let Some(v) = cache.lock().unwrap().get(&key) {
        return v;
    }
    let lattice = solve(n, rotation_hz);
    let k = transverse_stiffness(&lattice, &lattice.params).unwrap();
    let spectrum = diagonalize(&k).unwrap();
    let entry: &'static _ = Box::leak(Box::new((lattice, spectrum)));
    cache.lock().unwrap().insert(key, entry);
    entry
}

/// Operating point of the COM thermometry measurement.
pub struct ComSetup {
    pub spectrum: &'static ModeSpectrum,
    pub drive: DriveConfig,
    pub thermal: ThermalState,
    pub background: f64,
}

pub const COM_N: usize = 190;
pub const COM_ROTATION_HZ: f64 = 44.7e3;
pub const COM_TAU: f64 = 500e-6;
pub const COM_T_PI: f64 = 65e-6;
pub const COM_NBAR: f64 = 60.0;
pub const DOPPLER_LIMIT_K: f64 = 0.43e-3;
/// Bloch-vector length relative to background at `COM_CAL_DETUNING`.
pub const COM_BLOCH: f64 = 0.8;
/// `delta_1 tau / 2 pi` at which the force is calibrated.
pub const COM_CAL_DETUNING: f64 = 1.4;

/// Detuning from the COM mode, in units of `1/tau`, as a beat frequency [Hz].
pub fn com_beat_hz(spectrum: &ModeSpectrum, x: f64) -> f64 {
    spectrum.omega[0] / TAU + x / COM_TAU
}

/// Fraction of the Bloch vector left after spin-motion entanglement.
pub fn bloch_factor(drive: &DriveConfig, spectrum: &ModeSpectrum, thermal: &ThermalState, mu_hz: f64) -> f64 {
    let p = sweep_spectrum(drive, spectrum, thermal, &[mu_hz], false).unwrap().p_up_mean[0];
    let bg = (-drive.gamma * drive.sequence.odf_time()).exp();
    (1.0 - 2.0 * p) / bg
}

/// Force giving the target Bloch factor at the calibration detuning,
/// by bisection on `log F`.
pub fn calibrate_force(base: &DriveConfig, spectrum: &ModeSpectrum, thermal: &ThermalState) -> f64 {
    let mu = com_beat_hz(spectrum, COM_CAL_DETUNING);
    let at = |f: f64| bloch_factor(&DriveConfig { force: ForceProfile::Uniform(f), ..base.clone() }, spectrum, thermal, mu);
    let (mut lo, mut hi) = (1e-26f64.ln(), 1e-20f64.ln());
    assert!(at(lo.exp()) > COM_BLOCH && at(hi.exp()) < COM_BLOCH);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid.exp()) > COM_BLOCH {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

pub fn com_setup() -> &'static ComSetup {
    static SETUP: OnceLock<ComSetup> = OnceLock::new();
    SETUP.get_or_init(|| {
        let spectrum = &cached(COM_N, COM_ROTATION_HZ).1;
        let background = 0.1;
        let gamma = -(1.0 - 2.0 * background as f64).ln() / (2.0 * COM_TAU);
        let base = DriveConfig {
            force: ForceProfile::Uniform(0.0),
            mu_r: spectrum.omega[0],
            gamma,
            sequence: PulseSequence::SpinEcho { tau: COM_TAU, t_pi: COM_T_PI },
        };
        let thermal = ThermalState::uniform_temperature(spectrum, DOPPLER_LIMIT_K)
            .unwrap()
            .with_mode(0, COM_NBAR)
            .unwrap();
        let f = calibrate_force(&base, spectrum, &thermal);
        ComSetup { spectrum, drive: DriveConfig { force: ForceProfile::Uniform(f), ..base }, thermal, background }
    })
}

pub fn hz(f: f64) -> f64 {
    hz_to_angular(f)
}

/// Fourth-order Runge-Kutta integration of one driven mode in units of its
/// ground-state length, `u = z / 2 z0`, `v = p / 2 M w z0`:
/// `u' = w v`, `v' = -w u + g cos(mu t + phi)`.
/// Starts from `alpha0` (interaction picture, clock at zero) and returns
/// `alpha(t) = (u + i v) e^{i w t}` after `duration`.
pub fn rk4_arm(w: f64, mu: f64, g: f64, phi: f64, duration: f64, alpha0: Complex64, steps_per_period: usize) -> Complex64 {
    let n = ((duration * w / TAU) * steps_per_period as f64).ceil().max(1.0) as usize;
    let h = duration / n as f64;
    let (mut u, mut v) = (alpha0.re, alpha0.im);
    let f = |t: f64, u: f64, v: f64| (w * v, -w * u + g * (mu * t + phi).cos());
    for k in 0..n {
        let t = k as f64 * h;
        let (a1, b1) = f(t, u, v);
        let (a2, b2) = f(t + 0.5 * h, u + 0.5 * h * a1, v + 0.5 * h * b1);
        let (a3, b3) = f(t + 0.5 * h, u + 0.5 * h * a2, v + 0.5 * h * b2);
        let (a4, b4) = f(t + h, u + h * a3, v + h * b3);
        u += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        v += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    }
    Complex64::new(u, v) * Complex64::from_polar(1.0, w * duration)
}

/// Drive strength `F b z0 / hbar` for ion `j` and mode `m`.
pub fn coupling(drive: &DriveConfig, spectrum: &ModeSpectrum, j: usize, m: usize) -> f64 {
    drive.force.at(j) * spectrum.b(j, m) * ground_state_length(spectrum.mass, spectrum.omega[m]) / HBAR
}
