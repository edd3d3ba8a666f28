//! File formats: the JSON run configuration, lattice and spectrum documents,
//! and CSV tables. Frequencies are in Hz, angles in degrees and lengths in
//! meters at this boundary. Every write goes through a temporary file in the
//! destination directory followed by a rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{angular_to_hz, hz_to_angular, BE9_ION_MASS, ELEMENTARY_CHARGE};
use crate::crystal::{CrystalError, CrystalLattice, SolverOptions, TrapParams};
use crate::dynamics::{SpectrumTrace, ThermalState, Trajectory};
use crate::modes::{ModeHistogram, ModeSpectrum};
use crate::odf::{deg, force_from_intensity, BeamGeometry, DriveConfig, ForceProfile, PulseSequence};
use crate::thermometry::{DataPoint, ObservedMetadata, ObservedSpectrum};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{path}:{}: invalid `{field}`: {message}", line.map_or("?".to_string(), |l| l.to_string()))]
    Invalid { path: PathBuf, line: Option<usize>, field: String, message: String },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }

    fn csv(path: &Path, message: impl ToString) -> Self {
        IoError::Csv { path: path.to_path_buf(), message: message.to_string() }
    }

    /// Problem with the file's contents rather than with reading it.
    pub fn is_content_error(&self) -> bool {
        !matches!(self, IoError::Io { .. })
    }
}

/// Replace `path` atomically with `bytes`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| IoError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| IoError::io(path, e))?;
    tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("in-memory JSON serialization");
    out.push(b'\n');
    out
}

/// Line (1-based) of the key reached by following `field` (dot separated)
/// through successive `"key"` occurrences.
fn locate(text: &str, field: &str) -> Option<usize> {
    let mut offset = 0;
    for key in field.split('.') {
        let key = key.split('[').next().unwrap_or(key);
        let needle = format!("\"{key}\"");
        offset += text[offset..].find(&needle)?;
    }
    Some(text[..offset].matches('\n').count() + 1)
}

/// Trap constants at the file boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSpec {
    pub omega_1_hz: f64,
    pub cyclotron_hz: f64,
    pub rotation_hz: f64,
    #[serde(default)]
    pub wall_delta: f64,
    #[serde(default = "default_mass")]
    pub mass_kg: f64,
    #[serde(default = "default_charge")]
    pub charge_c: f64,
}

fn default_mass() -> f64 {
    BE9_ION_MASS
}

fn default_charge() -> f64 {
    ELEMENTARY_CHARGE
}

impl TrapSpec {
    pub fn to_params(&self) -> Result<TrapParams, CrystalError> {
        let p = TrapParams {
            omega_1: hz_to_angular(self.omega_1_hz),
            omega_c: hz_to_angular(self.cyclotron_hz),
            omega_r: hz_to_angular(self.rotation_hz),
            delta_wall: self.wall_delta,
            mass: self.mass_kg,
            charge: self.charge_c,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_params(p: &TrapParams) -> Self {
        TrapSpec {
            omega_1_hz: angular_to_hz(p.omega_1),
            cyclotron_hz: angular_to_hz(p.omega_c),
            rotation_hz: angular_to_hz(p.omega_r),
            wall_delta: p.delta_wall,
            mass_kg: p.mass,
            charge_c: p.charge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSpec {
    pub wavelength_m: f64,
    pub theta_r_deg: f64,
    #[serde(default = "default_waist_z")]
    pub waist_z_m: f64,
    #[serde(default = "default_waist_x")]
    pub waist_x_m: f64,
    #[serde(default)]
    pub misalignment_deg: f64,
    /// Relative uncertainty of the crossing angle used for fit systematics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_r_rel_uncertainty: Option<f64>,
}

fn default_waist_z() -> f64 {
    100e-6
}

fn default_waist_x() -> f64 {
    1e-3
}

impl BeamSpec {
    pub fn to_geometry(&self) -> Result<BeamGeometry, crate::odf::OdfError> {
        let g = BeamGeometry {
            wavelength: self.wavelength_m,
            theta_r: deg(self.theta_r_deg),
            waist_z: self.waist_z_m,
            waist_x: self.waist_x_m,
            misalignment_err: deg(self.misalignment_deg),
        };
        g.validate()?;
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSpec {
    Ramsey { tau_s: f64 },
    SpinEcho { tau_s: f64, t_pi_s: f64 },
}

impl SequenceSpec {
    pub fn to_sequence(&self) -> PulseSequence {
        match *self {
            SequenceSpec::Ramsey { tau_s } => PulseSequence::Ramsey { tau: tau_s },
            SequenceSpec::SpinEcho { tau_s, t_pi_s } => PulseSequence::SpinEcho { tau: tau_s, t_pi: t_pi_s },
        }
    }
}

/// Exactly one of `force_n`, `force_per_ion_n` and `intensity_w_cm2` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_per_ion_n: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity_w_cm2: Option<f64>,
    /// Beat frequency; defaults to the trap's axial frequency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_hz: Option<f64>,
    #[serde(default)]
    pub gamma_per_s: f64,
    pub sequence: SequenceSpec,
}

/// A single mode occupation override; `mode` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeOccupation {
    pub mode: usize,
    pub nbar: f64,
}

/// Either a common temperature or an explicit occupation list, then
/// per-mode overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nbar: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mode_nbar: Vec<ModeOccupation>,
}

impl ThermalSpec {
    pub fn to_state(&self, spectrum: &ModeSpectrum) -> Result<ThermalState, String> {
        let mut state = match (&self.temperature_k, &self.nbar) {
            (Some(t), None) => ThermalState::uniform_temperature(spectrum, *t).map_err(|e| e.to_string())?,
            (None, Some(n)) if n.len() == spectrum.n() => ThermalState::new(n.clone()).map_err(|e| e.to_string())?,
            (None, Some(n)) => return Err(format!("{} occupations for {} modes", n.len(), spectrum.n())),
            _ => return Err("set exactly one of temperature_k and nbar".into()),
        };
        for o in &self.mode_nbar {
            if o.mode == 0 || o.mode > spectrum.n() {
                return Err(format!("mode {} outside 1..={}", o.mode, spectrum.n()));
            }
            state = state.with_mode(o.mode - 1, o.nbar).map_err(|e| e.to_string())?;
        }
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub step_hz: f64,
}

/// Largest grid a sweep may describe.
pub const MAX_GRID_POINTS: usize = 10_000_000;

impl SweepSpec {
    fn check(&self) -> Result<usize, String> {
        if !(self.start_hz.is_finite() && self.stop_hz.is_finite()) {
            return Err("sweep bounds must be finite".into());
        }
        if !(self.step_hz > 0.0) {
            return Err(format!("step must be positive, got {}", self.step_hz));
        }
        if self.stop_hz < self.start_hz {
            return Err(format!("stop {} is below start {}", self.stop_hz, self.start_hz));
        }
        let n = ((self.stop_hz - self.start_hz) / self.step_hz + 1e-9).floor() + 1.0;
        if n > MAX_GRID_POINTS as f64 {
            return Err(format!("grid of {n} points exceeds {MAX_GRID_POINTS}"));
        }
        Ok(n as usize)
    }

    /// `start + k step` for every point not beyond `stop`.
    pub fn grid(&self) -> Result<Vec<f64>, String> {
        let n = self.check()?;
        Ok((0..n).map(|k| self.start_hz + k as f64 * self.step_hz).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    #[serde(default = "default_lattice_seed")]
    pub lattice: u64,
    #[serde(default = "default_noise_seed")]
    pub noise: u64,
}

fn default_lattice_seed() -> u64 {
    SolverOptions::default().seed
}

fn default_noise_seed() -> u64 {
    1
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec { lattice: default_lattice_seed(), noise: default_noise_seed() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_gtol")]
    pub gtol: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_gtol() -> f64 {
    SolverOptions::default().gtol
}

fn default_max_iterations() -> usize {
    SolverOptions::default().max_iterations
}

/// Fit settings; `target_mode` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    #[serde(default = "default_target")]
    pub target_mode: usize,
    /// Fixed background rate; defaults to the drive's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_per_s: Option<f64>,
}

fn default_target() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub trap: TrapSpec,
    pub n_ions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam: Option<BeamSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal: Option<ThermalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub seeds: SeedSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSpec>,
}

type FieldError = (String, String);

fn field_err(field: &str, message: impl ToString) -> FieldError {
    (field.to_string(), message.to_string())
}

impl RunConfig {
    /// Cross-field checks; the error names the offending field.
    pub fn validate(&self) -> Result<(), FieldError> {
        self.trap.to_params().map_err(|e| {
            let field = match e {
                CrystalError::NoRadialConfinement { .. } => "trap.rotation_hz",
                CrystalError::InvalidParams(ref m) if m.contains("wall") => "trap.wall_delta",
                CrystalError::InvalidParams(ref m) if m.contains("mass") => "trap.mass_kg",
                _ => "trap",
            };
            field_err(field, e)
        })?;
        if self.n_ions == 0 {
            return Err(field_err("n_ions", "at least one ion is required"));
        }
        if let Some(beam) = &self.beam {
            beam.to_geometry().map_err(|e| field_err("beam.theta_r_deg", e))?;
            if let Some(u) = beam.theta_r_rel_uncertainty {
                if !(u >= 0.0 && u < 1.0) {
                    return Err(field_err("beam.theta_r_rel_uncertainty", "must lie in [0, 1)"));
                }
            }
        }
        if let Some(drive) = &self.drive {
            let set = [drive.force_n.is_some(), drive.force_per_ion_n.is_some(), drive.intensity_w_cm2.is_some()];
            if set.iter().filter(|s| **s).count() != 1 {
                return Err(field_err("drive", "set exactly one of force_n, force_per_ion_n and intensity_w_cm2"));
            }
            if let Some(i) = drive.intensity_w_cm2 {
                force_from_intensity(i).map_err(|e| field_err("drive.intensity_w_cm2", e))?;
            }
            self.drive_config().map_err(|e| field_err("drive", e))?.validate(self.n_ions).map_err(|e| {
                let msg = e.to_string();
                let field = [
                    ("per-ion", "drive.force_per_ion_n"),
                    ("arm duration", "drive.sequence.tau_s"),
                    ("pi-pulse", "drive.sequence.t_pi_s"),
                    ("decoherence", "drive.gamma_per_s"),
                    ("beat", "drive.mu_hz"),
                ]
                .iter()
                .find(|(k, _)| msg.contains(k))
                .map_or("drive", |(_, f)| f);
                field_err(field, msg)
            })?;
        }
        if let Some(th) = &self.thermal {
            match (&th.temperature_k, &th.nbar) {
                (Some(t), None) if !(*t >= 0.0) => return Err(field_err("thermal.temperature_k", "must be >= 0")),
                (None, Some(n)) if n.len() != self.n_ions => {
                    return Err(field_err("thermal.nbar", format!("{} occupations for {} ions", n.len(), self.n_ions)))
                }
                (None, Some(n)) if n.iter().any(|v| !(*v >= 0.0)) => {
                    return Err(field_err("thermal.nbar", "occupations must be >= 0"))
                }
                (Some(_), None) | (None, Some(_)) => {}
                _ => return Err(field_err("thermal", "set exactly one of temperature_k and nbar")),
            }
            for o in &th.mode_nbar {
                if o.mode == 0 || o.mode > self.n_ions || !(o.nbar >= 0.0) {
                    return Err(field_err("thermal.mode_nbar", format!("bad override mode {} nbar {}", o.mode, o.nbar)));
                }
            }
        }
        if let Some(sw) = &self.sweep {
            sw.check().map_err(|e| field_err("sweep", e))?;
        }
        if let Some(s) = &self.solver {
            if !(s.gtol > 0.0) || s.max_iterations == 0 {
                return Err(field_err("solver", "gtol and max_iterations must be positive"));
            }
        }
        if let Some(f) = &self.fit {
            if f.target_mode == 0 || f.target_mode > self.n_ions {
                return Err(field_err("fit.target_mode", format!("mode {} outside 1..={}", f.target_mode, self.n_ions)));
            }
            if let Some(g) = f.gamma_per_s {
                if !(g >= 0.0) {
                    return Err(field_err("fit.gamma_per_s", "must be >= 0"));
                }
            }
        }
        Ok(())
    }

    pub fn trap_params(&self) -> Result<TrapParams, CrystalError> {
        self.trap.to_params()
    }

    pub fn solver_options(&self) -> SolverOptions {
        let mut o = SolverOptions { seed: self.seeds.lattice, ..SolverOptions::default() };
        if let Some(s) = &self.solver {
            o.gtol = s.gtol;
            o.max_iterations = s.max_iterations;
        }
        o
    }

    pub fn drive_config(&self) -> Result<DriveConfig, String> {
        let d = self.drive.as_ref().ok_or("configuration has no drive section")?;
        let force = match (d.force_n, &d.force_per_ion_n, d.intensity_w_cm2) {
            (Some(f), None, None) => ForceProfile::Uniform(f),
            (None, Some(v), None) => ForceProfile::PerIon(v.clone()),
            (None, None, Some(i)) => ForceProfile::Uniform(force_from_intensity(i).map_err(|e| e.to_string())?),
            _ => return Err("set exactly one of force_n, force_per_ion_n and intensity_w_cm2".into()),
        };
        Ok(DriveConfig {
            force,
            mu_r: hz_to_angular(d.mu_hz.unwrap_or(self.trap.omega_1_hz)),
            gamma: d.gamma_per_s,
            sequence: d.sequence.to_sequence(),
        })
    }

    pub fn sweep_grid(&self) -> Result<Vec<f64>, String> {
        self.sweep.as_ref().ok_or("configuration has no sweep section")?.grid()
    }

    pub fn thermal_state(&self, spectrum: &ModeSpectrum) -> Result<ThermalState, String> {
        self.thermal.as_ref().ok_or("configuration has no thermal section")?.to_state(spectrum)
    }
}

/// Read and validate a configuration. Validation errors carry the line of
/// the offending key.
pub fn load_config(path: &Path) -> Result<RunConfig, IoError> {
    let text = read_text(path)?;
    let cfg: RunConfig = parse_json(path, &text)?;
    cfg.validate().map_err(|(field, message)| IoError::Invalid {
        path: path.to_path_buf(),
        line: locate(&text, &field),
        field,
        message,
    })?;
    Ok(cfg)
}

pub fn save_config(path: &Path, cfg: &RunConfig) -> Result<(), IoError> {
    write_atomic(path, &to_json(cfg))
}

/// Serialized equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeFile {
    pub trap: TrapSpec,
    pub n_ions: usize,
    pub positions_m: Vec<[f64; 3]>,
    pub converged: bool,
    pub residual_force_max_n: f64,
    pub planar: bool,
    pub energy_j: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl LatticeFile {
    /// Use `trap` as written in the configuration so that parameters survive
    /// the Hz round trip unchanged.
    pub fn new(lattice: &CrystalLattice, trap: TrapSpec) -> Self {
        LatticeFile {
            trap,
            n_ions: lattice.n_ions(),
            positions_m: lattice.positions.clone(),
            converged: lattice.converged,
            residual_force_max_n: lattice.residual_force_max,
            planar: lattice.planar,
            energy_j: lattice.energy,
            iterations: lattice.iterations,
            seed: lattice.seed,
        }
    }

    pub fn to_lattice(&self) -> Result<CrystalLattice, String> {
        if self.positions_m.len() != self.n_ions {
            return Err(format!("{} positions for {} ions", self.positions_m.len(), self.n_ions));
        }
        Ok(CrystalLattice {
            params: self.trap.to_params().map_err(|e| e.to_string())?,
            positions: self.positions_m.clone(),
            converged: self.converged,
            residual_force_max: self.residual_force_max_n,
            planar: self.planar,
            energy: self.energy_j,
            iterations: self.iterations,
            seed: self.seed,
        })
    }
}

pub fn save_lattice(path: &Path, file: &LatticeFile) -> Result<(), IoError> {
    write_atomic(path, &to_json(file))
}

pub fn load_lattice(path: &Path) -> Result<CrystalLattice, IoError> {
    let text = read_text(path)?;
    let file: LatticeFile = parse_json(path, &text)?;
    file.to_lattice().map_err(|message| IoError::Invalid {
        path: path.to_path_buf(),
        line: locate(&text, "positions_m"),
        field: "positions_m".into(),
        message,
    })
}

/// Serialized mode spectrum. `eigenvectors_row_major[j * n + m]` is `b_jm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumFile {
    pub n: usize,
    pub mass_kg: f64,
    pub omega_1_hz: f64,
    pub frequencies_hz: Vec<f64>,
    pub eigenvectors_row_major: Vec<f64>,
    pub unstable: Vec<usize>,
    pub clusters: Vec<usize>,
    pub source_lattice_hash: String,
}

impl SpectrumFile {
    pub fn new(s: &ModeSpectrum) -> Self {
        let n = s.n();
        SpectrumFile {
            n,
            mass_kg: s.mass,
            omega_1_hz: angular_to_hz(s.omega_1_trap),
            frequencies_hz: s.frequencies_hz(),
            eigenvectors_row_major: (0..n * n).map(|k| s.vectors[(k / n, k % n)]).collect(),
            unstable: s.unstable.clone(),
            clusters: s.clusters.clone(),
            source_lattice_hash: s.source_lattice_hash.clone(),
        }
    }

    pub fn to_spectrum(&self) -> Result<ModeSpectrum, String> {
        let n = self.n;
        if self.frequencies_hz.len() != n || self.eigenvectors_row_major.len() != n * n {
            return Err(format!(
                "{} frequencies and {} vector entries for n = {n}",
                self.frequencies_hz.len(),
                self.eigenvectors_row_major.len()
            ));
        }
        let vectors = DMatrix::from_row_slice(n, n, &self.eigenvectors_row_major);
        ModeSpectrum::from_parts(
            self.frequencies_hz.iter().map(|&f| hz_to_angular(f)).collect(),
            vectors,
            hz_to_angular(self.omega_1_hz),
            self.mass_kg,
            self.source_lattice_hash.clone(),
        )
        .map_err(|e| e.to_string())
    }
}

pub fn save_spectrum(path: &Path, s: &ModeSpectrum) -> Result<(), IoError> {
    write_atomic(path, &to_json(&SpectrumFile::new(s)))
}

pub fn load_spectrum(path: &Path) -> Result<ModeSpectrum, IoError> {
    let text = read_text(path)?;
    let file: SpectrumFile = parse_json(path, &text)?;
    file.to_spectrum().map_err(|message| IoError::Invalid {
        path: path.to_path_buf(),
        line: None,
        field: "frequencies_hz".into(),
        message,
    })
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_atomic(path, &to_json(value))
}

/// Shortest text that parses back to the same double.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory CSV");
    for row in rows {
        w.write_record(&row).expect("in-memory CSV");
    }
    w.into_inner().expect("in-memory CSV")
}

fn owned(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

pub fn lattice_csv(lattice: &CrystalLattice) -> Vec<u8> {
    csv_bytes(
        &owned(&["ion", "x_m", "y_m", "z_m"]),
        lattice.positions.iter().enumerate().map(|(j, p)| {
            vec![(j + 1).to_string(), fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2])]
        }),
    )
}

pub fn histogram_csv(h: &ModeHistogram) -> Vec<u8> {
    csv_bytes(
        &owned(&["bin_center_hz", "count"]),
        (0..h.counts.len()).map(|k| vec![fmt_f64(h.center(k)), h.counts[k].to_string()]),
    )
}

pub fn trace_csv(t: &SpectrumTrace) -> Vec<u8> {
    let mut header = owned(&["mu_over_2pi_hz", "p_up_mean"]);
    let n_ions = t.per_ion.as_ref().and_then(|p| p.first()).map_or(0, |r| r.len());
    header.extend((1..=n_ions).map(|j| format!("p_up_ion_{j}")));
    csv_bytes(
        &header,
        (0..t.mu_over_2pi.len()).map(|k| {
            let mut row = vec![fmt_f64(t.mu_over_2pi[k]), fmt_f64(t.p_up_mean[k])];
            if let Some(per) = &t.per_ion {
                row.extend(per[k].iter().map(|v| fmt_f64(*v)));
            }
            row
        }),
    )
}

pub fn trajectory_csv(t: &Trajectory) -> Vec<u8> {
    csv_bytes(
        &owned(&["t_s", "re_alpha", "im_alpha"]),
        t.t.iter().zip(&t.alpha).map(|(t, a)| vec![fmt_f64(*t), fmt_f64(a.re), fmt_f64(a.im)]),
    )
}

pub fn observed_csv(o: &ObservedSpectrum) -> Vec<u8> {
    csv_bytes(
        &owned(&["mu_hz", "p_up", "sigma"]),
        o.points.iter().map(|p| vec![fmt_f64(p.mu_over_2pi), fmt_f64(p.p_up), fmt_f64(p.sigma)]),
    )
}

fn read_table(path: &Path, required: &[&str]) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let text = read_text(path)?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(|e| IoError::csv(path, e))?.iter().map(String::from).collect();
    for name in required {
        if !header.iter().any(|h| h == name) {
            return Err(IoError::csv(path, format!("missing column `{name}`")));
        }
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| IoError::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| IoError::csv(path, format!("line {line}: `{f}` is not a number"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).expect("column checked by read_table")
}

/// Path of the JSON metadata sidecar for a data file.
pub fn metadata_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Write data as CSV plus its metadata sidecar.
pub fn save_observed(path: &Path, o: &ObservedSpectrum) -> Result<(), IoError> {
    write_atomic(path, &observed_csv(o))?;
    save_json(&metadata_path(path), &o.metadata)
}

/// Read data CSV (`mu_hz,p_up,sigma`) and, when present, its sidecar.
pub fn load_observed(path: &Path) -> Result<ObservedSpectrum, IoError> {
    let (header, rows) = read_table(path, &["mu_hz", "p_up", "sigma"])?;
    let (a, b, c) = (column(&header, "mu_hz"), column(&header, "p_up"), column(&header, "sigma"));
    let points = rows.iter().map(|r| DataPoint { mu_over_2pi: r[a], p_up: r[b], sigma: r[c] }).collect();
    let meta = metadata_path(path);
    let metadata = if meta.exists() {
        let text = read_text(&meta)?;
        parse_json::<ObservedMetadata>(&meta, &text)?
    } else {
        ObservedMetadata::default()
    };
    let o = ObservedSpectrum { points, metadata };
    o.validate().map_err(|e| IoError::csv(path, e))?;
    Ok(o)
}

pub fn load_trace(path: &Path) -> Result<SpectrumTrace, IoError> {
    let (header, rows) = read_table(path, &["mu_over_2pi_hz", "p_up_mean"])?;
    let (a, b) = (column(&header, "mu_over_2pi_hz"), column(&header, "p_up_mean"));
    let ion_cols: Vec<usize> = (0..header.len()).filter(|&k| header[k].starts_with("p_up_ion_")).collect();
    Ok(SpectrumTrace {
        mu_over_2pi: rows.iter().map(|r| r[a]).collect(),
        p_up_mean: rows.iter().map(|r| r[b]).collect(),
        per_ion: (!ion_cols.is_empty()).then(|| rows.iter().map(|r| ion_cols.iter().map(|&k| r[k]).collect()).collect()),
    })
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory, IoError> {
    let (header, rows) = read_table(path, &["t_s", "re_alpha", "im_alpha"])?;
    let (a, b, c) = (column(&header, "t_s"), column(&header, "re_alpha"), column(&header, "im_alpha"));
    Ok(Trajectory {
        t: rows.iter().map(|r| r[a]).collect(),
        alpha: rows.iter().map(|r| Complex64::new(r[b], r[c])).collect(),
    })
}

/// Histogram as `(bin_center_hz, count)`.
pub fn load_histogram(path: &Path) -> Result<Vec<(f64, f64)>, IoError> {
    let (header, rows) = read_table(path, &["bin_center_hz", "count"])?;
    let (a, b) = (column(&header, "bin_center_hz"), column(&header, "count"));
    Ok(rows.iter().map(|r| (r[a], r[b])).collect())
}

/// One named series of a plot panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
}

pub fn trace_series(t: &SpectrumTrace) -> PlotSeries {
    PlotSeries {
        name: "trace".into(),
        x_label: "mu_over_2pi_hz".into(),
        y_label: "p_up_mean".into(),
        points: t.mu_over_2pi.iter().copied().zip(t.p_up_mean.iter().copied()).collect(),
    }
}

pub fn trajectory_series(t: &Trajectory) -> PlotSeries {
    PlotSeries {
        name: "trajectory".into(),
        x_label: "re_alpha".into(),
        y_label: "im_alpha".into(),
        points: t.alpha.iter().map(|a| (a.re, a.im)).collect(),
    }
}

/// Histogram counts drawn at their bin centers on the trace frequency axis.
pub fn histogram_series(bins: &[(f64, f64)]) -> PlotSeries {
    PlotSeries {
        name: "mode_density".into(),
        x_label: "mu_over_2pi_hz".into(),
        y_label: "count".into(),
        points: bins.to_vec(),
    }
}

/// Long-format CSV `series,x,y`.
pub fn plot_csv(series: &[PlotSeries]) -> Vec<u8> {
    csv_bytes(
        &owned(&["series", "x", "y"]),
        series.iter().flat_map(|s| s.points.iter().map(|(x, y)| vec![s.name.clone(), fmt_f64(*x), fmt_f64(*y)])),
    )
}

/// Polyline SVG with each series scaled to its own vertical range.
pub fn plot_svg(series: &[PlotSeries]) -> Vec<u8> {
    const W: f64 = 800.0;
    const H: f64 = 400.0;
    const PAD: f64 = 40.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let all_x = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (x0, x1) = all_x.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for (k, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let (y0, y1) = s.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
        let sx = |x: f64| if x1 > x0 { PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD) } else { W / 2.0 };
        let sy = |y: f64| if y1 > y0 { H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD) } else { H / 2.0 };
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1\" points=\"{}\"><title>{}: {} vs {}</title></polyline>\n",
            COLORS[k % COLORS.len()],
            pts.join(" "),
            s.name,
            s.y_label,
            s.x_label
        ));
    }
    out.push_str("</svg>\n");
    out.into_bytes()
}
