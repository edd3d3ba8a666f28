//! `drumhead` command-line front end.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0  | success |
//! | 1  | internal error |
//! | 2  | usage error |
//! | 3  | invalid configuration or input file contents |
//! | 4  | file system error |
//! | 10 | crystal minimizer did not converge |
//! | 11 | crystal is not planar |
//! | 12 | mode spectrum has unstable modes |
//! | 20 | fit data do not span the resonance |
//! | 21 | fit did not converge |
//! | 22 | fit settled on the zero-occupation boundary |
//! | 23 | unphysical background level |

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use drumhead::constants::angular_to_hz;
use drumhead::crystal::{solve_equilibrium, CrystalError};
use drumhead::dynamics::{phase_space_trajectory, sweep_spectrum, DynamicsError};
use drumhead::io::{self, IoError, LatticeFile, RunConfig};
use drumhead::modes::{diagonalize, mode_histogram, transverse_stiffness, ModeSpectrum, ModesError};
use drumhead::thermometry::{
    fit_background_gamma, fit_occupation, synthetic_spectrum_seeded, FitError, FitFlag, FitOptions, ObservedSpectrum,
    BACKGROUND_MIN_DETUNING,
};

mod exit {
    pub const INTERNAL: u8 = 1;
    pub const INVALID: u8 = 3;
    pub const IO: u8 = 4;
    pub const NOT_CONVERGED: u8 = 10;
    pub const NON_PLANAR: u8 = 11;
    pub const UNSTABLE: u8 = 12;
    pub const FIT_SPAN: u8 = 20;
    pub const FIT_CONVERGENCE: u8 = 21;
    pub const FIT_BOUNDARY: u8 = 22;
    pub const FIT_BACKGROUND: u8 = 23;
}

#[derive(Parser)]
#[command(name = "drumhead", version, about = "Planar ion crystal modes, spin-motion lineshapes and thermometry")]
struct Cli {
    /// Cap on worker threads for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Crystal equilibrium.
    #[command(subcommand)]
    Crystal(CrystalCmd),
    /// Transverse normal modes.
    #[command(subcommand)]
    Modes(ModesCmd),
    /// Bright-state probability spectra.
    #[command(subcommand)]
    Spectrum(SpectrumCmd),
    /// Lineshape fits.
    #[command(subcommand)]
    Fit(FitCmd),
    /// Lay out traces, trajectories and histograms for plotting (CSV, or SVG by extension).
    Plot(PlotArgs),
}

#[derive(Subcommand)]
enum CrystalCmd {
    /// Minimize the trap plus Coulomb energy and write the lattice JSON.
    Solve(SolveArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write positions as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Overrides the lattice seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum ModesCmd {
    /// Diagonalize the transverse stiffness of a lattice.
    Compute(ModesArgs),
}

#[derive(Args)]
struct ModesArgs {
    #[arg(long)]
    lattice: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Mode-density histogram CSV.
    #[arg(long)]
    histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 10e3)]
    bin_hz: f64,
}

#[derive(Subcommand)]
enum SpectrumCmd {
    /// Sweep the beat frequency over the configured grid.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    spectrum: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Add a column per ion.
    #[arg(long)]
    per_ion: bool,
    /// Write noisy synthetic data (mu_hz,p_up,sigma) with this standard deviation.
    #[arg(long)]
    noise: Option<f64>,
    /// Overrides the noise seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the phase-space path of this mode (1-based) instead of a sweep.
    #[arg(long)]
    trajectory: Option<usize>,
    /// Ion (1-based) for the trajectory.
    #[arg(long, default_value_t = 1)]
    ion: usize,
    /// Samples per arm for the trajectory.
    #[arg(long, default_value_t = 400)]
    samples: usize,
}

#[derive(Subcommand)]
enum FitCmd {
    /// Fit one mode's occupation to measured or synthetic data.
    Temperature(FitArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    spectrum: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Target mode (1-based); defaults to the configuration's.
    #[arg(long)]
    mode: Option<usize>,
    /// Estimate the background rate from the points far from every mode.
    #[arg(long)]
    fit_background: bool,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long)]
    histogram: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Failure { code, message: message.to_string() }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let code = if e.is_content_error() { exit::INVALID } else { exit::IO };
        Failure::new(code, e)
    }
}

impl From<CrystalError> for Failure {
    fn from(e: CrystalError) -> Self {
        let code = match e {
            CrystalError::NotConverged { .. } => exit::NOT_CONVERGED,
            _ => exit::INVALID,
        };
        Failure::new(code, e)
    }
}

impl From<ModesError> for Failure {
    fn from(e: ModesError) -> Self {
        let code = match e {
            ModesError::NonPlanar { .. } => exit::NON_PLANAR,
            ModesError::NotConverged => exit::NOT_CONVERGED,
            _ => exit::INVALID,
        };
        Failure::new(code, e)
    }
}

impl From<DynamicsError> for Failure {
    fn from(e: DynamicsError) -> Self {
        let code = match e {
            DynamicsError::UnstableSpectrum(_) => exit::UNSTABLE,
            _ => exit::INVALID,
        };
        Failure::new(code, e)
    }
}

impl From<FitError> for Failure {
    fn from(e: FitError) -> Self {
        let code = match e {
            FitError::InsufficientSpan { .. } => exit::FIT_SPAN,
            FitError::NonConvergence(_) => exit::FIT_CONVERGENCE,
            FitError::UnphysicalBackground { .. } => exit::FIT_BACKGROUND,
            FitError::Model(DynamicsError::UnstableSpectrum(_)) => exit::UNSTABLE,
            _ => exit::INVALID,
        };
        Failure::new(code, e)
    }
}

fn invalid(path: &Path, message: impl std::fmt::Display) -> Failure {
    Failure::new(exit::INVALID, format!("{}: {message}", path.display()))
}

fn solve(a: &SolveArgs) -> Result<(), Failure> {
    let cfg = io::load_config(&a.config)?;
    let params = cfg.trap_params()?;
    let mut opts = cfg.solver_options();
    if let Some(seed) = a.seed {
        opts.seed = seed;
    }
    let (lattice, failure) = match solve_equilibrium(&params, cfg.n_ions, None, &opts) {
        Ok(l) => (l, None),
        Err(CrystalError::NotConverged { best, iterations }) => {
            let msg = format!("minimizer did not converge after {iterations} iterations");
            (*best, Some(Failure::new(exit::NOT_CONVERGED, msg)))
        }
        Err(e) => return Err(e.into()),
    };
    io::save_lattice(&a.out, &LatticeFile::new(&lattice, cfg.trap.clone()))?;
    if let Some(csv) = &a.csv {
        io::write_atomic(csv, &io::lattice_csv(&lattice))?;
    }
    println!(
        "{} ions: converged={} planar={} max |force| = {:.3e} N, max |z| = {:.3e} m, {} iterations",
        lattice.n_ions(),
        lattice.converged,
        lattice.planar,
        lattice.residual_force_max,
        lattice.max_abs_z(),
        lattice.iterations
    );
    if let Some(f) = failure {
        return Err(f);
    }
    if !lattice.planar {
        return Err(Failure::new(exit::NON_PLANAR, "equilibrium is not a single plane"));
    }
    Ok(())
}

fn modes(a: &ModesArgs) -> Result<(), Failure> {
    let lattice = io::load_lattice(&a.lattice)?;
    let k = transverse_stiffness(&lattice, &lattice.params)?;
    let spectrum = diagonalize(&k)?;
    io::save_spectrum(&a.out, &spectrum)?;
    if let Some(h) = &a.histogram {
        io::write_atomic(h, &io::histogram_csv(&mode_histogram(&spectrum, a.bin_hz)?))?;
    }
    let w1 = k.omega_1;
    let row_dev = k.row_sums().iter().map(|r| (r - w1 * w1).abs() / (w1 * w1)).fold(0.0, f64::max);
    println!(
        "COM check: highest mode {:.6} Hz vs trap {:.6} Hz (relative {:.2e}); max row-sum deviation {:.2e}",
        angular_to_hz(spectrum.omega[0]),
        angular_to_hz(w1),
        (spectrum.omega[0] - w1).abs() / w1,
        row_dev
    );
    println!(
        "{} modes spanning {:.3} kHz",
        spectrum.n(),
        angular_to_hz(spectrum.span()) / 1e3
    );
    if !spectrum.is_stable() {
        return Err(Failure::new(exit::UNSTABLE, format!("unstable modes {:?}", spectrum.unstable)));
    }
    Ok(())
}

fn check_match(cfg: &RunConfig, spectrum: &ModeSpectrum, path: &Path) -> Result<(), Failure> {
    if cfg.n_ions != spectrum.n() {
        return Err(invalid(path, format!("spectrum has {} modes but configuration has {} ions", spectrum.n(), cfg.n_ions)));
    }
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let cfg = io::load_config(&a.config)?;
    let spectrum = io::load_spectrum(&a.spectrum)?;
    check_match(&cfg, &spectrum, &a.spectrum)?;
    let drive = cfg.drive_config().map_err(|e| invalid(&a.config, e))?;
    if let Some(mode) = a.trajectory {
        if mode == 0 || a.ion == 0 {
            return Err(Failure::new(2, "mode and ion indices are 1-based"));
        }
        let t = phase_space_trajectory(&drive, &spectrum, mode - 1, a.ion - 1, a.samples)?;
        io::write_atomic(&a.out, &io::trajectory_csv(&t))?;
        return Ok(());
    }
    let thermal = cfg.thermal_state(&spectrum).map_err(|e| invalid(&a.config, e))?;
    let grid = cfg.sweep_grid().map_err(|e| invalid(&a.config, e))?;
    if drive.inhomogeneous() {
        eprintln!("warning: per-ion force spread exceeds 20%");
    }
    match a.noise {
        Some(sigma) => {
            let seed = a.seed.unwrap_or(cfg.seeds.noise);
            let mut data = synthetic_spectrum_seeded(&drive, &spectrum, &thermal, &grid, sigma, seed)?;
            if let Some(beam) = &cfg.beam {
                data.metadata.theta_r_rad = Some(beam.theta_r_deg.to_radians());
                data.metadata.theta_r_rel_uncertainty = beam.theta_r_rel_uncertainty;
            }
            io::save_observed(&a.out, &data)?;
        }
        None => {
            let trace = sweep_spectrum(&drive, &spectrum, &thermal, &grid, a.per_ion)?;
            io::write_atomic(&a.out, &io::trace_csv(&trace))?;
        }
    }
    Ok(())
}

fn fit(a: &FitArgs) -> Result<(), Failure> {
    let cfg = io::load_config(&a.config)?;
    let spectrum = io::load_spectrum(&a.spectrum)?;
    check_match(&cfg, &spectrum, &a.spectrum)?;
    let mut data = io::load_observed(&a.data)?;
    let drive = cfg.drive_config().map_err(|e| invalid(&a.config, e))?;
    let thermal = cfg.thermal_state(&spectrum).map_err(|e| invalid(&a.config, e))?;
    let mode = a.mode.or(cfg.fit.as_ref().map(|f| f.target_mode)).unwrap_or(1);
    if mode == 0 || mode > spectrum.n() {
        return Err(Failure::new(2, format!("mode {mode} outside 1..={}", spectrum.n())));
    }
    if let Some(beam) = &cfg.beam {
        if data.metadata.theta_r_rad.is_none() {
            data.metadata.theta_r_rad = Some(beam.theta_r_deg.to_radians());
        }
        if data.metadata.theta_r_rel_uncertainty.is_none() {
            data.metadata.theta_r_rel_uncertainty = beam.theta_r_rel_uncertainty;
        }
    }
    let mut gamma = cfg.fit.as_ref().and_then(|f| f.gamma_per_s);
    if a.fit_background {
        let tau = drive.sequence.tau();
        let modes_hz = spectrum.frequencies_hz();
        let far = ObservedSpectrum {
            points: data
                .points
                .iter()
                .filter(|p| modes_hz.iter().all(|f| (p.mu_over_2pi - f).abs() * tau >= BACKGROUND_MIN_DETUNING))
                .copied()
                .collect(),
            metadata: data.metadata.clone(),
        };
        let g = fit_background_gamma(&far, &spectrum, &drive.sequence)?;
        println!("background rate from {} off-resonant points: {g:.4} 1/s", far.points.len());
        gamma = Some(g);
    }
    let opts = FitOptions { gamma, ..FitOptions::default() };
    let result = fit_occupation(&data, &spectrum, &drive, &thermal, mode - 1, &opts)?;
    io::save_json(&a.out, &result)?;
    println!(
        "mode {mode} at {:.3} kHz: nbar = {:.4} +/- {:.4}, T = {:.4} +/- {:.4} mK, Gamma = {:.4} 1/s, reduced chi2 = {:.4}",
        angular_to_hz(result.omega_target) / 1e3,
        result.nbar,
        result.nbar_err,
        result.temperature_k * 1e3,
        result.temperature_err_k * 1e3,
        result.gamma_used,
        result.chi2_reduced
    );
    println!("systematic: {}", result.systematic_note);
    if result.flag == Some(FitFlag::InsufficientSignal) {
        return Err(Failure::new(exit::FIT_BOUNDARY, "best fit at nbar = 0: no mode feature in the data"));
    }
    Ok(())
}

fn plot(a: &PlotArgs) -> Result<(), Failure> {
    let mut series = Vec::new();
    if let Some(p) = &a.trace {
        series.push(io::trace_series(&io::load_trace(p)?));
    }
    if let Some(p) = &a.histogram {
        series.push(io::histogram_series(&io::load_histogram(p)?));
    }
    if let Some(p) = &a.trajectory {
        series.push(io::trajectory_series(&io::load_trajectory(p)?));
    }
    if series.is_empty() {
        return Err(Failure::new(2, "give at least one of --trace, --histogram and --trajectory"));
    }
    let svg = a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("svg"));
    let bytes = if svg { io::plot_svg(&series) } else { io::plot_csv(&series) };
    io::write_atomic(&a.out, &bytes)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(exit::INTERNAL, e))?;
    }
    match &cli.command {
        Command::Crystal(CrystalCmd::Solve(a)) => solve(a),
        Command::Modes(ModesCmd::Compute(a)) => modes(a),
        Command::Spectrum(SpectrumCmd::Simulate(a)) => simulate(a),
        Command::Fit(FitCmd::Temperature(a)) => fit(a),
        Command::Plot(a) => plot(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
