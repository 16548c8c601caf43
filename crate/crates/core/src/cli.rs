//! The `bohm-phase` command line.
//!
//! Exit codes: 0 compatible / checks passed, 1 a verify check failed,
//! 2 usage or input error, 3 incompatible, 4 inconclusive. Data goes to
//! files or stdout, diagnostics to stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use crate::calibration::{calibrate, scan_residual, DensityFamily};
use crate::error::{Error, Result};
use crate::grid::{ComplexField, PhysicalConstants, SpacetimeGrid};
use crate::io::{
    parse_axis, parse_phase_anchor, parse_reference, parse_theta_mode, retrieval_report, FieldData, FieldFile,
    Report, RunConfig,
};
use crate::oracles::{
    breathing_density, coherent_density, coherent_phase, coherent_wavefunction, coverage_warning, free_density,
    free_phase, free_wavefunction, Branch, BreathingGaussianSpec, CoherentStateSpec, FreeGaussianSpec,
    COVERAGE_RATIO,
};
use crate::potential::Potential;
use crate::retrieval::{retrieve, TrustedRegion, Verdict};
use crate::schrodinger::{density_of, propagate, schrodinger_residual, PropagatorConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INCOMPATIBLE: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;

pub fn verdict_exit_code(verdict: Verdict) -> i32 {
    match verdict {
        Verdict::Compatible => EXIT_OK,
        Verdict::Incompatible => EXIT_INCOMPATIBLE,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "bohm-phase", version, about = "Phase retrieval from density histories via the Bohmian equations")]
pub struct Cli {
    /// key=value file with default settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write an analytic or propagated density (and its phase when known).
    Generate(GenerateArgs),
    /// Reconstruct the phase and wavefunction from a density file.
    Retrieve(RetrieveArgs),
    /// Check a wavefunction against the Schrödinger equation or a reference phase.
    Verify(VerifyArgs),
    /// Fit density-family parameters so that a valid phase exists.
    Calibrate(CalibrateArgs),
    /// Evaluate the calibration objective along one parameter.
    Scan(ScanArgs),
    /// Convert field files and reports to gnuplot-style tables.
    Plotdata(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Coherent,
    Free,
    Breathing,
    /// Evolve the wavefunction in --initial.
    Propagate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BranchArg {
    Plus,
    Minus,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Spatial grid as min:max:count.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Time grid as min:max:count.
    #[arg(long, allow_hyphen_values = true)]
    pub time: Option<String>,
}

#[derive(Debug, Args)]
pub struct PotentialArgs {
    /// `harmonic`, `free`, or a real field file on the density grid.
    #[arg(long)]
    pub potential: Option<String>,
    /// Oscillator frequency.
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
}

#[derive(Debug, Args)]
pub struct ConstantArgs {
    #[arg(long)]
    pub hbar: Option<f64>,
    #[arg(long)]
    pub mass: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RetrievalFlags {
    #[arg(long)]
    pub density_floor: Option<f64>,
    /// zero_flux or residual_fit.
    #[arg(long)]
    pub theta_mode: Option<String>,
    /// `peak` or a node index.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long)]
    pub hj_tolerance: Option<f64>,
    /// `leftmost` or an x coordinate.
    #[arg(long, allow_hyphen_values = true)]
    pub phase_anchor: Option<String>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct GenerateArgs {
    pub source: Source,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub constants: ConstantArgs,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    #[arg(long, value_enum, default_value_t = BranchArg::Plus)]
    pub branch: BranchArg,
    #[arg(long, default_value_t = 0.0)]
    pub mean_p: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_1_SQRT_2)]
    pub sigma_p: f64,
    #[arg(long, default_value_t = 0.3)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.0)]
    pub center: f64,
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,
    /// Produce the coherent or free density by evolving its t_min state.
    #[arg(long)]
    pub from_propagator: bool,
    /// Complex field file whose first slice is the initial state.
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Potential for `propagate`: `harmonic`, `free` or a real field file.
    #[arg(long)]
    pub potential: Option<String>,
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long)]
    pub absorber_width: Option<f64>,
    /// Output path prefix; files are <prefix>.density.field and so on.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub density: PathBuf,
    #[command(flatten)]
    pub potential: PotentialArgs,
    #[command(flatten)]
    pub retrieval: RetrievalFlags,
    #[arg(long, short, default_value = "retrieved")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct VerifyArgs {
    /// Complex wavefunction file.
    #[arg(long)]
    pub psi: PathBuf,
    /// Reference phase (real) or wavefunction (complex) on the same grid.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Check the Schrödinger residual (needs --potential).
    #[arg(long)]
    pub schrodinger: bool,
    #[command(flatten)]
    pub potential: PotentialArgs,
    #[arg(long)]
    pub residual_tolerance: Option<f64>,
    /// Largest allowed aligned |ΔS|/ħ.
    #[arg(long)]
    pub phase_tolerance: Option<f64>,
    #[arg(long)]
    pub density_floor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FamilyArgs {
    /// coherent-width, coherent or breathing.
    #[arg(long)]
    pub family: String,
    /// Amplitude held fixed by the coherent-width family.
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    /// Override bounds as name=lower:upper (repeatable).
    #[arg(long = "bounds", allow_hyphen_values = true)]
    pub bounds: Vec<String>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub potential: PotentialArgs,
    #[command(flatten)]
    pub constants: ConstantArgs,
    #[command(flatten)]
    pub retrieval: RetrievalFlags,
    #[arg(long)]
    pub multistart: Option<usize>,
    /// Report file; stdout when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct ScanArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Parameter to vary.
    #[arg(long)]
    pub axis: String,
    /// Comma-separated values or min:max:count.
    #[arg(long, allow_hyphen_values = true)]
    pub values: String,
    /// Hold a parameter at name=value (repeatable).
    #[arg(long = "fix", allow_hyphen_values = true)]
    pub fix: Vec<String>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub potential: PotentialArgs,
    #[command(flatten)]
    pub constants: ConstantArgs,
    #[command(flatten)]
    pub retrieval: RetrievalFlags,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    pub files: Vec<PathBuf>,
    /// Retrieval report whose Θ(t) and f(t) tables are emitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    let config = match &cli.config {
        Some(path) => RunConfig::read(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Generate(a) => generate(a, config),
        Command::Retrieve(a) => cmd_retrieve(a, config),
        Command::Verify(a) => verify(a, config),
        Command::Calibrate(a) => cmd_calibrate(a, config),
        Command::Scan(a) => scan(a, config),
        Command::Plotdata(a) => plotdata(a),
    }
}

fn grid_from(args: &GridArgs) -> Result<SpacetimeGrid> {
    let (Some(x), Some(t)) = (&args.grid, &args.time) else {
        return Err(Error::InvalidParameter("--grid and --time are required".into()));
    };
    let (x0, x1, nx) = parse_axis(x)?;
    let (t0, t1, nt) = parse_axis(t)?;
    SpacetimeGrid::new(x0, x1, nx, t0, t1, nt)
}

fn constants_from(args: &ConstantArgs, config: &mut RunConfig) -> Result<PhysicalConstants> {
    if let Some(h) = args.hbar {
        config.hbar = h;
    }
    if let Some(m) = args.mass {
        config.mass = m;
    }
    config.constants()
}

fn apply_retrieval_flags(flags: &RetrievalFlags, config: &mut RunConfig) -> Result<()> {
    let r = &mut config.retrieval;
    if let Some(v) = flags.density_floor {
        r.density_floor = v;
    }
    if let Some(v) = &flags.theta_mode {
        r.theta_mode = parse_theta_mode(v)?;
    }
    if let Some(v) = &flags.reference {
        r.reference = parse_reference(v)?;
    }
    if let Some(v) = flags.hj_tolerance {
        r.hj_tolerance = v;
    }
    if let Some(v) = &flags.phase_anchor {
        r.phase_anchor = parse_phase_anchor(v)?;
    }
    r.validate()
}

fn potential_from(spec: Option<&str>, omega: f64, grid: &SpacetimeGrid, c: &PhysicalConstants) -> Result<Potential> {
    match spec {
        None => Err(Error::InvalidParameter("--potential is required".into())),
        Some("free") => Ok(Potential::Free),
        Some("harmonic") => Potential::harmonic(omega, c),
        Some(path) => {
            let file = FieldFile::read(Path::new(path))?;
            if file.grid() != grid {
                return Err(Error::GridMismatch);
            }
            Ok(Potential::Sampled(file.into_real()?))
        }
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_field(file: &FieldFile, path: &Path) -> Result<()> {
    file.write(path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn generate(a: GenerateArgs, mut config: RunConfig) -> Result<i32> {
    let c = constants_from(&a.constants, &mut config)?;
    if let Some(s) = a.substeps {
        config.propagator = PropagatorConfig::new(s, config.propagator.absorber_width())?;
    }
    if let Some(w) = a.absorber_width {
        config.propagator = PropagatorConfig::new(config.propagator.substeps_per_output(), w)?;
    }
    let prefix = a.output.clone().unwrap_or_else(|| {
        PathBuf::from(match a.source {
            Source::Coherent => "coherent",
            Source::Free => "free",
            Source::Breathing => "breathing",
            Source::Propagate => "propagated",
        })
    });

    let (density, phase, psi) = match a.source {
        Source::Propagate => {
            let path = a.initial.as_ref().ok_or_else(|| Error::InvalidParameter("propagate needs --initial".into()))?;
            let initial = FieldFile::read(path)?;
            let c = initial.constants;
            let start = initial.grid().initial_slice();
            let (t0, t1, nt) = parse_axis(
                a.grid.time.as_deref().ok_or_else(|| Error::InvalidParameter("--time is required".into()))?,
            )?;
            let grid = SpacetimeGrid::new(start.x_min(), start.x_max(), start.nx(), t0, t1, nt)?;
            let psi0 = initial.into_complex()?.slice(0).to_owned();
            let v = potential_from(a.potential.as_deref(), a.omega, &grid, &c)?;
            let run = propagate(&psi0, &v, &grid, &config.propagator, &c)?;
            report_propagation(&run.report);
            let density = density_of(&run.wavefunction)?;
            (FieldFile::real("density", density, c), None, Some(FieldFile::complex("psi", run.wavefunction, c)))
        }
        source => {
            let grid = grid_from(&a.grid)?;
            match source {
                Source::Coherent => {
                    let branch = if a.branch == BranchArg::Plus { Branch::Plus } else { Branch::Minus };
                    let spec = CoherentStateSpec::new(c, a.omega, a.b, branch)?;
                    let phase = FieldFile::real("phase", coherent_phase(&spec, &grid)?, c);
                    if a.from_propagator {
                        let psi0 = coherent_wavefunction(&spec, &grid.initial_slice())?.slice(0).to_owned();
                        let run = propagate(&psi0, &Potential::harmonic(a.omega, &c)?, &grid, &config.propagator, &c)?;
                        report_propagation(&run.report);
                        let density = density_of(&run.wavefunction)?;
                        (
                            FieldFile::real("density", density, c),
                            Some(phase),
                            Some(FieldFile::complex("psi", run.wavefunction, c)),
                        )
                    } else {
                        (FieldFile::real("density", coherent_density(&spec, &grid)?, c), Some(phase), None)
                    }
                }
                Source::Free => {
                    let spec = FreeGaussianSpec::new(c, a.mean_p, a.sigma_p)?;
                    let phase = FieldFile::real("phase", free_phase(&spec, &grid)?, c);
                    if a.from_propagator {
                        let psi0 = free_wavefunction(&spec, &grid.initial_slice())?.slice(0).to_owned();
                        let run = propagate(&psi0, &Potential::Free, &grid, &config.propagator, &c)?;
                        report_propagation(&run.report);
                        let density = density_of(&run.wavefunction)?;
                        (
                            FieldFile::real("density", density, c),
                            Some(phase),
                            Some(FieldFile::complex("psi", run.wavefunction, c)),
                        )
                    } else {
                        (FieldFile::real("density", free_density(&spec, &grid)?, c), Some(phase), None)
                    }
                }
                Source::Breathing => {
                    if a.from_propagator {
                        return Err(Error::InvalidParameter(
                            "the breathing density has no known wavefunction to propagate".into(),
                        ));
                    }
                    let spec = BreathingGaussianSpec::new(c, a.omega, a.center, a.width, a.eps)?;
                    (FieldFile::real("density", breathing_density(&spec, &grid)?, c), None, None)
                }
                Source::Propagate => unreachable!(),
            }
        }
    };

    if let FieldData::Real(p) = &density.data {
        if let Some(w) = coverage_warning(p, COVERAGE_RATIO) {
            eprintln!("warning: {w}");
        }
    }
    write_field(&density, &with_suffix(&prefix, ".density.field"))?;
    if let Some(phase) = phase {
        write_field(&phase, &with_suffix(&prefix, ".phase.field"))?;
    }
    if let Some(psi) = psi {
        write_field(&psi, &with_suffix(&prefix, ".psi.field"))?;
    }
    Ok(EXIT_OK)
}

fn report_propagation(r: &crate::schrodinger::PropagationReport) {
    eprintln!(
        "propagated {} substeps: norm drift {:.3e}, energy drift {:.3e}{}",
        r.substeps,
        r.norm_drift,
        r.energy_drift(),
        if r.absorber { " (absorber on)" } else { "" }
    );
}

fn cmd_retrieve(a: RetrieveArgs, mut config: RunConfig) -> Result<i32> {
    apply_retrieval_flags(&a.retrieval, &mut config)?;
    let file = FieldFile::read(&a.density)?;
    let c = file.constants;
    let grid = *file.grid();
    let density = file.into_real()?;
    let v = potential_from(a.potential.potential.as_deref(), a.potential.omega, &grid, &c)?.sample(&grid)?;
    let mut out = retrieve(&density, &v, &config.retrieval, &c)?;
    let (_, schrodinger) = schrodinger_residual(&out.wavefunction, &v, config.retrieval.density_floor, &c)?;
    out.report.schrodinger_residual_rel = Some(schrodinger);
    for w in &out.report.warnings {
        eprintln!("warning: {w}");
    }

    write_field(&FieldFile::real("phase", out.phase, c), &with_suffix(&a.output, ".phase.field"))?;
    write_field(&FieldFile::complex("psi", out.wavefunction, c), &with_suffix(&a.output, ".psi.field"))?;
    let report = retrieval_report(&out.report, &grid);
    let path = with_suffix(&a.output, ".report");
    report.write(&path)?;
    eprintln!("wrote {}", path.display());
    println!("verdict={}", out.report.verdict);
    println!("hj_residual_rel={:.6e}", out.report.hj_residual_rel);
    println!("schrodinger_residual_rel={schrodinger:.6e}");
    Ok(verdict_exit_code(out.report.verdict))
}

/// Largest |Δ − c| over `mask` for the best constant c, Δ being the phase
/// difference in radians, wrapped around its circular mean.
fn aligned_phase_error(psi: &ComplexField, reference: &[Complex64], trusted: &TrustedRegion) -> f64 {
    let (nt, nx) = psi.grid().shape();
    let mut diffs = Vec::new();
    for n in 0..nt {
        for i in 0..nx {
            if trusted.contains(n, i) {
                let z = psi.get(n, i) * reference[n * nx + i].conj();
                if z.norm() > 0.0 {
                    diffs.push(z.arg());
                }
            }
        }
    }
    if diffs.is_empty() {
        return 0.0;
    }
    let mean = diffs.iter().map(|d| Complex64::from_polar(1.0, *d)).sum::<Complex64>().arg();
    let wrap = |d: f64| Complex64::from_polar(1.0, d - mean).arg();
    let (lo, hi) = diffs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
        let w = wrap(*d);
        (lo.min(w), hi.max(w))
    });
    0.5 * (hi - lo)
}

fn verify(a: VerifyArgs, mut config: RunConfig) -> Result<i32> {
    if let Some(t) = a.residual_tolerance {
        config.residual_tolerance = t;
    }
    if let Some(t) = a.phase_tolerance {
        config.phase_tolerance = t;
    }
    if let Some(f) = a.density_floor {
        config.retrieval.density_floor = f;
    }
    config.retrieval.validate()?;
    if !a.schrodinger && a.reference.is_none() {
        return Err(Error::InvalidParameter("nothing to verify: pass --schrodinger and/or --reference".into()));
    }
    let file = FieldFile::read(&a.psi)?;
    let c = file.constants;
    let grid = *file.grid();
    let psi = file.into_complex()?;
    let mut passed = true;

    if a.schrodinger {
        let Some(spec) = a.potential.potential.as_deref() else {
            return Err(Error::InvalidParameter("--schrodinger needs --potential".into()));
        };
        let v = potential_from(Some(spec), a.potential.omega, &grid, &c)?.sample(&grid)?;
        let (_, rel) = schrodinger_residual(&psi, &v, config.retrieval.density_floor, &c)?;
        let ok = rel <= config.residual_tolerance;
        println!("schrodinger_residual_rel={rel:.6e}");
        println!("schrodinger_ok={ok}");
        passed &= ok;
    }
    if let Some(path) = &a.reference {
        let reference = FieldFile::read(path)?;
        if reference.grid() != &grid {
            return Err(Error::GridMismatch);
        }
        let hbar = c.hbar();
        let unit: Vec<Complex64> = match &reference.data {
            FieldData::Real(s) => s.values().iter().map(|v| Complex64::from_polar(1.0, v / hbar)).collect(),
            FieldData::Complex(z) => z.values().iter().copied().collect(),
        };
        let trusted = TrustedRegion::from_density(&density_of(&psi)?, config.retrieval.density_floor)?;
        let err = aligned_phase_error(&psi, &unit, &trusted);
        let ok = err <= config.phase_tolerance;
        println!("phase_error_max={err:.6e}");
        println!("phase_ok={ok}");
        passed &= ok;
    }
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn family_from(args: &FamilyArgs, omega: f64, c: &PhysicalConstants) -> Result<DensityFamily> {
    let mut family = DensityFamily::builtin(&args.family, omega, args.b, c)?;
    for spec in &args.bounds {
        let (name, range) = spec
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bounds must look like name=lower:upper, got {spec:?}")))?;
        let (lo, hi) = range
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("bounds must look like name=lower:upper, got {spec:?}")))?;
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad bound {s:?}")));
        family = family.with_bounds(name.trim(), parse(lo)?, parse(hi)?)?;
    }
    Ok(family)
}

fn format_params(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",")
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => {
            fs::write(path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs, mut config: RunConfig) -> Result<i32> {
    apply_retrieval_flags(&a.retrieval, &mut config)?;
    let c = constants_from(&a.constants, &mut config)?;
    if let Some(n) = a.multistart {
        config.n_multistart = n;
    }
    let grid = grid_from(&a.grid)?;
    let family = family_from(&a.family, a.potential.omega, &c)?;
    let v = potential_from(a.potential.potential.as_deref(), a.potential.omega, &grid, &c)?.sample(&grid)?;
    let result = calibrate(&family, &v, &config.retrieval, &c, config.n_multistart)?;

    let mut report = Report::new();
    report.push("family", family.name());
    report.push("params", result.param_names.join(","));
    report.push("n_optima", result.optima.len());
    for (k, o) in result.optima.iter().enumerate() {
        report.push(&format!("optimum_{k}_params"), format_params(&o.params));
        report.push_f64(&format!("optimum_{k}_objective"), o.objective);
        report.push(&format!("optimum_{k}_verdict"), o.verdict);
        report.push(&format!("optimum_{k}_converged"), o.converged);
    }
    let best = result.best();
    report.push("best_params", format_params(&best.params));
    report.push_f64("best_objective", best.objective);
    report.push("best_verdict", best.verdict);
    emit(&report.to_string(), a.output.as_deref())?;
    Ok(verdict_exit_code(best.verdict))
}

fn parse_values(text: &str) -> Result<Vec<f64>> {
    if text.contains(':') {
        let (lo, hi, count) = parse_axis(text)?;
        return Ok(match count {
            0 => vec![],
            1 => vec![lo],
            n => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
        });
    }
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| Error::Parse(format!("bad scan value {s:?}"))))
        .collect()
}

fn scan(a: ScanArgs, mut config: RunConfig) -> Result<i32> {
    apply_retrieval_flags(&a.retrieval, &mut config)?;
    let c = constants_from(&a.constants, &mut config)?;
    let grid = grid_from(&a.grid)?;
    let family = family_from(&a.family, a.potential.omega, &c)?;
    let values = parse_values(&a.values)?;
    let mut base = family.nominal().to_vec();
    for spec in &a.fix {
        let (name, value) =
            spec.split_once('=').ok_or_else(|| Error::Parse(format!("--fix must look like name=value, got {spec:?}")))?;
        let k = family.param_index(name.trim())?;
        base[k] = value.trim().parse().map_err(|_| Error::Parse(format!("bad value in --fix {spec:?}")))?;
    }
    let v = potential_from(a.potential.potential.as_deref(), a.potential.omega, &grid, &c)?.sample(&grid)?;
    let rows = scan_residual(&family, &v, &a.axis, &values, &base, &config.retrieval, &c)?;

    let mut text = String::new();
    let _ = writeln!(text, "# family={} axis={}", family.name(), a.axis);
    let _ = writeln!(text, "# value objective verdict");
    for (value, o) in rows {
        let verdict = o.verdict.map_or("degenerate", |v| v.as_str());
        let _ = writeln!(text, "{value:.16e} {:.16e} {verdict}", o.value);
    }
    emit(&text, a.output.as_deref())?;
    Ok(EXIT_OK)
}

fn push_blocks(text: &mut String, grid: &SpacetimeGrid, title: &str, value: impl Fn(usize, usize) -> f64) {
    for n in 0..grid.nt() {
        let _ = writeln!(text, "# {title} t={:.16e}", grid.t(n));
        for i in 0..grid.nx() {
            let _ = writeln!(text, "{:.16e} {:.16e}", grid.x(i), value(n, i));
        }
        text.push_str("\n\n");
    }
}

fn plotdata(a: PlotArgs) -> Result<i32> {
    if a.files.is_empty() && a.report.is_none() {
        return Err(Error::InvalidParameter("plotdata needs field files or --report".into()));
    }
    let mut text = String::new();
    for path in &a.files {
        let file = FieldFile::read(path)?;
        let grid = *file.grid();
        match &file.data {
            FieldData::Real(f) => push_blocks(&mut text, &grid, &file.name, |n, i| f.get(n, i)),
            FieldData::Complex(z) => {
                push_blocks(&mut text, &grid, &format!("{} modulus", file.name), |n, i| z.get(n, i).norm());
                push_blocks(&mut text, &grid, &format!("{} phase", file.name), |n, i| z.get(n, i).arg());
            }
        }
    }
    if let Some(path) = &a.report {
        let report = Report::read(path)?;
        let t = report.get_list("t")?;
        for key in ["theta", "gauge"] {
            let values = report.get_list(key)?;
            if values.len() != t.len() {
                return Err(Error::Parse(format!("report lists t and {key} differ in length")));
            }
            let _ = writeln!(text, "# t {key}");
            for (t, v) in t.iter().zip(&values) {
                let _ = writeln!(text, "{t:.16e} {v:.16e}");
            }
            text.push_str("\n\n");
        }
    }
    emit(&text, a.output.as_deref())?;
    Ok(EXIT_OK)
}
