use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bohm_phase::io::{FieldFile, Report};
use tempfile::TempDir;

const GRID: &str = "-8:8:161";
const TIME: &str = "0:6.283185307179586:161";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bohm-phase"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate_coherent(dir: &TempDir) -> PathBuf {
    let prefix = path(dir, "coh");
    let out = run(&["generate", "coherent", "--grid", GRID, "--time", TIME, "--output", s(&prefix)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    prefix
}

#[test]
fn coherent_round_trip_through_the_binary() {
    let dir = TempDir::new().unwrap();
    let prefix = generate_coherent(&dir);
    let density = format!("{}.density.field", s(&prefix));
    let ret = path(&dir, "ret");
    let out = run(&["retrieve", "--density", &density, "--potential", "harmonic", "--omega", "1", "--output", s(&ret)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict=compatible"));

    let report = Report::read(Path::new(&format!("{}.report", s(&ret)))).unwrap();
    assert_eq!(report.get("verdict"), Some("compatible"));
    assert!(report.get_f64("schrodinger_residual_rel").is_ok());

    let psi = format!("{}.psi.field", s(&ret));
    let phase = format!("{}.phase.field", s(&prefix));
    let out = run(&["verify", "--psi", &psi, "--reference", &phase]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("phase_ok=true"));
}

#[test]
fn breathing_density_exits_incompatible() {
    let dir = TempDir::new().unwrap();
    let prefix = path(&dir, "br");
    let out = run(&["generate", "breathing", "--eps", "0.3", "--grid", GRID, "--time", TIME, "--output", s(&prefix)]);
    assert_eq!(code(&out), 0);
    assert!(!path(&dir, "br.phase.field").exists());
    let density = format!("{}.density.field", s(&prefix));
    let out = run(&[
        "retrieve",
        "--density",
        &density,
        "--potential",
        "harmonic",
        "--output",
        s(&path(&dir, "ret")),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn too_few_time_slices_exits_2() {
    let dir = TempDir::new().unwrap();
    let prefix = path(&dir, "short");
    let out = run(&["generate", "coherent", "--grid", GRID, "--time", "0:1:2", "--output", s(&prefix)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let density = format!("{}.density.field", s(&prefix));
    let out = run(&["retrieve", "--density", &density, "--potential", "harmonic", "--output", s(&path(&dir, "r"))]);
    assert_eq!(code(&out), 2);
    assert!(!out.stderr.is_empty());
}

#[test]
fn verify_detects_mismatched_physics() {
    let dir = TempDir::new().unwrap();
    let prefix = path(&dir, "free");
    let out = run(&["generate", "free", "--grid", "-20:20:401", "--time", "0:2:161", "--output", s(&prefix)]);
    assert_eq!(code(&out), 0);
    // a retrieved free ψ is consistent with V = 0 but not with a harmonic well
    let density = format!("{}.density.field", s(&prefix));
    let ret = path(&dir, "ret");
    assert_eq!(code(&run(&["retrieve", "--density", &density, "--potential", "free", "--output", s(&ret)])), 0);
    let psi = format!("{}.psi.field", s(&ret));
    let ok = run(&["verify", "--psi", &psi, "--schrodinger", "--potential", "free", "--residual-tolerance", "0.05"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    let bad = run(&["verify", "--psi", &psi, "--schrodinger", "--potential", "harmonic"]);
    assert_eq!(code(&bad), 1, "{}", String::from_utf8_lossy(&bad.stdout));
    let missing = run(&["verify", "--psi", &psi, "--schrodinger"]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn verify_file_against_itself() {
    let dir = TempDir::new().unwrap();
    let prefix = generate_coherent(&dir);
    let density = format!("{}.density.field", s(&prefix));
    let ret = path(&dir, "ret");
    run(&["retrieve", "--density", &density, "--potential", "harmonic", "--output", s(&ret)]);
    let psi = format!("{}.psi.field", s(&ret));
    let out = run(&["verify", "--psi", &psi, "--reference", &psi, "--phase-tolerance", "0"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("phase_error_max=0.000000e0"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["retrieve", "--bogus"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "bad.conf");
    std::fs::write(&cfg, "no_such_key=1\n").unwrap();
    let out = run(&["--config", s(&cfg), "generate", "coherent", "--grid", GRID, "--time", TIME]);
    assert_eq!(code(&out), 2);
    let out = run(&["calibrate", "--family", "nonsense", "--grid", GRID, "--time", TIME, "--potential", "harmonic"]);
    assert_eq!(code(&out), 2);
    let out = run(&[
        "scan", "--family", "breathing", "--axis", "eps", "--values", "", "--grid", GRID, "--time", TIME,
        "--potential", "harmonic",
    ]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn config_values_apply_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let prefix = generate_coherent(&dir);
    let density = format!("{}.density.field", s(&prefix));
    let cfg = path(&dir, "run.conf");
    // residual ~8e-4 sits between this tolerance and five times it
    std::fs::write(&cfg, "# settings\nhj_tolerance=5e-4\n").unwrap();
    let out = run(&[
        "--config", s(&cfg), "retrieve", "--density", &density, "--potential", "harmonic", "--output",
        s(&path(&dir, "a")),
    ]);
    assert_eq!(code(&out), 4);
    let out = run(&[
        "--config", s(&cfg), "retrieve", "--density", &density, "--potential", "harmonic", "--hj-tolerance", "1e-2",
        "--output", s(&path(&dir, "b")),
    ]);
    assert_eq!(code(&out), 0);
}

#[test]
fn breathing_scan_is_monotone() {
    let out = run(&[
        "scan", "--family", "breathing", "--axis", "eps", "--values", "0,0.1,0.2,0.3", "--grid", "-8:8:121",
        "--time", "0:6.283185307179586:121", "--potential", "harmonic",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let objective: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(objective.len(), 4);
    assert!(objective.windows(2).all(|w| w[1] > w[0]), "{objective:?}");
}

#[test]
fn calibrate_reports_the_natural_width() {
    let dir = TempDir::new().unwrap();
    let report_path = path(&dir, "cal.report");
    let out = run(&[
        "calibrate", "--family", "coherent-width", "--grid", "-8:8:121", "--time", "0:6.283185307179586:121",
        "--potential", "harmonic", "--multistart", "3", "--output", s(&report_path),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = Report::read(&report_path).unwrap();
    let alpha = report.get_list("best_params").unwrap()[0];
    assert!((alpha - 1.0).abs() < 2e-2, "{alpha}");
    assert_eq!(report.get("best_verdict"), Some("compatible"));
}

#[test]
fn plotdata_blocks() {
    let dir = TempDir::new().unwrap();
    let prefix = path(&dir, "c");
    run(&["generate", "coherent", "--grid", "-8:8:16", "--time", "0:1:5", "--output", s(&prefix)]);
    let density = format!("{}.density.field", s(&prefix));
    let out = run(&["plotdata", &density]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let blocks: Vec<&str> = text.split("\n\n\n").filter(|b| !b.trim().is_empty()).collect();
    assert_eq!(blocks.len(), 5);
    assert_eq!(blocks[0].lines().filter(|l| !l.starts_with('#')).count(), 16);

    let ret = path(&dir, "r");
    run(&["retrieve", "--density", &density, "--potential", "harmonic", "--output", s(&ret)]);
    let psi = format!("{}.psi.field", s(&ret));
    let text = String::from_utf8(run(&["plotdata", &psi]).stdout).unwrap();
    assert_eq!(text.matches("modulus t=").count(), 5);
    assert_eq!(text.matches("phase t=").count(), 5);

    let report = format!("{}.report", s(&ret));
    let text = String::from_utf8(run(&["plotdata", "--report", &report]).stdout).unwrap();
    assert!(text.contains("# t theta") && text.contains("# t gauge"));
    assert_eq!(text.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).count(), 10);
}

#[test]
fn propagate_from_an_initial_file() {
    let dir = TempDir::new().unwrap();
    let prefix = path(&dir, "c");
    let out = run(&[
        "generate", "coherent", "--from-propagator", "--grid", "-8:8:128", "--time", "0:1:11", "--output",
        s(&prefix),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let psi = format!("{}.psi.field", s(&prefix));
    let again = path(&dir, "p");
    let out = run(&[
        "generate", "propagate", "--initial", &psi, "--potential", "harmonic", "--time", "0:1:11", "--output",
        s(&again),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let a = FieldFile::read(Path::new(&format!("{}.density.field", s(&prefix)))).unwrap();
    let b = FieldFile::read(Path::new(&format!("{}.density.field", s(&again)))).unwrap();
    assert_eq!(a, b);
}

#[test]
fn coverage_warning_goes_to_stderr() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "generate", "coherent", "--grid", "-2:2:41", "--time", "0:1:5", "--output", s(&path(&dir, "narrow")),
    ]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}
