//! Text formats: gridded field files, key=value reports and run configs.
//!
//! A field file is a header of `key=value` lines followed by one payload row
//! per time slice. Payload values are written with 17 significant digits so
//! a write/read round trip reproduces every f64 exactly.

use std::fmt::{self, Display, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, PhysicalConstants, ScalarField, SpacetimeGrid};
use crate::retrieval::{PhaseAnchor, ReferenceIndex, RetrievalOptions, RetrievalReport, ThetaMode};
use crate::schrodinger::PropagatorConfig;

pub const FORMAT_VERSION: u32 = 1;

const HEADER_KEYS: [&str; 11] =
    ["format_version", "kind", "name", "x_min", "x_max", "nx", "t_min", "t_max", "nt", "hbar", "mass"];

#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Real(ScalarField),
    Complex(ComplexField),
}

impl FieldData {
    pub fn grid(&self) -> &SpacetimeGrid {
        match self {
            FieldData::Real(f) => f.grid(),
            FieldData::Complex(f) => f.grid(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FieldData::Real(_) => "real",
            FieldData::Complex(_) => "complex",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub name: String,
    pub constants: PhysicalConstants,
    pub data: FieldData,
}

impl FieldFile {
    pub fn real(name: &str, field: ScalarField, constants: PhysicalConstants) -> Self {
        Self { name: name.to_string(), constants, data: FieldData::Real(field) }
    }

    pub fn complex(name: &str, field: ComplexField, constants: PhysicalConstants) -> Self {
        Self { name: name.to_string(), constants, data: FieldData::Complex(field) }
    }

    pub fn grid(&self) -> &SpacetimeGrid {
        self.data.grid()
    }

    pub fn into_real(self) -> Result<ScalarField> {
        match self.data {
            FieldData::Real(f) => Ok(f),
            FieldData::Complex(_) => Err(Error::Parse(format!("{}: expected a real field, found complex", self.name))),
        }
    }

    pub fn into_complex(self) -> Result<ComplexField> {
        match self.data {
            FieldData::Complex(f) => Ok(f),
            FieldData::Real(_) => Err(Error::Parse(format!("{}: expected a complex field, found real", self.name))),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut header = Vec::new();
        let mut first_row = None;
        for (no, line) in lines.by_ref() {
            match line.split_once('=') {
                Some((k, v)) => header.push((k.trim().to_string(), v.trim().to_string(), no + 1)),
                None => {
                    first_row = Some((no, line));
                    break;
                }
            }
        }
        let get = |key: &str| -> Result<&str> {
            header
                .iter()
                .find(|(k, _, _)| k == key)
                .map(|(_, v, _)| v.as_str())
                .ok_or_else(|| Error::Parse(format!("field header is missing {key}")))
        };
        if let Some((k, _, no)) = header.iter().find(|(k, _, _)| !HEADER_KEYS.contains(&k.as_str())) {
            return Err(Error::Parse(format!("line {no}: unknown header key {k:?}")));
        }
        let version: u32 = parse_value("format_version", get("format_version")?)?;
        if version != FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported format_version {version}")));
        }
        let grid = SpacetimeGrid::new(
            parse_value("x_min", get("x_min")?)?,
            parse_value("x_max", get("x_max")?)?,
            parse_value("nx", get("nx")?)?,
            parse_value("t_min", get("t_min")?)?,
            parse_value("t_max", get("t_max")?)?,
            parse_value("nt", get("nt")?)?,
        )?;
        let constants = PhysicalConstants::new(parse_value("hbar", get("hbar")?)?, parse_value("mass", get("mass")?)?)?;
        let name = get("name")?.to_string();
        let kind = get("kind")?;
        let width = match kind {
            "real" => grid.nx(),
            "complex" => 2 * grid.nx(),
            other => return Err(Error::Parse(format!("kind must be real or complex, got {other:?}"))),
        };

        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(grid.nt());
        for (no, line) in first_row.into_iter().chain(lines) {
            let row = line
                .split_whitespace()
                .map(|tok| {
                    let v: f64 = tok.parse().map_err(|_| Error::Parse(format!("line {}: bad number {tok:?}", no + 1)))?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::Parse(format!("line {}: non-finite value {tok:?}", no + 1)))
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != width {
                return Err(Error::Parse(format!(
                    "line {}: expected {width} values, found {}",
                    no + 1,
                    row.len()
                )));
            }
            rows.push(row);
        }
        if rows.len() != grid.nt() {
            return Err(Error::Parse(format!("expected {} payload rows, found {}", grid.nt(), rows.len())));
        }
        let data = if kind == "real" {
            FieldData::Real(ScalarField::new(grid, Array2::from_shape_fn(grid.shape(), |(n, i)| rows[n][i]))?)
        } else {
            FieldData::Complex(ComplexField::new(
                grid,
                Array2::from_shape_fn(grid.shape(), |(n, i)| Complex64::new(rows[n][2 * i], rows[n][2 * i + 1])),
            )?)
        };
        Ok(Self { name, constants, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_string())?;
        Ok(())
    }
}

impl Display for FieldFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = self.grid();
        writeln!(f, "format_version={FORMAT_VERSION}")?;
        writeln!(f, "kind={}", self.data.kind())?;
        writeln!(f, "name={}", self.name)?;
        writeln!(f, "x_min={}", g.x_min())?;
        writeln!(f, "x_max={}", g.x_max())?;
        writeln!(f, "nx={}", g.nx())?;
        writeln!(f, "t_min={}", g.t_min())?;
        writeln!(f, "t_max={}", g.t_max())?;
        writeln!(f, "nt={}", g.nt())?;
        writeln!(f, "hbar={}", self.constants.hbar())?;
        writeln!(f, "mass={}", self.constants.mass())?;
        let mut line = String::new();
        for n in 0..g.nt() {
            line.clear();
            match &self.data {
                FieldData::Real(field) => {
                    for v in field.slice(n) {
                        push_number(&mut line, *v);
                    }
                }
                FieldData::Complex(field) => {
                    for v in field.slice(n) {
                        push_number(&mut line, v.re);
                        push_number(&mut line, v.im);
                    }
                }
            }
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

fn push_number(line: &mut String, v: f64) {
    if !line.is_empty() {
        line.push(' ');
    }
    // 17 significant digits: one before the point, sixteen after
    let _ = write!(line, "{v:.16e}");
}

fn parse_value<T: FromStr>(key: &str, text: &str) -> Result<T> {
    text.trim().parse().map_err(|_| Error::Parse(format!("invalid value for {key}: {text:?}")))
}

/// An ordered key=value document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    /// Stores a number with 17 significant digits.
    pub fn push_f64(&mut self, key: &str, value: f64) {
        self.push(key, format_args!("{value:.16e}"));
    }

    /// Comma-separated numbers.
    pub fn push_list(&mut self, key: &str, values: &[f64]) {
        let text = values.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",");
        self.push(key, text);
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// The last value stored under `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let v = self.get(key).ok_or_else(|| Error::Parse(format!("report has no {key}")))?;
        parse_value(key, v)
    }

    pub fn get_list(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.get(key).ok_or_else(|| Error::Parse(format!("report has no {key}")))?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',').map(|s| parse_value(key, s)).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut report = Self::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value, got {line:?}", no + 1)))?;
            report.push(k.trim(), v.trim());
        }
        Ok(report)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_string())?;
        Ok(())
    }
}

impl Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// The key=value summary of a retrieval, including the per-slice Θ and f
/// tables used by `plotdata`.
pub fn retrieval_report(report: &RetrievalReport, grid: &SpacetimeGrid) -> Report {
    let mut out = Report::new();
    out.push("verdict", report.verdict);
    out.push_f64("hj_residual_rel", report.hj_residual_rel);
    out.push_f64("hjdiff_residual_rel", report.hjdiff_residual_rel);
    if let Some(r) = report.schrodinger_residual_rel {
        out.push_f64("schrodinger_residual_rel", r);
    }
    out.push_f64("trusted_mass_fraction", report.trusted_mass_fraction);
    out.push_f64("theta_max_abs", report.theta.max_abs());
    out.push_f64("theta_max_relative", report.theta.max_relative());
    out.push("theta_fell_back", report.theta.fell_back);
    out.push_f64("gauge_spread_max", report.gauge.max_spread());
    out.push_f64("gauge_spread_max_relative", report.gauge.max_relative_spread());
    out.push("warnings", report.warnings.len());
    out.push_list("t", &grid.ts());
    out.push_list("theta", &report.theta.values);
    out.push_list("gauge", &report.gauge.values);
    out.push_list("gauge_spread", &report.gauge.spread);
    out
}

/// Every tunable of retrieval, propagation, calibration and verification.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub retrieval: RetrievalOptions,
    pub propagator: PropagatorConfig,
    pub n_multistart: usize,
    pub residual_tolerance: f64,
    pub phase_tolerance: f64,
    pub hbar: f64,
    pub mass: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            retrieval: RetrievalOptions::default(),
            propagator: PropagatorConfig::default(),
            n_multistart: crate::calibration::DEFAULT_MULTISTART,
            residual_tolerance: 1e-2,
            phase_tolerance: 1e-2,
            hbar: 1.0,
            mass: 1.0,
        }
    }
}

pub const CONFIG_KEYS: [&str; 12] = [
    "density_floor",
    "theta_mode",
    "reference",
    "hj_tolerance",
    "phase_anchor",
    "substeps_per_output",
    "absorber_width",
    "n_multistart",
    "residual_tolerance",
    "phase_tolerance",
    "hbar",
    "mass",
];

impl RunConfig {
    /// Applies one key=value setting; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let r = &mut self.retrieval;
        match key {
            "density_floor" => r.density_floor = parse_value(key, value)?,
            "theta_mode" => r.theta_mode = parse_theta_mode(value)?,
            "reference" => r.reference = parse_reference(value)?,
            "hj_tolerance" => r.hj_tolerance = parse_value(key, value)?,
            "phase_anchor" => r.phase_anchor = parse_phase_anchor(value)?,
            "substeps_per_output" => {
                self.propagator = PropagatorConfig::new(parse_value(key, value)?, self.propagator.absorber_width())?
            }
            "absorber_width" => {
                self.propagator = PropagatorConfig::new(self.propagator.substeps_per_output(), parse_value(key, value)?)?
            }
            "n_multistart" => self.n_multistart = parse_value(key, value)?,
            "residual_tolerance" => self.residual_tolerance = parse_value(key, value)?,
            "phase_tolerance" => self.phase_tolerance = parse_value(key, value)?,
            "hbar" => self.hbar = parse_value(key, value)?,
            "mass" => self.mass = parse_value(key, value)?,
            other => return Err(Error::Parse(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in Report::parse(text)?.entries() {
            cfg.set(k, v)?;
        }
        cfg.retrieval.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn constants(&self) -> Result<PhysicalConstants> {
        PhysicalConstants::new(self.hbar, self.mass)
    }
}

pub fn parse_theta_mode(text: &str) -> Result<ThetaMode> {
    match text.trim() {
        "zero_flux" => Ok(ThetaMode::ZeroFlux),
        "residual_fit" => Ok(ThetaMode::ResidualFit),
        other => Err(Error::Parse(format!("theta_mode must be zero_flux or residual_fit, got {other:?}"))),
    }
}

/// `peak` or a node index.
pub fn parse_reference(text: &str) -> Result<ReferenceIndex> {
    match text.trim() {
        "peak" => Ok(ReferenceIndex::DensityPeak),
        other => other
            .parse()
            .map(ReferenceIndex::Fixed)
            .map_err(|_| Error::Parse(format!("reference must be peak or a node index, got {other:?}"))),
    }
}

/// `leftmost` or an x coordinate.
pub fn parse_phase_anchor(text: &str) -> Result<PhaseAnchor> {
    match text.trim() {
        "leftmost" => Ok(PhaseAnchor::LeftmostCommon),
        other => other
            .parse()
            .map(PhaseAnchor::Coordinate)
            .map_err(|_| Error::Parse(format!("phase_anchor must be leftmost or a coordinate, got {other:?}"))),
    }
}

/// `min:max:count`.
pub fn parse_axis(text: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!("expected min:max:count, got {text:?}")));
    }
    Ok((parse_value("min", parts[0])?, parse_value("max", parts[1])?, parse_value("count", parts[2])?))
}
