//! Fitting free parameters of a density family so that a phase satisfying
//! the Hamilton-Jacobi equation exists for a given potential.

pub mod simplex;

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{PhysicalConstants, ScalarField, SpacetimeGrid};
use crate::oracles::{oscillating_gaussian_density, BreathingGaussianSpec};
use crate::retrieval::{retrieve, RetrievalOptions, ThetaMode, Verdict, MIN_TRUSTED_MASS};
use simplex::{halton_points, minimize, SimplexSettings};

/// Objective assigned to parameter points whose density cannot be retrieved.
pub const DEGENERATE_OBJECTIVE: f64 = 1e6;

pub const DEFAULT_MULTISTART: usize = 8;

/// Optima closer than this fraction of the bound range are merged.
pub const DEDUP_DISTANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl Parameter {
    pub fn new(name: &str, lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidParameter(format!(
                "bounds for {name} must be finite with lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { name: name.to_string(), lower, upper })
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }
}

type Generator = Box<dyn Fn(&[f64], &SpacetimeGrid) -> Result<ScalarField> + Send + Sync>;

/// A density P(x,t; params) with box bounds on its parameters.
pub struct DensityFamily {
    name: String,
    params: Vec<Parameter>,
    /// Values used for parameters a scan holds fixed.
    nominal: Vec<f64>,
    generator: Generator,
}

impl fmt::Debug for DensityFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityFamily").field("name", &self.name).field("params", &self.params).finish()
    }
}

impl DensityFamily {
    pub fn new(
        name: &str,
        params: Vec<Parameter>,
        generator: impl Fn(&[f64], &SpacetimeGrid) -> Result<ScalarField> + Send + Sync + 'static,
    ) -> Result<Self> {
        if params.is_empty() || params.len() > 8 {
            return Err(Error::InvalidParameter(format!(
                "a family needs between 1 and 8 parameters, got {}",
                params.len()
            )));
        }
        let nominal = params.iter().map(|p| 0.5 * (p.lower + p.upper)).collect();
        Ok(Self { name: name.to_string(), params, nominal, generator: Box::new(generator) })
    }

    /// (α/√π)·exp(−α²[x + b cos ωt]²) with the width α free and b fixed.
    pub fn coherent_width(omega: f64, b: f64, c: &PhysicalConstants) -> Result<Self> {
        let a = natural_width(omega, c)?;
        Self::new("coherent-width", vec![Parameter::new("alpha", 0.2 * a, 5.0 * a)?], move |p, g| {
            ScalarField::from_fn(*g, |x, t| oscillating_gaussian_density(p[0], b, omega, x, t))
        })?
        .with_nominal(&[a])
    }

    /// The same Gaussian with both the width α and the amplitude b free.
    pub fn coherent(omega: f64, c: &PhysicalConstants) -> Result<Self> {
        let a = natural_width(omega, c)?;
        Self::new(
            "coherent",
            vec![Parameter::new("alpha", 0.2 * a, 5.0 * a)?, Parameter::new("b", -2.0, 2.0)?],
            move |p, g| ScalarField::from_fn(*g, |x, t| oscillating_gaussian_density(p[0], p[1], omega, x, t)),
        )?
        .with_nominal(&[a, 1.0])
    }

    /// Centered Gaussian of width √(ħ/mω)·(1 + ε sin ωt) with ε free.
    pub fn breathing(omega: f64, c: &PhysicalConstants) -> Result<Self> {
        let width = 1.0 / natural_width(omega, c)?;
        let c = *c;
        Self::new("breathing", vec![Parameter::new("eps", 0.0, 0.9)?], move |p, g| {
            let spec = BreathingGaussianSpec::new(c, omega, 0.0, width, p[0])?;
            ScalarField::from_fn(*g, |x, t| spec.density_at(x, t))
        })?
        .with_nominal(&[0.0])
    }

    /// Looks up one of the built-in families by name.
    pub fn builtin(name: &str, omega: f64, b: f64, c: &PhysicalConstants) -> Result<Self> {
        match name {
            "coherent-width" => Self::coherent_width(omega, b, c),
            "coherent" => Self::coherent(omega, c),
            "breathing" => Self::breathing(omega, c),
            other => Err(Error::InvalidParameter(format!(
                "unknown family {other:?} (expected coherent-width, coherent or breathing)"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn param_index(&self, name: &str) -> Result<usize> {
        self.params
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::InvalidParameter(format!("family {} has no parameter {name:?}", self.name)))
    }

    /// Replaces the bounds of one parameter.
    pub fn with_bounds(mut self, name: &str, lower: f64, upper: f64) -> Result<Self> {
        let i = self.param_index(name)?;
        self.params[i] = Parameter::new(name, lower, upper)?;
        self.nominal[i] = self.nominal[i].clamp(lower, upper);
        Ok(self)
    }

    pub fn nominal(&self) -> &[f64] {
        &self.nominal
    }

    pub fn with_nominal(mut self, values: &[f64]) -> Result<Self> {
        self.check(values)?;
        self.nominal = values.to_vec();
        Ok(self)
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        self.params.iter().map(|p| (p.lower, p.upper)).collect()
    }

    fn check(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::InvalidParameter(format!(
                "family {} takes {} parameters, got {}",
                self.name,
                self.params.len(),
                values.len()
            )));
        }
        for (v, p) in values.iter().zip(&self.params) {
            if !(p.lower..=p.upper).contains(v) {
                return Err(Error::InvalidParameter(format!(
                    "{} = {v} outside [{}, {}]",
                    p.name, p.lower, p.upper
                )));
            }
        }
        Ok(())
    }

    pub fn generate(&self, values: &[f64], grid: &SpacetimeGrid) -> Result<ScalarField> {
        self.check(values)?;
        (self.generator)(values, grid)
    }
}

fn natural_width(omega: f64, c: &PhysicalConstants) -> Result<f64> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
    }
    Ok((c.mass() * omega / c.hbar()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    /// hj_residual_rel, or [`DEGENERATE_OBJECTIVE`].
    pub value: f64,
    pub degenerate: bool,
    /// None for degenerate points.
    pub verdict: Option<Verdict>,
}

/// Relative Hamilton-Jacobi residual of the zero-flux retrieval of the
/// family member at `values`.
///
/// Densities whose trusted region cannot be formed or holds less than half
/// the probability score [`DEGENERATE_OBJECTIVE`] and are flagged.
pub fn objective(
    family: &DensityFamily,
    values: &[f64],
    potential: &ScalarField,
    opts: &RetrievalOptions,
    c: &PhysicalConstants,
) -> Result<ObjectiveValue> {
    let degenerate = ObjectiveValue { value: DEGENERATE_OBJECTIVE, degenerate: true, verdict: None };
    let density = family.generate(values, potential.grid())?;
    let opts = RetrievalOptions { theta_mode: ThetaMode::ZeroFlux, ..*opts };
    match retrieve(&density, potential, &opts, c) {
        Ok(r) if r.report.trusted_mass_fraction < MIN_TRUSTED_MASS => Ok(degenerate),
        Ok(r) => Ok(ObjectiveValue { value: r.report.hj_residual_rel, degenerate: false, verdict: Some(r.report.verdict) }),
        Err(
            Error::EmptyTrustedRegion(_)
            | Error::DisconnectedTrustedRegion(_)
            | Error::NoCommonTrustedNode
            | Error::NonFinite { .. },
        ) => Ok(degenerate),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub params: Vec<f64>,
    pub objective: f64,
    pub verdict: Verdict,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub param_names: Vec<String>,
    /// Distinct optima, ascending by objective then parameters.
    pub optima: Vec<Optimum>,
}

impl CalibrationResult {
    pub fn best(&self) -> &Optimum {
        &self.optima[0]
    }
}

/// Multistart bounded simplex search of [`objective`].
///
/// Starts are the first `n_multistart` Halton points of the parameter box.
/// Converged points within [`DEDUP_DISTANCE`] of the bound range of a better
/// one are merged; degenerate end points are dropped.
pub fn calibrate(
    family: &DensityFamily,
    potential: &ScalarField,
    opts: &RetrievalOptions,
    c: &PhysicalConstants,
    n_multistart: usize,
) -> Result<CalibrationResult> {
    if n_multistart == 0 {
        return Err(Error::InvalidParameter("n_multistart must be at least 1".into()));
    }
    opts.validate()?;
    let bounds = family.bounds();
    let mut found = Vec::new();
    for start in halton_points(n_multistart, &bounds) {
        let mut failure = None;
        let outcome = minimize(
            |p| match objective(family, p, potential, opts, c) {
                Ok(v) => v.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            },
            &start,
            &bounds,
            SimplexSettings::default(),
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let at = objective(family, &outcome.point, potential, opts, c)?;
        if let (false, Some(verdict)) = (at.degenerate, at.verdict) {
            found.push(Optimum {
                params: outcome.point,
                objective: at.value,
                verdict,
                iterations: outcome.iterations,
                converged: outcome.converged,
            });
        }
    }
    if found.is_empty() {
        return Err(Error::FamilyIncompatible);
    }
    found.sort_by(|a, b| {
        a.objective.total_cmp(&b.objective).then_with(|| {
            a.params
                .iter()
                .zip(&b.params)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let ranges: Vec<f64> = family.params.iter().map(Parameter::range).collect();
    let mut optima: Vec<Optimum> = Vec::new();
    for cand in found {
        let duplicate = optima.iter().any(|kept| {
            let d2: f64 = kept
                .params
                .iter()
                .zip(&cand.params)
                .zip(&ranges)
                .map(|((a, b), r)| ((a - b) / r).powi(2))
                .sum();
            d2.sqrt() < DEDUP_DISTANCE
        });
        if !duplicate {
            optima.push(cand);
        }
    }
    Ok(CalibrationResult { param_names: family.params.iter().map(|p| p.name.clone()).collect(), optima })
}

/// Objective along one parameter axis, the others held at `base`.
pub fn scan_residual(
    family: &DensityFamily,
    potential: &ScalarField,
    axis: &str,
    values: &[f64],
    base: &[f64],
    opts: &RetrievalOptions,
    c: &PhysicalConstants,
) -> Result<Vec<(f64, ObjectiveValue)>> {
    let k = family.param_index(axis)?;
    if values.is_empty() {
        return Err(Error::InvalidParameter("scan needs at least one value".into()));
    }
    family.check(base)?;
    let mut point = base.to_vec();
    values
        .iter()
        .map(|&v| {
            point[k] = v;
            Ok((v, objective(family, &point, potential, opts, c)?))
        })
        .collect()
}
