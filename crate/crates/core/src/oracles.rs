//! Closed-form densities, momenta, phases and wavefunctions for a spreading
//! free Gaussian, the harmonic-oscillator coherent states, and the
//! width-modulated ("breathing") Gaussian.
//!
//! Every phase uses the convention that its spatially constant part vanishes
//! at t = 0 and that its x-dependent part vanishes at x = 0.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, PhysicalConstants, ScalarField, SpacetimeGrid};

/// Tail-to-peak ratio below which a slice counts as fully covered.
pub const COVERAGE_RATIO: f64 = 1e-12;

/// Returns a human-readable warning if any slice of `density` is above
/// `ratio` times its peak at either spatial boundary.
pub fn coverage_warning(density: &ScalarField, ratio: f64) -> Option<String> {
    let nx = density.grid().nx();
    let worst = (0..density.grid().nt())
        .map(|n| {
            let row = density.slice(n);
            let peak = row.iter().fold(0.0f64, |m, v| m.max(*v));
            if peak > 0.0 {
                row[0].max(row[nx - 1]) / peak
            } else {
                0.0
            }
        })
        .fold(0.0f64, f64::max);
    (worst > ratio).then(|| {
        format!("grid does not cover the density: boundary/peak ratio {worst:.2e} exceeds {ratio:.0e}")
    })
}

/// D(t) = ħ²/(4Δp²) + (Δp/m)² t², the position variance of a free Gaussian.
#[derive(Debug, Clone, Copy)]
pub struct DiffusionTerm {
    initial: f64,
    rate: f64,
}

impl DiffusionTerm {
    pub fn eval(&self, t: f64) -> f64 {
        self.initial + self.rate * t * t
    }

    /// The lower bound D(0).
    pub fn min(&self) -> f64 {
        self.initial
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FreeGaussianSpec {
    pub constants: PhysicalConstants,
    pub mean_p: f64,
    pub sigma_p: f64,
}

impl FreeGaussianSpec {
    pub fn new(constants: PhysicalConstants, mean_p: f64, sigma_p: f64) -> Result<Self> {
        if !(sigma_p > 0.0 && sigma_p.is_finite()) || !mean_p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "free Gaussian needs finite mean_p and sigma_p > 0, got ({mean_p}, {sigma_p})"
            )));
        }
        Ok(Self { constants, mean_p, sigma_p })
    }

    pub fn diffusion(&self) -> DiffusionTerm {
        let (hbar, m, sp) = (self.constants.hbar(), self.constants.mass(), self.sigma_p);
        DiffusionTerm { initial: hbar * hbar / (4.0 * sp * sp), rate: (sp / m).powi(2) }
    }

    fn center(&self, t: f64) -> f64 {
        self.mean_p / self.constants.mass() * t
    }

    pub fn density_at(&self, x: f64, t: f64) -> f64 {
        let d = self.diffusion().eval(t);
        let u = x - self.center(t);
        (-u * u / (2.0 * d)).exp() / (2.0 * PI * d).sqrt()
    }

    pub fn momentum_at(&self, x: f64, t: f64) -> f64 {
        let (hbar, m, sp) = (self.constants.hbar(), self.constants.mass(), self.sigma_p);
        let d = self.diffusion().eval(t);
        (hbar * hbar * self.mean_p / (4.0 * sp * sp) + sp * sp / m * x * t) / d
    }

    /// The spatially constant part of the phase, zero at t = 0.
    pub fn gauge_at(&self, t: f64) -> f64 {
        let (hbar, m, sp) = (self.constants.hbar(), self.constants.mass(), self.sigma_p);
        let d = self.diffusion().eval(t);
        -hbar * hbar * self.mean_p * self.mean_p / (8.0 * m * sp * sp) * t / d
            - 0.5 * hbar * (2.0 * sp * sp * t / (hbar * m)).atan()
    }

    pub fn phase_at(&self, x: f64, t: f64) -> f64 {
        let (hbar, m, sp) = (self.constants.hbar(), self.constants.mass(), self.sigma_p);
        let d = self.diffusion().eval(t);
        (hbar * hbar * self.mean_p / (2.0 * sp * sp) * x + sp * sp / m * x * x * t) / (2.0 * d)
            + self.gauge_at(t)
    }

    /// V_B = V + U with V = 0.
    pub fn bohm_potential_at(&self, x: f64, t: f64) -> f64 {
        let (hbar, m) = (self.constants.hbar(), self.constants.mass());
        let d = self.diffusion().eval(t);
        let u = x - self.center(t);
        hbar * hbar / (4.0 * m * d) * (1.0 - u * u / (2.0 * d))
    }
}

pub fn free_density(spec: &FreeGaussianSpec, grid: &SpacetimeGrid) -> Result<ScalarField> {
    ScalarField::from_fn(*grid, |x, t| spec.density_at(x, t))
}

pub fn free_phase(spec: &FreeGaussianSpec, grid: &SpacetimeGrid) -> Result<ScalarField> {
    ScalarField::from_fn(*grid, |x, t| spec.phase_at(x, t))
}

pub fn free_momentum(spec: &FreeGaussianSpec, grid: &SpacetimeGrid) -> Result<ScalarField> {
    ScalarField::from_fn(*grid, |x, t| spec.momentum_at(x, t))
}

pub fn free_wavefunction(spec: &FreeGaussianSpec, grid: &SpacetimeGrid) -> Result<ComplexField> {
    let hbar = spec.constants.hbar();
    ComplexField::from_fn(*grid, |x, t| {
        Complex64::from_polar(spec.density_at(x, t).sqrt(), spec.phase_at(x, t) / hbar)
    })
}

/// Selects a = +√(mω/ħ) or a = −√(mω/ħ); the two branches are the coherent
/// states whose centers start at −b and +b respectively.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CoherentStateSpec {
    pub constants: PhysicalConstants,
    pub omega: f64,
    pub b: f64,
    pub branch: Branch,
}

impl CoherentStateSpec {
    pub fn new(constants: PhysicalConstants, omega: f64, b: f64, branch: Branch) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "coherent state needs omega > 0 and finite b, got ({omega}, {b})"
            )));
        }
        Ok(Self { constants, omega, b, branch })
    }

    /// a = ±√(mω/ħ).
    pub fn a(&self) -> f64 {
        self.branch.sign() * (self.constants.mass() * self.omega / self.constants.hbar()).sqrt()
    }

    fn signed_b(&self) -> f64 {
        self.branch.sign() * self.b
    }

    /// Range swept by the packet including six widths of tail on each side.
    pub fn swept_range(&self) -> (f64, f64) {
        let reach = self.b.abs() + 6.0 / self.a().abs();
        (-reach, reach)
    }

    pub fn density_at(&self, x: f64, t: f64) -> f64 {
        oscillating_gaussian_density(self.a().abs(), self.signed_b(), self.omega, x, t)
    }

    pub fn momentum_at(&self, _x: f64, t: f64) -> f64 {
        self.constants.mass() * self.omega * self.signed_b() * (self.omega * t).sin()
    }

    pub fn phase_at(&self, x: f64, t: f64) -> f64 {
        let (hbar, m, w) = (self.constants.hbar(), self.constants.mass(), self.omega);
        let a2 = m * w / hbar;
        m * w * self.signed_b() * x * (w * t).sin() + 0.25 * hbar * a2 * self.b * self.b * (2.0 * w * t).sin()
            - 0.5 * hbar * w * t
    }

    /// U = (ħa)²/2m · {1 − a²[x − x_c(t)]²}.
    pub fn quantum_potential_at(&self, x: f64, t: f64) -> f64 {
        let (hbar, m) = (self.constants.hbar(), self.constants.mass());
        let a2 = self.a() * self.a();
        let u = x + self.signed_b() * (self.omega * t).cos();
        hbar * hbar * a2 / (2.0 * m) * (1.0 - a2 * u * u)
    }

    pub fn potential_at(&self, x: f64) -> f64 {
        0.5 * self.constants.mass() * self.omega * self.omega * x * x
    }
}

/// (α/√π)·exp(−α²[x + b cos ωt]²), the rigid Gaussian the coherent states
/// share; `alpha` is left free for calibration.
pub fn oscillating_gaussian_density(alpha: f64, b: f64, omega: f64, x: f64, t: f64) -> f64 {
    let u = x + b * (omega * t).cos();
    alpha.abs() / PI.sqrt() * (-alpha * alpha * u * u).exp()
}

pub fn coherent_density(spec: &CoherentStateSpec, grid: &SpacetimeGrid) -> Result<ScalarField> {
    ScalarField::from_fn(*grid, |x, t| spec.density_at(x, t))
}

pub fn coherent_phase(spec: &CoherentStateSpec, grid: &SpacetimeGrid) -> Result<ScalarField> {
    ScalarField::from_fn(*grid, |x, t| spec.phase_at(x, t))
}

pub fn coherent_momentum(spec: &CoherentStateSpec, grid: &SpacetimeGrid) -> Result<ScalarField> {
    ScalarField::from_fn(*grid, |x, t| spec.momentum_at(x, t))
}

/// √P·e^{iS/ħ} built from the closed-form density and phase.
pub fn coherent_wavefunction(spec: &CoherentStateSpec, grid: &SpacetimeGrid) -> Result<ComplexField> {
    let hbar = spec.constants.hbar();
    ComplexField::from_fn(*grid, |x, t| {
        Complex64::from_polar(spec.density_at(x, t).sqrt(), spec.phase_at(x, t) / hbar)
    })
}

#[derive(Debug, Clone, Copy)]
pub struct BreathingGaussianSpec {
    pub constants: PhysicalConstants,
    pub omega: f64,
    pub center: f64,
    pub width: f64,
    pub eps: f64,
}

impl BreathingGaussianSpec {
    pub fn new(constants: PhysicalConstants, omega: f64, center: f64, width: f64, eps: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
        }
        if !(width > 0.0 && width.is_finite()) || !center.is_finite() {
            return Err(Error::InvalidParameter(format!("width must be positive, got {width}")));
        }
        if !(eps.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("|eps| must be below 1, got {eps}")));
        }
        Ok(Self { constants, omega, center, width, eps })
    }

    /// width·(1 + ε sin ωt).
    pub fn width_at(&self, t: f64) -> f64 {
        self.width * (1.0 + self.eps * (self.omega * t).sin())
    }

    pub fn density_at(&self, x: f64, t: f64) -> f64 {
        let w = self.width_at(t);
        let u = (x - self.center) / w;
        (-u * u).exp() / (PI.sqrt() * w)
    }

    /// The continuity solution with zero boundary current.
    pub fn momentum_at(&self, x: f64, t: f64) -> f64 {
        let s = 1.0 + self.eps * (self.omega * t).sin();
        self.constants.mass() * self.omega * self.eps * (self.omega * t).cos() / s * (x - self.center)
    }
}

pub fn breathing_density(spec: &BreathingGaussianSpec, grid: &SpacetimeGrid) -> Result<ScalarField> {
    ScalarField::from_fn(*grid, |x, t| spec.density_at(x, t))
}
