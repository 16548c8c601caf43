//! Split-step Fourier propagation of the Schrödinger equation and the
//! finite-difference Schrödinger residual of a candidate wavefunction.
//!
//! The propagator is deliberately unrelated to the retrieval stencils: it is
//! spectral in x and second-order (Strang) in t, so densities it produces are
//! independent test inputs for retrieval.

use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{d2_dx2, d_dt, trapezoid, ComplexField, PhysicalConstants, ScalarField, SpacetimeGrid};
use crate::potential::Potential;
use crate::retrieval::TrustedRegion;

/// Tolerated deviation of ∫|ψ|²dx from one, both for ψ0 and over the run.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// Fraction of the grid length added on each side before propagating.
pub const PADDING_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorConfig {
    substeps_per_output: usize,
    absorber_width: f64,
}

impl PropagatorConfig {
    /// `absorber_width` is measured as a fraction of the grid length and sits
    /// inside the padding, so it never touches stored nodes.
    pub fn new(substeps_per_output: usize, absorber_width: f64) -> Result<Self> {
        if substeps_per_output == 0 {
            return Err(Error::InvalidParameter("substeps_per_output must be at least 1".into()));
        }
        if !(0.0..=PADDING_FRACTION).contains(&absorber_width) {
            return Err(Error::InvalidParameter(format!(
                "absorber_width must lie in [0, {PADDING_FRACTION}], got {absorber_width}"
            )));
        }
        Ok(Self { substeps_per_output, absorber_width })
    }

    pub fn substeps_per_output(&self) -> usize {
        self.substeps_per_output
    }

    pub fn absorber_width(&self) -> f64 {
        self.absorber_width
    }
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self { substeps_per_output: 64, absorber_width: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationReport {
    /// ∫|ψ|²dx over the stored grid, per slice.
    pub norms: Vec<f64>,
    /// ⟨ψ|H|ψ⟩ on the padded domain, per slice, with V at the slice time.
    pub energies: Vec<f64>,
    /// Largest change of the padded-domain norm relative to its start.
    pub norm_drift: f64,
    pub substeps: usize,
    pub absorber: bool,
}

impl PropagationReport {
    /// Largest |E(t) − E(t_min)| / max(|E(t_min)|, tiny).
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energies.first().copied().unwrap_or(0.0);
        let scale = e0.abs().max(f64::MIN_POSITIVE);
        self.energies.iter().map(|e| (e - e0).abs() / scale).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct Propagation {
    pub wavefunction: ComplexField,
    pub report: PropagationReport,
}

struct Padded {
    pad: usize,
    n: usize,
    xs: Vec<f64>,
    k2: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Padded {
    fn new(grid: &SpacetimeGrid) -> Self {
        let nx = grid.nx();
        let dx = grid.dx();
        let pad = (PADDING_FRACTION * (nx - 1) as f64).ceil() as usize;
        let n = nx + 2 * pad;
        let xs = (0..n).map(|j| grid.x_min() + (j as f64 - pad as f64) * dx).collect();
        let length = n as f64 * dx;
        let k2 = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                (2.0 * PI * m / length).powi(2)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch = vec![Complex64::default(); forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];
        Self { pad, n, xs, k2, forward, inverse, scratch }
    }

    fn kinetic(&mut self, psi: &mut [Complex64], phases: &[Complex64]) {
        self.forward.process_with_scratch(psi, &mut self.scratch);
        let norm = 1.0 / self.n as f64;
        psi.iter_mut().zip(phases).for_each(|(v, p)| *v *= p * norm);
        self.inverse.process_with_scratch(psi, &mut self.scratch);
    }

    fn energy(&mut self, psi: &[Complex64], v: &[f64], dx: f64, c: &PhysicalConstants) -> f64 {
        let mut spectrum = psi.to_vec();
        self.forward.process_with_scratch(&mut spectrum, &mut self.scratch);
        let kinetic_coeff = c.hbar().powi(2) / (2.0 * c.mass());
        let kinetic: f64 = spectrum.iter().zip(&self.k2).map(|(a, k2)| kinetic_coeff * k2 * a.norm_sqr()).sum();
        let potential: f64 = psi.iter().zip(v).map(|(a, v)| v * a.norm_sqr()).sum();
        dx * (kinetic / self.n as f64 + potential)
    }
}

fn absorber_mask(n: usize, width_nodes: usize) -> Vec<f64> {
    let mut mask = vec![1.0; n];
    if width_nodes == 0 {
        return mask;
    }
    let w = width_nodes as f64;
    for j in 0..width_nodes.min(n / 2) {
        // zero at the outermost node, one at the inner edge of the zone
        let value = (FRAC_PI_2 * (w - j as f64) / w).cos().max(0.0).powf(0.125);
        mask[j] = value;
        mask[n - 1 - j] = value;
    }
    mask
}

/// Propagates `psi0` (values at t_min on the grid's x nodes) through every
/// stored slice of `grid`.
///
/// Each output interval is split into `substeps_per_output` Strang steps:
/// half a kinetic step in k-space, a full potential step with V at the
/// substep midpoint, and another half kinetic step. The grid is padded by
/// [`PADDING_FRACTION`] of its length on each side and treated as periodic;
/// stored slices are cropped back to the grid.
pub fn propagate(
    psi0: &Array1<Complex64>,
    potential: &Potential,
    grid: &SpacetimeGrid,
    cfg: &PropagatorConfig,
    c: &PhysicalConstants,
) -> Result<Propagation> {
    let (nt, nx) = grid.shape();
    if psi0.len() != nx {
        return Err(Error::ShapeMismatch { expected: (1, nx), found: (1, psi0.len()) });
    }
    if let Some(i) = psi0.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::NonFinite { time: 0, space: i });
    }
    let dx = grid.dx();
    let initial_norm = trapezoid(&psi0.iter().map(|v| v.norm_sqr()).collect::<Vec<_>>(), dx);
    if (initial_norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::InvalidParameter(format!(
            "initial wavefunction must be normalized within {NORM_TOLERANCE:.0e}, got norm {initial_norm:.9}"
        )));
    }

    let (hbar, m) = (c.hbar(), c.mass());
    let mut padded = Padded::new(grid);
    let (pad, n) = (padded.pad, padded.n);
    let mut psi = vec![Complex64::default(); n];
    psi[pad..pad + nx].iter_mut().zip(psi0.iter()).for_each(|(d, s)| *d = *s);

    let h = if nt > 1 { grid.dt() / cfg.substeps_per_output as f64 } else { 0.0 };
    let half_kinetic: Vec<Complex64> = padded
        .k2
        .iter()
        .map(|k2| Complex64::from_polar(1.0, -hbar * k2 * h / (4.0 * m)))
        .collect();
    let mask = absorber_mask(n, (cfg.absorber_width * (nx - 1) as f64).round() as usize);
    let absorbing = cfg.absorber_width > 0.0;
    let static_v = potential.is_time_independent();
    let xs = padded.xs.clone();
    let sample_v = |t: f64| -> Vec<f64> { xs.iter().map(|x| potential.eval(*x, t)).collect() };
    let potential_phase = |v: &[f64]| -> Vec<Complex64> {
        v.iter().map(|v| Complex64::from_polar(1.0, -v * h / hbar)).collect()
    };
    let fixed_phase = static_v.then(|| potential_phase(&sample_v(grid.t_min())));

    let padded_norm = |psi: &[Complex64]| dx * psi.iter().map(|v| v.norm_sqr()).sum::<f64>();
    let start_norm = padded_norm(&psi);
    let mut values = Array2::zeros((nt, nx));
    let mut norms = Vec::with_capacity(nt);
    let mut energies = Vec::with_capacity(nt);
    let mut drift = 0.0f64;
    let mut record = |n_out: usize, psi: &[Complex64], padded: &mut Padded| {
        let row = &psi[pad..pad + nx];
        values.row_mut(n_out).iter_mut().zip(row).for_each(|(d, s)| *d = *s);
        norms.push(trapezoid(&row.iter().map(|v| v.norm_sqr()).collect::<Vec<_>>(), dx));
        energies.push(padded.energy(psi, &sample_v(grid.t(n_out)), dx, c));
    };
    record(0, &psi, &mut padded);

    for n_out in 1..nt {
        let t0 = grid.t(n_out - 1);
        for s in 0..cfg.substeps_per_output {
            padded.kinetic(&mut psi, &half_kinetic);
            let owned;
            let phase = match &fixed_phase {
                Some(p) => p,
                None => {
                    owned = potential_phase(&sample_v(t0 + (s as f64 + 0.5) * h));
                    &owned
                }
            };
            psi.iter_mut().zip(phase).for_each(|(v, p)| *v *= p);
            padded.kinetic(&mut psi, &half_kinetic);
            if absorbing {
                psi.iter_mut().zip(&mask).for_each(|(v, w)| *v *= w);
            }
        }
        drift = drift.max((padded_norm(&psi) - start_norm).abs() / start_norm);
        record(n_out, &psi, &mut padded);
    }

    if !absorbing && drift > NORM_TOLERANCE {
        return Err(Error::NormDrift { drift, limit: NORM_TOLERANCE });
    }
    Ok(Propagation {
        wavefunction: ComplexField::new(*grid, values)?,
        report: PropagationReport {
            norms,
            energies,
            norm_drift: drift,
            substeps: (nt.saturating_sub(1)) * cfg.substeps_per_output,
            absorber: absorbing,
        },
    })
}

/// |ψ|² nodewise.
pub fn density_of(psi: &ComplexField) -> Result<ScalarField> {
    psi.map(|v| v.norm_sqr())
}

/// Pointwise magnitude of iħ∂tψ + (ħ²/2m)∂²ψ − Vψ and its L2 norm over the
/// trusted interior of |ψ|², relative to the L2 norm of (ħ²/2m)∂²ψ there.
pub fn schrodinger_residual(
    psi: &ComplexField,
    potential: &ScalarField,
    density_floor: f64,
    c: &PhysicalConstants,
) -> Result<(ScalarField, f64)> {
    psi.ensure_same_grid(potential)?;
    let trusted = TrustedRegion::from_density(&density_of(psi)?, density_floor)?;
    let psi_t = d_dt(psi)?;
    let psi_xx = d2_dx2(psi)?;
    let i_hbar = Complex64::new(0.0, c.hbar());
    let kinetic = c.hbar().powi(2) / (2.0 * c.mass());
    let shape = psi.grid().shape();
    let residual = Array2::from_shape_fn(shape, |(n, i)| {
        (i_hbar * psi_t.get(n, i) + psi_xx.get(n, i) * kinetic - psi.get(n, i) * potential.get(n, i)).norm()
    });
    let scale = Array2::from_shape_fn(shape, |(n, i)| kinetic * psi_xx.get(n, i).norm());
    let den = trusted.masked_l2(&scale);
    let num = trusted.masked_l2(&residual);
    let rel = if den > 0.0 { num / den } else if num == 0.0 { 0.0 } else { f64::INFINITY };
    Ok((ScalarField::new(*psi.grid(), residual)?, rel))
}
