//! Phase retrieval from a density history and a potential.
//!
//! The pipeline solves the continuity equation for the canonical momentum
//! p(x,t), forms the Bohm potential V_B = V + U, optionally fits the free
//! coefficient Θ(t) of the continuity equation's homogeneous solution against
//! the spatially differentiated Hamilton-Jacobi equation, integrates p into
//! the phase S(x,t), fixes the gauge f(t) from the Hamilton-Jacobi equation,
//! and reports how well the result satisfies it.
//!
//! All divisions by the density are restricted to the *trusted region*, the
//! nodes whose density is at least `density_floor` times the slice maximum.
//! Spatial and temporal derivatives of the density are taken on ln P, which
//! keeps the relative stencil error bounded in the Gaussian tails.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{
    cumulative_integral_t, cumulative_integral_x, d2_dx2, d_dt, d_dx, trapezoid, ComplexField,
    PhysicalConstants, ScalarField,
};

/// Relative normalization error tolerated before a density is rescaled.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Minimum fraction of probability mass the trusted region must hold in every
/// slice for a verdict other than inconclusive.
pub const MIN_TRUSTED_MASS: f64 = 0.5;

/// Residuals above this multiple of `hj_tolerance` are declared incompatible.
pub const INCOMPATIBLE_MARGIN: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThetaMode {
    /// Θ ≡ 0: no probability current enters from outside the grid.
    #[default]
    ZeroFlux,
    /// Θ(t) chosen by least squares against the differentiated
    /// Hamilton-Jacobi residual.
    ResidualFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ReferenceIndex {
    /// Per-slice argmax of the density, ties to the smaller index.
    #[default]
    DensityPeak,
    Fixed(usize),
}

/// Where the spatial integral of p is anchored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseAnchor {
    /// The node nearest this coordinate; falls back to the leftmost node
    /// trusted in every slice when that node is not.
    Coordinate(f64),
    LeftmostCommon,
}

impl Default for PhaseAnchor {
    fn default() -> Self {
        PhaseAnchor::Coordinate(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalOptions {
    pub density_floor: f64,
    pub theta_mode: ThetaMode,
    pub reference: ReferenceIndex,
    pub hj_tolerance: f64,
    pub phase_anchor: PhaseAnchor,
}

impl Default for RetrievalOptions {
    fn default() -> Self {
        Self {
            density_floor: 1e-10,
            theta_mode: ThetaMode::ZeroFlux,
            reference: ReferenceIndex::DensityPeak,
            hj_tolerance: 1e-2,
            phase_anchor: PhaseAnchor::default(),
        }
    }
}

impl RetrievalOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.density_floor > 0.0 && self.density_floor < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "density_floor must lie in (0, 1), got {}",
                self.density_floor
            )));
        }
        if !(self.hj_tolerance > 0.0 && self.hj_tolerance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "hj_tolerance must be positive, got {}",
                self.hj_tolerance
            )));
        }
        Ok(())
    }
}

/// Nodes where the density may be divided by.
#[derive(Debug, Clone)]
pub struct TrustedRegion {
    floor: f64,
    bounds: Vec<(usize, usize)>,
    peaks: Vec<usize>,
    interior: Array2<bool>,
    mass_fraction: Vec<f64>,
}

impl TrustedRegion {
    /// Per slice, the nodes with P ≥ floor·max P. The set must be a single
    /// interval.
    pub fn from_density(density: &ScalarField, floor: f64) -> Result<Self> {
        let grid = density.grid();
        let (nt, nx) = grid.shape();
        let dx = grid.dx();
        let mut bounds = Vec::with_capacity(nt);
        let mut peaks = Vec::with_capacity(nt);
        let mut mass_fraction = Vec::with_capacity(nt);
        for n in 0..nt {
            let row = density.slice(n);
            if let Some(i) = row.iter().position(|v| *v < 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "negative density at time index {n}, space index {i}"
                )));
            }
            let mut peak = 0;
            for i in 1..nx {
                if row[i] > row[peak] {
                    peak = i;
                }
            }
            let max = row[peak];
            if max <= 0.0 {
                return Err(Error::EmptyTrustedRegion(n));
            }
            let threshold = floor * max;
            let lo = row.iter().position(|v| *v >= threshold).unwrap_or(peak);
            let hi = row.iter().rposition(|v| *v >= threshold).unwrap_or(peak);
            if row.iter().skip(lo).take(hi - lo + 1).any(|v| *v < threshold) {
                return Err(Error::DisconnectedTrustedRegion(n));
            }
            let row = row.to_vec();
            let total = trapezoid(&row, dx);
            let inside = trapezoid(&row[lo..=hi], dx);
            bounds.push((lo, hi));
            peaks.push(peak);
            mass_fraction.push(if total > 0.0 { inside / total } else { 0.0 });
        }

        let trusted = |n: usize, i: usize| {
            let (lo, hi) = bounds[n];
            lo <= i && i <= hi
        };
        let time_neighbors = |n: usize| -> Vec<usize> {
            match nt {
                1 => vec![],
                2 => vec![1 - n],
                _ if n == 0 => vec![1, 2],
                _ if n == nt - 1 => vec![nt - 2, nt - 3],
                _ => vec![n - 1, n + 1],
            }
        };
        let interior = Array2::from_shape_fn((nt, nx), |(n, i)| {
            i > 0
                && i + 1 < nx
                && trusted(n, i - 1)
                && trusted(n, i)
                && trusted(n, i + 1)
                && time_neighbors(n).into_iter().all(|m| trusted(m, i))
        });
        Ok(Self { floor, bounds, peaks, interior, mass_fraction })
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Inclusive index range of slice `n`.
    pub fn bounds(&self, n: usize) -> (usize, usize) {
        self.bounds[n]
    }

    pub fn contains(&self, n: usize, i: usize) -> bool {
        let (lo, hi) = self.bounds[n];
        lo <= i && i <= hi
    }

    pub fn peak(&self, n: usize) -> usize {
        self.peaks[n]
    }

    /// Trusted nodes whose spatial and temporal stencil neighbors are also
    /// trusted; residual norms and fits use only these.
    pub fn interior(&self) -> &Array2<bool> {
        &self.interior
    }

    pub fn mass_fraction(&self) -> &[f64] {
        &self.mass_fraction
    }

    pub fn min_mass_fraction(&self) -> f64 {
        self.mass_fraction.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Index range trusted in every slice, if any.
    pub fn common_span(&self) -> Option<(usize, usize)> {
        let lo = self.bounds.iter().map(|b| b.0).max()?;
        let hi = self.bounds.iter().map(|b| b.1).min()?;
        (lo <= hi).then_some((lo, hi))
    }

    pub fn reference_nodes(&self, reference: ReferenceIndex) -> Result<Vec<usize>> {
        match reference {
            ReferenceIndex::DensityPeak => Ok(self.peaks.clone()),
            ReferenceIndex::Fixed(index) => {
                if let Some(n) = (0..self.bounds.len()).find(|&n| !self.contains(n, index)) {
                    return Err(Error::ReferenceOutsideTrusted { index, time: n });
                }
                Ok(vec![index; self.bounds.len()])
            }
        }
    }

    fn anchor(&self, anchor: PhaseAnchor, nearest: impl Fn(f64) -> usize) -> Result<usize> {
        let (lo, hi) = self.common_span().ok_or(Error::NoCommonTrustedNode)?;
        Ok(match anchor {
            PhaseAnchor::Coordinate(x) => {
                let i = nearest(x);
                if (lo..=hi).contains(&i) {
                    i
                } else {
                    lo
                }
            }
            PhaseAnchor::LeftmostCommon => lo,
        })
    }

    /// Overwrites untrusted nodes with the nearest trusted value in the same
    /// slice.
    pub fn extend_from_edges(&self, values: &mut Array2<f64>) {
        for (n, mut row) in values.outer_iter_mut().enumerate() {
            let (lo, hi) = self.bounds[n];
            let (left, right) = (row[lo], row[hi]);
            row.iter_mut().take(lo).for_each(|v| *v = left);
            row.iter_mut().skip(hi + 1).for_each(|v| *v = right);
        }
    }

    pub(crate) fn masked_l2(&self, values: &Array2<f64>) -> f64 {
        values
            .iter()
            .zip(self.interior.iter())
            .filter(|(_, m)| **m)
            .map(|(v, _)| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Canonical momentum p(x,t) = ∂S/∂x.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumField(ScalarField);

impl MomentumField {
    pub fn new(field: ScalarField) -> Self {
        Self(field)
    }

    pub fn field(&self) -> &ScalarField {
        &self.0
    }

    pub fn into_field(self) -> ScalarField {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaProfile {
    /// Θ(t) per time index.
    pub values: Vec<f64>,
    /// RMS of the differentiated Hamilton-Jacobi residual per slice.
    pub residual: Vec<f64>,
    /// max(|p| over the trusted slice, ħ/σ_x): the momentum scale Θ is
    /// judged against.
    pub momentum_scale: Vec<f64>,
    /// Set when the least-squares system was singular and Θ ≡ 0 was used.
    pub fell_back: bool,
}

impl ThetaProfile {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// max_t |Θ(t)| / momentum_scale(t).
    pub fn max_relative(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.momentum_scale)
            .map(|(v, s)| if *s > 0.0 { v.abs() / s } else { v.abs() })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeFunction {
    /// f(t), zero at the first slice.
    pub values: Vec<f64>,
    /// Per-slice standard deviation over trusted nodes of the candidate
    /// df/dt; zero for a genuinely x-independent gauge.
    pub spread: Vec<f64>,
    /// Per-slice RMS of V_B over the same nodes.
    pub scale: Vec<f64>,
}

impl GaugeFunction {
    pub fn max_spread(&self) -> f64 {
        self.spread.iter().copied().fold(0.0, f64::max)
    }

    /// max_t spread(t) / scale(t).
    pub fn max_relative_spread(&self) -> f64 {
        self.spread
            .iter()
            .zip(&self.scale)
            .map(|(s, v)| if *v > 0.0 { s / v } else { *s })
            .fold(0.0, f64::max)
    }

    /// Slices whose candidate df/dt is built from central time differences
    /// only. ∂t∫p at slice n reads p at n±1, and p at the outermost slices
    /// comes from a one-sided ∂t ln P, so the two slices at each end carry an
    /// O(dt) stencil artifact rather than a physical spread.
    pub fn settled_slices(&self) -> std::ops::Range<usize> {
        let nt = self.spread.len();
        if nt >= 5 {
            2..nt - 2
        } else {
            0..nt
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Compatible,
    Incompatible,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Compatible => "compatible",
            Verdict::Incompatible => "incompatible",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compatible" => Ok(Verdict::Compatible),
            "incompatible" => Ok(Verdict::Incompatible),
            "inconclusive" => Ok(Verdict::Inconclusive),
            other => Err(Error::Parse(format!("unknown verdict '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalReport {
    pub theta: ThetaProfile,
    pub gauge: GaugeFunction,
    pub hj_residual_rel: f64,
    pub hjdiff_residual_rel: f64,
    pub schrodinger_residual_rel: Option<f64>,
    pub trusted_mass_fraction: f64,
    pub verdict: Verdict,
    pub warnings: Vec<String>,
}

/// Everything `retrieve` produces.
#[derive(Debug, Clone)]
pub struct Retrieval {
    pub wavefunction: ComplexField,
    pub phase: ScalarField,
    pub momentum: MomentumField,
    pub bohm_potential: ScalarField,
    pub trusted: TrustedRegion,
    pub report: RetrievalReport,
}

/// ln P with underflowed nodes clamped to the smallest normal double.
fn log_density(density: &ScalarField) -> Result<ScalarField> {
    density.map(|v| v.max(f64::MIN_POSITIVE).ln())
}

/// U = −ħ²/(4m)[∇²P/P − (∇P)²/(2P²)] = −ħ²/(4m)[(ln P)'' + ½((ln P)')²].
/// Untrusted nodes take the nearest trusted value of their slice.
pub fn quantum_potential(
    density: &ScalarField,
    trusted: &TrustedRegion,
    c: &PhysicalConstants,
) -> Result<ScalarField> {
    let ln = log_density(density)?;
    let l1 = d_dx(&ln)?;
    let l2 = d2_dx2(&ln)?;
    let k = -c.hbar() * c.hbar() / (4.0 * c.mass());
    let mut u = Array2::from_shape_fn(density.grid().shape(), |(n, i)| {
        let g = l1.get(n, i);
        k * (l2.get(n, i) + 0.5 * g * g)
    });
    trusted.extend_from_edges(&mut u);
    ScalarField::new(*density.grid(), u)
}

/// V_B = V + U.
pub fn bohm_potential(
    density: &ScalarField,
    potential: &ScalarField,
    trusted: &TrustedRegion,
    c: &PhysicalConstants,
) -> Result<ScalarField> {
    density.ensure_same_grid(potential)?;
    let u = quantum_potential(density, trusted, c)?;
    ScalarField::new(*density.grid(), potential.values() + u.values())
}

/// Current entering through a grid edge, estimated from the leading terms
/// of the tail expansion −(m/P)∫P q = −m[q/L − (q/L)'/L + …] with
/// L = ∂x ln P and q = ∂t ln P. `dir` is +1 at the left edge and −1 at the
/// right edge; zero unless the density decays outward there.
fn edge_momentum(l: &[f64], q: &[f64], idx: [usize; 3], dir: f64, dx: f64, m: f64) -> f64 {
    let l0 = l[idx[0]];
    if dir * l0 <= 0.0 || idx.iter().any(|&i| l[i] == 0.0) {
        return 0.0;
    }
    let s: Vec<f64> = idx.iter().map(|&i| q[i] / l[i]).collect();
    let ds = dir * (-3.0 * s[0] + 4.0 * s[1] - s[2]) / (2.0 * dx);
    let p = -m * (s[0] - ds / l0);
    if p.is_finite() {
        p
    } else {
        0.0
    }
}

/// Particular solution of ∂x p + (∂x ln P) p = −m ∂t ln P with no current
/// entering from outside the grid.
///
/// Each slice is integrated by the trapezoidal rule applied to the ODE
/// (implicit, so the 1/P homogeneous mode decays in the sweep direction):
/// from the left edge up to the density peak and from the right edge down to
/// it. Untrusted nodes take the nearest trusted value.
pub fn continuity_particular(
    density: &ScalarField,
    trusted: &TrustedRegion,
    c: &PhysicalConstants,
) -> Result<MomentumField> {
    let grid = *density.grid();
    let (nt, nx) = grid.shape();
    let (dx, m) = (grid.dx(), c.mass());
    let h = 0.5 * dx;
    let ln = log_density(density)?;
    let slope = d_dx(&ln)?;
    let rate = d_dt(&ln)?;

    let mut p = Array2::zeros((nt, nx));
    for n in 0..nt {
        let row = density.slice(n);
        let l = slope.slice(n).to_vec();
        let q = rate.slice(n).to_vec();
        let (Some(first), Some(last)) = (row.iter().position(|v| *v > 0.0), row.iter().rposition(|v| *v > 0.0))
        else {
            return Err(Error::EmptyTrustedRegion(n));
        };
        let r = trusted.peak(n);
        let mut out = vec![0.0; nx];

        out[first] = if first + 2 < nx {
            edge_momentum(&l, &q, [first, first + 1, first + 2], 1.0, dx, m)
        } else {
            0.0
        };
        for i in first..r {
            out[i + 1] = (out[i] * (1.0 - h * l[i]) - h * m * (q[i] + q[i + 1])) / (1.0 + h * l[i + 1]);
        }
        let from_left = out[r];

        out[last] = if last >= 2 {
            edge_momentum(&l, &q, [last, last - 1, last - 2], -1.0, dx, m)
        } else {
            0.0
        };
        for i in (r + 1..=last).rev() {
            out[i - 1] = (out[i] * (1.0 + h * l[i]) + h * m * (q[i] + q[i - 1])) / (1.0 - h * l[i - 1]);
        }
        out[r] = 0.5 * (from_left + out[r]);

        p.row_mut(n).iter_mut().zip(out).for_each(|(d, v)| *d = v);
    }
    trusted.extend_from_edges(&mut p);
    Ok(MomentumField(ScalarField::new(grid, p)?))
}

/// The homogeneous solution of the continuity equation, 1/P per slice,
/// scaled to one at each slice's reference node.
pub fn homogeneous_mode(
    density: &ScalarField,
    trusted: &TrustedRegion,
    reference: &[usize],
) -> Result<ScalarField> {
    let grid = *density.grid();
    let mut mode = Array2::from_shape_fn(grid.shape(), |(n, i)| {
        if trusted.contains(n, i) {
            density.get(n, reference[n]) / density.get(n, i)
        } else {
            0.0
        }
    });
    trusted.extend_from_edges(&mut mode);
    ScalarField::new(grid, mode)
}

/// Residual of ∂t p + (1/m) p ∂x p + ∂x V_B = 0 at every node, together
/// with its terms.
struct MomentumBalance {
    residual: Array2<f64>,
    dominant: Array2<f64>,
    px: Array2<f64>,
}

fn momentum_balance(p: &ScalarField, vb_x: &ScalarField, m: f64) -> Result<MomentumBalance> {
    let pt = d_dt(p)?;
    let px = d_dx(p)?;
    let adv = p.values() * px.values() / m;
    let residual = pt.values() + &adv + vb_x.values();
    let dominant = Array2::from_shape_fn(p.grid().shape(), |(n, i)| {
        pt.get(n, i).abs().max(adv[(n, i)].abs()).max(vb_x.get(n, i).abs())
    });
    Ok(MomentumBalance { residual, dominant, px: px.into_values() })
}

fn relative_norm(trusted: &TrustedRegion, residual: &Array2<f64>, scale: &Array2<f64>) -> f64 {
    let num = trusted.masked_l2(residual);
    let den = trusted.masked_l2(scale);
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Offsets and weights of the second-order d/dt stencil at slice `n`.
fn time_stencil(n: usize, nt: usize, dt: f64) -> [(usize, f64); 3] {
    let s = 1.0 / (2.0 * dt);
    if n == 0 {
        [(0, -3.0 * s), (1, 4.0 * s), (2, -s)]
    } else if n == nt - 1 {
        [(nt - 3, s), (nt - 2, -4.0 * s), (nt - 1, 3.0 * s)]
    } else {
        [(n - 1, -s), (n + 1, s), (n, 0.0)]
    }
}

fn add_theta(p_part: &ScalarField, mode: &ScalarField, theta: &[f64]) -> Result<ScalarField> {
    let values = Array2::from_shape_fn(p_part.grid().shape(), |(n, i)| {
        p_part.get(n, i) + theta[n] * mode.get(n, i)
    });
    ScalarField::new(*p_part.grid(), values)
}

/// One Gauss-Newton step for Θ about `theta`, solving the normal equations
/// of the linearized residual jointly over all slices. `None` when the
/// system is singular.
fn theta_step(
    p_part: &ScalarField,
    mode: &ScalarField,
    mode_x: &ScalarField,
    vb_x: &ScalarField,
    trusted: &TrustedRegion,
    theta: &[f64],
    m: f64,
) -> Result<Option<Vec<f64>>> {
    let grid = p_part.grid();
    let (nt, nx) = grid.shape();
    let p = add_theta(p_part, mode, theta)?;
    let balance = momentum_balance(&p, vb_x, m)?;
    let mut normal = DMatrix::<f64>::zeros(nt, nt);
    let mut rhs = DVector::<f64>::zeros(nt);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(3);
    for n in 0..nt {
        let stencil = time_stencil(n, nt, grid.dt());
        for i in 0..nx {
            if !trusted.interior()[(n, i)] {
                continue;
            }
            row.clear();
            for (j, w) in stencil {
                row.push((j, w * mode.get(j, i)));
            }
            let advective = (p.get(n, i) * mode_x.get(n, i) + mode.get(n, i) * balance.px[(n, i)]) / m;
            match row.iter_mut().find(|(j, _)| *j == n) {
                Some(entry) => entry.1 += advective,
                None => row.push((n, advective)),
            }
            let r = balance.residual[(n, i)];
            for &(a, va) in &row {
                rhs[a] -= va * r;
                for &(b, vb) in &row {
                    normal[(a, b)] += va * vb;
                }
            }
        }
    }
    let diag: Vec<f64> = (0..nt).map(|j| normal[(j, j)]).collect();
    if diag.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Ok(None);
    }
    let scale: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    let scaled = DMatrix::from_fn(nt, nt, |a, b| normal[(a, b)] * scale[a] * scale[b]);
    let scaled_rhs = DVector::from_fn(nt, |a, _| rhs[a] * scale[a]);
    let Some(chol) = scaled.cholesky() else {
        return Ok(None);
    };
    let y = chol.solve(&scaled_rhs);
    let step: Vec<f64> = (0..nt).map(|j| theta[j] + y[j] * scale[j]).collect();
    Ok(step.iter().all(|v| v.is_finite()).then_some(step))
}

fn momentum_scale(density: &ScalarField, p_part: &ScalarField, trusted: &TrustedRegion, c: &PhysicalConstants) -> Vec<f64> {
    let grid = density.grid();
    (0..grid.nt())
        .map(|n| {
            let (lo, hi) = trusted.bounds(n);
            let pmax = (lo..=hi).map(|i| p_part.get(n, i).abs()).fold(0.0, f64::max);
            let row = density.slice(n).to_vec();
            let xs = grid.xs();
            let dx = grid.dx();
            let norm = trapezoid(&row, dx);
            let mean = trapezoid(&row.iter().zip(&xs).map(|(p, x)| p * x).collect::<Vec<_>>(), dx) / norm;
            let var = trapezoid(
                &row.iter().zip(&xs).map(|(p, x)| p * (x - mean) * (x - mean)).collect::<Vec<_>>(),
                dx,
            ) / norm;
            let quantum = if var > 0.0 { c.hbar() / var.sqrt() } else { 0.0 };
            pmax.max(quantum)
        })
        .collect()
}

/// Determines Θ(t).
///
/// `ZeroFlux` returns Θ ≡ 0. `ResidualFit` minimizes the L2 norm, over
/// interior trusted nodes of all slices jointly, of the residual of
/// ∂t p + (1/m) p ∂x p + ∂x V_B with p = p_part + Θ·mode: one linear solve
/// about Θ = 0 followed by one relinearized refinement. The per-slice
/// residual reported is that of the returned Θ.
pub fn fit_theta(
    density: &ScalarField,
    p_part: &MomentumField,
    mode: &ScalarField,
    bohm: &ScalarField,
    trusted: &TrustedRegion,
    opts: &RetrievalOptions,
    c: &PhysicalConstants,
) -> Result<ThetaProfile> {
    let grid = *p_part.field().grid();
    let nt = grid.nt();
    let m = c.mass();
    let vb_x = d_dx(bohm)?;
    let mut theta = vec![0.0; nt];
    let mut fell_back = false;
    if opts.theta_mode == ThetaMode::ResidualFit {
        let mode_x = d_dx(mode)?;
        let first = theta_step(p_part.field(), mode, &mode_x, &vb_x, trusted, &theta, m)?;
        let refined = match first {
            Some(t1) => theta_step(p_part.field(), mode, &mode_x, &vb_x, trusted, &t1, m)?,
            None => None,
        };
        match refined {
            Some(t) => theta = t,
            None => fell_back = true,
        }
    }
    let p = add_theta(p_part.field(), mode, &theta)?;
    let balance = momentum_balance(&p, &vb_x, m)?;
    let residual = (0..nt)
        .map(|n| {
            let (sum, count) = (0..grid.nx())
                .filter(|&i| trusted.interior()[(n, i)])
                .fold((0.0, 0usize), |(s, k), i| (s + balance.residual[(n, i)].powi(2), k + 1));
            if count > 0 {
                (sum / count as f64).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok(ThetaProfile {
        values: theta,
        residual,
        momentum_scale: momentum_scale(density, p_part.field(), trusted, c),
        fell_back,
    })
}

/// p_part + Θ(t)·mode.
pub fn apply_theta(p_part: &MomentumField, mode: &ScalarField, theta: &ThetaProfile) -> Result<MomentumField> {
    Ok(MomentumField(add_theta(p_part.field(), mode, &theta.values)?))
}

/// Integrates p into S(x,t) = ∫p dx + f(t).
///
/// The spatial integral is anchored at one node for every slice (see
/// [`PhaseAnchor`]). df/dt is read off the Hamilton-Jacobi equation at each
/// slice's reference node and integrated with f(t_min) = 0.
pub fn assemble_phase(
    p: &MomentumField,
    bohm: &ScalarField,
    trusted: &TrustedRegion,
    opts: &RetrievalOptions,
    c: &PhysicalConstants,
) -> Result<(ScalarField, GaugeFunction)> {
    let field = p.field();
    field.ensure_same_grid(bohm)?;
    let grid = *field.grid();
    let (nt, nx) = grid.shape();
    let m = c.mass();
    let reference = trusted.reference_nodes(opts.reference)?;
    let anchor = trusted.anchor(opts.phase_anchor, |x| grid.nearest_index(x))?;

    let integral = cumulative_integral_x(field, anchor)?;
    let integral_t = d_dt(&integral)?;
    let candidate = Array2::from_shape_fn((nt, nx), |(n, i)| {
        let pv = field.get(n, i);
        -(pv * pv / (2.0 * m) + bohm.get(n, i) + integral_t.get(n, i))
    });
    let rate: Vec<f64> = (0..nt).map(|n| candidate[(n, reference[n])]).collect();
    let gauge = cumulative_integral_t(&rate, grid.dt())?;

    let mut spread = Vec::with_capacity(nt);
    let mut scale = Vec::with_capacity(nt);
    for n in 0..nt {
        let nodes: Vec<usize> = (0..nx).filter(|&i| trusted.interior()[(n, i)]).collect();
        if nodes.is_empty() {
            spread.push(0.0);
            scale.push(0.0);
            continue;
        }
        let k = nodes.len() as f64;
        let mean = nodes.iter().map(|&i| candidate[(n, i)]).sum::<f64>() / k;
        let var = nodes.iter().map(|&i| (candidate[(n, i)] - mean).powi(2)).sum::<f64>() / k;
        spread.push(var.sqrt());
        scale.push((nodes.iter().map(|&i| bohm.get(n, i).powi(2)).sum::<f64>() / k).sqrt());
    }

    let phase = Array2::from_shape_fn((nt, nx), |(n, i)| integral.get(n, i) + gauge[n]);
    Ok((
        ScalarField::new(grid, phase)?,
        GaugeFunction { values: gauge, spread, scale },
    ))
}

/// ψ = √P·e^{iS/ħ}.
pub fn assemble_wavefunction(density: &ScalarField, phase: &ScalarField, c: &PhysicalConstants) -> Result<ComplexField> {
    density.ensure_same_grid(phase)?;
    if let Some(((n, i), _)) = density.values().indexed_iter().find(|(_, v)| **v < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "negative density at time index {n}, space index {i}"
        )));
    }
    let hbar = c.hbar();
    let values = Array2::from_shape_fn(density.grid().shape(), |(n, i)| {
        Complex64::from_polar(density.get(n, i).sqrt(), phase.get(n, i) / hbar)
    });
    ComplexField::new(*density.grid(), values)
}

/// Residual of ∂S/∂t + (∂S/∂x)²/2m + V_B at every node and its L2 norm over
/// interior trusted nodes relative to the nodewise largest of the three
/// terms.
pub fn hj_residual(
    phase: &ScalarField,
    bohm: &ScalarField,
    trusted: &TrustedRegion,
    c: &PhysicalConstants,
) -> Result<(ScalarField, f64)> {
    phase.ensure_same_grid(bohm)?;
    let m = c.mass();
    let st = d_dt(phase)?;
    let sx = d_dx(phase)?;
    let kinetic = sx.values().mapv(|v| v * v / (2.0 * m));
    let residual = st.values() + &kinetic + bohm.values();
    let dominant = Array2::from_shape_fn(phase.grid().shape(), |(n, i)| {
        st.get(n, i).abs().max(kinetic[(n, i)]).max(bohm.get(n, i).abs())
    });
    let rel = relative_norm(trusted, &residual, &dominant);
    Ok((ScalarField::new(*phase.grid(), residual)?, rel))
}

/// Residual of the spatially differentiated Hamilton-Jacobi equation and its
/// relative norm, normalized like [`hj_residual`].
pub fn hjdiff_residual(
    p: &MomentumField,
    bohm: &ScalarField,
    trusted: &TrustedRegion,
    c: &PhysicalConstants,
) -> Result<(ScalarField, f64)> {
    let vb_x = d_dx(bohm)?;
    let balance = momentum_balance(p.field(), &vb_x, c.mass())?;
    let rel = relative_norm(trusted, &balance.residual, &balance.dominant);
    Ok((ScalarField::new(*p.field().grid(), balance.residual)?, rel))
}

/// Compatible when the Hamilton-Jacobi residual is below tolerance and f(t)
/// is x-independent to within tolerance of the local V_B scale on every
/// settled slice (see [`GaugeFunction::settled_slices`]); incompatible
/// beyond five times the tolerance; inconclusive in between or when the
/// trusted region holds too little probability.
pub fn compatibility_verdict(report: &RetrievalReport, opts: &RetrievalOptions) -> Verdict {
    let tol = opts.hj_tolerance;
    if report.trusted_mass_fraction < MIN_TRUSTED_MASS {
        return Verdict::Inconclusive;
    }
    if report.hj_residual_rel > INCOMPATIBLE_MARGIN * tol {
        return Verdict::Incompatible;
    }
    let gauge = &report.gauge;
    let gauge_ok = gauge
        .settled_slices()
        .all(|n| gauge.spread[n] <= tol * gauge.scale[n]);
    if report.hj_residual_rel < tol && gauge_ok {
        Verdict::Compatible
    } else {
        Verdict::Inconclusive
    }
}

fn normalized(density: &ScalarField, warnings: &mut Vec<String>) -> Result<ScalarField> {
    let integrals = density.slice_integrals();
    if let Some(n) = integrals.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::EmptyTrustedRegion(n));
    }
    let worst = integrals.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    if worst <= NORMALIZATION_TOLERANCE {
        return Ok(density.clone());
    }
    warnings.push(format!(
        "density renormalized per slice (largest normalization error {worst:.3e})"
    ));
    let values = Array2::from_shape_fn(density.grid().shape(), |(n, i)| density.get(n, i) / integrals[n]);
    ScalarField::new(*density.grid(), values)
}

/// Runs the whole pipeline on a density history and potential.
pub fn retrieve(
    density: &ScalarField,
    potential: &ScalarField,
    opts: &RetrievalOptions,
    c: &PhysicalConstants,
) -> Result<Retrieval> {
    opts.validate()?;
    density.ensure_same_grid(potential)?;
    let grid = *density.grid();
    if grid.nt() < 3 {
        return Err(Error::InsufficientResolution(format!(
            "retrieval needs at least 3 time slices, got {}",
            grid.nt()
        )));
    }
    let mut warnings = Vec::new();
    let density = normalized(density, &mut warnings)?;
    let trusted = TrustedRegion::from_density(&density, opts.density_floor)?;
    let reference = trusted.reference_nodes(opts.reference)?;

    let p_part = continuity_particular(&density, &trusted, c)?;
    let mode = homogeneous_mode(&density, &trusted, &reference)?;
    let bohm = bohm_potential(&density, potential, &trusted, c)?;
    let theta = fit_theta(&density, &p_part, &mode, &bohm, &trusted, opts, c)?;
    if theta.fell_back {
        warnings.push("theta least-squares system singular; used zero flux".into());
    }
    let momentum = apply_theta(&p_part, &mode, &theta)?;
    let (phase, gauge) = assemble_phase(&momentum, &bohm, &trusted, opts, c)?;
    let wavefunction = assemble_wavefunction(&density, &phase, c)?;
    let (_, hj_rel) = hj_residual(&phase, &bohm, &trusted, c)?;
    let (_, hjdiff_rel) = hjdiff_residual(&momentum, &bohm, &trusted, c)?;

    let mut report = RetrievalReport {
        theta,
        gauge,
        hj_residual_rel: hj_rel,
        hjdiff_residual_rel: hjdiff_rel,
        schrodinger_residual_rel: None,
        trusted_mass_fraction: trusted.min_mass_fraction(),
        verdict: Verdict::Inconclusive,
        warnings,
    };
    report.verdict = compatibility_verdict(&report, opts);
    Ok(Retrieval { wavefunction, phase, momentum, bohm_potential: bohm, trusted, report })
}

#[cfg(test)]
mod tests;
