//! Uniform spacetime grids, sampled fields, and the second-order stencils and
//! trapezoid quadratures every other module is built on.
//!
//! Field arrays are laid out `(time index, space index)`.

use std::ops::{Add, Mul, Sub};

use ndarray::{Array2, ArrayView1, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MIN_NX: usize = 8;

/// Uniform 1D spatial grid crossed with a uniform time grid. Both end points
/// are nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimeGrid {
    x_min: f64,
    x_max: f64,
    nx: usize,
    t_min: f64,
    t_max: f64,
    nt: usize,
}

impl SpacetimeGrid {
    pub fn new(x_min: f64, x_max: f64, nx: usize, t_min: f64, t_max: f64, nt: usize) -> Result<Self> {
        if ![x_min, x_max, t_min, t_max].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if x_max <= x_min {
            return Err(Error::InvalidGrid(format!("x_max ({x_max}) must exceed x_min ({x_min})")));
        }
        if t_max < t_min {
            return Err(Error::InvalidGrid(format!("t_max ({t_max}) must not precede t_min ({t_min})")));
        }
        if nx < MIN_NX {
            return Err(Error::InvalidGrid(format!("nx = {nx}, need at least {MIN_NX}")));
        }
        if nt == 0 {
            return Err(Error::InvalidGrid("nt must be at least 1".into()));
        }
        if nt == 1 && t_max != t_min {
            return Err(Error::InvalidGrid("a single time slice needs t_max == t_min".into()));
        }
        Ok(Self { x_min, x_max, nx, t_min, t_max, nt })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nt, self.nx)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    /// Zero for a single-slice grid.
    pub fn dt(&self) -> f64 {
        if self.nt > 1 {
            (self.t_max - self.t_min) / (self.nt - 1) as f64
        } else {
            0.0
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn t(&self, n: usize) -> f64 {
        self.t_min + n as f64 * self.dt()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn ts(&self) -> Vec<f64> {
        (0..self.nt).map(|n| self.t(n)).collect()
    }

    /// Index of the node closest to `x`, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let r = ((x - self.x_min) / self.dx()).round();
        r.clamp(0.0, (self.nx - 1) as f64) as usize
    }

    /// The grid restricted to its first time slice.
    pub fn initial_slice(&self) -> Self {
        Self { t_max: self.t_min, nt: 1, ..*self }
    }
}

/// Reduced Planck constant and particle mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    hbar: f64,
    mass: f64,
}

impl PhysicalConstants {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
        }
        Ok(Self { hbar, mass })
    }

    /// ħ = m = 1.
    pub fn natural() -> Self {
        Self { hbar: 1.0, mass: 1.0 }
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::natural()
    }
}

/// Values sampled on every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: SpacetimeGrid,
    values: Array2<T>,
}

pub type ScalarField = Field<f64>;
pub type ComplexField = Field<Complex64>;

/// Finiteness test shared by the real and complex fields.
pub trait FieldValue: Copy + Default {
    fn is_finite_value(&self) -> bool;
}

impl FieldValue for f64 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl FieldValue for Complex64 {
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl<T: FieldValue> Field<T> {
    /// Checks the shape against the grid and rejects non-finite entries.
    pub fn new(grid: SpacetimeGrid, values: Array2<T>) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::ShapeMismatch { expected: grid.shape(), found: values.dim() });
        }
        if let Some(((n, i), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite_value()) {
            return Err(Error::NonFinite { time: n, space: i });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: SpacetimeGrid, f: impl Fn(f64, f64) -> T) -> Result<Self> {
        let values = Array2::from_shape_fn(grid.shape(), |(n, i)| f(grid.x(i), grid.t(n)));
        Self::new(grid, values)
    }

    pub fn zeros(grid: SpacetimeGrid) -> Self {
        Self { grid, values: Array2::default(grid.shape()) }
    }

    pub fn grid(&self) -> &SpacetimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn into_values(self) -> Array2<T> {
        self.values
    }

    pub fn get(&self, n: usize, i: usize) -> T {
        self.values[(n, i)]
    }

    pub fn slice(&self, n: usize) -> ArrayView1<'_, T> {
        self.values.row(n)
    }

    pub fn map<U: FieldValue>(&self, f: impl Fn(T) -> U) -> Result<Field<U>> {
        Field::new(self.grid, self.values.mapv(f))
    }

    pub fn ensure_same_grid<U>(&self, other: &Field<U>) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

impl ScalarField {
    /// Trapezoid integral over x of each time slice.
    pub fn slice_integrals(&self) -> Vec<f64> {
        let dx = self.grid.dx();
        self.values
            .axis_iter(Axis(0))
            .map(|row| trapezoid(row.as_slice().unwrap_or(&row.to_vec()), dx))
            .collect()
    }
}

/// Arithmetic needed by the stencils; implemented for `f64` and `Complex64`.
pub trait StencilValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
}

impl StencilValue for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl StencilValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
}

/// Slice-level stencils and quadratures. The field operators below apply
/// these along rows or columns.
pub mod stencil {
    use super::StencilValue;

    /// Second-order first derivative: central in the interior, three-point
    /// one-sided at both ends. Needs at least three samples.
    pub fn first_derivative<T: StencilValue>(f: &[T], h: f64) -> Vec<T> {
        let n = f.len();
        assert!(n >= 3, "first_derivative needs at least 3 samples");
        let s = 1.0 / (2.0 * h);
        let mut d = Vec::with_capacity(n);
        d.push((f[1] * 4.0 - f[0] * 3.0 - f[2]) * s);
        for i in 1..n - 1 {
            d.push((f[i + 1] - f[i - 1]) * s);
        }
        d.push((f[n - 1] * 3.0 - f[n - 2] * 4.0 + f[n - 3]) * s);
        d
    }

    /// Second-order second derivative: three-point central in the interior,
    /// four-point one-sided at both ends. Needs at least four samples.
    pub fn second_derivative<T: StencilValue>(f: &[T], h: f64) -> Vec<T> {
        let n = f.len();
        assert!(n >= 4, "second_derivative needs at least 4 samples");
        let s = 1.0 / (h * h);
        let mut d = Vec::with_capacity(n);
        d.push((f[0] * 2.0 - f[1] * 5.0 + f[2] * 4.0 - f[3]) * s);
        for i in 1..n - 1 {
            d.push((f[i + 1] - f[i] * 2.0 + f[i - 1]) * s);
        }
        d.push((f[n - 1] * 2.0 - f[n - 2] * 5.0 + f[n - 3] * 4.0 - f[n - 4]) * s);
        d
    }

    /// Cumulative trapezoid integral, zero at `anchor`. Nodes left of the
    /// anchor carry the negative of the integral from the node to the anchor.
    pub fn cumulative_trapezoid<T: StencilValue>(f: &[T], h: f64, anchor: usize) -> Vec<T> {
        let n = f.len();
        assert!(anchor < n, "anchor out of range");
        let mut out = vec![T::zero(); n];
        for i in anchor + 1..n {
            out[i] = out[i - 1] + (f[i - 1] + f[i]) * (0.5 * h);
        }
        for i in (0..anchor).rev() {
            out[i] = out[i + 1] - (f[i] + f[i + 1]) * (0.5 * h);
        }
        out
    }
}

/// Trapezoid rule over a uniformly sampled function.
pub fn trapezoid(f: &[f64], h: f64) -> f64 {
    match f.len() {
        0 | 1 => 0.0,
        n => h * (f[1..n - 1].iter().sum::<f64>() + 0.5 * (f[0] + f[n - 1])),
    }
}

fn require_nx(grid: &SpacetimeGrid, min: usize) -> Result<()> {
    if grid.nx() < min {
        return Err(Error::InsufficientResolution(format!(
            "need nx >= {min}, grid has {}",
            grid.nx()
        )));
    }
    Ok(())
}

fn require_nt(grid: &SpacetimeGrid, min: usize) -> Result<()> {
    if grid.nt() < min {
        return Err(Error::InsufficientResolution(format!(
            "need nt >= {min} time slices, grid has {}",
            grid.nt()
        )));
    }
    Ok(())
}

fn map_rows<T: FieldValue + StencilValue>(f: &Field<T>, op: impl Fn(&[T]) -> Vec<T>) -> Result<Field<T>> {
    let (nt, nx) = f.grid.shape();
    let mut out = Array2::from_elem((nt, nx), T::zero());
    for (n, row) in f.values.axis_iter(Axis(0)).enumerate() {
        let d = op(&row.to_vec());
        out.row_mut(n).iter_mut().zip(d).for_each(|(o, v)| *o = v);
    }
    Field::new(f.grid, out)
}

fn map_columns<T: FieldValue + StencilValue>(f: &Field<T>, op: impl Fn(&[T]) -> Vec<T>) -> Result<Field<T>> {
    let (nt, nx) = f.grid.shape();
    let mut out = Array2::from_elem((nt, nx), T::zero());
    for (i, col) in f.values.axis_iter(Axis(1)).enumerate() {
        let d = op(&col.to_vec());
        out.column_mut(i).iter_mut().zip(d).for_each(|(o, v)| *o = v);
    }
    Field::new(f.grid, out)
}

/// ∂/∂x with second-order stencils.
pub fn d_dx<T: FieldValue + StencilValue>(f: &Field<T>) -> Result<Field<T>> {
    require_nx(&f.grid, 3)?;
    let dx = f.grid.dx();
    map_rows(f, |row| stencil::first_derivative(row, dx))
}

/// ∂²/∂x² with second-order stencils.
pub fn d2_dx2<T: FieldValue + StencilValue>(f: &Field<T>) -> Result<Field<T>> {
    require_nx(&f.grid, 4)?;
    let dx = f.grid.dx();
    map_rows(f, |row| stencil::second_derivative(row, dx))
}

/// ∂/∂t with second-order stencils; needs at least three time slices.
pub fn d_dt<T: FieldValue + StencilValue>(f: &Field<T>) -> Result<Field<T>> {
    require_nt(&f.grid, 3)?;
    let dt = f.grid.dt();
    map_columns(f, |col| stencil::first_derivative(col, dt))
}

/// Per-slice cumulative trapezoid integral in x, zero at `anchor_index`.
pub fn cumulative_integral_x(f: &ScalarField, anchor_index: usize) -> Result<ScalarField> {
    if anchor_index >= f.grid.nx() {
        return Err(Error::InvalidParameter(format!(
            "anchor index {anchor_index} outside 0..{}",
            f.grid.nx()
        )));
    }
    let dx = f.grid.dx();
    map_rows(f, |row| stencil::cumulative_trapezoid(row, dx, anchor_index))
}

/// Cumulative trapezoid integral of a time series, zero at the first entry.
pub fn cumulative_integral_t(series: &[f64], dt: f64) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::InsufficientResolution(format!(
            "time integral needs at least 2 samples, got {}",
            series.len()
        )));
    }
    Ok(stencil::cumulative_trapezoid(series, dt, 0))
}
