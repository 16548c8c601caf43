use crate::error::{Error, Result};
use crate::grid::{PhysicalConstants, ScalarField, SpacetimeGrid};

/// A potential V(x,t) that can be evaluated off the sampling grid, which the
/// propagator needs for its padded domain.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Free,
    /// ½·m·ω²·x².
    Harmonic { mass: f64, omega: f64 },
    /// Linear interpolation in t between slices; spatial nodes are exact and
    /// values beyond the sampled range repeat the boundary value.
    Sampled(ScalarField),
}

impl Potential {
    pub fn harmonic(omega: f64, c: &PhysicalConstants) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
        }
        Ok(Potential::Harmonic { mass: c.mass(), omega })
    }

    pub fn is_time_independent(&self) -> bool {
        match self {
            Potential::Free | Potential::Harmonic { .. } => true,
            Potential::Sampled(f) => {
                let v = f.values();
                f.grid().nt() == 1 || v.rows().into_iter().all(|row| row == v.row(0))
            }
        }
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            Potential::Free => 0.0,
            Potential::Harmonic { mass, omega } => 0.5 * mass * omega * omega * x * x,
            Potential::Sampled(f) => {
                let g = f.grid();
                let i = g.nearest_index(x);
                if g.nt() == 1 || g.dt() == 0.0 {
                    return f.get(0, i);
                }
                let s = ((t - g.t_min()) / g.dt()).clamp(0.0, (g.nt() - 1) as f64);
                let n0 = (s.floor() as usize).min(g.nt() - 2);
                let w = s - n0 as f64;
                (1.0 - w) * f.get(n0, i) + w * f.get(n0 + 1, i)
            }
        }
    }

    /// V on every node of `grid`.
    pub fn sample(&self, grid: &SpacetimeGrid) -> Result<ScalarField> {
        if let Potential::Sampled(f) = self {
            if f.grid() == grid {
                return Ok(f.clone());
            }
            return Err(Error::GridMismatch);
        }
        ScalarField::from_fn(*grid, |x, t| self.eval(x, t))
    }
}
