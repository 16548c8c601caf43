//! Bounded Nelder–Mead search and Halton start points.

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
/// Initial simplex edge as a fraction of each parameter range.
const INITIAL_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOutcome {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexSettings {
    /// Stop once max f − min f over the simplex falls below this.
    pub spread_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SimplexSettings {
    fn default() -> Self {
        Self { spread_tolerance: 1e-8, max_iterations: 500 }
    }
}

fn clamp(point: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in point.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

fn along(from: &[f64], to: &[f64], coeff: f64, bounds: &[(f64, f64)]) -> Vec<f64> {
    let mut p: Vec<f64> = from.iter().zip(to).map(|(a, b)| a + coeff * (b - a)).collect();
    clamp(&mut p, bounds);
    p
}

/// Minimizes `f` inside the box `bounds` starting from `start`. Trial points
/// leaving the box are projected back onto it.
pub fn minimize(
    mut f: impl FnMut(&[f64]) -> f64,
    start: &[f64],
    bounds: &[(f64, f64)],
    settings: SimplexSettings,
) -> SimplexOutcome {
    let dim = start.len();
    let mut origin = start.to_vec();
    clamp(&mut origin, bounds);
    let mut vertices = vec![origin.clone()];
    for (j, (lo, hi)) in bounds.iter().enumerate() {
        let step = INITIAL_STEP * (hi - lo);
        let mut v = origin.clone();
        v[j] = if v[j] + step <= *hi { v[j] + step } else { v[j] - step };
        vertices.push(v);
    }
    let mut values: Vec<f64> = vertices.iter().map(|v| f(v)).collect();

    let mut iterations = 0;
    loop {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        vertices = order.iter().map(|&i| vertices[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[dim] - values[0];
        if spread < settings.spread_tolerance || iterations >= settings.max_iterations {
            return SimplexOutcome {
                point: vertices[0].clone(),
                value: values[0],
                iterations,
                converged: spread < settings.spread_tolerance,
            };
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..dim)
            .map(|j| vertices[..dim].iter().map(|v| v[j]).sum::<f64>() / dim as f64)
            .collect();
        let worst = vertices[dim].clone();
        let reflected = along(&centroid, &worst, -REFLECT, bounds);
        let fr = f(&reflected);

        if fr < values[0] {
            let expanded = along(&centroid, &worst, -EXPAND, bounds);
            let fe = f(&expanded);
            (vertices[dim], values[dim]) = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < values[dim - 1] {
            (vertices[dim], values[dim]) = (reflected, fr);
            continue;
        }
        // outside contraction when the reflection beat the worst point,
        // inside contraction otherwise
        let (contracted, fc) = if fr < values[dim] {
            let p = along(&centroid, &reflected, CONTRACT, bounds);
            let v = f(&p);
            (p, v)
        } else {
            let p = along(&centroid, &worst, CONTRACT, bounds);
            let v = f(&p);
            (p, v)
        };
        if fc < values[dim].min(fr) {
            (vertices[dim], values[dim]) = (contracted, fc);
            continue;
        }
        let best = vertices[0].clone();
        for k in 1..=dim {
            vertices[k] = along(&best, &vertices[k], SHRINK, bounds);
            values[k] = f(&vertices[k]);
        }
    }
}

fn radical_inverse(mut index: usize, base: usize) -> f64 {
    let mut result = 0.0;
    let mut scale = 1.0 / base as f64;
    while index > 0 {
        result += (index % base) as f64 * scale;
        index /= base;
        scale /= base as f64;
    }
    result
}

const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// The first `count` Halton points (indices 1..=count) mapped into `bounds`.
pub fn halton_points(count: usize, bounds: &[(f64, f64)]) -> Vec<Vec<f64>> {
    assert!(bounds.len() <= PRIMES.len(), "at most {} dimensions", PRIMES.len());
    (1..=count)
        .map(|k| {
            bounds
                .iter()
                .zip(PRIMES)
                .map(|((lo, hi), base)| lo + (hi - lo) * radical_inverse(k, base))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_a_quadratic_minimum() {
        let bounds = [(-5.0, 5.0), (-5.0, 5.0)];
        let out = minimize(
            |p| (p[0] - 1.0).powi(2) + 3.0 * (p[1] + 2.0).powi(2),
            &[4.0, 4.0],
            &bounds,
            SimplexSettings::default(),
        );
        assert!(out.converged);
        assert!((out.point[0] - 1.0).abs() < 1e-3 && (out.point[1] + 2.0).abs() < 1e-3, "{:?}", out.point);
    }

    #[test]
    fn respects_bounds() {
        let out = minimize(|p| p[0], &[0.5], &[(0.0, 1.0)], SimplexSettings::default());
        assert_eq!(out.point, vec![0.0]);
        assert!(out.converged);
    }

    #[test]
    fn stops_at_the_iteration_cap() {
        let settings = SimplexSettings { spread_tolerance: 0.0, max_iterations: 7 };
        let out = minimize(|p| (p[0] - 0.3).abs(), &[0.9], &[(0.0, 1.0)], settings);
        assert_eq!(out.iterations, 7);
        assert!(!out.converged);
    }

    #[test]
    fn halton_sequence() {
        let pts = halton_points(4, &[(0.0, 1.0), (0.0, 1.0)]);
        assert_eq!(pts[0], vec![0.5, 1.0 / 3.0]);
        assert_eq!(pts[1], vec![0.25, 2.0 / 3.0]);
        assert_eq!(pts[2], vec![0.75, 1.0 / 9.0]);
        let scaled = halton_points(1, &[(2.0, 4.0)]);
        assert_eq!(scaled[0], vec![3.0]);
    }
}
