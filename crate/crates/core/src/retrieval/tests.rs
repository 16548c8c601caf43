use super::*;
use crate::grid::SpacetimeGrid;
use crate::oracles::{
    breathing_density, coherent_density, coherent_phase, coherent_wavefunction, free_density, Branch,
    BreathingGaussianSpec, CoherentStateSpec, FreeGaussianSpec,
};
use crate::potential::Potential;
use approx::assert_abs_diff_eq;
use std::f64::consts::{PI, TAU};

fn natural() -> PhysicalConstants {
    PhysicalConstants::natural()
}

fn coherent_grid(n: usize) -> SpacetimeGrid {
    SpacetimeGrid::new(-8.0, 8.0, n, 0.0, TAU, n).unwrap()
}

fn coherent(b: f64) -> CoherentStateSpec {
    CoherentStateSpec::new(natural(), 1.0, b, Branch::Plus).unwrap()
}

fn harmonic(grid: &SpacetimeGrid) -> ScalarField {
    Potential::harmonic(1.0, &natural()).unwrap().sample(grid).unwrap()
}

fn trusted_max(field: &ScalarField, trusted: &TrustedRegion, f: impl Fn(usize, usize, f64) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for ((n, i), v) in field.values().indexed_iter() {
        if trusted.contains(n, i) {
            worst = worst.max(f(n, i, *v).abs());
        }
    }
    worst
}

/// Largest |a − b − c| over trusted nodes, minimized over the constant c.
fn aligned_max(a: &ScalarField, b: &ScalarField, trusted: &TrustedRegion) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for ((n, i), v) in a.values().indexed_iter() {
        if trusted.contains(n, i) {
            let d = v - b.get(n, i);
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    0.5 * (hi - lo)
}

#[test]
fn trusted_region_rejects_interior_zeros_and_empty_slices() {
    let g = SpacetimeGrid::new(-4.0, 4.0, 81, 0.0, 1.0, 3).unwrap();
    let two_humps = ScalarField::from_fn(g, |x, _| (-(x - 2.0).powi(2) * 8.0).exp() + (-(x + 2.0).powi(2) * 8.0).exp()).unwrap();
    assert!(matches!(
        TrustedRegion::from_density(&two_humps, 1e-10),
        Err(Error::DisconnectedTrustedRegion(0))
    ));
    let empty = ScalarField::zeros(g);
    assert!(matches!(TrustedRegion::from_density(&empty, 1e-10), Err(Error::EmptyTrustedRegion(0))));
    let negative = ScalarField::from_fn(g, |x, _| x).unwrap();
    assert!(TrustedRegion::from_density(&negative, 1e-10).is_err());
}

#[test]
fn trusted_region_bounds_and_peak_ties() {
    let g = SpacetimeGrid::new(0.0, 9.0, 10, 0.0, 2.0, 3).unwrap();
    let p = ScalarField::from_fn(g, |x, _| if (3.0..=6.0).contains(&x) { 1.0 } else { 0.0 }).unwrap();
    let tr = TrustedRegion::from_density(&p, 1e-10).unwrap();
    assert_eq!(tr.bounds(1), (3, 6));
    assert_eq!(tr.peak(1), 3);
    assert_eq!(tr.common_span(), Some((3, 6)));
    assert!(tr.interior()[(1, 4)]);
    assert!(!tr.interior()[(1, 3)]);
    assert!(matches!(
        tr.reference_nodes(ReferenceIndex::Fixed(8)),
        Err(Error::ReferenceOutsideTrusted { index: 8, time: 0 })
    ));
}

#[test]
fn quantum_potential_of_coherent_density() {
    let g = coherent_grid(401);
    let spec = coherent(1.0);
    let p = coherent_density(&spec, &g).unwrap();
    let tr = TrustedRegion::from_density(&p, 1e-10).unwrap();
    let u = quantum_potential(&p, &tr, &natural()).unwrap();
    // t = 0 peak sits at x = −1
    let i = g.nearest_index(-1.0);
    assert_abs_diff_eq!(u.get(0, i), 0.5, epsilon = 1e-9);
    let worst = trusted_max(&u, &tr, |n, i, v| v - spec.quantum_potential_at(g.x(i), g.t(n)));
    assert!(worst < g.dx().powi(2), "{worst}");
}

#[test]
fn quantum_potential_of_free_density() {
    let spec = FreeGaussianSpec::new(natural(), 0.0, 0.5f64.sqrt()).unwrap();
    let g = SpacetimeGrid::new(-10.0, 10.0, 401, 0.0, 2.0, 5).unwrap();
    let p = free_density(&spec, &g).unwrap();
    let tr = TrustedRegion::from_density(&p, 1e-10).unwrap();
    let u = quantum_potential(&p, &tr, &natural()).unwrap();
    assert_abs_diff_eq!(u.get(0, 200), 0.5, epsilon = 1e-9);
    let vb = bohm_potential(&p, &ScalarField::zeros(g), &tr, &natural()).unwrap();
    let worst = trusted_max(&vb, &tr, |n, i, v| v - spec.bohm_potential_at(g.x(i), g.t(n)));
    assert!(worst < g.dx().powi(2), "{worst}");
}

#[test]
fn bohm_potential_adds_the_external_potential() {
    let g = coherent_grid(201);
    let spec = coherent(1.0);
    let p = coherent_density(&spec, &g).unwrap();
    let tr = TrustedRegion::from_density(&p, 1e-10).unwrap();
    let vb = bohm_potential(&p, &harmonic(&g), &tr, &natural()).unwrap();
    let worst = trusted_max(&vb, &tr, |n, i, v| {
        v - 0.5 * g.x(i).powi(2) - spec.quantum_potential_at(g.x(i), g.t(n))
    });
    assert!(worst < 1e-8, "{worst}");

    // flat density on a clamped support: U = 0 in the interior
    let flat_grid = SpacetimeGrid::new(0.0, 1.0, 41, 0.0, 1.0, 3).unwrap();
    let flat = ScalarField::from_fn(flat_grid, |_, _| 1.0).unwrap();
    let trf = TrustedRegion::from_density(&flat, 1e-10).unwrap();
    let v = ScalarField::from_fn(flat_grid, |x, t| x * x + t).unwrap();
    let vb = bohm_potential(&flat, &v, &trf, &natural()).unwrap();
    assert_eq!(vb, v);

    let mismatch = ScalarField::zeros(flat_grid);
    assert!(matches!(bohm_potential(&p, &mismatch, &tr, &natural()), Err(Error::GridMismatch)));
}

#[test]
fn continuity_recovers_coherent_momentum() {
    let g = coherent_grid(401);
    let spec = coherent(1.0);
    let p = coherent_density(&spec, &g).unwrap();
    let tr = TrustedRegion::from_density(&p, 1e-10).unwrap();
    let mom = continuity_particular(&p, &tr, &natural()).unwrap();
    let worst = trusted_max(mom.field(), &tr, |n, _, v| v - g.t(n).sin());
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn continuity_of_stationary_density_is_zero() {
    let g = coherent_grid(101);
    let p = coherent_density(&coherent(0.0), &g).unwrap();
    let tr = TrustedRegion::from_density(&p, 1e-10).unwrap();
    let mom = continuity_particular(&p, &tr, &natural()).unwrap();
    assert!(mom.field().values().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn continuity_recovers_spreading_momentum() {
    let spec = FreeGaussianSpec::new(natural(), 0.0, 0.5f64.sqrt()).unwrap();
    let g = SpacetimeGrid::new(-20.0, 20.0, 401, 0.0, 4.0, 401).unwrap();
    let p = free_density(&spec, &g).unwrap();
    let tr = TrustedRegion::from_density(&p, 1e-10).unwrap();
    let mom = continuity_particular(&p, &tr, &natural()).unwrap();
    let worst = trusted_max(mom.field(), &tr, |n, i, v| v - spec.momentum_at(g.x(i), g.t(n)));
    assert!(worst < 1e-2, "{worst}");
}

#[test]
fn continuity_identity_holds_for_reconstructed_current() {
    let g = coherent_grid(201);
    let p = coherent_density(&coherent(1.0), &g).unwrap();
    let tr = TrustedRegion::from_density(&p, 1e-10).unwrap();
    let mom = continuity_particular(&p, &tr, &natural()).unwrap();
    let current = ScalarField::new(g, p.values() * mom.field().values()).unwrap();
    let lhs = d_dt(&p).unwrap().values() + d_dx(&current).unwrap().values();
    let scale = d_dt(&p).unwrap().values().mapv(f64::abs);
    let rel = tr.masked_l2(&lhs) / tr.masked_l2(&scale);
    let h2 = g.dx().powi(2) + g.dt().powi(2);
    assert!(rel < 10.0 * h2, "{rel}");
}

#[test]
fn homogeneous_mode_is_reciprocal_density() {
    let g = coherent_grid(101);
    let p = coherent_density(&coherent(1.0), &g).unwrap();
    let tr = TrustedRegion::from_density(&p, 1e-10).unwrap();
    let refs = tr.reference_nodes(ReferenceIndex::DensityPeak).unwrap();
    let mode = homogeneous_mode(&p, &tr, &refs).unwrap();
    for n in 0..g.nt() {
        assert_eq!(mode.get(n, refs[n]), 1.0);
        let xc = -g.t(n).cos();
        let xr = g.x(refs[n]);
        for i in (tr.bounds(n).0..=tr.bounds(n).1).step_by(7) {
            let expected = ((g.x(i) - xc).powi(2) - (xr - xc).powi(2)).exp();
            assert!((mode.get(n, i) / expected - 1.0).abs() < 1e-9);
        }
    }
    let flat_grid = SpacetimeGrid::new(0.0, 1.0, 11, 0.0, 1.0, 3).unwrap();
    let flat = ScalarField::from_fn(flat_grid, |_, _| 1.0).unwrap();
    let trf = TrustedRegion::from_density(&flat, 1e-10).unwrap();
    let mode = homogeneous_mode(&flat, &trf, &[0, 0, 0]).unwrap();
    assert!(mode.values().iter().all(|v| *v == 1.0));
}

fn theta_for(density: &ScalarField, potential: &ScalarField, mode_sel: ThetaMode) -> ThetaProfile {
    let c = natural();
    let opts = RetrievalOptions { theta_mode: mode_sel, ..Default::default() };
    let tr = TrustedRegion::from_density(density, opts.density_floor).unwrap();
    let refs = tr.reference_nodes(opts.reference).unwrap();
    let p = continuity_particular(density, &tr, &c).unwrap();
    let mode = homogeneous_mode(density, &tr, &refs).unwrap();
    let vb = bohm_potential(density, potential, &tr, &c).unwrap();
    fit_theta(density, &p, &mode, &vb, &tr, &opts, &c).unwrap()
}

#[test]
fn theta_vanishes_for_coherent_state() {
    let g = coherent_grid(201);
    let p = coherent_density(&coherent(1.0), &g).unwrap();
    let zero = theta_for(&p, &harmonic(&g), ThetaMode::ZeroFlux);
    assert!(zero.values.iter().all(|v| *v == 0.0));
    assert!(!zero.fell_back);
    let fit = theta_for(&p, &harmonic(&g), ThetaMode::ResidualFit);
    assert!(!fit.fell_back);
    assert!(fit.max_relative() < 1e-6, "{}", fit.max_relative());
    assert!(fit.residual.iter().all(|r| *r >= 0.0 && r.is_finite()));
}

#[test]
fn theta_vanishes_for_free_gaussian() {
    let spec = FreeGaussianSpec::new(natural(), 0.0, 0.5f64.sqrt()).unwrap();
    let g = SpacetimeGrid::new(-20.0, 20.0, 201, 0.0, 4.0, 201).unwrap();
    let p = free_density(&spec, &g).unwrap();
    let fit = theta_for(&p, &ScalarField::zeros(g), ThetaMode::ResidualFit);
    assert!(!fit.fell_back);
    assert!(fit.max_relative() < 1e-6, "{}", fit.max_relative());
}

#[test]
fn theta_fit_keeps_an_exact_solution() {
    // p_part solves the momentum balance exactly when V_B is built from it
    let g = SpacetimeGrid::new(-4.0, 4.0, 81, 0.0, 1.0, 41).unwrap();
    let c = natural();
    let density = ScalarField::from_fn(g, |x, _| (-x * x).exp() / PI.sqrt()).unwrap();
    let tr = TrustedRegion::from_density(&density, 1e-10).unwrap();
    let p_part = MomentumField::new(ScalarField::from_fn(g, |x, t| 0.3 * x + t).unwrap());
    let pt = d_dt(p_part.field()).unwrap();
    let px = d_dx(p_part.field()).unwrap();
    // choose V_B with ∂x V_B = −(∂t p + p ∂x p); here that is −(1 + (0.3x + t)0.3)
    let vb = ScalarField::from_fn(g, |x, t| -(1.0 + 0.3 * t) * x - 0.045 * x * x).unwrap();
    let vbx = d_dx(&vb).unwrap();
    for n in 0..g.nt() {
        for i in 1..g.nx() - 1 {
            let r = pt.get(n, i) + p_part.field().get(n, i) * px.get(n, i) + vbx.get(n, i);
            assert!(r.abs() < 1e-10);
        }
    }
    let refs = tr.reference_nodes(ReferenceIndex::DensityPeak).unwrap();
    let mode = homogeneous_mode(&density, &tr, &refs).unwrap();
    let opts = RetrievalOptions { theta_mode: ThetaMode::ResidualFit, ..Default::default() };
    let fit = fit_theta(&density, &p_part, &mode, &vb, &tr, &opts, &c).unwrap();
    assert!(fit.max_abs() < 1e-12, "{}", fit.max_abs());
    assert!(fit.residual.iter().all(|r| *r < 1e-9));
}

#[test]
fn singular_theta_system_falls_back_to_zero_flux() {
    // with a single trusted column no interior node exists, so every
    // diagonal entry of the normal matrix is zero
    let g = SpacetimeGrid::new(0.0, 9.0, 10, 0.0, 1.0, 5).unwrap();
    let spike = ScalarField::from_fn(g, |x, _| if x == 4.0 { 1.0 } else { 0.0 }).unwrap();
    let fit = theta_for(&spike, &ScalarField::zeros(g), ThetaMode::ResidualFit);
    assert!(fit.fell_back);
    assert!(fit.values.iter().all(|v| *v == 0.0));
}

#[test]
fn assembled_phase_matches_coherent_oracle() {
    let g = coherent_grid(401);
    let spec = coherent(1.0);
    let p = coherent_density(&spec, &g).unwrap();
    let out = retrieve(&p, &harmonic(&g), &RetrievalOptions::default(), &natural()).unwrap();
    let exact = coherent_phase(&spec, &g).unwrap();
    let err = aligned_max(&out.phase, &exact, &out.trusted);
    assert!(err < 1e-2, "{err}");
    // anchored at x = 0 the gauge is the oracle's spatially constant part
    for n in (0..g.nt()).step_by(50) {
        assert!((out.report.gauge.values[n] - spec.phase_at(0.0, g.t(n))).abs() < 1e-2);
    }
}

#[test]
fn ground_state_phase_is_linear_in_time() {
    let g = coherent_grid(101);
    let p = coherent_density(&coherent(0.0), &g).unwrap();
    let out = retrieve(&p, &harmonic(&g), &RetrievalOptions::default(), &natural()).unwrap();
    for ((n, i), v) in out.phase.values().indexed_iter() {
        if out.trusted.contains(n, i) {
            assert_abs_diff_eq!(*v, -0.5 * g.t(n), epsilon = 1e-9);
        }
    }
}

#[test]
fn free_gauge_matches_arctangent() {
    let spec = FreeGaussianSpec::new(natural(), 0.0, 0.5f64.sqrt()).unwrap();
    let g = SpacetimeGrid::new(-20.0, 20.0, 401, 0.0, 4.0, 401).unwrap();
    let p = free_density(&spec, &g).unwrap();
    let out = retrieve(&p, &ScalarField::zeros(g), &RetrievalOptions::default(), &natural()).unwrap();
    for (n, f) in out.report.gauge.values.iter().enumerate() {
        assert!((f + 0.5 * g.t(n).atan()).abs() < 1e-2);
    }
    assert_eq!(out.report.verdict, Verdict::Compatible);
}

#[test]
fn wavefunction_assembly() {
    let g = coherent_grid(101);
    let p = coherent_density(&coherent(1.0), &g).unwrap();
    let psi = assemble_wavefunction(&p, &ScalarField::zeros(g), &natural()).unwrap();
    for ((n, i), v) in psi.values().indexed_iter() {
        assert_eq!(v.im, 0.0);
        assert_eq!(v.re, p.get(n, i).sqrt());
    }
    let s = coherent_phase(&coherent(1.0), &g).unwrap();
    let psi = assemble_wavefunction(&p, &s, &natural()).unwrap();
    for ((n, i), v) in psi.values().indexed_iter() {
        assert!((v.norm_sqr() - p.get(n, i)).abs() <= 4.0 * f64::EPSILON * p.get(n, i));
    }
    let neg = ScalarField::from_fn(g, |x, _| x).unwrap();
    assert!(assemble_wavefunction(&neg, &s, &natural()).is_err());
}

#[test]
fn retrieved_wavefunction_matches_coherent_state_up_to_global_phase() {
    let g = coherent_grid(401);
    let spec = coherent(1.0);
    let p = coherent_density(&spec, &g).unwrap();
    let out = retrieve(&p, &harmonic(&g), &RetrievalOptions::default(), &natural()).unwrap();
    let exact = coherent_wavefunction(&spec, &g).unwrap();
    let overlap: Complex64 = out
        .wavefunction
        .values()
        .iter()
        .zip(exact.values().iter())
        .map(|(a, b)| b * a.conj())
        .sum();
    let align = Complex64::from_polar(1.0, overlap.arg());
    let worst = out
        .wavefunction
        .values()
        .iter()
        .zip(exact.values().iter())
        .map(|(a, b)| (a * align - b).norm())
        .fold(0.0, f64::max);
    assert!(worst < 1e-2, "{worst}");
}

#[test]
fn hj_residual_cases() {
    let c = natural();
    let g = coherent_grid(401);
    let spec = coherent(1.0);
    let p = coherent_density(&spec, &g).unwrap();
    let tr = TrustedRegion::from_density(&p, 1e-10).unwrap();
    let vb = bohm_potential(&p, &harmonic(&g), &tr, &c).unwrap();
    let (_, rel) = hj_residual(&coherent_phase(&spec, &g).unwrap(), &vb, &tr, &c).unwrap();
    assert!(rel < 1e-2, "{rel}");

    let zero = ScalarField::zeros(g);
    let (res, rel) = hj_residual(&zero, &zero, &tr, &c).unwrap();
    assert_eq!(rel, 0.0);
    assert!(res.values().iter().all(|v| *v == 0.0));

    let br = BreathingGaussianSpec::new(c, 1.0, 0.0, 1.0, 0.3).unwrap();
    let pb = breathing_density(&br, &g).unwrap();
    let out = retrieve(&pb, &harmonic(&g), &RetrievalOptions::default(), &c).unwrap();
    assert!(out.report.hj_residual_rel > 0.1, "{}", out.report.hj_residual_rel);
}

#[test]
fn verdicts_for_the_three_densities() {
    let c = natural();
    let g = coherent_grid(401);
    let v = harmonic(&g);
    let opts = RetrievalOptions::default();
    let coh = retrieve(&coherent_density(&coherent(1.0), &g).unwrap(), &v, &opts, &c).unwrap();
    assert_eq!(coh.report.verdict, Verdict::Compatible);
    assert!(coh.report.warnings.is_empty());

    let br = BreathingGaussianSpec::new(c, 1.0, 0.0, 1.0, 0.3).unwrap();
    let out = retrieve(&breathing_density(&br, &g).unwrap(), &v, &opts, &c).unwrap();
    assert_eq!(out.report.verdict, Verdict::Incompatible);
}

#[test]
fn gray_zone_is_inconclusive() {
    let opts = RetrievalOptions::default();
    let mut report = RetrievalReport {
        theta: ThetaProfile { values: vec![0.0], residual: vec![0.0], momentum_scale: vec![1.0], fell_back: false },
        gauge: GaugeFunction { values: vec![0.0], spread: vec![0.0], scale: vec![1.0] },
        hj_residual_rel: 3.0 * opts.hj_tolerance,
        hjdiff_residual_rel: 0.0,
        schrodinger_residual_rel: None,
        trusted_mass_fraction: 1.0,
        verdict: Verdict::Compatible,
        warnings: vec![],
    };
    assert_eq!(compatibility_verdict(&report, &opts), Verdict::Inconclusive);
    report.hj_residual_rel = 0.5 * opts.hj_tolerance;
    assert_eq!(compatibility_verdict(&report, &opts), Verdict::Compatible);
    report.gauge.spread = vec![0.5];
    assert_eq!(compatibility_verdict(&report, &opts), Verdict::Inconclusive);
    report.hj_residual_rel = 6.0 * opts.hj_tolerance;
    assert_eq!(compatibility_verdict(&report, &opts), Verdict::Incompatible);
    report.trusted_mass_fraction = 0.4;
    assert_eq!(compatibility_verdict(&report, &opts), Verdict::Inconclusive);
}

#[test]
fn retrieve_renormalizes_with_a_warning() {
    let g = coherent_grid(101);
    let p = coherent_density(&coherent(1.0), &g).unwrap();
    let doubled = p.map(|v| 2.0 * v).unwrap();
    let out = retrieve(&doubled, &harmonic(&g), &RetrievalOptions::default(), &natural()).unwrap();
    assert_eq!(out.report.warnings.len(), 1);
    let base = retrieve(&p, &harmonic(&g), &RetrievalOptions::default(), &natural()).unwrap();
    let err = aligned_max(&out.phase, &base.phase, &base.trusted);
    assert!(err < 1e-12, "{err}");
}

#[test]
fn retrieve_preconditions() {
    let c = natural();
    let g2 = SpacetimeGrid::new(-8.0, 8.0, 101, 0.0, 1.0, 2).unwrap();
    let p = coherent_density(&coherent(1.0), &g2).unwrap();
    assert!(matches!(
        retrieve(&p, &ScalarField::zeros(g2), &RetrievalOptions::default(), &c),
        Err(Error::InsufficientResolution(_))
    ));
    let g = coherent_grid(101);
    let p = coherent_density(&coherent(1.0), &g).unwrap();
    assert!(matches!(
        retrieve(&p, &ScalarField::zeros(g2), &RetrievalOptions::default(), &c),
        Err(Error::GridMismatch)
    ));
    let bad = RetrievalOptions { density_floor: 1.5, ..Default::default() };
    assert!(retrieve(&p, &harmonic(&g), &bad, &c).is_err());
}

#[test]
fn modulus_is_never_altered() {
    let c = natural();
    let spec = FreeGaussianSpec::new(c, 0.0, 0.5f64.sqrt()).unwrap();
    let g = SpacetimeGrid::new(-20.0, 20.0, 201, 0.0, 4.0, 101).unwrap();
    let p = free_density(&spec, &g).unwrap();
    let out = retrieve(&p, &ScalarField::zeros(g), &RetrievalOptions::default(), &c).unwrap();
    for ((n, i), v) in out.wavefunction.values().indexed_iter() {
        assert!((v.norm_sqr() - p.get(n, i)).abs() <= 4.0 * f64::EPSILON * p.get(n, i));
    }
}

#[test]
fn mirrored_density_negates_the_odd_phase() {
    let c = natural();
    let g = coherent_grid(201);
    // b = 1 puts the t = 0 peak exactly between two nodes, where the
    // smaller-index tie break is itself not mirror symmetric
    let spec = coherent(0.93);
    let p = coherent_density(&spec, &g).unwrap();
    let nx = g.nx();
    let mirrored = ScalarField::new(g, ndarray::Array2::from_shape_fn(g.shape(), |(n, i)| p.get(n, nx - 1 - i))).unwrap();
    let v = harmonic(&g);
    let a = retrieve(&p, &v, &RetrievalOptions::default(), &c).unwrap();
    let b = retrieve(&mirrored, &v, &RetrievalOptions::default(), &c).unwrap();
    for n in 0..g.nt() {
        for i in 0..nx {
            let j = nx - 1 - i;
            let both = |k| a.trusted.contains(n, k) && b.trusted.contains(n, k);
            if both(i) && both(j) {
                // even parts agree, odd parts flip
                let odd_a = 0.5 * (a.phase.get(n, i) - a.phase.get(n, j));
                let odd_b = 0.5 * (b.phase.get(n, j) - b.phase.get(n, i));
                assert!((odd_a - odd_b).abs() < 1e-9, "({n},{i})");
                assert!((a.phase.get(n, i) + a.phase.get(n, j) - b.phase.get(n, i) - b.phase.get(n, j)).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn constant_potential_offset_only_shifts_the_gauge() {
    let c = natural();
    let g = coherent_grid(201);
    let p = coherent_density(&coherent(1.0), &g).unwrap();
    let v = harmonic(&g);
    let shift = 0.75;
    let v2 = v.map(|x| x + shift).unwrap();
    let a = retrieve(&p, &v, &RetrievalOptions::default(), &c).unwrap();
    let b = retrieve(&p, &v2, &RetrievalOptions::default(), &c).unwrap();
    for n in 0..g.nt() {
        let expected = a.report.gauge.values[n] - shift * (g.t(n) - g.t_min());
        assert_abs_diff_eq!(b.report.gauge.values[n], expected, epsilon = 1e-10);
    }
    assert_eq!(a.momentum, b.momentum);
}

