use super::*;
use crate::hyperbolic::SpaceForm;
use crate::quadrature::QuadratureOptions;
use crate::surface::{catalog_build, unit_sphere_volume, CatalogSpec, Family, ImmersedHypersurface};
use approx::assert_relative_eq;

fn coth(x: f64) -> f64 {
    x.cosh() / x.sinh()
}

fn build(n: usize, family: Family) -> ImmersedHypersurface {
    let space = SpaceForm::new(-1.0, n).unwrap();
    catalog_build(&space, &CatalogSpec::new(family)).unwrap()
}

fn unit_sphere() -> ImmersedHypersurface {
    build(3, Family::GeodesicSphere { radius: 1.0 })
}

/// `∫ sinh(rho) H dM` over a whole unit sphere about its center in `H^4`.
fn centered_sphere_integral() -> f64 {
    1f64.cosh() * unit_sphere_volume(3) * 1f64.sinh().powi(3)
}

#[test]
fn gamma_min_of_umbilic_families() {
    let sampling = SamplingSpec {
        points_per_chart: 50,
        ..Default::default()
    };
    let sphere = hypothesis_report(&unit_sphere(), &sampling).unwrap();
    assert_relative_eq!(sphere.gamma_min, 2.0 * coth(1.0), max_relative = 1e-10);
    assert_relative_eq!(sphere.gamma_min, 2.6260706, max_relative = 1e-7);
    assert!(sphere.admissible(2.0 * coth(1.0)));
    assert!(!sphere.admissible(1.0));
    assert!(sphere.sampled);
    assert_eq!(sphere.sample_count, 50);

    let horo = hypothesis_report(&build(3, Family::Horosphere), &sampling).unwrap();
    assert_relative_eq!(horo.gamma_min, 2.0, max_relative = 1e-10);
    assert_relative_eq!(horo.h_min, 1.0, max_relative = 1e-10);

    let equi = hypothesis_report(&build(4, Family::Equidistant { distance: 0.3 }), &sampling).unwrap();
    assert_relative_eq!(equi.gamma_min, 3.0 * 0.3f64.tanh(), max_relative = 1e-10);
    assert_relative_eq!(equi.gamma_min, 0.8739378, max_relative = 1e-7);
    assert_eq!(equi.eigen_window_failures, 0);
}

#[test]
fn tube_hypotheses_hold_with_eigen_margin() {
    let report = hypothesis_report(&build(3, Family::GeodesicTube { radius: 1.0 }), &Default::default())
        .unwrap();
    // (n-1)(R - kappa)/H with k = (coth 1, coth 1, tanh 1)
    let (a, b) = (coth(1.0), 1f64.tanh());
    let mean = (2.0 * a + b) / 3.0;
    let excess = (9.0 * mean * mean - (2.0 * a * a + b * b)) / 6.0;
    assert_relative_eq!(report.gamma_min, 2.0 * excess / mean, max_relative = 1e-9);
    assert_eq!(report.nonpositive_mean, 0);
    assert!(report.eigen_margin_min > 0.0);
}

#[test]
fn verdict_arithmetic() {
    let constant = Verdict::from_deficits(&[(0.0, 0.0), (0.0, 0.0)], Location::GridIndex);
    assert!(constant.passed);
    assert!(constant.worst_violation <= 0.0);
    let within = Verdict::from_deficits(&[(-1.0, 0.1), (0.05, 0.1)], Location::GridIndex);
    assert!(within.passed && within.within_tolerance);
    assert_relative_eq!(within.margin, -0.05);
    let failed = Verdict::from_deficits(&[(-1.0, 0.1), (0.5, 0.1), (0.2, 0.0)], Location::GridIndex);
    assert!(!failed.passed);
    assert_relative_eq!(failed.worst_violation, 0.4);
    assert_eq!(failed.location, Location::GridIndex(1));
}

#[test]
fn cutoff_ramp_properties() {
    let h = CutoffFamily::new(20.0).unwrap();
    assert_eq!(h.value(-0.1), 0.0);
    assert_eq!(h.value(0.0), 0.0);
    assert_eq!(h.value(0.05), 1.0);
    assert_eq!(h.value(1.0), 1.0);
    assert_relative_eq!(h.value(0.025), 0.5, epsilon = 1e-15);
    let mut last = 0.0;
    for i in 1..100 {
        let t = 0.05 * i as f64 / 100.0;
        let v = h.value(t);
        assert!(v > last && v < 1.0);
        last = v;
        let fd = (h.value(t + 1e-7) - h.value(t - 1e-7)) / 2e-7;
        assert_relative_eq!(fd, h.derivative(t), max_relative = 1e-6);
    }
    assert!(CutoffFamily::new(0.0).is_err());
}

#[test]
fn bump_gradient_matches_finite_differences() {
    let surface = build(3, Family::GeodesicTube { radius: 1.0 });
    let space = surface.space().clone();
    let base = surface.charts()[0].base_point();
    let center = surface.point(0, &base).unwrap();
    let f = TestFunction::bump(center, 1.5).unwrap();
    let u = vec![base[0] + 0.3, base[1] - 0.2, base[2] + 0.4];
    let point = surface.curvature_at(0, &u).unwrap();
    let (value, df) = f.evaluate(&space, &point);
    assert!(value > 0.0 && value < 1.0);
    for a in 0..3 {
        let h = 1e-6;
        let mut up = u.clone();
        let mut um = u.clone();
        up[a] += h;
        um[a] -= h;
        let fp = f.evaluate(&space, &surface.curvature_at(0, &up).unwrap()).0;
        let fm = f.evaluate(&space, &surface.curvature_at(0, &um).unwrap()).0;
        assert_relative_eq!((fp - fm) / (2.0 * h), df[a], epsilon = 1e-8);
    }
}

#[test]
fn phi_on_centered_sphere_matches_closed_form() {
    let surface = unit_sphere();
    let space = surface.space().clone();
    let p = AmbientPoint::origin(&space);
    let gamma = 2.0 * coth(1.0);
    let grid = [0.5, 1.1, 1.5, 2.0, 3.0, 4.0, 5.0];
    let series = phi_series(&surface, &p, gamma, &grid, 1e-9, &QuadratureOptions::default()).unwrap();
    assert!(series.all_converged());
    assert_eq!(series.phi[0], 0.0);
    let total = centered_sphere_integral();
    for (i, &r) in grid.iter().enumerate().skip(1) {
        let exact = (0.5 * gamma * r).exp() / r.sinh() * total;
        assert_relative_eq!(series.phi[i], exact, max_relative = 1e-8);
        assert_relative_eq!(series.phi[i], (0.5 * gamma * r).exp() * series.g_values[i], max_relative = 1e-15);
    }
    let verdict = verify_monotonicity(&series);
    assert!(verdict.passed, "{verdict:?}");
}

#[test]
fn inadmissible_gamma_fails_on_sphere() {
    let surface = unit_sphere();
    let p = AmbientPoint::origin(surface.space());
    let series =
        phi_series(&surface, &p, 1.0, &[1.1, 1.5, 2.0, 3.0], 1e-8, &QuadratureOptions::default()).unwrap();
    let verdict = verify_monotonicity(&series);
    assert!(!verdict.passed);
    assert!(verdict.worst_violation > 0.0);
}

#[test]
fn corollary_on_centered_sphere() {
    let surface = unit_sphere();
    let p = AmbientPoint::origin(surface.space());
    let gamma = 2.0 * coth(1.0);
    let report =
        corollary_lower_bound(&surface, &p, gamma, 1.5, &[2.0, 3.0, 4.0], 1e-9, &QuadratureOptions::default())
            .unwrap();
    assert!(report.verdict.passed && report.phi_verdict.passed);
    let total_h = coth(1.0) * unit_sphere_volume(3) * 1f64.sinh().powi(3);
    let sinh_h = centered_sphere_integral();
    let mut last_margin = f64::NEG_INFINITY;
    for (i, &r) in report.r_grid.iter().enumerate() {
        let exact = (-0.5 * gamma * (r - 1.5)).exp() / 1.5f64.sinh() * sinh_h;
        assert_relative_eq!(report.bound[i], exact, max_relative = 1e-8);
        assert_relative_eq!(report.integral_h[i].value, total_h, max_relative = 1e-8);
        let margin = report.integral_h[i].value - report.bound[i];
        assert!(margin > last_margin);
        last_margin = margin;
    }
    assert!(corollary_lower_bound(&surface, &p, gamma, 1.5, &[1.5, 2.0], 1e-6, &Default::default()).is_err());
}

#[test]
fn divergence_criterion_examples() {
    let h4 = SpaceForm::new(-1.0, 3).unwrap();
    assert!(!divergence_criterion(&h4, 0.0).unwrap().applies);
    let h5 = SpaceForm::new(-1.0, 4).unwrap();
    let c = divergence_criterion(&h5, 0.8739378).unwrap();
    assert!(c.applies);
    assert_relative_eq!(c.rate, 0.0630311, max_relative = 1e-6);
    let h6 = SpaceForm::new(-1.0, 5).unwrap();
    assert!(!divergence_criterion(&h6, 2.0).unwrap().applies);
    assert!(divergence_criterion(&h6, -1.0).is_err());
}

#[test]
fn trace_identity_on_sphere_and_horosphere() {
    let sphere = unit_sphere();
    let p = AmbientPoint::origin(sphere.space());
    let u = [0.7, 1.9, 4.0];
    let res = lemma_trace_residual(&sphere, &p, 0, &u, 1e-3).unwrap();
    // 6 coth(1) cosh(1)
    assert_relative_eq!(res.scale, 6.0 * coth(1.0) * 1f64.cosh(), max_relative = 1e-12);
    assert!(res.relative() < 1e-8, "{res:?}");

    let horo = build(3, Family::Horosphere);
    let q = AmbientPoint::from_spatial(horo.space(), &[0.3, -0.4, 0.2, 0.5]).unwrap();
    for u in [[0.1, 0.2, -0.3], [1.5, -0.7, 0.9], [-2.0, 2.5, 0.4]] {
        let res = lemma_trace_residual(&horo, &q, 0, &u, 1e-3).unwrap();
        assert!(res.relative() < 1e-8, "{res:?}");
    }
}

#[test]
fn trace_identity_far_from_center() {
    let horo = build(3, Family::Horosphere);
    let q = AmbientPoint::from_spatial(horo.space(), &[0.0, 0.0, 0.0, 0.0]).unwrap();
    // |u| = 2 sinh(rho/2) puts the point at distance 5 from x(0)
    let s = 2.0 * 2.5f64.sinh();
    let res = lemma_trace_residual(&horo, &q, 0, &[s, 0.0, 0.0], 1e-3).unwrap();
    assert!(res.relative() < 1e-5, "{res:?}");
}

#[test]
fn divergence_identity_residuals() {
    let sphere = unit_sphere();
    let p = AmbientPoint::origin(sphere.space());
    let res = prop_divergence_residual(&sphere, &p, &TestFunction::Unit, 0, &[0.7, 1.9, 4.0], 1e-3).unwrap();
    assert!(res.value.abs() < 1e-8 * res.scale, "{res:?}");

    let horo = build(3, Family::Horosphere);
    let q = AmbientPoint::from_spatial(horo.space(), &[0.3, -0.4, 0.2, 0.5]).unwrap();
    let res = prop_divergence_residual(&horo, &q, &TestFunction::Unit, 0, &[0.4, -1.1, 0.8], 1e-3).unwrap();
    assert!(res.relative() < 1e-6, "{res:?}");

    let tube = build(3, Family::GeodesicTube { radius: 1.0 });
    let base = tube.charts()[0].base_point();
    let bump = TestFunction::bump(tube.point(0, &base).unwrap(), 1.2).unwrap();
    let q = AmbientPoint::from_spatial(tube.space(), &[0.2, 0.1, -0.3, 0.1]).unwrap();
    let u = [base[0] + 0.2, base[1] + 0.3, base[2] - 0.25];
    let res = prop_divergence_residual(&tube, &q, &bump, 0, &u, 1e-3).unwrap();
    assert!(res.relative() < 1e-6, "{res:?}");
}

#[test]
fn divergence_theorem_on_closed_sphere() {
    let sphere = unit_sphere();
    let p = AmbientPoint::from_spatial(sphere.space(), &[0.3, 0.0, 0.1, 0.0]).unwrap();
    let check = divergence_theorem_check(
        &sphere,
        &p,
        &TestFunction::Unit,
        &CutoffFamily::default(),
        4.0,
        1e-6,
        1e-3,
        &QuadratureOptions::default(),
    )
    .unwrap();
    assert!(check.magnitude.value > 1.0);
    assert!(check.integral.value.abs() < 1e-4, "{check:?}");
}

#[test]
fn cutoff_inequality_on_sphere() {
    let sphere = unit_sphere();
    let p = AmbientPoint::origin(sphere.space());
    let gamma = 2.0 * coth(1.0);
    let h = CutoffFamily::default();
    let opts = QuadratureOptions::default();
    let check = cutoff_inequality_check(&sphere, &p, &TestFunction::Unit, gamma, 1.2, 2.0, &h, 1e-9, &opts)
        .unwrap();
    // both cutoffs equal 1 on the sphere (rho = 1 < s - 1/m), so
    // left = I (1/sinh 2 - 1/sinh 1.2) and, with <grad rho, eta> = -1,
    // right = -(1/2) 2 coth(1)^2 sinh(1) |M| ∫_{1.2}^2 dr / sinh r
    let vol = unit_sphere_volume(3) * 1f64.sinh().powi(3);
    let integral = 1f64.cosh() * vol;
    let left = integral * (1.0 / 2f64.sinh() - 1.0 / 1.2f64.sinh());
    let log_tanh = |x: f64| (0.5 * x).tanh().ln();
    let radial = log_tanh(2.0) - log_tanh(1.2);
    let right = -coth(1.0).powi(2) * 1f64.sinh() * vol * radial;
    assert_relative_eq!(check.left, left, max_relative = 1e-8);
    assert_relative_eq!(check.right, right, max_relative = 1e-8);
    assert!(check.verdict.passed);
    assert!(check.gamma_verdict.unwrap().passed);

    let degenerate =
        cutoff_inequality_check(&sphere, &p, &TestFunction::Unit, gamma, 1.5, 1.5, &h, 1e-6, &opts).unwrap();
    assert_eq!(degenerate.left, 0.0);
    assert!(degenerate.verdict.passed && degenerate.verdict.worst_violation <= 0.0);
}
