use super::*;
use crate::hyperbolic::{Isometry, SpaceForm};
use crate::surface::{catalog_build, unit_sphere_volume, CatalogSpec, Family};
use approx::assert_relative_eq;

fn h4() -> SpaceForm {
    SpaceForm::new(-1.0, 3).unwrap()
}

fn sphere(space: &SpaceForm, radius: f64) -> ImmersedHypersurface {
    catalog_build(space, &CatalogSpec::new(Family::GeodesicSphere { radius })).unwrap()
}

fn origin(space: &SpaceForm) -> AmbientPoint {
    AmbientPoint::origin(space)
}

#[test]
fn sphere_volume_matches_closed_form() {
    let space = h4();
    let s = sphere(&space, 1.0);
    let region = BallRegion::new(origin(&space), 2.0).unwrap();
    let est = integrate_over_ball(&s, |_| 1.0, &region, Tolerance::relative(1e-10), &Default::default())
        .unwrap();
    let exact = unit_sphere_volume(3) * 1f64.sinh().powi(3);
    // 2 pi^2 sinh^3(1)
    assert_relative_eq!(exact, 32.0381, max_relative = 1e-5);
    assert_relative_eq!(est.value, exact, max_relative = 1e-10);
    assert!(est.converged);
}

#[test]
fn curvature_integrals_on_centered_sphere() {
    let space = h4();
    let s = sphere(&space, 1.0);
    let region = BallRegion::new(origin(&space), 2.0).unwrap();
    let opts = QuadratureOptions::default();
    let vol = unit_sphere_volume(3) * 1f64.sinh().powi(3);
    let ci = curvature_integral(&s, &region, Tolerance::relative(1e-10), &opts).unwrap();
    assert_relative_eq!(ci.value, 1f64.cosh() * vol, max_relative = 1e-9);
    assert_relative_eq!(ci.value, 49.4373, max_relative = 1e-5);
    let mi = mean_curvature_integral(&s, &region, Tolerance::relative(1e-10), &opts).unwrap();
    assert_relative_eq!(mi.value, 1f64.cosh() / 1f64.sinh() * vol, max_relative = 1e-9);
    assert_relative_eq!(mi.value, 42.067, max_relative = 1e-4);
}

#[test]
fn empty_intersection_is_zero() {
    let space = h4();
    let s = sphere(&space, 1.0);
    let region = BallRegion::new(origin(&space), 0.5).unwrap();
    let est = curvature_integral(&s, &region, Tolerance::relative(1e-8), &Default::default()).unwrap();
    assert_eq!(est.value, 0.0);
    assert_eq!(est.abs_error, 0.0);
    assert!(est.converged);
}

#[test]
fn off_center_cap_volume() {
    // Sphere of radius a about o, ball about a point at distance d: the cap is
    // {theta_0 < theta*} with cosh r = cosh a cosh d - sinh a sinh d cos theta*,
    // of area |S^2| sinh^3 a * int_0^theta* sin^2.
    let space = h4();
    let (a, d, r) = (1.0f64, 0.6f64, 1.2f64);
    let s = sphere(&space, a);
    let p = AmbientPoint::new(&space, vec![d.cosh(), d.sinh(), 0.0, 0.0, 0.0]).unwrap();
    let region = BallRegion::new(p, r).unwrap();
    let est = integrate_over_ball(&s, |_| 1.0, &region, Tolerance::relative(1e-9), &Default::default())
        .unwrap();
    let cos_t = (a.cosh() * d.cosh() - r.cosh()) / (a.sinh() * d.sinh());
    let t = cos_t.acos();
    let exact = unit_sphere_volume(2) * a.sinh().powi(3) * 0.5 * (t - t.sin() * t.cos());
    assert!(est.converged, "{est:?}");
    assert_relative_eq!(est.value, exact, max_relative = 1e-8);
}

#[test]
fn horosphere_ball_volume() {
    // Flat chart: M ∩ B_r(x(0)) is the Euclidean ball |u| < 2 sinh(r/2) in R^3.
    let space = h4();
    let h = catalog_build(&space, &CatalogSpec::new(Family::Horosphere)).unwrap();
    let r = 1.3f64;
    let region = BallRegion::new(origin(&space), r).unwrap();
    let est = integrate_over_ball(&h, |_| 1.0, &region, Tolerance::relative(1e-9), &Default::default())
        .unwrap();
    let rad = 2.0 * (0.5 * r).sinh();
    let exact = 4.0 / 3.0 * std::f64::consts::PI * rad.powi(3);
    assert!(est.converged);
    assert_relative_eq!(est.value, exact, max_relative = 1e-8);
    assert!(est.abs_error < 1e-8 * exact);
}

#[test]
fn uniform_refinement_converges_fast() {
    let space = h4();
    let s = sphere(&space, 1.0);
    let region = BallRegion::new(origin(&space), 2.0).unwrap();
    let exact = unit_sphere_volume(3) * 1f64.sinh().powi(3);
    let mut errors = Vec::new();
    for depth in 0..3 {
        let opts = QuadratureOptions {
            initial_splits: 1,
            uniform_depth: Some(depth),
            ..Default::default()
        };
        let est = integrate_over_ball(&s, |_| 1.0, &region, Tolerance::relative(0.0), &opts).unwrap();
        errors.push((est.value - exact).abs());
    }
    for w in errors.windows(2) {
        assert!(w[1] * 4.0 <= w[0], "{errors:?}");
    }
}

#[test]
fn tighter_tolerance_does_not_increase_error() {
    let space = h4();
    let s = sphere(&space, 1.0);
    let p = AmbientPoint::new(&space, vec![0.7f64.cosh(), 0.0, 0.7f64.sinh(), 0.0, 0.0]).unwrap();
    let region = BallRegion::new(p, 1.1).unwrap();
    let opts = QuadratureOptions::default();
    let coarse = curvature_integral(&s, &region, Tolerance::relative(1e-4), &opts).unwrap();
    let fine = curvature_integral(&s, &region, Tolerance::relative(5e-5), &opts).unwrap();
    assert!(fine.abs_error <= coarse.abs_error);
    assert!(fine.abs_error <= 5e-5 * fine.value.abs());
}

#[test]
fn isometry_invariance() {
    let space = h4();
    let spec = CatalogSpec::new(Family::GeodesicTube { radius: 0.8 });
    let tube = catalog_build(&space, &spec).unwrap();
    let p = AmbientPoint::from_spatial(&space, &[0.2, 0.5, -0.1, 0.3]).unwrap();
    let target = AmbientPoint::from_spatial(&space, &[0.4, -0.3, 0.2, 0.6]).unwrap();
    let placement = crate::surface::Placement {
        rotations: vec![crate::surface::PlaneRotation {
            axes: (2, 4),
            angle: 0.9,
        }],
        origin_to: Some(target.as_slice().to_vec()),
    };
    let iso = placement.isometry(&space).unwrap();
    let moved = catalog_build(&space, &spec.clone().placed(placement)).unwrap();
    let q = iso.apply_point(&p);
    let opts = QuadratureOptions::default();
    let tol = Tolerance::relative(1e-9);
    let a = curvature_integral(&tube, &BallRegion::new(p, 1.5).unwrap(), tol, &opts).unwrap();
    let b = curvature_integral(&moved, &BallRegion::new(q, 1.5).unwrap(), tol, &opts).unwrap();
    assert!(a.converged && b.converged);
    assert_relative_eq!(a.value, b.value, max_relative = 1e-7);
    let _ = Isometry::identity(5);
}

#[test]
fn additivity_over_annuli() {
    let space = h4();
    let h = catalog_build(&space, &CatalogSpec::new(Family::Horosphere)).unwrap();
    let p = AmbientPoint::from_spatial(&space, &[0.1, -0.2, 0.0, 0.4]).unwrap();
    let tol = Tolerance::relative(1e-8);
    let opts = QuadratureOptions::default();
    let parts = integrate_components(&h, &p, &[0.9, 1.6], &[tol, tol, tol], &opts, |s, out| {
        let d = (s.rho).sinh() * s.point.mean;
        if s.inside(0) {
            out[0] = d;
        }
        out[1] = d;
        if !s.inside(0) {
            out[2] = d;
        }
        Ok(())
    })
    .unwrap();
    let small = curvature_integral(&h, &BallRegion::new(p.clone(), 0.9).unwrap(), tol, &opts).unwrap();
    let big = curvature_integral(&h, &BallRegion::new(p, 1.6).unwrap(), tol, &opts).unwrap();
    let bars = small.abs_error + big.abs_error + parts[2].abs_error + 1e-12;
    assert!((big.value - small.value - parts[2].value).abs() <= bars);
    assert_relative_eq!(parts[0].value, small.value, max_relative = 1e-7);
    assert_relative_eq!(parts[1].value, big.value, max_relative = 1e-7);
}

#[test]
fn deterministic_results() {
    let space = h4();
    let h = catalog_build(&space, &CatalogSpec::new(Family::Equidistant { distance: 0.4 })).unwrap();
    let p = AmbientPoint::from_spatial(&space, &[0.1, -0.2, 0.0, 0.4]).unwrap();
    let region = BallRegion::new(p, 1.4).unwrap();
    let run = || curvature_integral(&h, &region, Tolerance::relative(1e-7), &Default::default()).unwrap();
    let a = run();
    let b = run();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.abs_error.to_bits(), b.abs_error.to_bits());
}

#[test]
fn budget_exhaustion_is_reported() {
    let space = h4();
    let h = catalog_build(&space, &CatalogSpec::new(Family::Horosphere)).unwrap();
    let region = BallRegion::new(origin(&space), 2.0).unwrap();
    let opts = QuadratureOptions {
        budget: 2000,
        ..Default::default()
    };
    let est = curvature_integral(&h, &region, Tolerance::relative(1e-14), &opts).unwrap();
    assert!(!est.converged);
    assert!(est.abs_error > 0.0);
}

#[test]
fn divergence_in_flat_chart() {
    let space = h4();
    let h = catalog_build(&space, &CatalogSpec::new(Family::Horosphere)).unwrap();
    let u = [0.3, -0.2, 0.5];
    let zero = divergence_on_m(&h, 0, |_| Ok(DVector::zeros(3)), &u, 1e-3).unwrap();
    assert_eq!(zero, 0.0);
    let linear = divergence_on_m(
        &h,
        0,
        |cp| Ok(DVector::from_vec(vec![cp.u[0], 0.0, 0.0])),
        &u,
        1e-3,
    )
    .unwrap();
    assert_relative_eq!(linear, 1.0, epsilon = 1e-9);
}

#[test]
fn divergence_on_sphere_of_coordinate_field() {
    // On a round sphere with polar angle t_0, div(d/dt_0) = (n-1) cot t_0.
    let space = h4();
    let s = sphere(&space, 0.7);
    let u = [0.9, 1.1, 2.0];
    let div = divergence_on_m(&s, 0, |_| Ok(DVector::from_vec(vec![1.0, 0.0, 0.0])), &u, 1e-3).unwrap();
    assert_relative_eq!(div, 2.0 / 0.9f64.tan(), epsilon = 1e-8);
}

#[test]
fn missing_bound_is_a_capability_error() {
    use crate::surface::{ChartDomain, CoordKind, FnChart, Orientation};
    let space = h4();
    let chart = FnChart::new(
        ChartDomain::new(vec![-1.0; 3], vec![1.0; 3], vec![CoordKind::Bounded; 3]).unwrap(),
        |u| {
            let q = 0.5 * u.iter().map(|v| v * v).sum::<f64>();
            DVector::from_vec(vec![1.0 + q, u[0], u[1], u[2], -q])
        },
    )
    .unwrap()
    .covering_balls_up_to(0.5);
    let surface = ImmersedHypersurface::new(space.clone(), vec![Box::new(chart)], Orientation::MeanConvex).unwrap();
    let err = curvature_integral(
        &surface,
        &BallRegion::new(origin(&space), 1.0).unwrap(),
        Tolerance::relative(1e-6),
        &Default::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Capability(_)));
    let ok = curvature_integral(
        &surface,
        &BallRegion::new(origin(&space), 0.4).unwrap(),
        Tolerance::relative(1e-6),
        &Default::default(),
    )
    .unwrap();
    let exact = {
        let h = catalog_build(&space, &CatalogSpec::new(Family::Horosphere)).unwrap();
        curvature_integral(&h, &BallRegion::new(origin(&space), 0.4).unwrap(), Tolerance::relative(1e-9), &Default::default())
            .unwrap()
            .value
    };
    assert_relative_eq!(ok.value, exact, max_relative = 1e-5);
}
