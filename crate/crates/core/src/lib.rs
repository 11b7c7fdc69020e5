//! Numerical geometry of hypersurfaces in hyperbolic space.
//!
//! The crate works in the hyperboloid model of `H^{n+1}(kappa)` and provides
//! curvature of chart-parametrized hypersurfaces, adaptive quadrature over
//! `M ∩ B_r(p)`, and checks of monotonicity and integral identities for
//! curvature-weighted volumes of extrinsic balls.

pub mod error;
pub mod hyperbolic;
pub mod quadrature;
pub mod surface;
pub mod verify;

pub use error::{Error, Result};
pub use hyperbolic::{
    distance_hessian_apply, exp_map, geodesic_distance, geodesic_point, grad_distance,
    minkowski_inner, position_vector, AmbientPoint, AmbientVector, GeometryTolerances, Isometry,
    SpaceForm,
};
pub use surface::{
    catalog_build, BallBound, CatalogSpec, Chart, ChartDomain, CoordKind, CurvaturePoint, DerivativeMode,
    Family, FnChart, ImmersedHypersurface, Orientation, Placement, PlaneRotation,
};
pub use quadrature::{
    curvature_integral, divergence_on_m, integrate_components, integrate_over_ball,
    mean_curvature_integral, BallRegion, IntegralEstimate, QuadratureOptions, Sample, Tolerance,
};
pub use verify::{
    corollary_from_series, corollary_lower_bound, cutoff_inequality_check, divergence_criterion,
    divergence_theorem_check, hypothesis_report, lemma_trace_residual, phi_series,
    prop_divergence_residual, verify_monotonicity, CorollaryReport, CutoffFamily,
    CutoffInequality, DivergenceCheck, DivergenceCriterion, HypothesisReport, Location, PhiSeries,
    Residual, SamplingSpec, TestFunction, Verdict,
};
