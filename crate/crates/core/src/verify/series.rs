use serde::Serialize;

use super::{Location, Verdict};
use crate::error::{Error, Result};
use crate::hyperbolic::{AmbientPoint, SpaceForm};
use crate::quadrature::{integrate_components, IntegralEstimate, QuadratureOptions, Tolerance};
use crate::surface::ImmersedHypersurface;

/// `phi(r) = e^{Gamma r / 2} g(r)` with
/// `g(r) = sinh(c r)^{-(n-1)/2} ∫_{M ∩ B_r} sinh(c rho) H dM` on a radius grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiSeries {
    pub gamma: f64,
    pub r_grid: Vec<f64>,
    /// `∫_{M ∩ B_r} sinh(c rho) H dM`.
    pub integral_sinh_h: Vec<IntegralEstimate>,
    /// `∫_{M ∩ B_r} H dM`.
    pub integral_h: Vec<IntegralEstimate>,
    pub g_values: Vec<f64>,
    pub g_err: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_err: Vec<f64>,
    /// Whether both integrals converged, per radius.
    pub converged: Vec<bool>,
    /// `c = sqrt(-kappa)` and `n`, kept for derived quantities.
    pub c: f64,
    pub n: usize,
}

impl PhiSeries {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    /// `sinh(c r)^{-(n-1)/2}`.
    fn weight(&self, r: f64) -> f64 {
        (self.c * r).sinh().powf(-0.5 * (self.n as f64 - 1.0))
    }
}

fn check_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.is_empty() {
        return Err(Error::Precondition("radius grid is empty".into()));
    }
    if !(r_grid[0] > 0.0) || r_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition(
            "radius grid must be positive and strictly increasing".into(),
        ));
    }
    if r_grid.iter().any(|r| !r.is_finite()) {
        return Err(Error::Precondition("radius grid must be finite".into()));
    }
    Ok(())
}

/// Computes `phi` on `r_grid` from one adaptive pass over `M ∩ B_{r_max}`.
///
/// `tol` is relative to the integrals at the largest radius.
pub fn phi_series(
    surface: &ImmersedHypersurface,
    p: &AmbientPoint,
    gamma: f64,
    r_grid: &[f64],
    tol: f64,
    options: &QuadratureOptions,
) -> Result<PhiSeries> {
    if !(gamma >= 0.0) {
        return Err(Error::Precondition(format!("Gamma must be >= 0, got {gamma}")));
    }
    check_grid(r_grid)?;
    let space = surface.space();
    let c = space.sqrt_neg_kappa();
    let count = r_grid.len();
    let last = count - 1;
    let mut tolerances = Vec::with_capacity(2 * count);
    for _ in 0..count {
        tolerances.push(Tolerance::relative(tol).relative_to(2 * last));
        tolerances.push(Tolerance::relative(tol).relative_to(2 * last + 1));
    }
    let estimates = integrate_components(surface, p, r_grid, &tolerances, options, |s, out| {
        let weighted = (c * s.rho).sinh() * s.point.mean;
        for k in s.band..count {
            out[2 * k] = weighted;
            out[2 * k + 1] = s.point.mean;
        }
        Ok(())
    })?;
    let integral_sinh_h: Vec<IntegralEstimate> = estimates.iter().step_by(2).copied().collect();
    let integral_h: Vec<IntegralEstimate> = estimates.iter().skip(1).step_by(2).copied().collect();
    let mut series = PhiSeries {
        gamma,
        r_grid: r_grid.to_vec(),
        g_values: Vec::with_capacity(count),
        g_err: Vec::with_capacity(count),
        phi: Vec::with_capacity(count),
        phi_err: Vec::with_capacity(count),
        converged: integral_sinh_h
            .iter()
            .zip(&integral_h)
            .map(|(a, b)| a.converged && b.converged)
            .collect(),
        integral_sinh_h,
        integral_h,
        c,
        n: space.n(),
    };
    for (i, &r) in r_grid.iter().enumerate() {
        let w = series.weight(r);
        let growth = (0.5 * gamma * r).exp();
        let est = series.integral_sinh_h[i];
        series.g_values.push(w * est.value);
        series.g_err.push(w * est.abs_error);
        series.phi.push(growth * w * est.value);
        series.phi_err.push(growth * w * est.abs_error);
    }
    Ok(series)
}

/// `phi(r_{i+1}) >= phi(r_i)` for consecutive grid points, up to both error bars.
pub fn verify_monotonicity(series: &PhiSeries) -> Verdict {
    let items: Vec<(f64, f64)> = series
        .phi
        .windows(2)
        .zip(series.phi_err.windows(2))
        .map(|(v, e)| (v[0] - v[1], e[0] + e[1]))
        .collect();
    Verdict::from_deficits(&items, Location::GridIndex)
}

/// Lower bound for `∫_{M ∩ B_r} H dM` at radii beyond `r0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorollaryReport {
    pub gamma: f64,
    pub r0: f64,
    /// `∫_{M ∩ B_{r0}} sinh(c rho) H dM`.
    pub integral_r0: IntegralEstimate,
    /// Radii `r > r0` where the bound is checked.
    pub r_grid: Vec<f64>,
    /// `B(r) = sinh(c r)^{(n-3)/2} e^{-Gamma r/2} phi(r0)`.
    pub bound: Vec<f64>,
    pub bound_err: Vec<f64>,
    pub integral_h: Vec<IntegralEstimate>,
    /// `∫_{r0}^r C e^{-Gamma t/2} dt` with
    /// `C = (Gamma/2) B(r0) e^{Gamma r0/2} / (1 - e^{-Gamma (r-r0)/2})`; descriptive only.
    pub integrated_form: Vec<f64>,
    /// `∫_{M ∩ B_r} H dM >= B(r)` up to error bars.
    pub verdict: Verdict,
    /// `phi(r) >= phi(r0)` up to error bars; implies the bound whenever it passes
    /// without relying on error bars.
    pub phi_verdict: Verdict,
}

/// `B(r) = sinh(c r)^{(n-3)/2} e^{-Gamma r/2} phi(r0)`.
fn bound_from_phi(c: f64, n: usize, gamma: f64, phi_r0: f64, r: f64) -> f64 {
    (c * r).sinh().powf(0.5 * (n as f64 - 3.0)) * (-0.5 * gamma * r).exp() * phi_r0
}

/// Evaluates the bound from an existing series, with `r0 = series.r_grid[r0_index]`
/// and the check at all later grid points.
pub fn corollary_from_series(series: &PhiSeries, r0_index: usize) -> Result<CorollaryReport> {
    if r0_index + 1 >= series.r_grid.len() {
        return Err(Error::Precondition(
            "the bound needs grid points beyond r0".into(),
        ));
    }
    let (c, n, gamma) = (series.c, series.n, series.gamma);
    let r0 = series.r_grid[r0_index];
    let phi0 = series.phi[r0_index];
    let phi0_err = series.phi_err[r0_index];
    let b_r0 = bound_from_phi(c, n, gamma, phi0, r0);
    let mut report = CorollaryReport {
        gamma,
        r0,
        integral_r0: series.integral_sinh_h[r0_index],
        r_grid: Vec::new(),
        bound: Vec::new(),
        bound_err: Vec::new(),
        integral_h: Vec::new(),
        integrated_form: Vec::new(),
        verdict: Verdict::from_deficits(&[], |_| Location::None),
        phi_verdict: Verdict::from_deficits(&[], |_| Location::None),
    };
    let mut items = Vec::new();
    let mut phi_items = Vec::new();
    for i in r0_index + 1..series.r_grid.len() {
        let r = series.r_grid[i];
        let b = bound_from_phi(c, n, gamma, phi0, r);
        let b_err = bound_from_phi(c, n, gamma, phi0_err, r);
        let ih = series.integral_h[i];
        items.push((b - ih.value, b_err + ih.abs_error));
        phi_items.push((phi0 - series.phi[i], phi0_err + series.phi_err[i]));
        let integrated = if gamma > 0.0 {
            let decay = 1.0 - (-0.5 * gamma * (r - r0)).exp();
            let constant = 0.5 * gamma * b_r0 * (0.5 * gamma * r0).exp() / decay;
            constant * (2.0 / gamma) * ((-0.5 * gamma * r0).exp() - (-0.5 * gamma * r).exp())
        } else {
            b_r0
        };
        report.r_grid.push(r);
        report.bound.push(b);
        report.bound_err.push(b_err);
        report.integral_h.push(ih);
        report.integrated_form.push(integrated);
    }
    let locate = |k: usize| Location::GridIndex(r0_index + 1 + k);
    report.verdict = Verdict::from_deficits(&items, locate);
    report.phi_verdict = Verdict::from_deficits(&phi_items, locate);
    Ok(report)
}

/// Computes the integrals at `r0` and on `r_grid` in one pass and checks the bound.
#[allow(clippy::too_many_arguments)]
pub fn corollary_lower_bound(
    surface: &ImmersedHypersurface,
    p: &AmbientPoint,
    gamma: f64,
    r0: f64,
    r_grid: &[f64],
    tol: f64,
    options: &QuadratureOptions,
) -> Result<CorollaryReport> {
    if !(r0 > 0.0) || r_grid.iter().any(|&r| !(r > r0)) {
        return Err(Error::Precondition(format!(
            "every grid radius must exceed r0 = {r0} > 0"
        )));
    }
    let mut grid = Vec::with_capacity(r_grid.len() + 1);
    grid.push(r0);
    grid.extend_from_slice(r_grid);
    let series = phi_series(surface, p, gamma, &grid, tol, options)?;
    corollary_from_series(&series, 0)
}

/// Whether `Gamma < (n-3) c` forces `∫_M H dM = ∞`, and the exponential growth
/// rate `((n-3) c - Gamma)/2` of the lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceCriterion {
    pub applies: bool,
    pub rate: f64,
}

pub fn divergence_criterion(space: &SpaceForm, gamma: f64) -> Result<DivergenceCriterion> {
    if !(gamma >= 0.0) {
        return Err(Error::Precondition(format!("Gamma must be >= 0, got {gamma}")));
    }
    let threshold = (space.n() as f64 - 3.0) * space.sqrt_neg_kappa();
    Ok(DivergenceCriterion {
        applies: gamma < threshold,
        rate: 0.5 * (threshold - gamma),
    })
}
