//! Checks of the monotonicity of curvature-weighted ball integrals and of the
//! pointwise and integrated identities behind it.

mod hypothesis;
mod identities;
mod series;

pub use hypothesis::{hypothesis_report, HypothesisReport, SamplingSpec};
pub use identities::{
    cutoff_inequality_check, divergence_theorem_check, lemma_trace_residual,
    prop_divergence_residual, CutoffInequality, DivergenceCheck, Residual,
};
pub use series::{
    corollary_from_series, corollary_lower_bound, divergence_criterion, phi_series,
    verify_monotonicity, CorollaryReport, DivergenceCriterion, PhiSeries,
};

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hyperbolic::{mink, AmbientPoint, SpaceForm};
use crate::surface::CurvaturePoint;

/// Where the worst violation of a verdict was found.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    None,
    /// Index into a radius grid; for consecutive-pair checks, the left index.
    GridIndex(usize),
    ChartPoint { chart: usize, u: Vec<f64> },
}

/// Outcome of an inequality check with error bars.
///
/// Each checked item has a raw deficit (how far the inequality fails, positive
/// when it fails) and an error bar. An item violates the check only when its
/// deficit exceeds its error bar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub passed: bool,
    /// Largest `deficit - error_bar`; non-positive iff `passed`.
    pub worst_violation: f64,
    pub location: Location,
    /// Passed, but only thanks to the error bars.
    pub within_tolerance: bool,
    /// Smallest slack `-deficit` over all items, ignoring error bars.
    pub margin: f64,
    /// `deficit - error_bar` per item.
    pub residual_details: Vec<f64>,
}

impl Verdict {
    /// Builds a verdict from `(deficit, error_bar)` pairs.
    pub fn from_deficits(items: &[(f64, f64)], locate: impl Fn(usize) -> Location) -> Self {
        let residual_details: Vec<f64> = items.iter().map(|(d, e)| d - e).collect();
        let mut worst = None;
        for (i, &v) in residual_details.iter().enumerate() {
            match worst {
                Some((_, w)) if !(v > w) && !v.is_nan() => {}
                _ => worst = Some((i, v)),
            }
        }
        let (location, worst_violation) = match worst {
            Some((i, v)) => (locate(i), v),
            None => (Location::None, 0.0),
        };
        let passed = worst_violation <= 0.0;
        let margin = items
            .iter()
            .map(|(d, _)| -d)
            .fold(f64::INFINITY, f64::min);
        Self {
            passed,
            worst_violation,
            location,
            within_tolerance: passed && margin < 0.0,
            margin: if items.is_empty() { 0.0 } else { margin },
            residual_details,
        }
    }
}

/// Non-negative test function `f` on `M` with its differential.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// `f = 1`.
    Unit,
    /// `f = exp(1 - 1/(1 - w))` for `w < 1`, else 0, where
    /// `w = (cosh(c rho(center, x)) - 1) / (cosh(c radius) - 1)`.
    ///
    /// Smooth, equal to 1 at `center` and supported in the geodesic ball of
    /// the given radius.
    Bump { center: AmbientPoint, radius: f64 },
}

impl TestFunction {
    pub fn bump(center: AmbientPoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Precondition(format!(
                "bump radius must be positive, got {radius}"
            )));
        }
        Ok(TestFunction::Bump { center, radius })
    }

    /// `sup f` over `M`.
    pub fn sup(&self) -> f64 {
        1.0
    }

    /// Value and chart differential `df/du_a` at a curvature point.
    pub fn evaluate(&self, space: &SpaceForm, point: &CurvaturePoint) -> (f64, DVector<f64>) {
        let n = point.dim();
        match self {
            TestFunction::Unit => (1.0, DVector::zeros(n)),
            TestFunction::Bump { center, radius } => {
                let kappa = space.kappa();
                let denom = (space.sqrt_neg_kappa() * radius).cosh() - 1.0;
                let c = center.as_slice();
                let w = (kappa * mink(c, point.x.as_slice()) - 1.0) / denom;
                if w >= 1.0 {
                    return (0.0, DVector::zeros(n));
                }
                let gap = 1.0 - w;
                let f = (1.0 - 1.0 / gap).exp();
                let df_dw = -f / (gap * gap);
                let grad = DVector::from_fn(n, |a, _| {
                    df_dw * kappa * mink(c, point.tangents.column(a).as_slice()) / denom
                });
                (f, grad)
            }
        }
    }

    /// Chart components of the gradient `g^{ab} df/du_b`.
    pub fn gradient(&self, space: &SpaceForm, point: &CurvaturePoint) -> (f64, DVector<f64>) {
        let (f, df) = self.evaluate(space, point);
        (f, &point.metric_inv * df)
    }
}

/// Smoothed step `h_m(t) = S(m t)` with the quintic ramp
/// `S(x) = 10 x^3 - 15 x^4 + 6 x^5` on `[0, 1]`.
///
/// `h_m` vanishes for `t <= 0`, equals 1 for `t >= 1/m`, increases in between and
/// is twice continuously differentiable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffFamily {
    pub m: f64,
}

impl CutoffFamily {
    pub fn new(m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Precondition(format!(
                "cutoff index must be positive, got {m}"
            )));
        }
        Ok(Self { m })
    }

    /// Width `1/m` of the ramp.
    pub fn width(&self) -> f64 {
        1.0 / self.m
    }

    pub fn value(&self, t: f64) -> f64 {
        let x = self.m * t;
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let x = self.m * t;
        if x <= 0.0 || x >= 1.0 {
            0.0
        } else {
            30.0 * self.m * x * x * (1.0 - x) * (1.0 - x)
        }
    }
}

impl Default for CutoffFamily {
    fn default() -> Self {
        Self { m: 20.0 }
    }
}

#[cfg(test)]
mod tests;
