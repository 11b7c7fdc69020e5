use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Location;
use crate::error::{Error, Result};
use crate::surface::curvature::psd_bound_check;
use crate::surface::{BallBound, CoordKind, ImmersedHypersurface};

/// Where and how densely curvature hypotheses are sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSpec {
    pub points_per_chart: usize,
    pub seed: u64,
    /// Charts with unbounded coordinates are sampled over their part of the
    /// geodesic ball of this radius about the chart base point.
    pub radius: f64,
    /// Slack for `R >= kappa`, the eigenvalue window and the comparison with `gamma_min`.
    pub tol: f64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            points_per_chart: 200,
            seed: 0,
            radius: 3.0,
            tol: 1e-9,
        }
    }
}

/// Sampled check of `H > 0` and `kappa <= R <= Gamma/(n-1) H + kappa`.
///
/// The check is sampled, not certified: it only sees the sample points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub h_min: f64,
    pub h_max: f64,
    /// Smallest `R - kappa`.
    pub excess_min: f64,
    /// Largest `(n-1)(R - kappa)/H` over samples with `H > 0`, clamped at 0.
    pub gamma_min: f64,
    pub sample_count: usize,
    /// Samples with `H <= 0`.
    pub nonpositive_mean: usize,
    pub first_nonpositive_mean: Option<Location>,
    /// Samples where `0 <= P_1 <= 2nH` fails or is not applicable.
    pub eigen_window_failures: usize,
    /// Smallest margin of the eigenvalue window.
    pub eigen_margin_min: f64,
    /// Sign applied to the raw cofactor normal, per chart.
    pub normal_signs: Vec<f64>,
    pub tol: f64,
    /// Always true: the hypotheses were checked at sample points only.
    pub sampled: bool,
}

impl HypothesisReport {
    /// Whether `gamma` satisfies the sampled hypotheses.
    pub fn admissible(&self, gamma: f64) -> bool {
        self.nonpositive_mean == 0
            && self.eigen_window_failures == 0
            && self.excess_min >= -self.tol
            && gamma >= self.gamma_min - self.tol * self.gamma_min.max(1.0)
    }
}

pub fn hypothesis_report(
    surface: &ImmersedHypersurface,
    sampling: &SamplingSpec,
) -> Result<HypothesisReport> {
    if sampling.points_per_chart == 0 || !(sampling.radius > 0.0) {
        return Err(Error::Precondition(
            "sampling needs at least one point per chart and a positive radius".into(),
        ));
    }
    let space = surface.space();
    let n = space.n() as f64;
    let kappa = space.kappa();
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut report = HypothesisReport {
        h_min: f64::INFINITY,
        h_max: f64::NEG_INFINITY,
        excess_min: f64::INFINITY,
        gamma_min: 0.0,
        sample_count: 0,
        nonpositive_mean: 0,
        first_nonpositive_mean: None,
        eigen_window_failures: 0,
        eigen_margin_min: f64::INFINITY,
        normal_signs: (0..surface.charts().len())
            .map(|i| surface.normal_sign(i))
            .collect(),
        tol: sampling.tol,
        sampled: true,
    };
    for (index, chart) in surface.charts().iter().enumerate() {
        let domain = chart.domain();
        let bounds: Vec<(f64, f64)> = if domain.is_bounded() {
            domain.lo.iter().copied().zip(domain.hi.iter().copied()).collect()
        } else {
            let base = chart.point(&chart.base_point());
            match chart.ball_bound(space, base.as_slice(), sampling.radius) {
                Some(BallBound::Within(b)) => b
                    .into_iter()
                    .enumerate()
                    .map(|(k, (a, b))| match domain.kinds[k] {
                        CoordKind::Unbounded => (a, b),
                        _ => (a.max(domain.lo[k]), b.min(domain.hi[k])),
                    })
                    .collect(),
                Some(BallBound::Empty) => continue,
                None => {
                    return Err(Error::Capability(format!(
                        "chart {index} cannot bound a ball of radius {} for sampling",
                        sampling.radius
                    )))
                }
            }
        };
        for _ in 0..sampling.points_per_chart {
            let u: Vec<f64> = bounds.iter().map(|&(a, b)| rng.gen_range(a..=b)).collect();
            let point = surface.curvature_at(index, &u)?;
            report.sample_count += 1;
            report.h_min = report.h_min.min(point.mean);
            report.h_max = report.h_max.max(point.mean);
            let excess = point.scalar - kappa;
            report.excess_min = report.excess_min.min(excess);
            if point.mean > 0.0 {
                let ratio = (n - 1.0) * excess / point.mean;
                report.gamma_min = report.gamma_min.max(ratio);
            } else {
                report.nonpositive_mean += 1;
                if report.first_nonpositive_mean.is_none() {
                    report.first_nonpositive_mean = Some(Location::ChartPoint {
                        chart: index,
                        u: u.clone(),
                    });
                }
            }
            let psd = psd_bound_check(&point, sampling.tol);
            if !(psd.psd && psd.upper_ok) {
                report.eigen_window_failures += 1;
            }
            report.eigen_margin_min = report.eigen_margin_min.min(psd.margin);
        }
    }
    Ok(report)
}
