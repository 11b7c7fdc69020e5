//! Pointwise extrinsic geometry of a hypersurface from a chart jet.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::Jet;
use crate::error::{Error, Result};
use crate::hyperbolic::{mink, SpaceForm};

/// Everything the integrands need at one chart point.
#[derive(Debug, Clone)]
pub struct CurvaturePoint {
    pub u: Vec<f64>,
    pub x: DVector<f64>,
    /// Columns are the coordinate tangents `d x / d u_a`.
    pub tangents: DMatrix<f64>,
    /// Second derivatives, entry `a * n + b`.
    pub second: Vec<DVector<f64>>,
    pub normal: DVector<f64>,
    pub metric: DMatrix<f64>,
    pub metric_inv: DMatrix<f64>,
    /// `sqrt(det g)`, the area density in chart coordinates.
    pub sqrt_det: f64,
    pub second_form: DMatrix<f64>,
    /// Mixed shape operator `A = g^{-1} h`, acting on coordinate tangents.
    pub shape: DMatrix<f64>,
    /// Principal curvatures, ascending.
    pub principal: Vec<f64>,
    /// `H = tr A / n`.
    pub mean: f64,
    /// `|A|^2`.
    pub norm_sq: f64,
    /// Scalar curvature normalized so that a totally geodesic slice has `R = kappa`.
    pub scalar: f64,
    pub kappa: f64,
}

impl CurvaturePoint {
    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// `P_1 = nH I - A` in mixed coordinates.
    pub fn newton_p1(&self) -> DMatrix<f64> {
        newton_p1(&self.shape, self.mean)
    }

    /// Eigenvalues `nH - k_i` of `P_1`, ascending.
    pub fn p1_eigs(&self) -> Vec<f64> {
        let nh = self.dim() as f64 * self.mean;
        let mut eigs: Vec<f64> = self.principal.iter().map(|k| nh - k).collect();
        eigs.sort_by(f64::total_cmp);
        eigs
    }

    /// `R - kappa`.
    pub fn scalar_excess(&self) -> f64 {
        self.scalar - self.kappa
    }

    /// Tangential part `g^{ij} <V, d_j x>` of an ambient vector, as chart components.
    pub fn tangential_components(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let lowered = DVector::from_fn(n, |j, _| {
            mink(v.as_slice(), self.tangents.column(j).as_slice())
        });
        &self.metric_inv * lowered
    }

    /// Pushes chart components forward to an ambient vector.
    pub fn push_forward(&self, comps: &DVector<f64>) -> DVector<f64> {
        &self.tangents * comps
    }
}

/// `g_ab = <d_a x, d_b x>`.
pub fn first_fundamental(tangents: &DMatrix<f64>) -> DMatrix<f64> {
    let n = tangents.ncols();
    DMatrix::from_fn(n, n, |a, b| {
        mink(
            tangents.column(a).as_slice(),
            tangents.column(b).as_slice(),
        )
    })
}

/// Unit normal by the generalized cross product of `J x, J d_1 x, ..., J d_n x`,
/// multiplied by `sign`.
pub fn unit_normal(x: &DVector<f64>, tangents: &DMatrix<f64>, sign: f64) -> Result<DVector<f64>> {
    let len = x.len();
    let n = tangents.ncols();
    if len != n + 2 {
        return Err(Error::Dimension {
            expected: n + 2,
            got: len,
        });
    }
    let mut rows = DMatrix::zeros(n + 1, len);
    for k in 0..len {
        let flip = if k == 0 { -1.0 } else { 1.0 };
        rows[(0, k)] = flip * x[k];
        for a in 0..n {
            rows[(a + 1, k)] = flip * tangents[(k, a)];
        }
    }
    let mut nu = DVector::zeros(len);
    for k in 0..len {
        let minor = rows.clone().remove_column(k);
        let det = minor.determinant();
        nu[k] = if k % 2 == 0 { det } else { -det };
    }
    let norm_sq = mink(nu.as_slice(), nu.as_slice());
    let scale = nu.norm_squared();
    if !(norm_sq > 1e-24 * scale.max(1e-300)) || !norm_sq.is_finite() {
        return Err(Error::Immersion(Vec::new()));
    }
    Ok(nu * (sign / norm_sq.sqrt()))
}

/// Mixed shape operator `g^{-1} h` and ascending principal curvatures, from the
/// symmetric form `L^{-1} h L^{-T}` with `g = L L^T`.
pub fn shape_operator(
    metric: &DMatrix<f64>,
    second_form: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let chol = metric
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Immersion(Vec::new()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Immersion(Vec::new()))?;
    let mut s = &linv * second_form * linv.transpose();
    s = (&s + s.transpose()) * 0.5;
    let mut principal: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    principal.sort_by(f64::total_cmp);
    let mixed = chol.solve(second_form);
    Ok((mixed, principal))
}

pub fn mean_curvature(principal: &[f64]) -> f64 {
    principal.iter().sum::<f64>() / principal.len() as f64
}

/// Gauss equation: `R = kappa + (n^2 H^2 - |A|^2) / (n (n - 1))`.
pub fn scalar_curvature_gauss(kappa: f64, n: usize, mean: f64, norm_sq: f64) -> f64 {
    let nf = n as f64;
    kappa + (nf * nf * mean * mean - norm_sq) / (nf * (nf - 1.0))
}

/// First Newton transformation `P_1 = nH I - A`.
pub fn newton_p1(shape: &DMatrix<f64>, mean: f64) -> DMatrix<f64> {
    let n = shape.nrows();
    DMatrix::identity(n, n) * (n as f64 * mean) - shape
}

/// Spectrum of `P_1` checked against `0 <= P_1 <= 2nH`.
///
/// The bounds are only claimed where `H > 0` and `R >= kappa`; elsewhere the report
/// is marked not applicable and both flags are `false`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PsdReport {
    pub applicable: bool,
    pub psd: bool,
    pub upper_ok: bool,
    /// `min(min lambda, 2nH - max lambda)`.
    pub margin: f64,
    /// Eigenvalues `nH - k_i`, ascending.
    pub eigenvalues: Vec<f64>,
}

pub fn psd_bound_check(point: &CurvaturePoint, tol: f64) -> PsdReport {
    let nh = point.dim() as f64 * point.mean;
    let eigenvalues = point.p1_eigs();
    let lo = eigenvalues[0];
    let hi = eigenvalues[eigenvalues.len() - 1];
    let margin = lo.min(2.0 * nh - hi);
    let scale = point.norm_sq.sqrt().max(nh.abs()).max(1.0);
    let slack = tol * scale;
    let applicable = point.mean > 0.0 && point.scalar_excess() >= -slack;
    PsdReport {
        applicable,
        psd: applicable && lo >= -slack,
        upper_ok: applicable && hi <= 2.0 * nh + slack,
        margin,
        eigenvalues,
    }
}

pub(crate) fn from_jet(space: &SpaceForm, u: &[f64], jet: Jet, sign: f64) -> Result<CurvaturePoint> {
    let n = u.len();
    let normal = unit_normal(&jet.x, &jet.d1, sign).map_err(|e| match e {
        Error::Immersion(_) => Error::Immersion(u.to_vec()),
        other => other,
    })?;
    let metric = first_fundamental(&jet.d1);
    let mut h = DMatrix::from_fn(n, n, |a, b| {
        mink(jet.d2[a * n + b].as_slice(), normal.as_slice())
    });
    h = (&h + h.transpose()) * 0.5;
    let (shape, principal) =
        shape_operator(&metric, &h).map_err(|_| Error::Immersion(u.to_vec()))?;
    let det = metric.determinant();
    let metric_inv = metric
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Immersion(u.to_vec()))?;
    let mean = mean_curvature(&principal);
    let norm_sq = principal.iter().map(|k| k * k).sum();
    let kappa = space.kappa();
    Ok(CurvaturePoint {
        u: u.to_vec(),
        x: jet.x,
        tangents: jet.d1,
        second: jet.d2,
        normal,
        sqrt_det: det.max(0.0).sqrt(),
        metric,
        metric_inv,
        second_form: h,
        shape,
        scalar: scalar_curvature_gauss(kappa, n, mean, norm_sq),
        principal,
        mean,
        norm_sq,
        kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn newton_trace_identity() {
        let shape = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 2.0, 0.1, 0.0, 0.1, 0.5]);
        let mean = shape.trace() / 3.0;
        let p1 = newton_p1(&shape, mean);
        // tr P_1 = (n - 1) n H
        assert_relative_eq!(p1.trace(), 2.0 * 3.0 * mean, epsilon = 1e-14);
        // tr(A P_1) = n^2 H^2 - |A|^2
        let norm_sq = (&shape * &shape).trace();
        assert_relative_eq!((&shape * &p1).trace(), 9.0 * mean * mean - norm_sq, epsilon = 1e-13);
    }

    #[test]
    fn gauss_equation_on_umbilic_point() {
        // three principal curvatures equal to coth(1): R = kappa + coth(1)^2
        let k = 1.0f64.cosh() / 1.0f64.sinh();
        let r = scalar_curvature_gauss(-1.0, 3, k, 3.0 * k * k);
        assert_relative_eq!(r, -1.0 + k * k, epsilon = 1e-14);
    }

    #[test]
    fn shape_operator_with_nonidentity_metric() {
        let g = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let h = DMatrix::from_row_slice(2, 2, &[8.0, 0.0, 0.0, 3.0]);
        let (a, k) = shape_operator(&g, &h).unwrap();
        assert_relative_eq!(a[(0, 0)], 2.0);
        assert_relative_eq!(k[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(k[1], 3.0, epsilon = 1e-14);
    }

    fn diagonal_point(principal: Vec<f64>) -> CurvaturePoint {
        let n = principal.len();
        let mean = mean_curvature(&principal);
        let norm_sq = principal.iter().map(|k| k * k).sum();
        CurvaturePoint {
            u: vec![0.0; n],
            x: DVector::zeros(n + 2),
            tangents: DMatrix::zeros(n + 2, n),
            second: Vec::new(),
            normal: DVector::zeros(n + 2),
            metric: DMatrix::identity(n, n),
            metric_inv: DMatrix::identity(n, n),
            sqrt_det: 1.0,
            second_form: DMatrix::zeros(n, n),
            shape: DMatrix::from_diagonal(&DVector::from_vec(principal.clone())),
            scalar: scalar_curvature_gauss(-1.0, n, mean, norm_sq),
            principal,
            mean,
            norm_sq,
            kappa: -1.0,
        }
    }

    #[test]
    fn psd_check_on_umbilic_points() {
        let coth1 = 1.0f64.cosh() / 1.0f64.sinh();
        let report = psd_bound_check(&diagonal_point(vec![coth1; 3]), 1e-12);
        assert!(report.applicable && report.psd && report.upper_ok);
        assert_relative_eq!(report.eigenvalues[2], 2.0 * coth1, epsilon = 1e-14);
        // margin = min(2 coth 1, 6 coth 1 - 2 coth 1)
        assert_relative_eq!(report.margin, 2.0 * coth1, epsilon = 1e-14);
        let horo = psd_bound_check(&diagonal_point(vec![1.0; 3]), 1e-12);
        assert!(horo.psd && horo.upper_ok);
        assert_relative_eq!(horo.margin, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn psd_check_is_gated_by_scalar_curvature() {
        // k = (-1, 0, 5): H > 0 but n^2 H^2 - |A|^2 = 16 - 26 < 0, so R < kappa
        let report = psd_bound_check(&diagonal_point(vec![-1.0, 0.0, 5.0]), 1e-12);
        assert!(!report.applicable);
        assert!(!report.psd && !report.upper_ok);
        assert_relative_eq!(report.eigenvalues[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(report.margin, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn psd_holds_with_a_negative_principal_curvature() {
        // k = (-0.1, 1, 1.5): H > 0 and n^2 H^2 - |A|^2 = 5.76 - 3.26 > 0
        let report = psd_bound_check(&diagonal_point(vec![-0.1, 1.0, 1.5]), 1e-12);
        assert!(report.applicable && report.psd && report.upper_ok);
        assert_relative_eq!(report.eigenvalues[0], 2.4 - 1.5, epsilon = 1e-14);
    }
}
