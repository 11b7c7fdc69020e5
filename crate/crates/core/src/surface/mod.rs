//! Chart-parametrized hypersurfaces `x: M^n -> H^{n+1}(kappa)`.
//!
//! A surface is a list of charts that partition `M` up to measure zero. Each chart
//! maps a box of parameters to Minkowski coordinates and may supply analytic
//! first and second derivatives; otherwise derivatives come from central
//! differences with one Richardson step.

pub mod catalog;
pub mod curvature;
pub(crate) mod spherical;

pub use spherical::unit_sphere_volume;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolic::{AmbientPoint, Isometry, SpaceForm};

pub use catalog::{catalog_build, CatalogSpec, Family, Placement, PlaneRotation};
pub use curvature::{
    first_fundamental, mean_curvature, newton_p1, psd_bound_check, scalar_curvature_gauss,
    shape_operator, unit_normal, CurvaturePoint, PsdReport,
};

/// How a chart coordinate behaves at the ends of its range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordKind {
    /// A hard end (e.g. a polar angle); finite differences must not cross it.
    Bounded,
    /// The chart repeats with the range as its period.
    Periodic,
    /// Open towards infinity; finite differences may cross a finite end, and the
    /// ball bound supplies the integration range.
    Unbounded,
}

/// Parameter box of a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub kinds: Vec<CoordKind>,
}

impl ChartDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, kinds: Vec<CoordKind>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != kinds.len() {
            return Err(Error::Dimension {
                expected: lo.len(),
                got: hi.len().max(kinds.len()),
            });
        }
        for k in 0..lo.len() {
            let ok = match kinds[k] {
                CoordKind::Unbounded => true,
                _ => lo[k].is_finite() && hi[k].is_finite() && lo[k] < hi[k],
            };
            if !ok {
                return Err(Error::Precondition(format!(
                    "chart coordinate {k} has an invalid range [{}, {}]",
                    lo[k], hi[k]
                )));
            }
        }
        Ok(Self { lo, hi, kinds })
    }

    pub fn unbounded(n: usize) -> Self {
        Self {
            lo: vec![f64::NEG_INFINITY; n],
            hi: vec![f64::INFINITY; n],
            kinds: vec![CoordKind::Unbounded; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.kinds.iter().all(|k| *k != CoordKind::Unbounded)
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .enumerate()
            .all(|(k, &v)| v >= self.lo[k] && v <= self.hi[k])
    }

    /// Largest step usable by a centered stencil at `u` along coordinate `k`.
    pub(crate) fn stencil_room(&self, u: &[f64], k: usize) -> f64 {
        match self.kinds[k] {
            CoordKind::Bounded => (u[k] - self.lo[k]).min(self.hi[k] - u[k]),
            _ => f64::INFINITY,
        }
    }
}

/// Parameter region of a chart containing `M ∩ B_r(p)`.
#[derive(Debug, Clone, PartialEq)]
pub enum BallBound {
    Empty,
    Within(Vec<(f64, f64)>),
}

/// Position with first and second chart derivatives, in Minkowski coordinates.
#[derive(Debug, Clone)]
pub struct Jet {
    pub x: DVector<f64>,
    /// Column `a` is `d x / d u_a`.
    pub d1: DMatrix<f64>,
    /// Entry `a * n + b` is `d^2 x / d u_a d u_b`.
    pub d2: Vec<DVector<f64>>,
}

impl Jet {
    fn transform(&self, iso: &Isometry) -> Jet {
        let m = iso.matrix();
        Jet {
            x: m * &self.x,
            d1: m * &self.d1,
            d2: self.d2.iter().map(|v| m * v).collect(),
        }
    }
}

/// One chart of an immersion.
pub trait Chart: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn domain(&self) -> &ChartDomain;

    /// Parameter used to fix the orientation of the normal.
    fn base_point(&self) -> Vec<f64>;

    fn point(&self, u: &[f64]) -> DVector<f64>;

    /// Analytic derivatives, when the chart has them.
    fn jet(&self, _u: &[f64]) -> Option<Jet> {
        None
    }

    /// Upper bound of `|dx(xi)| / |xi|` over the whole domain, `|xi|` Euclidean in
    /// parameters. Quadrature uses it to classify cells against the ball.
    fn lipschitz(&self) -> Option<f64> {
        None
    }

    /// Bound of the same ratio over the parameter box `[lo, hi]`.
    fn lipschitz_on(&self, _lo: &[f64], _hi: &[f64]) -> Option<f64> {
        self.lipschitz()
    }

    /// Parameter box containing `M ∩ B_r(p)`. `None` means the chart cannot say.
    fn ball_bound(&self, space: &SpaceForm, p: &[f64], r: f64) -> Option<BallBound>;

    /// Closed-form unit normal for the mean-convex orientation, if known.
    fn oracle_normal(&self, _u: &[f64]) -> Option<DVector<f64>> {
        None
    }
}

type PointFn = dyn Fn(&[f64]) -> DVector<f64> + Send + Sync;

/// A chart given by a closure. The box domain is assumed to cover the whole piece
/// of surface it parametrizes.
pub struct FnChart {
    domain: ChartDomain,
    base: Vec<f64>,
    map: Box<PointFn>,
    lipschitz: Option<f64>,
    covers_radius: Option<f64>,
}

impl FnChart {
    pub fn new(
        domain: ChartDomain,
        map: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if !domain.is_bounded() {
            return Err(Error::Unsupported(
                "closure charts need a bounded parameter box".into(),
            ));
        }
        let base = domain
            .lo
            .iter()
            .zip(&domain.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        Ok(Self {
            domain,
            base,
            map: Box::new(map),
            lipschitz: None,
            covers_radius: None,
        })
    }

    pub fn with_base_point(mut self, base: Vec<f64>) -> Self {
        self.base = base;
        self
    }

    pub fn with_lipschitz(mut self, bound: f64) -> Self {
        self.lipschitz = Some(bound);
        self
    }

    /// Declares that the box covers `M ∩ B_r` only for `r <= radius` (the chart is a
    /// truncation of a larger surface).
    pub fn covering_balls_up_to(mut self, radius: f64) -> Self {
        self.covers_radius = Some(radius);
        self
    }
}

impl fmt::Debug for FnChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnChart")
            .field("domain", &self.domain)
            .field("covers_radius", &self.covers_radius)
            .finish()
    }
}

impl Chart for FnChart {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    fn base_point(&self) -> Vec<f64> {
        self.base.clone()
    }

    fn point(&self, u: &[f64]) -> DVector<f64> {
        (self.map)(u)
    }

    fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    fn ball_bound(&self, _space: &SpaceForm, _p: &[f64], r: f64) -> Option<BallBound> {
        match self.covers_radius {
            Some(max) if r > max => None,
            _ => Some(BallBound::Within(
                self.domain.lo.iter().copied().zip(self.domain.hi.iter().copied()).collect(),
            )),
        }
    }
}

/// A chart moved by an isometry.
#[derive(Debug)]
pub(crate) struct PlacedChart {
    inner: Box<dyn Chart>,
    iso: Isometry,
    inverse: Isometry,
}

impl PlacedChart {
    pub(crate) fn new(inner: Box<dyn Chart>, iso: Isometry) -> Self {
        let inverse = iso.inverse();
        Self {
            inner,
            iso,
            inverse,
        }
    }
}

impl Chart for PlacedChart {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn domain(&self) -> &ChartDomain {
        self.inner.domain()
    }
    fn base_point(&self) -> Vec<f64> {
        self.inner.base_point()
    }
    fn point(&self, u: &[f64]) -> DVector<f64> {
        self.iso.apply(&self.inner.point(u))
    }
    fn jet(&self, u: &[f64]) -> Option<Jet> {
        self.inner.jet(u).map(|j| j.transform(&self.iso))
    }
    fn lipschitz(&self) -> Option<f64> {
        self.inner.lipschitz()
    }
    fn lipschitz_on(&self, lo: &[f64], hi: &[f64]) -> Option<f64> {
        self.inner.lipschitz_on(lo, hi)
    }
    fn ball_bound(&self, space: &SpaceForm, p: &[f64], r: f64) -> Option<BallBound> {
        let local = self.inverse.apply(&DVector::from_column_slice(p));
        self.inner.ball_bound(space, local.as_slice(), r)
    }
    fn oracle_normal(&self, u: &[f64]) -> Option<DVector<f64>> {
        self.inner.oracle_normal(u).map(|v| self.iso.apply(&v))
    }
}

/// How chart derivatives are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    Analytic,
    /// Central differences with steps `h` and `h/2` combined by Richardson
    /// extrapolation.
    FiniteDifference { step: f64 },
}

impl Default for DerivativeMode {
    fn default() -> Self {
        DerivativeMode::FiniteDifference { step: 1e-4 }
    }
}

/// Sign convention for the unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// The normal making `tr A >= 0` at each chart's base point.
    #[default]
    MeanConvex,
    /// The reverse of `MeanConvex`.
    Opposite,
    /// The normal given by the cofactor construction, as is.
    Positive,
    /// The reverse of `Positive`.
    Negative,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::MeanConvex => Orientation::Opposite,
            Orientation::Opposite => Orientation::MeanConvex,
            Orientation::Positive => Orientation::Negative,
            Orientation::Negative => Orientation::Positive,
        }
    }
}

/// Closed-form curvature data attached to catalog surfaces (test oracle).
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureOracle {
    /// Principal curvatures, ascending, for the mean-convex orientation.
    pub principal: Vec<f64>,
}

/// An immersed hypersurface of `H^{n+1}(kappa)`.
#[derive(Debug)]
pub struct ImmersedHypersurface {
    space: SpaceForm,
    charts: Vec<Box<dyn Chart>>,
    mode: DerivativeMode,
    orientation: Orientation,
    signs: Vec<f64>,
    oracle: Option<CurvatureOracle>,
    oracle_reversed: bool,
    catalog: Option<CatalogSpec>,
}

impl ImmersedHypersurface {
    /// Builds a surface; analytic derivatives are used when every chart has them.
    pub fn new(
        space: SpaceForm,
        charts: Vec<Box<dyn Chart>>,
        orientation: Orientation,
    ) -> Result<Self> {
        let mode = if charts.iter().all(|c| c.jet(&c.base_point()).is_some()) {
            DerivativeMode::Analytic
        } else {
            DerivativeMode::default()
        };
        Self::with_mode(space, charts, orientation, mode)
    }

    pub fn with_mode(
        space: SpaceForm,
        charts: Vec<Box<dyn Chart>>,
        orientation: Orientation,
        mode: DerivativeMode,
    ) -> Result<Self> {
        if charts.is_empty() {
            return Err(Error::Precondition("a surface needs at least one chart".into()));
        }
        for c in &charts {
            if c.dim() != space.n() || c.domain().dim() != space.n() {
                return Err(Error::Dimension {
                    expected: space.n(),
                    got: c.dim(),
                });
            }
            if let DerivativeMode::Analytic = mode {
                if c.jet(&c.base_point()).is_none() {
                    return Err(Error::Capability(
                        "chart has no analytic derivatives".into(),
                    ));
                }
            }
        }
        if let DerivativeMode::FiniteDifference { step } = mode {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::Precondition(format!("invalid difference step {step}")));
            }
        }
        let mut surface = Self {
            space,
            signs: vec![1.0; charts.len()],
            charts,
            mode,
            orientation,
            oracle: None,
            oracle_reversed: false,
            catalog: None,
        };
        surface.resolve_orientation()?;
        Ok(surface)
    }

    fn resolve_orientation(&mut self) -> Result<()> {
        for i in 0..self.charts.len() {
            let base = self.charts[i].base_point();
            let raw = match self.orientation {
                Orientation::Positive => 1.0,
                Orientation::Negative => -1.0,
                Orientation::MeanConvex | Orientation::Opposite => {
                    self.signs[i] = 1.0;
                    let cp = self.curvature_at(i, &base)?;
                    let trace = cp.mean * self.space.n() as f64;
                    let scale = cp.norm_sq.sqrt().max(self.space.sqrt_neg_kappa());
                    if trace.abs() <= 1e-10 * scale {
                        return Err(Error::AmbiguousOrientation { trace });
                    }
                    let s = trace.signum();
                    if self.orientation == Orientation::Opposite {
                        -s
                    } else {
                        s
                    }
                }
            };
            self.signs[i] = raw;
        }
        Ok(())
    }

    pub(crate) fn attach_catalog(
        mut self,
        spec: CatalogSpec,
        oracle: CurvatureOracle,
    ) -> Result<Self> {
        // the oracle is stated for the mean-convex normal
        let base = self.charts[0].base_point();
        let mean = self.curvature_at(0, &base)?.mean;
        let oracle_mean: f64 = oracle.principal.iter().sum();
        self.oracle_reversed = oracle_mean != 0.0 && mean * oracle_mean < 0.0;
        self.catalog = Some(spec);
        self.oracle = Some(oracle);
        Ok(self)
    }

    /// Same charts with another derivative mode.
    pub fn with_derivative_mode(mut self, mode: DerivativeMode) -> Result<Self> {
        if let DerivativeMode::Analytic = mode {
            if self.charts.iter().any(|c| c.jet(&c.base_point()).is_none()) {
                return Err(Error::Capability("chart has no analytic derivatives".into()));
            }
        }
        self.mode = mode;
        Ok(self)
    }

    /// Same charts with the normal reversed.
    pub fn flipped(mut self) -> Self {
        self.orientation = self.orientation.flipped();
        for s in &mut self.signs {
            *s = -*s;
        }
        self.oracle_reversed = !self.oracle_reversed;
        self
    }

    pub fn space(&self) -> &SpaceForm {
        &self.space
    }

    pub fn charts(&self) -> &[Box<dyn Chart>] {
        &self.charts
    }

    pub fn chart(&self, index: usize) -> Result<&dyn Chart> {
        self.charts
            .get(index)
            .map(|c| c.as_ref())
            .ok_or(Error::ChartIndex(index))
    }

    pub fn derivative_mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Sign applied to the cofactor normal of chart `index`.
    pub fn normal_sign(&self, index: usize) -> f64 {
        self.signs[index]
    }

    pub fn catalog(&self) -> Option<&CatalogSpec> {
        self.catalog.as_ref()
    }

    /// Closed-form principal curvatures (ascending) for the current orientation.
    pub fn oracle_principal(&self) -> Option<Vec<f64>> {
        let oracle = self.oracle.as_ref()?;
        let mut k: Vec<f64> = if self.oracle_reversed {
            oracle.principal.iter().map(|v| -v).collect()
        } else {
            oracle.principal.clone()
        };
        k.sort_by(f64::total_cmp);
        Some(k)
    }

    pub fn point(&self, chart: usize, u: &[f64]) -> Result<AmbientPoint> {
        Ok(AmbientPoint::from_raw(self.chart(chart)?.point(u)))
    }

    /// Position and derivatives at `u` in the surface's derivative mode.
    pub fn jet(&self, chart: usize, u: &[f64]) -> Result<Jet> {
        let c = self.chart(chart)?;
        if u.len() != c.dim() {
            return Err(Error::Dimension {
                expected: c.dim(),
                got: u.len(),
            });
        }
        match self.mode {
            DerivativeMode::Analytic => c
                .jet(u)
                .ok_or_else(|| Error::Capability("chart has no analytic derivatives".into())),
            DerivativeMode::FiniteDifference { step } => fd_jet(c, u, step),
        }
    }

    /// All pointwise extrinsic data at `u`.
    pub fn curvature_at(&self, chart: usize, u: &[f64]) -> Result<CurvaturePoint> {
        let jet = self.jet(chart, u)?;
        curvature::from_jet(&self.space, u, jet, self.signs[chart])
    }
}

/// Central-difference jet with one Richardson step (`h` and `h/2`).
fn fd_jet(chart: &dyn Chart, u: &[f64], h: f64) -> Result<Jet> {
    let n = u.len();
    if !(h > 1e-12) {
        return Err(Error::NumericalDerivative(format!("step {h} underflows")));
    }
    let x = chart.point(u);
    let len = x.len();
    let eval = |shifts: &[(usize, f64)]| {
        let mut v = u.to_vec();
        for &(k, d) in shifts {
            v[k] += d;
        }
        chart.point(&v)
    };
    let mut d1 = DMatrix::zeros(len, n);
    let mut d2 = vec![DVector::zeros(len); n * n];
    let mut diag = Vec::with_capacity(n);
    for a in 0..n {
        let first = |s: f64| (eval(&[(a, s)]) - eval(&[(a, -s)])) / (2.0 * s);
        let rich = (first(0.5 * h) * 4.0 - first(h)) / 3.0;
        d1.set_column(a, &rich);
        let second = |s: f64| (eval(&[(a, s)]) - &x * 2.0 + eval(&[(a, -s)])) / (s * s);
        diag.push((second(0.5 * h) * 4.0 - second(h)) / 3.0);
    }
    for a in 0..n {
        d2[a * n + a] = diag[a].clone();
        for b in (a + 1)..n {
            let mixed = |s: f64| {
                (eval(&[(a, s), (b, s)]) - eval(&[(a, s), (b, -s)]) - eval(&[(a, -s), (b, s)])
                    + eval(&[(a, -s), (b, -s)]))
                    / (4.0 * s * s)
            };
            let v = (mixed(0.5 * h) * 4.0 - mixed(h)) / 3.0;
            d2[a * n + b] = v.clone();
            d2[b * n + a] = v;
        }
    }
    if d1.iter().chain(d2.iter().flat_map(|v| v.iter())).any(|v| !v.is_finite()) {
        return Err(Error::NumericalDerivative(format!(
            "non-finite difference quotient at {u:?}"
        )));
    }
    Ok(Jet { x, d1, d2 })
}
