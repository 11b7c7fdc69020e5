//! Totally umbilic and rotation-invariant hypersurfaces with closed-form curvature.
//!
//! Each family is built in a standard position and then moved by a placement
//! isometry. Standard positions, with `c = sqrt(-kappa)` and `o = e_0 / c`:
//!
//! - geodesic sphere of radius `a` about `o`;
//! - horosphere through `o` centred at the ideal point of the null direction
//!   `e_0 - e_{n+1}`;
//! - equidistant hypersurface at distance `t` from the hyperplane `x_{n+1} = 0`;
//! - tube of radius `s` about the geodesic through `o` with velocity `e_1`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::spherical;
use super::{
    BallBound, Chart, ChartDomain, CoordKind, CurvatureOracle, ImmersedHypersurface, Jet,
    Orientation, PlacedChart,
};
use crate::error::{Error, Result};
use crate::hyperbolic::{
    distance_raw, geodesic_point, AmbientPoint, AmbientVector, Isometry, SpaceForm,
};

/// Closed-form surface families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    GeodesicSphere { radius: f64 },
    Horosphere,
    Equidistant { distance: f64 },
    GeodesicTube { radius: f64 },
}

/// Rotation in a spatial coordinate plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneRotation {
    pub axes: (usize, usize),
    pub angle: f64,
}

/// Placement isometry: rotations applied in order, then the boost moving the origin
/// to `origin_to` (if given).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Placement {
    pub rotations: Vec<PlaneRotation>,
    pub origin_to: Option<Vec<f64>>,
}

impl Placement {
    pub fn isometry(&self, space: &SpaceForm) -> Result<Isometry> {
        let len = space.coord_len();
        let mut iso = Isometry::identity(len);
        for r in &self.rotations {
            iso = Isometry::rotation(len, r.axes.0, r.axes.1, r.angle)?.compose(&iso);
        }
        if let Some(target) = &self.origin_to {
            let p = AmbientPoint::new(space, target.clone())?;
            iso = Isometry::boost_to(space, &p).compose(&iso);
        }
        Ok(iso)
    }
}

/// A catalog surface request.
///
/// Serialized flat: the family tag and its parameter sit next to `placement`
/// and `orientation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCatalogSpec")]
pub struct CatalogSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default)]
    pub orientation: Orientation,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum FamilyTag {
    GeodesicSphere,
    Horosphere,
    Equidistant,
    GeodesicTube,
}

// flatten and deny_unknown_fields do not combine, so the flat form is spelled out
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalogSpec {
    family: FamilyTag,
    #[serde(default)]
    radius: Option<f64>,
    #[serde(default)]
    distance: Option<f64>,
    #[serde(default)]
    placement: Placement,
    #[serde(default)]
    orientation: Orientation,
}

impl TryFrom<RawCatalogSpec> for CatalogSpec {
    type Error = String;

    fn try_from(raw: RawCatalogSpec) -> std::result::Result<Self, String> {
        let family = match (raw.family, raw.radius, raw.distance) {
            (FamilyTag::GeodesicSphere, Some(radius), None) => Family::GeodesicSphere { radius },
            (FamilyTag::GeodesicTube, Some(radius), None) => Family::GeodesicTube { radius },
            (FamilyTag::Equidistant, None, Some(distance)) => Family::Equidistant { distance },
            (FamilyTag::Horosphere, None, None) => Family::Horosphere,
            (FamilyTag::Horosphere, _, _) => {
                return Err("horosphere takes neither `radius` nor `distance`".into())
            }
            (FamilyTag::Equidistant, _, _) => {
                return Err("equidistant needs `distance` and no `radius`".into())
            }
            _ => return Err("spheres and tubes need `radius` and no `distance`".into()),
        };
        Ok(CatalogSpec {
            family,
            placement: raw.placement,
            orientation: raw.orientation,
        })
    }
}

impl CatalogSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            placement: Placement::default(),
            orientation: Orientation::MeanConvex,
        }
    }

    pub fn placed(mut self, placement: Placement) -> Self {
        self.placement = placement;
        self
    }

    /// Whether the surface is closed (compact without boundary).
    pub fn is_closed(&self) -> bool {
        matches!(self.family, Family::GeodesicSphere { .. })
    }

    /// Principal curvatures for the mean-convex normal, ascending.
    pub fn principal_curvatures(&self, space: &SpaceForm) -> Vec<f64> {
        let c = space.sqrt_neg_kappa();
        let n = space.n();
        match self.family {
            Family::GeodesicSphere { radius } => vec![c / (c * radius).tanh(); n],
            Family::Horosphere => vec![c; n],
            Family::Equidistant { distance } => vec![c * (c * distance).tanh().abs(); n],
            Family::GeodesicTube { radius } => {
                let mut k = vec![c * (c * radius).tanh()];
                k.extend(std::iter::repeat(c / (c * radius).tanh()).take(n - 1));
                k
            }
        }
    }

    /// Reference points used as ball centres when none are configured.
    pub fn default_centers(&self, space: &SpaceForm) -> Result<Vec<(String, AmbientPoint)>> {
        let surface = catalog_build(space, self)?;
        let iso = self.placement.isometry(space)?;
        let origin = iso.apply_point(&AmbientPoint::origin(space));
        let (at, inward) = if let Family::Equidistant { distance } = self.family {
            // the pole of the polar chart, so that centres lie on its axis
            let c = space.sqrt_neg_kappa();
            let n = space.n();
            let t = c * distance;
            let mut x = DVector::zeros(n + 2);
            x[0] = t.cosh() / c;
            x[n + 1] = t.sinh() / c;
            let mut eta = DVector::zeros(n + 2);
            eta[0] = -t.sinh();
            eta[n + 1] = -t.cosh();
            if distance < 0.0 {
                eta = -eta;
            }
            (
                AmbientPoint::from_raw(iso.apply(&x)),
                iso.apply(&eta),
            )
        } else {
            let chart = surface.chart(0)?;
            let cp = surface.curvature_at(0, &chart.base_point())?;
            // unit normal pointing to the mean-convex side
            let inward = match surface.oracle_principal() {
                Some(k) if k.iter().sum::<f64>() < 0.0 => -cp.normal.clone(),
                _ => cp.normal.clone(),
            };
            (AmbientPoint::from_raw(cp.x.clone()), inward)
        };
        let along = |s: f64| {
            geodesic_point(
                space,
                &AmbientVector::from_raw(at.clone(), inward.clone()),
                s,
            )
        };
        let mut out = Vec::new();
        match self.family {
            Family::GeodesicSphere { .. } => out.push(("center".to_string(), origin)),
            Family::Horosphere => {
                out.push(("on_surface".to_string(), at.clone()));
                out.push(("inside_0.5".to_string(), along(0.5)));
                out.push(("outside_0.7".to_string(), along(-0.7)));
            }
            Family::Equidistant { distance } => {
                out.push(("on_surface".to_string(), at.clone()));
                if distance.abs() > 0.0 {
                    out.push(("on_hyperplane".to_string(), along(distance.abs())));
                }
                out.push(("outside_0.5".to_string(), along(-0.5)));
            }
            Family::GeodesicTube { radius } => {
                out.push(("on_surface".to_string(), at.clone()));
                out.push(("on_axis".to_string(), along(radius)));
                out.push(("outside_0.5".to_string(), along(-0.5)));
            }
        }
        Ok(out)
    }
}

/// Builds a catalog surface with analytic derivatives and curvature oracle.
pub fn catalog_build(space: &SpaceForm, spec: &CatalogSpec) -> Result<ImmersedHypersurface> {
    let c = space.sqrt_neg_kappa();
    let n = space.n();
    let chart: Box<dyn Chart> = match spec.family {
        Family::GeodesicSphere { radius } => {
            positive("sphere radius", radius)?;
            Box::new(SphereChart::new(c, n, radius))
        }
        Family::Horosphere => Box::new(HorosphereChart::new(c, n)),
        Family::Equidistant { distance } => {
            finite("equidistant distance", distance)?;
            Box::new(EquidistantChart::new(c, n, distance))
        }
        Family::GeodesicTube { radius } => {
            positive("tube radius", radius)?;
            Box::new(TubeChart::new(c, n, radius))
        }
    };
    let iso = spec.placement.isometry(space)?;
    let chart: Box<dyn Chart> = if iso.is_identity() {
        chart
    } else {
        Box::new(PlacedChart::new(chart, iso))
    };
    let totally_geodesic = matches!(spec.family, Family::Equidistant { distance } if distance == 0.0);
    let orientation = match spec.orientation {
        Orientation::MeanConvex if totally_geodesic => Orientation::Positive,
        Orientation::Opposite if totally_geodesic => Orientation::Negative,
        o => o,
    };
    let surface = ImmersedHypersurface::with_mode(
        space.clone(),
        vec![chart],
        orientation,
        super::DerivativeMode::Analytic,
    )?;
    let oracle = CurvatureOracle {
        principal: spec.principal_curvatures(space),
    };
    surface.attach_catalog(spec.clone(), oracle)
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{what} must be positive, got {v}")))
    }
}

fn finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{what} must be finite, got {v}")))
    }
}

fn angle_domain(m: usize) -> (Vec<f64>, Vec<f64>, Vec<CoordKind>) {
    let lo = vec![0.0; m];
    let mut hi = vec![PI; m];
    let mut kinds = vec![CoordKind::Bounded; m];
    hi[m - 1] = 2.0 * PI;
    kinds[m - 1] = CoordKind::Periodic;
    (lo, hi, kinds)
}

fn angle_base(m: usize) -> Vec<f64> {
    let mut b = vec![0.5 * PI; m];
    b[m - 1] = PI;
    b
}

fn full_box(domain: &ChartDomain) -> Vec<(f64, f64)> {
    domain
        .lo
        .iter()
        .copied()
        .zip(domain.hi.iter().copied())
        .collect()
}

/// Slight outward padding so round-off never clips the support.
fn pad(lo: f64, hi: f64) -> (f64, f64) {
    let w = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
    (lo - w, hi + w)
}

#[derive(Debug)]
struct SphereChart {
    c: f64,
    n: usize,
    radius: f64,
    domain: ChartDomain,
}

impl SphereChart {
    fn new(c: f64, n: usize, radius: f64) -> Self {
        let (lo, hi, kinds) = angle_domain(n);
        Self {
            c,
            n,
            radius,
            domain: ChartDomain { lo, hi, kinds },
        }
    }

    fn scales(&self) -> (f64, f64) {
        let t = self.c * self.radius;
        (t.cosh() / self.c, t.sinh() / self.c)
    }
}

impl Chart for SphereChart {
    fn dim(&self) -> usize {
        self.n
    }
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn base_point(&self) -> Vec<f64> {
        angle_base(self.n)
    }
    fn point(&self, u: &[f64]) -> DVector<f64> {
        let (ch, sh) = self.scales();
        let w = spherical::embed(u);
        let mut x = DVector::zeros(self.n + 2);
        x[0] = ch;
        for k in 0..=self.n {
            x[k + 1] = sh * w[k];
        }
        x
    }
    fn jet(&self, u: &[f64]) -> Option<Jet> {
        let (ch, sh) = self.scales();
        let n = self.n;
        let w = spherical::jet(u);
        let lift = |v: &[f64], zeroth: f64| {
            let mut out = DVector::zeros(n + 2);
            out[0] = zeroth;
            for k in 0..=n {
                out[k + 1] = sh * v[k];
            }
            out
        };
        let x = lift(&w.value, ch);
        let mut d1 = DMatrix::zeros(n + 2, n);
        for a in 0..n {
            d1.set_column(a, &lift(&w.d1[a], 0.0));
        }
        let d2 = w.d2.iter().map(|v| lift(v, 0.0)).collect();
        Some(Jet { x, d1, d2 })
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(self.scales().1)
    }
    fn ball_bound(&self, space: &SpaceForm, p: &[f64], r: f64) -> Option<BallBound> {
        let origin = AmbientPoint::origin(space);
        let d = distance_raw(space, origin.as_slice(), p).ok()?;
        // distances from p to the sphere fill [|d - a|, d + a]
        if r < (d - self.radius).abs() * (1.0 - 1e-12) {
            Some(BallBound::Empty)
        } else {
            Some(BallBound::Within(full_box(&self.domain)))
        }
    }
    fn oracle_normal(&self, u: &[f64]) -> Option<DVector<f64>> {
        let t = self.c * self.radius;
        let w = spherical::embed(u);
        let mut eta = DVector::zeros(self.n + 2);
        eta[0] = -t.sinh();
        for k in 0..=self.n {
            eta[k + 1] = -t.cosh() * w[k];
        }
        Some(eta)
    }
}

#[derive(Debug)]
struct HorosphereChart {
    c: f64,
    n: usize,
    domain: ChartDomain,
}

impl HorosphereChart {
    fn new(c: f64, n: usize) -> Self {
        Self {
            c,
            n,
            domain: ChartDomain::unbounded(n),
        }
    }

    /// `N = e_0 - e_{n+1}`, the null direction of the centre at infinity.
    fn null(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.n + 2);
        v[0] = 1.0;
        v[self.n + 1] = -1.0;
        v
    }
}

impl Chart for HorosphereChart {
    fn dim(&self) -> usize {
        self.n
    }
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn base_point(&self) -> Vec<f64> {
        vec![0.0; self.n]
    }
    fn point(&self, u: &[f64]) -> DVector<f64> {
        let c = self.c;
        let q = 0.5 * c * c * u.iter().map(|v| v * v).sum::<f64>();
        let mut x = DVector::zeros(self.n + 2);
        x[0] = (1.0 + q) / c;
        for i in 0..self.n {
            x[i + 1] = u[i];
        }
        x[self.n + 1] = -q / c;
        x
    }
    fn jet(&self, u: &[f64]) -> Option<Jet> {
        let n = self.n;
        let null = self.null();
        let x = self.point(u);
        let mut d1 = DMatrix::zeros(n + 2, n);
        for a in 0..n {
            let mut col = &null * (self.c * u[a]);
            col[a + 1] += 1.0;
            d1.set_column(a, &col);
        }
        let mut d2 = vec![DVector::zeros(n + 2); n * n];
        for a in 0..n {
            d2[a * n + a] = &null * self.c;
        }
        Some(Jet { x, d1, d2 })
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
    fn ball_bound(&self, _space: &SpaceForm, p: &[f64], r: f64) -> Option<BallBound> {
        // cosh(c rho) = c p_0 + alpha |u|^2 - c^2 p'.u, alpha = c^3 (p_0 + p_{n+1}) / 2
        let c = self.c;
        let n = self.n;
        let alpha = 0.5 * c * c * c * (p[0] + p[n + 1]);
        if !(alpha > 0.0) {
            return None;
        }
        let centre: Vec<f64> = (0..n).map(|i| c * c * p[i + 1] / (2.0 * alpha)).collect();
        let r2 = ((c * r).cosh() - c * p[0]) / alpha + centre.iter().map(|v| v * v).sum::<f64>();
        if r2 < 0.0 {
            return Some(BallBound::Empty);
        }
        let rad = r2.sqrt();
        Some(BallBound::Within(
            centre.iter().map(|&m| pad(m - rad, m + rad)).collect(),
        ))
    }
    fn oracle_normal(&self, u: &[f64]) -> Option<DVector<f64>> {
        Some(self.null() - self.point(u) * self.c)
    }
}

#[derive(Debug)]
struct EquidistantChart {
    c: f64,
    n: usize,
    distance: f64,
    domain: ChartDomain,
}

/// Geodesic polar coordinates `(sigma, angles)` on the hyperplane about `o`,
/// pushed out along the normal geodesics by `distance`.
impl EquidistantChart {
    fn new(c: f64, n: usize, distance: f64) -> Self {
        let (alo, ahi, akinds) = angle_domain(n - 1);
        let mut lo = vec![0.0];
        let mut hi = vec![f64::INFINITY];
        let mut kinds = vec![CoordKind::Unbounded];
        lo.extend(alo);
        hi.extend(ahi);
        kinds.extend(akinds);
        Self {
            c,
            n,
            distance,
            domain: ChartDomain { lo, hi, kinds },
        }
    }

    /// Hyperplane point `(cosh(c sigma) e_0 + sinh(c sigma) w) / c`.
    fn hyperplane_point(&self, sigma: f64, w: &[f64]) -> DVector<f64> {
        let c = self.c;
        let mut y = DVector::zeros(self.n + 2);
        y[0] = (c * sigma).cosh() / c;
        for k in 0..self.n {
            y[k + 1] = (c * sigma).sinh() / c * w[k];
        }
        y
    }

    /// Foot of the normal geodesic through `o`.
    fn pole(&self) -> DVector<f64> {
        let t = self.c * self.distance;
        let mut x = DVector::zeros(self.n + 2);
        x[0] = t.cosh() / self.c;
        x[self.n + 1] = t.sinh() / self.c;
        x
    }
}

impl Chart for EquidistantChart {
    fn dim(&self) -> usize {
        self.n
    }
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn base_point(&self) -> Vec<f64> {
        let mut b = vec![1.0 / self.c];
        b.extend(angle_base(self.n - 1));
        b
    }
    fn point(&self, u: &[f64]) -> DVector<f64> {
        let t = self.c * self.distance;
        let w = spherical::embed(&u[1..]);
        let mut x = self.hyperplane_point(u[0], &w) * t.cosh();
        x[self.n + 1] = t.sinh() / self.c;
        x
    }
    fn jet(&self, u: &[f64]) -> Option<Jet> {
        let c = self.c;
        let n = self.n;
        let m = n - 1;
        let ch = (c * self.distance).cosh();
        let (cs, ss) = ((c * u[0]).cosh(), (c * u[0]).sinh());
        let w = spherical::jet(&u[1..]);
        let x = self.point(u);
        let mut d1 = DMatrix::zeros(n + 2, n);
        let mut d2 = vec![DVector::zeros(n + 2); n * n];
        d1[(0, 0)] = ch * ss;
        d2[0][0] = ch * c * cs;
        for k in 0..n {
            d1[(k + 1, 0)] = ch * cs * w.value[k];
            d2[0][k + 1] = ch * c * ss * w.value[k];
        }
        for a in 0..m {
            for k in 0..n {
                d1[(k + 1, a + 1)] = ch * ss / c * w.d1[a][k];
                d2[a + 1][k + 1] = ch * cs * w.d1[a][k];
                d2[(a + 1) * n][k + 1] = ch * cs * w.d1[a][k];
            }
            for b in 0..m {
                let v = &w.d2[a * m + b];
                for k in 0..n {
                    d2[(a + 1) * n + b + 1][k + 1] = ch * ss / c * v[k];
                }
            }
        }
        Some(Jet { x, d1, d2 })
    }
    fn lipschitz_on(&self, lo: &[f64], hi: &[f64]) -> Option<f64> {
        // speed^2 = cosh^2(ct) (d sigma^2 + sinh^2(c sigma) / c^2 |dw|^2), |dw| <= |d angles|
        let sigma = lo[0].abs().max(hi[0].abs());
        let ch = (self.c * self.distance).cosh();
        Some(ch * (1.0f64).max((self.c * sigma).sinh() / self.c))
    }
    fn ball_bound(&self, space: &SpaceForm, p: &[f64], r: f64) -> Option<BallBound> {
        // the normal geodesics are orthogonal to every equidistant, so p is at
        // distance |delta - t| from the surface; the triangle inequality through
        // the pole bounds sigma
        let c = self.c;
        let n = self.n;
        let t = c * self.distance;
        let delta = (c * p[n + 1]).asinh() / c;
        if r < (delta - self.distance).abs() * (1.0 - 1e-12) {
            return Some(BallBound::Empty);
        }
        let d = distance_raw(space, self.pole().as_slice(), p).ok()?;
        let q = ((c * (r + d)).cosh() + t.sinh().powi(2)) / t.cosh().powi(2);
        let sigma = q.max(1.0).acosh() / c;
        if !sigma.is_finite() {
            return None;
        }
        let mut bounds = vec![(0.0, pad(0.0, sigma).1)];
        bounds.extend(full_box(&self.domain).into_iter().skip(1));
        Some(BallBound::Within(bounds))
    }
    fn oracle_normal(&self, u: &[f64]) -> Option<DVector<f64>> {
        if self.distance == 0.0 {
            return None;
        }
        let t = self.c * self.distance;
        let w = spherical::embed(&u[1..]);
        let mut eta = self.hyperplane_point(u[0], &w) * (-self.c * t.sinh());
        eta[self.n + 1] -= t.cosh();
        Some(eta * self.distance.signum())
    }
}

#[derive(Debug)]
struct TubeChart {
    c: f64,
    n: usize,
    radius: f64,
    domain: ChartDomain,
}

impl TubeChart {
    fn new(c: f64, n: usize, radius: f64) -> Self {
        let (alo, ahi, akinds) = angle_domain(n - 1);
        let mut lo = vec![f64::NEG_INFINITY];
        let mut hi = vec![f64::INFINITY];
        let mut kinds = vec![CoordKind::Unbounded];
        lo.extend(alo);
        hi.extend(ahi);
        kinds.extend(akinds);
        Self {
            c,
            n,
            radius,
            domain: ChartDomain { lo, hi, kinds },
        }
    }

    /// Axis point `(cosh(c tau) e_0 + sinh(c tau) e_1) / c`.
    fn axis(&self, tau: f64) -> (f64, f64) {
        let (s, ch) = ((self.c * tau).sinh(), (self.c * tau).cosh());
        (ch / self.c, s / self.c)
    }
}

impl Chart for TubeChart {
    fn dim(&self) -> usize {
        self.n
    }
    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
    fn base_point(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        b.extend(angle_base(self.n - 1));
        b
    }
    fn point(&self, u: &[f64]) -> DVector<f64> {
        let t = self.c * self.radius;
        let (l0, l1) = self.axis(u[0]);
        let w = spherical::embed(&u[1..]);
        let mut x = DVector::zeros(self.n + 2);
        x[0] = t.cosh() * l0;
        x[1] = t.cosh() * l1;
        for k in 0..self.n {
            x[k + 2] = t.sinh() / self.c * w[k];
        }
        x
    }
    fn jet(&self, u: &[f64]) -> Option<Jet> {
        let c = self.c;
        let n = self.n;
        let m = n - 1;
        let t = c * self.radius;
        let (ch, sh) = (t.cosh(), t.sinh() / c);
        let (l0, l1) = self.axis(u[0]);
        let w = spherical::jet(&u[1..]);
        let x = self.point(u);
        let mut d1 = DMatrix::zeros(n + 2, n);
        // d/dtau of l is c * (l1, l0)
        d1[(0, 0)] = ch * c * l1;
        d1[(1, 0)] = ch * c * l0;
        for a in 0..m {
            for k in 0..n {
                d1[(k + 2, a + 1)] = sh * w.d1[a][k];
            }
        }
        let mut d2 = vec![DVector::zeros(n + 2); n * n];
        d2[0][0] = ch * c * c * l0;
        d2[0][1] = ch * c * c * l1;
        for a in 0..m {
            for b in 0..m {
                let v = &w.d2[a * m + b];
                let e = &mut d2[(a + 1) * n + (b + 1)];
                for k in 0..n {
                    e[k + 2] = sh * v[k];
                }
            }
        }
        Some(Jet { x, d1, d2 })
    }
    fn lipschitz(&self) -> Option<f64> {
        let t = self.c * self.radius;
        Some(t.cosh().max(t.sinh() / self.c))
    }
    fn ball_bound(&self, _space: &SpaceForm, p: &[f64], r: f64) -> Option<BallBound> {
        // cosh(c rho) >= c m cosh(cs) cosh(c (tau - tau0)) - c sinh(cs) |p_perp|
        let c = self.c;
        let n = self.n;
        let t = c * self.radius;
        let m2 = p[0] * p[0] - p[1] * p[1];
        if !(m2 > 0.0) || !(p[0] > 0.0) {
            return None;
        }
        let m = m2.sqrt();
        let tau0 = (p[1] / p[0]).atanh() / c;
        let perp = (2..n + 2).map(|i| p[i] * p[i]).sum::<f64>().sqrt();
        let q = ((c * r).cosh() + c * t.sinh() * perp) / (m * c * t.cosh());
        if q < 1.0 {
            return Some(BallBound::Empty);
        }
        let half = q.acosh() / c;
        let mut bounds = vec![pad(tau0 - half, tau0 + half)];
        bounds.extend(full_box(&self.domain).into_iter().skip(1));
        Some(BallBound::Within(bounds))
    }
    fn oracle_normal(&self, u: &[f64]) -> Option<DVector<f64>> {
        let c = self.c;
        let t = c * self.radius;
        let (l0, l1) = self.axis(u[0]);
        let w = spherical::embed(&u[1..]);
        let mut eta = DVector::zeros(self.n + 2);
        eta[0] = -c * t.sinh() * l0;
        eta[1] = -c * t.sinh() * l1;
        for k in 0..self.n {
            eta[k + 2] = -t.cosh() * w[k];
        }
        Some(eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic::mink;
    use approx::assert_relative_eq;

    fn families() -> Vec<Family> {
        vec![
            Family::GeodesicSphere { radius: 0.8 },
            Family::Horosphere,
            Family::Equidistant { distance: 0.6 },
            Family::GeodesicTube { radius: 0.7 },
        ]
    }

    fn sample_params(chart: &dyn Chart) -> Vec<Vec<f64>> {
        let d = chart.domain();
        let mut out = Vec::new();
        for s in [0.21, 0.47, 0.73] {
            out.push(
                (0..d.dim())
                    .map(|k| match d.kinds[k] {
                        CoordKind::Unbounded => (2.0 * s - 0.9 + 0.3 * k as f64).max(d.lo[k] + s),
                        _ => d.lo[k] + (s + 0.07 * k as f64) * (d.hi[k] - d.lo[k]),
                    })
                    .collect(),
            );
        }
        out
    }

    #[test]
    fn charts_lie_on_hyperboloid_and_match_oracle() {
        for kappa in [-1.0, -2.5] {
            for n in [3, 4] {
                let space = SpaceForm::new(kappa, n).unwrap();
                for family in families() {
                    let spec = CatalogSpec::new(family.clone());
                    let surface = catalog_build(&space, &spec).unwrap();
                    let chart = surface.chart(0).unwrap();
                    let expected = surface.oracle_principal().unwrap();
                    for u in sample_params(chart) {
                        let x = chart.point(&u);
                        assert!(space.hyperboloid_residual(x.as_slice()) < 1e-13);
                        let cp = surface.curvature_at(0, &u).unwrap();
                        for (k, e) in cp.principal.iter().zip(&expected) {
                            assert_relative_eq!(k, e, epsilon = 1e-10, max_relative = 1e-10);
                        }
                        let eta = chart.oracle_normal(&u).unwrap();
                        assert_relative_eq!(
                            mink(eta.as_slice(), cp.normal.as_slice()),
                            1.0,
                            epsilon = 1e-10
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn finite_differences_agree_with_analytic_jets() {
        let space = SpaceForm::new(-1.0, 3).unwrap();
        for family in families() {
            let analytic = catalog_build(&space, &CatalogSpec::new(family.clone())).unwrap();
            let fd = catalog_build(&space, &CatalogSpec::new(family))
                .unwrap()
                .with_derivative_mode(super::super::DerivativeMode::FiniteDifference { step: 1e-3 })
                .unwrap();
            for u in sample_params(analytic.chart(0).unwrap()) {
                let a = analytic.curvature_at(0, &u).unwrap();
                let b = fd.curvature_at(0, &u).unwrap();
                assert_relative_eq!(a.mean, b.mean, epsilon = 1e-7);
                assert_relative_eq!(a.scalar, b.scalar, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn placement_moves_surface_and_keeps_curvature() {
        let space = SpaceForm::new(-1.0, 3).unwrap();
        let target = AmbientPoint::from_spatial(&space, &[0.3, -0.2, 0.5, 0.1]).unwrap();
        let placement = Placement {
            rotations: vec![PlaneRotation {
                axes: (1, 3),
                angle: 0.7,
            }],
            origin_to: Some(target.as_slice().to_vec()),
        };
        for family in families() {
            let spec = CatalogSpec::new(family).placed(placement.clone());
            let surface = catalog_build(&space, &spec).unwrap();
            let expected = surface.oracle_principal().unwrap();
            for u in sample_params(surface.chart(0).unwrap()) {
                let cp = surface.curvature_at(0, &u).unwrap();
                assert!(space.hyperboloid_residual(cp.x.as_slice()) < 1e-12);
                for (k, e) in cp.principal.iter().zip(&expected) {
                    assert_relative_eq!(k, e, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn flipping_reverses_curvature() {
        let space = SpaceForm::new(-1.0, 3).unwrap();
        let surface = catalog_build(&space, &CatalogSpec::new(Family::Horosphere))
            .unwrap()
            .flipped();
        let cp = surface.curvature_at(0, &[0.2, 0.1, -0.3]).unwrap();
        assert_relative_eq!(cp.mean, -1.0, epsilon = 1e-12);
        assert_eq!(surface.oracle_principal().unwrap(), vec![-1.0; 3]);
    }

    #[test]
    fn horosphere_has_scalar_curvature_zero() {
        let space = SpaceForm::new(-1.0, 4).unwrap();
        let s = catalog_build(&space, &CatalogSpec::new(Family::Horosphere)).unwrap();
        let cp = s.curvature_at(0, &[0.1, -0.4, 0.9, 0.0]).unwrap();
        assert_relative_eq!(cp.mean, 1.0, epsilon = 1e-13);
        assert_relative_eq!(cp.scalar, 0.0, epsilon = 1e-13);
    }

    fn sampled_min_distance(surface: &ImmersedHypersurface, p: &[f64]) -> f64 {
        let space = surface.space();
        let chart = surface.chart(0).unwrap();
        let d = chart.domain();
        let mut best = f64::INFINITY;
        let steps = 14;
        let n = d.dim();
        let mut idx = vec![0usize; n];
        loop {
            let u: Vec<f64> = (0..n)
                .map(|k| {
                    let (lo, hi) = match d.kinds[k] {
                        CoordKind::Unbounded => (-3.0, 3.0),
                        _ => (d.lo[k], d.hi[k]),
                    };
                    lo + (hi - lo) * idx[k] as f64 / (steps - 1) as f64
                })
                .collect();
            let x = chart.point(&u);
            best = best.min(distance_raw(space, p, x.as_slice()).unwrap());
            let mut k = 0;
            while k < n {
                idx[k] += 1;
                if idx[k] < steps {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
        best
    }

    #[test]
    fn ball_bounds_contain_every_close_sample() {
        let space = SpaceForm::new(-1.0, 3).unwrap();
        let p = AmbientPoint::from_spatial(&space, &[0.4, 0.2, -0.3, 0.35]).unwrap();
        for family in families() {
            let surface = catalog_build(&space, &CatalogSpec::new(family.clone())).unwrap();
            let chart = surface.chart(0).unwrap();
            let r = 1.5;
            let bound = chart.ball_bound(&space, p.as_slice(), r).unwrap();
            let d = chart.domain();
            let n = d.dim();
            let steps = 12;
            let mut idx = vec![0usize; n];
            loop {
                let u: Vec<f64> = (0..n)
                    .map(|k| {
                        let (lo, hi) = match d.kinds[k] {
                            CoordKind::Unbounded => (d.lo[k].max(-4.0), d.hi[k].min(4.0)),
                            _ => (d.lo[k], d.hi[k]),
                        };
                        lo + (hi - lo) * idx[k] as f64 / (steps - 1) as f64
                    })
                    .collect();
                let x = chart.point(&u);
                let rho = distance_raw(&space, p.as_slice(), x.as_slice()).unwrap();
                if rho < r {
                    match &bound {
                        BallBound::Empty => panic!("{family:?}: sample inside an empty bound"),
                        BallBound::Within(b) => {
                            for k in 0..n {
                                assert!(
                                    u[k] >= b[k].0 && u[k] <= b[k].1,
                                    "{family:?}: {u:?} outside {b:?}"
                                );
                            }
                        }
                    }
                }
                let mut k = 0;
                while k < n {
                    idx[k] += 1;
                    if idx[k] < steps {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == n {
                    break;
                }
            }
            // a ball well short of the surface
            let dmin = sampled_min_distance(&surface, p.as_slice());
            if dmin > 0.2 {
                let b = chart.ball_bound(&space, p.as_slice(), 0.05).unwrap();
                if let BallBound::Within(bx) = b {
                    assert!(bx.iter().all(|(lo, hi)| lo <= hi));
                }
            }
        }
    }

    #[test]
    fn default_centers_lie_where_expected() {
        let space = SpaceForm::new(-1.0, 3).unwrap();
        let spec = CatalogSpec::new(Family::GeodesicTube { radius: 0.7 });
        let centers = spec.default_centers(&space).unwrap();
        let axis = &centers[1].1;
        // the axis lies in the (e_0, e_1) plane
        for k in 2..5 {
            assert!(axis.as_slice()[k].abs() < 1e-12);
        }
        let spec = CatalogSpec::new(Family::Equidistant { distance: 0.6 });
        let centers = spec.default_centers(&space).unwrap();
        assert!(centers[1].1.as_slice()[4].abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        let space = SpaceForm::new(-1.0, 3).unwrap();
        assert!(catalog_build(&space, &CatalogSpec::new(Family::GeodesicSphere { radius: 0.0 })).is_err());
        assert!(catalog_build(&space, &CatalogSpec::new(Family::GeodesicTube { radius: -1.0 })).is_err());
    }
}
