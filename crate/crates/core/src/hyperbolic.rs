//! The hyperboloid model of `H^{n+1}(kappa)`.
//!
//! Points live on the upper sheet `{x : <x,x> = 1/kappa, x_0 > 0}` of Minkowski
//! space `R^{1,n+1}` with the inner product `<x,y> = -x_0 y_0 + sum_{i>=1} x_i y_i`.
//! Tangent vectors at `q` are the vectors Minkowski-orthogonal to `q`.
//!
//! Everything here is a pure function of immutable values.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances used by the model. All of them are relative to the natural scale of
/// the quantity being tested (see the individual fields).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryTolerances {
    /// Hyperboloid membership: `|kappa <x,x> - 1| <= hyperboloid * (1 - kappa |x|^2)`,
    /// `|x|` being the Euclidean norm of the coordinate vector.
    pub hyperboloid: f64,
    /// Tangency: `|<base, v>| <= tangency * |base| |v|` (Euclidean norms).
    pub tangency: f64,
    /// Width of the window below 1 in which `kappa <p,q>` is clamped to 1.
    pub clamp: f64,
    /// Distances below this (in units of `1/sqrt(-kappa)`) count as coincident
    /// points for the gradient and Hessian of the distance.
    pub pole: f64,
}

impl Default for GeometryTolerances {
    fn default() -> Self {
        Self {
            hyperboloid: 1e-12,
            tangency: 1e-10,
            clamp: 1e-12,
            pole: 1e-10,
        }
    }
}

/// The ambient space `H^{n+1}(kappa)` hosting an `n`-dimensional hypersurface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceForm {
    kappa: f64,
    n: usize,
    #[serde(default)]
    tol: GeometryTolerances,
}

impl SpaceForm {
    /// `kappa` must be strictly negative and `n >= 3`.
    pub fn new(kappa: f64, n: usize) -> Result<Self> {
        if !(kappa.is_finite() && kappa < 0.0) {
            return Err(Error::InvalidSpace(format!(
                "sectional curvature must satisfy kappa < 0, got {kappa}"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidSpace(format!(
                "hypersurface dimension must satisfy n >= 3, got {n}"
            )));
        }
        Ok(Self {
            kappa,
            n,
            tol: GeometryTolerances::default(),
        })
    }

    pub fn with_tolerances(mut self, tol: GeometryTolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Intrinsic dimension of the hypersurface.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension of the hyperbolic space, `n + 1`.
    pub fn ambient_dim(&self) -> usize {
        self.n + 1
    }

    /// Length of Minkowski coordinate vectors, `n + 2`.
    pub fn coord_len(&self) -> usize {
        self.n + 2
    }

    /// `sqrt(-kappa)`.
    pub fn sqrt_neg_kappa(&self) -> f64 {
        (-self.kappa).sqrt()
    }

    pub fn tolerances(&self) -> &GeometryTolerances {
        &self.tol
    }

    /// Scale-free hyperboloid residual `|kappa <x,x> - 1| / (1 - kappa |x|^2)`.
    pub fn hyperboloid_residual(&self, x: &[f64]) -> f64 {
        let e2: f64 = x.iter().map(|v| v * v).sum();
        (self.kappa * mink(x, x) - 1.0).abs() / (1.0 - self.kappa * e2)
    }
}

/// Minkowski inner product without length checks. Callers guarantee equal lengths.
#[inline]
pub(crate) fn mink(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut s = -u[0] * v[0];
    for i in 1..u.len() {
        s += u[i] * v[i];
    }
    s
}

/// `-u_0 v_0 + sum_{i>=1} u_i v_i`.
pub fn minkowski_inner(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            got: v.len(),
        });
    }
    if u.len() < 2 {
        return Err(Error::Dimension {
            expected: 2,
            got: u.len(),
        });
    }
    Ok(mink(u, v))
}

/// A point of the upper hyperboloid sheet.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientPoint {
    coords: DVector<f64>,
}

impl AmbientPoint {
    pub fn new(space: &SpaceForm, coords: Vec<f64>) -> Result<Self> {
        Self::from_vector(space, DVector::from_vec(coords))
    }

    pub fn from_vector(space: &SpaceForm, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != space.coord_len() {
            return Err(Error::Dimension {
                expected: space.coord_len(),
                got: coords.len(),
            });
        }
        let residual = space.hyperboloid_residual(coords.as_slice());
        if !(residual <= space.tol.hyperboloid) || coords[0] <= 0.0 {
            return Err(Error::NotOnHyperboloid { residual });
        }
        Ok(Self { coords })
    }

    /// The base point `(1/sqrt(-kappa), 0, ..., 0)`.
    pub fn origin(space: &SpaceForm) -> Self {
        let mut coords = DVector::zeros(space.coord_len());
        coords[0] = 1.0 / space.sqrt_neg_kappa();
        Self { coords }
    }

    pub(crate) fn from_raw(coords: DVector<f64>) -> Self {
        Self { coords }
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coords.as_slice()
    }

    /// The point of the upper sheet with the given spatial coordinates
    /// `x_1, ..., x_{n+1}`.
    pub fn from_spatial(space: &SpaceForm, spatial: &[f64]) -> Result<Self> {
        check_len(space, spatial.len() + 1)?;
        let c = space.sqrt_neg_kappa();
        let norm_sq: f64 = spatial.iter().map(|v| v * v).sum();
        let mut coords = Vec::with_capacity(spatial.len() + 1);
        coords.push((1.0 / (c * c) + norm_sq).sqrt());
        coords.extend_from_slice(spatial);
        Ok(Self {
            coords: DVector::from_vec(coords),
        })
    }

    /// Rescales a timelike future-pointing vector onto the hyperboloid.
    pub fn project(space: &SpaceForm, coords: DVector<f64>) -> Result<Self> {
        let q = space.kappa * mink(coords.as_slice(), coords.as_slice());
        if !(q > 0.0) || coords[0] <= 0.0 {
            return Err(Error::NotOnHyperboloid { residual: f64::NAN });
        }
        Ok(Self {
            coords: coords / q.sqrt(),
        })
    }
}

/// A tangent vector to the hyperboloid at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientVector {
    base: AmbientPoint,
    coords: DVector<f64>,
}

impl AmbientVector {
    pub fn new(space: &SpaceForm, base: AmbientPoint, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != base.coords.len() {
            return Err(Error::Dimension {
                expected: base.coords.len(),
                got: coords.len(),
            });
        }
        let scale = base.coords.norm() * coords.norm();
        let residual = mink(base.as_slice(), coords.as_slice()).abs();
        if residual > space.tol.tangency * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotTangent {
                residual: residual / scale,
            });
        }
        Ok(Self { base, coords })
    }

    pub(crate) fn from_raw(base: AmbientPoint, coords: DVector<f64>) -> Self {
        Self { base, coords }
    }

    pub fn base(&self) -> &AmbientPoint {
        &self.base
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coords.as_slice()
    }

    /// Minkowski norm; tangent vectors are spacelike so this is real.
    pub fn norm(&self) -> f64 {
        mink(self.as_slice(), self.as_slice()).max(0.0).sqrt()
    }

    pub fn inner(&self, other: &AmbientVector) -> f64 {
        mink(self.as_slice(), other.as_slice())
    }
}

/// Distance on raw coordinates. Uses the chord form `2/c asinh(c |p-q| / 2)` near
/// the diagonal, where `arccosh` loses half of the significant digits.
pub(crate) fn distance_raw(space: &SpaceForm, p: &[f64], q: &[f64]) -> Result<f64> {
    let c = space.sqrt_neg_kappa();
    let arg = space.kappa * mink(p, q);
    let pn: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let qn: f64 = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let window = space.tol.clamp * (1.0 + c * c * pn * qn);
    if arg < 1.0 - window || arg.is_nan() {
        return Err(Error::ModelConsistency { value: arg });
    }
    if arg < 2.0 {
        let mut d2 = -(p[0] - q[0]) * (p[0] - q[0]);
        for i in 1..p.len() {
            d2 += (p[i] - q[i]) * (p[i] - q[i]);
        }
        let chord = d2.max(0.0).sqrt();
        Ok(2.0 / c * (0.5 * c * chord).asinh())
    } else {
        Ok(arg.acosh() / c)
    }
}

/// Position field `X = kappa <p,q> q - p`, equal to `sinh(c rho)/c * grad rho`.
pub(crate) fn position_raw(space: &SpaceForm, p: &[f64], q: &[f64]) -> DVector<f64> {
    let s = space.kappa * mink(p, q);
    DVector::from_iterator(q.len(), q.iter().zip(p).map(|(qi, pi)| s * qi - pi))
}

/// Geodesic distance `rho(p, q) = arccosh(kappa <p,q>) / sqrt(-kappa)`.
pub fn geodesic_distance(space: &SpaceForm, p: &AmbientPoint, q: &AmbientPoint) -> Result<f64> {
    check_len(space, p.coords.len())?;
    check_len(space, q.coords.len())?;
    distance_raw(space, p.as_slice(), q.as_slice())
}

/// Gradient at `q` of `rho(p, .)`: the unit velocity at `q` of the geodesic from `p`.
pub fn grad_distance(space: &SpaceForm, p: &AmbientPoint, q: &AmbientPoint) -> Result<AmbientVector> {
    check_len(space, p.coords.len())?;
    check_len(space, q.coords.len())?;
    let x = position_raw(space, p.as_slice(), q.as_slice());
    let len = mink(x.as_slice(), x.as_slice()).max(0.0).sqrt();
    let c = space.sqrt_neg_kappa();
    // len = sinh(c rho) / c
    if (c * len).asinh() < space.tol.pole {
        return Err(Error::Singularity("distance gradient is undefined at the pole"));
    }
    Ok(AmbientVector::from_raw(q.clone(), x / len))
}

/// Position vector `X = sinh(c rho)/c * grad rho` at `q`; zero when `q = p`.
pub fn position_vector(space: &SpaceForm, p: &AmbientPoint, q: &AmbientPoint) -> Result<AmbientVector> {
    check_len(space, p.coords.len())?;
    check_len(space, q.coords.len())?;
    Ok(AmbientVector::from_raw(
        q.clone(),
        position_raw(space, p.as_slice(), q.as_slice()),
    ))
}

/// `<D_U grad rho, V> = c coth(c rho) (<U,V> - <grad rho,U><grad rho,V>)`.
pub fn distance_hessian_apply(
    space: &SpaceForm,
    p: &AmbientPoint,
    q: &AmbientPoint,
    u: &AmbientVector,
    v: &AmbientVector,
) -> Result<f64> {
    let rho = geodesic_distance(space, p, q)?;
    if rho < space.tol.pole {
        return Err(Error::Singularity("distance Hessian is undefined at the pole"));
    }
    let grad = grad_distance(space, p, q)?;
    let c = space.sqrt_neg_kappa();
    let projected = u.inner(v) - grad.inner(u) * grad.inner(v);
    Ok(c / (c * rho).tanh() * projected)
}

/// Exponential map: the point reached from `q` along the geodesic with initial
/// velocity `v` after unit time.
pub fn exp_map(space: &SpaceForm, v: &AmbientVector) -> AmbientPoint {
    let c = space.sqrt_neg_kappa();
    let len = v.norm();
    let q = v.base.coords();
    if len == 0.0 {
        return v.base.clone();
    }
    let t = c * len;
    AmbientPoint::from_raw(q * t.cosh() + v.coords() * (t.sinh() / t))
}

/// Point at arclength `s` on the unit-speed geodesic through `q` with unit velocity `v`.
pub fn geodesic_point(space: &SpaceForm, v: &AmbientVector, s: f64) -> AmbientPoint {
    let unit = v.coords() / v.norm();
    exp_map(
        space,
        &AmbientVector::from_raw(v.base.clone(), unit * s),
    )
}

fn check_len(space: &SpaceForm, len: usize) -> Result<()> {
    if len != space.coord_len() {
        Err(Error::Dimension {
            expected: space.coord_len(),
            got: len,
        })
    } else {
        Ok(())
    }
}

/// An orientation- and time-preserving linear isometry of Minkowski space,
/// i.e. an isometry of the hyperboloid.
#[derive(Debug, Clone, PartialEq)]
pub struct Isometry {
    matrix: DMatrix<f64>,
}

impl Isometry {
    pub fn identity(len: usize) -> Self {
        Self {
            matrix: DMatrix::identity(len, len),
        }
    }

    /// The pure boost moving the origin to `target`.
    pub fn boost_to(space: &SpaceForm, target: &AmbientPoint) -> Self {
        let c = space.sqrt_neg_kappa();
        let len = space.coord_len();
        let t: Vec<f64> = target.as_slice().iter().map(|v| v * c).collect();
        let mut m = DMatrix::identity(len, len);
        m[(0, 0)] = t[0];
        for i in 1..len {
            m[(i, 0)] = t[i];
            m[(0, i)] = t[i];
            for j in 1..len {
                m[(i, j)] += t[i] * t[j] / (1.0 + t[0]);
            }
        }
        Self { matrix: m }
    }

    /// Rotation by `angle` in the spatial coordinate plane `(i, j)`, `i, j >= 1`.
    pub fn rotation(len: usize, i: usize, j: usize, angle: f64) -> Result<Self> {
        if i == 0 || j == 0 || i >= len || j >= len || i == j {
            return Err(Error::Precondition(format!(
                "rotation plane ({i}, {j}) must use two distinct spatial axes below {len}"
            )));
        }
        let mut m = DMatrix::identity(len, len);
        let (s, c) = angle.sin_cos();
        m[(i, i)] = c;
        m[(j, j)] = c;
        m[(i, j)] = -s;
        m[(j, i)] = s;
        Ok(Self { matrix: m })
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &Isometry) -> Isometry {
        Isometry {
            matrix: &self.matrix * &other.matrix,
        }
    }

    /// `J L^T J` with `J = diag(-1, 1, ..., 1)`.
    pub fn inverse(&self) -> Isometry {
        let mut m = self.matrix.transpose();
        let len = m.nrows();
        for k in 1..len {
            m[(0, k)] = -m[(0, k)];
            m[(k, 0)] = -m[(k, 0)];
        }
        Isometry { matrix: m }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    pub fn apply_point(&self, p: &AmbientPoint) -> AmbientPoint {
        AmbientPoint::from_raw(self.apply(p.coords()))
    }

    pub fn is_identity(&self) -> bool {
        let len = self.matrix.nrows();
        (&self.matrix - DMatrix::identity(len, len)).amax() == 0.0
    }
}
