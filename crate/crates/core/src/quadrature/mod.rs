//! Adaptive integration over `M ∩ B_r(p)`.
//!
//! The parameter box of each chart is truncated by the chart's ball bound and
//! split into cells. Every cell is classified with the Lipschitz bound of the
//! chart: cells whose distance band lies beyond the support are dropped, cells
//! whose band contains no break radius get a tensor Gauss rule, and the remaining
//! cut cells are integrated line by line along the coordinate in which `rho`
//! varies most, with the exact crossing of every break radius located on each
//! line. Each cell is integrated with Gauss orders `low` and `high`; the
//! high-order value is kept and the difference is the error estimate. Cells with
//! the largest normalized error are bisected until every component meets its
//! tolerance or the evaluation budget runs out.

mod gauss;

pub use gauss::GaussRule;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolic::{distance_raw, position_raw, AmbientPoint};
use crate::surface::{BallBound, Chart, CoordKind, CurvaturePoint, ImmersedHypersurface};

/// Geodesic ball `B_r(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallRegion {
    pub center: AmbientPoint,
    pub radius: f64,
}

impl BallRegion {
    pub fn new(center: AmbientPoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Precondition(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }
}

/// Integral value with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralEstimate {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: u64,
    pub converged: bool,
}

impl IntegralEstimate {
    pub const ZERO: IntegralEstimate = IntegralEstimate {
        value: 0.0,
        abs_error: 0.0,
        evaluations: 0,
        converged: true,
    };
}

/// Accuracy target of one integrand component: the error must not exceed
/// `max(rel * |reference|, abs)`, where the reference is the component's own value
/// or the value of component `relative_to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    pub rel: f64,
    #[serde(default)]
    pub abs: f64,
    #[serde(default)]
    pub relative_to: Option<usize>,
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Self {
            rel,
            abs: 0.0,
            relative_to: None,
        }
    }

    pub fn absolute(abs: f64) -> Self {
        Self {
            rel: 0.0,
            abs,
            relative_to: None,
        }
    }

    pub fn with_abs(mut self, abs: f64) -> Self {
        self.abs = abs;
        self
    }

    pub fn relative_to(mut self, component: usize) -> Self {
        self.relative_to = Some(component);
        self
    }
}

/// Knobs of the adaptive integrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureOptions {
    pub low_order: usize,
    pub high_order: usize,
    /// Initial cells per coordinate of the truncated chart box.
    pub initial_splits: usize,
    /// Probe points per coordinate used to bound distances and test monotonicity
    /// in cells crossed by a break sphere.
    pub probes: usize,
    /// Maximal number of bisections of any cell.
    pub max_depth: u32,
    /// Density evaluations allowed per integral.
    pub budget: u64,
    /// Splits every initial cell `2^depth` times per coordinate and stops there.
    pub uniform_depth: Option<u32>,
}

impl QuadratureOptions {
    pub fn validate(&self) -> Result<()> {
        if self.low_order < 1 || self.high_order <= self.low_order {
            return Err(Error::Precondition(format!(
                "quadrature orders must satisfy 1 <= low < high, got {} and {}",
                self.low_order, self.high_order
            )));
        }
        if self.initial_splits < 1 || self.probes < 2 {
            return Err(Error::Precondition(
                "initial splits must be >= 1 and probes >= 2".into(),
            ));
        }
        Ok(())
    }
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            low_order: 4,
            high_order: 5,
            initial_splits: 3,
            probes: 3,
            max_depth: 60,
            budget: 10_000_000,
            uniform_depth: None,
        }
    }
}

/// Data handed to an integrand at one quadrature node.
pub struct Sample<'a> {
    pub chart: usize,
    pub point: &'a CurvaturePoint,
    /// `rho(p, x)`.
    pub rho: f64,
    /// Position field `X = kappa <p,x> x - p` at `x`.
    pub position: &'a DVector<f64>,
    /// Number of break radii at or below `rho`, constant on the piece being integrated.
    pub band: usize,
}

impl Sample<'_> {
    /// Whether the node belongs to `rho <= breaks[k]`, up to rounding.
    pub fn inside(&self, k: usize) -> bool {
        self.band <= k
    }
}

/// Multi-component integral over `M ∩ B_R(p)`, `R` the last break radius.
///
/// `breaks` must be strictly increasing; the integrand may be discontinuous across
/// each level set `rho = breaks[k]` and must vanish where `rho >= R`. It receives
/// the node data and writes one density value per component (without the area
/// element, which the integrator applies).
pub fn integrate_components<F>(
    surface: &ImmersedHypersurface,
    center: &AmbientPoint,
    breaks: &[f64],
    tolerances: &[Tolerance],
    options: &QuadratureOptions,
    integrand: F,
) -> Result<Vec<IntegralEstimate>>
where
    F: Fn(&Sample, &mut [f64]) -> Result<()> + Sync,
{
    let space = surface.space();
    if center.as_slice().len() != space.coord_len() {
        return Err(Error::Dimension {
            expected: space.coord_len(),
            got: center.as_slice().len(),
        });
    }
    validate(breaks, tolerances, options)?;
    let ncomp = tolerances.len();
    // closed balls with a rounding slack, so a surface lying on a sphere rho = b
    // counts as inside instead of producing spurious crossings
    let slack: Vec<f64> = breaks.iter().map(|&b| b + 1e-12 * b.max(1.0)).collect();
    let breaks = slack.as_slice();
    let support = *breaks.last().unwrap();
    let ctx = Context {
        surface,
        center: center.as_slice(),
        breaks,
        support,
        ncomp,
        low: GaussRule::new(options.low_order),
        high: GaussRule::new(options.high_order),
        options,
        integrand: &integrand,
    };

    let mut cells = Vec::new();
    for (index, chart) in surface.charts().iter().enumerate() {
        let bound = chart
            .ball_bound(space, center.as_slice(), support)
            .ok_or_else(|| {
                Error::Capability(format!(
                    "chart {index} cannot bound its part of a ball of radius {support}"
                ))
            })?;
        let boxed = match bound {
            BallBound::Empty => continue,
            BallBound::Within(b) => b,
        };
        let domain = chart.domain();
        let mut lo = Vec::with_capacity(boxed.len());
        let mut hi = Vec::with_capacity(boxed.len());
        for (k, &(a, b)) in boxed.iter().enumerate() {
            let (a, b) = match domain.kinds[k] {
                CoordKind::Unbounded => (a, b),
                _ => (a.max(domain.lo[k]), b.min(domain.hi[k])),
            };
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::Capability(format!(
                    "chart {index} returned an unbounded box for radius {support}"
                )));
            }
            lo.push(a);
            hi.push(b);
        }
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            continue;
        }
        let splits = match options.uniform_depth {
            Some(d) => options.initial_splits << d,
            None => options.initial_splits,
        };
        let widths: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
        let dim = lo.len();
        let mut idx = vec![0usize; dim];
        loop {
            let clo: Vec<f64> = (0..dim)
                .map(|k| lo[k] + widths[k] * idx[k] as f64 / splits as f64)
                .collect();
            let chi: Vec<f64> = (0..dim)
                .map(|k| {
                    if idx[k] + 1 == splits {
                        hi[k]
                    } else {
                        lo[k] + widths[k] * (idx[k] + 1) as f64 / splits as f64
                    }
                })
                .collect();
            cells.push(CellBox {
                chart: index,
                lo: clo,
                hi: chi,
                scale: widths.clone(),
                depth: 0,
            });
            if !advance(&mut idx, splits) {
                break;
            }
        }
    }

    let mut evaluated: Vec<Cell> = evaluate_all(&ctx, cells)?;
    let mut evaluations: u64 = evaluated.iter().map(|c| c.evals).sum();
    loop {
        let totals = totals(&evaluated, ncomp);
        let tol = targets(&totals, tolerances);
        let converged: Vec<bool> = (0..ncomp).map(|k| totals.error[k] <= tol[k]).collect();
        let done = converged.iter().all(|&c| c);
        if done || options.uniform_depth.is_some() || evaluations >= options.budget {
            return Ok(finish(&totals, &converged, evaluations));
        }
        let scores: Vec<f64> = evaluated
            .iter()
            .map(|c| {
                (0..ncomp)
                    .map(|k| c.error[k] / tol[k].max(f64::MIN_POSITIVE))
                    .fold(0.0, f64::max)
            })
            .collect();
        let mut order: Vec<usize> = (0..evaluated.len())
            .filter(|&i| scores[i] > 0.0 && evaluated[i].cell.depth < options.max_depth)
            .collect();
        if order.is_empty() {
            return Ok(finish(&totals, &converged, evaluations));
        }
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let total_score: f64 = order.iter().map(|&i| scores[i]).sum();
        let per_cell = evaluations as f64 / evaluated.len().max(1) as f64;
        let affordable = (((options.budget - evaluations) as f64 / (2.0 * per_cell.max(1.0)))
            .floor() as usize)
            .max(1);
        let cap = 4096.min(affordable);
        let mut chosen = Vec::new();
        let mut acc = 0.0;
        for &i in &order {
            if chosen.len() >= cap || (acc >= 0.5 * total_score && !chosen.is_empty()) {
                break;
            }
            chosen.push(i);
            acc += scores[i];
        }
        chosen.sort_unstable();
        let mut children = Vec::with_capacity(2 * chosen.len());
        for &i in &chosen {
            let (a, b) = evaluated[i].cell.bisect();
            children.push(a);
            children.push(b);
        }
        let fresh = evaluate_all(&ctx, children)?;
        evaluations += fresh.iter().map(|c| c.evals).sum::<u64>();
        let mut keep = Vec::with_capacity(evaluated.len() + chosen.len());
        let mut next = 0;
        for (i, cell) in evaluated.into_iter().enumerate() {
            if next < chosen.len() && chosen[next] == i {
                next += 1;
            } else {
                keep.push(cell);
            }
        }
        keep.extend(fresh);
        evaluated = keep;
    }
}

/// `∫_{M ∩ B_r(p)} density dM`.
pub fn integrate_over_ball<F>(
    surface: &ImmersedHypersurface,
    density: F,
    region: &BallRegion,
    tol: Tolerance,
    options: &QuadratureOptions,
) -> Result<IntegralEstimate>
where
    F: Fn(&CurvaturePoint) -> f64 + Sync,
{
    let out = integrate_components(
        surface,
        &region.center,
        &[region.radius],
        &[tol],
        options,
        |s, out| {
            out[0] = density(s.point);
            Ok(())
        },
    )?;
    Ok(out[0])
}

/// `∫_{M ∩ B_r(p)} sinh(c rho) H dM`.
pub fn curvature_integral(
    surface: &ImmersedHypersurface,
    region: &BallRegion,
    tol: Tolerance,
    options: &QuadratureOptions,
) -> Result<IntegralEstimate> {
    let c = surface.space().sqrt_neg_kappa();
    let out = integrate_components(
        surface,
        &region.center,
        &[region.radius],
        &[tol],
        options,
        |s, out| {
            out[0] = (c * s.rho).sinh() * s.point.mean;
            Ok(())
        },
    )?;
    Ok(out[0])
}

/// `∫_{M ∩ B_r(p)} H dM`.
pub fn mean_curvature_integral(
    surface: &ImmersedHypersurface,
    region: &BallRegion,
    tol: Tolerance,
    options: &QuadratureOptions,
) -> Result<IntegralEstimate> {
    integrate_over_ball(surface, |cp| cp.mean, region, tol, options)
}

/// Intrinsic divergence `(1/sqrt g) d_i (sqrt g V^i)` of a tangent field given by
/// chart components, by central differences with one Richardson step. The step is
/// shrunk near hard ends of the chart domain.
pub fn divergence_on_m<F>(
    surface: &ImmersedHypersurface,
    chart: usize,
    field: F,
    u: &[f64],
    step: f64,
) -> Result<f64>
where
    F: Fn(&CurvaturePoint) -> Result<DVector<f64>>,
{
    let c = surface.chart(chart)?;
    let n = c.dim();
    if u.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: u.len(),
        });
    }
    let domain = c.domain();
    let centre = surface.curvature_at(chart, u)?;
    let mut total = 0.0;
    for a in 0..n {
        let room = domain.stencil_room(u, a);
        let h = step.min(0.45 * room);
        if !(h > 1e-9 * step.max(1e-300)) || !(h > 0.0) {
            return Err(Error::NumericalDerivative(format!(
                "no room for a difference stencil along coordinate {a} at {u:?}"
            )));
        }
        let flux = |s: f64| -> Result<f64> {
            let mut v = u.to_vec();
            v[a] += s;
            let cp = surface.curvature_at(chart, &v)?;
            let comps = field(&cp)?;
            Ok(cp.sqrt_det * comps[a])
        };
        let quotient = |s: f64| -> Result<f64> { Ok((flux(s)? - flux(-s)?) / (2.0 * s)) };
        let d = (4.0 * quotient(0.5 * h)? - quotient(h)?) / 3.0;
        total += d;
    }
    if !total.is_finite() {
        return Err(Error::NumericalDerivative(format!(
            "non-finite divergence at {u:?}"
        )));
    }
    Ok(total / centre.sqrt_det)
}

fn validate(breaks: &[f64], tolerances: &[Tolerance], options: &QuadratureOptions) -> Result<()> {
    if breaks.is_empty() {
        return Err(Error::Precondition("at least one radius is required".into()));
    }
    if breaks[0] <= 0.0 || breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !b.is_finite()) {
        return Err(Error::Precondition(format!(
            "break radii must be positive and strictly increasing, got {breaks:?}"
        )));
    }
    if tolerances.is_empty() {
        return Err(Error::Precondition("at least one component is required".into()));
    }
    for t in tolerances {
        if !(t.rel >= 0.0 && t.abs >= 0.0) {
            return Err(Error::Precondition(format!("invalid tolerance {t:?}")));
        }
        if let Some(k) = t.relative_to {
            if k >= tolerances.len() {
                return Err(Error::Precondition(format!(
                    "tolerance refers to missing component {k}"
                )));
            }
        }
    }
    options.validate()
}

struct Context<'a, F> {
    surface: &'a ImmersedHypersurface,
    center: &'a [f64],
    breaks: &'a [f64],
    support: f64,
    ncomp: usize,
    low: GaussRule,
    high: GaussRule,
    options: &'a QuadratureOptions,
    integrand: &'a F,
}

#[derive(Debug, Clone)]
struct CellBox {
    chart: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Widths of the initial truncated box, used to pick the bisection axis.
    scale: Vec<f64>,
    depth: u32,
}

impl CellBox {
    fn bisect(&self) -> (CellBox, CellBox) {
        let axis = (0..self.lo.len())
            .map(|k| (self.hi[k] - self.lo[k]) / self.scale[k])
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, w)| {
                if w > best.1 {
                    (k, w)
                } else {
                    best
                }
            })
            .0;
        let mid = 0.5 * (self.lo[axis] + self.hi[axis]);
        let mut a = self.clone();
        let mut b = self.clone();
        a.hi[axis] = mid;
        b.lo[axis] = mid;
        a.depth += 1;
        b.depth += 1;
        (a, b)
    }

    fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }
}

struct Cell {
    cell: CellBox,
    value: Vec<f64>,
    error: Vec<f64>,
    evals: u64,
}

fn evaluate_all<F>(ctx: &Context<F>, cells: Vec<CellBox>) -> Result<Vec<Cell>>
where
    F: Fn(&Sample, &mut [f64]) -> Result<()> + Sync,
{
    cells
        .into_par_iter()
        .map(|cell| evaluate_cell(ctx, cell))
        .collect()
}

fn advance(idx: &mut [usize], limit: usize) -> bool {
    for v in idx.iter_mut() {
        *v += 1;
        if *v < limit {
            return true;
        }
        *v = 0;
    }
    false
}

/// Level crossings a cell may have before it is bisected instead of cut.
const MAX_TOP_LEVELS: usize = 2;

fn band_of(breaks: &[f64], rho: f64) -> usize {
    breaks.partition_point(|&b| b <= rho)
}

/// Why a cut cell could not be integrated by dimension reduction.
enum Fail {
    /// Some level function is not monotone in any coordinate; the cell must shrink.
    Unresolved,
    Fatal(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Fatal(e)
    }
}

/// Adds `weight * integrand(u)` into the accumulator; the integrand sets the
/// coordinates it integrates over itself.
type Inner<'a> = dyn Fn(&mut [f64], f64, &mut [f64]) -> Result<(), Fail> + 'a;

/// A level function: `rho` restricted to the cell faces fixing the listed coordinates.
type Restriction = Vec<(usize, f64)>;

struct Active<'r> {
    fixed: &'r Restriction,
    levels: Vec<f64>,
}

fn evaluate_cell<F>(ctx: &Context<F>, cell: CellBox) -> Result<Cell>
where
    F: Fn(&Sample, &mut [f64]) -> Result<()> + Sync,
{
    let chart = ctx.surface.chart(cell.chart)?;
    let n = cell.lo.len();
    let ncomp = ctx.ncomp;
    let evals = std::cell::Cell::new(0u64);
    let buf = std::cell::RefCell::new(vec![0.0; ncomp]);
    let free: Vec<usize> = (0..n).collect();
    let top = vec![Restriction::new()];
    let density = |u: &mut [f64], w: f64, acc: &mut [f64]| -> Result<(), Fail> {
        let x = chart.point(u);
        let rho = distance_raw(ctx.surface.space(), ctx.center, x.as_slice())?;
        if rho >= ctx.support {
            return Ok(());
        }
        evals.set(evals.get() + 1);
        add_density(ctx, cell.chart, u, w, &mut buf.borrow_mut(), acc)?;
        Ok(())
    };
    let mut u = cell.center();
    let mut high = vec![0.0; ncomp];
    let mut low = vec![0.0; ncomp];
    let first = nested(ctx, chart, &cell, &free, &top, &ctx.high, &mut u, 1.0, &density, &mut high, true);
    let outcome = match first {
        Ok(()) => nested(ctx, chart, &cell, &free, &top, &ctx.low, &mut u, 1.0, &density, &mut low, true),
        Err(e) => Err(e),
    };
    let error = match outcome {
        Ok(()) => high.iter().zip(&low).map(|(a, b)| (a - b).abs()).collect(),
        Err(Fail::Fatal(e)) => return Err(e),
        Err(Fail::Unresolved) => {
            // plain tensor rule with the whole magnitude as error bar
            let both = |u: &mut [f64], w: f64, acc: &mut [f64]| -> Result<(), Fail> {
                let mut part = vec![0.0; ncomp];
                density(u, w, &mut part)?;
                for k in 0..ncomp {
                    acc[k] += part[k];
                    acc[ncomp + k] += part[k].abs();
                }
                Ok(())
            };
            let mut acc = vec![0.0; 2 * ncomp];
            match tensor(&cell, &free, &ctx.high, &mut u, 1.0, &both, &mut acc) {
                Ok(()) => {}
                Err(Fail::Fatal(e)) => return Err(e),
                Err(Fail::Unresolved) => unreachable!("tensor rules always resolve"),
            }
            high = acc[..ncomp].to_vec();
            acc[ncomp..].iter().map(|v| 2.0 * v).collect()
        }
    };
    Ok(Cell {
        cell,
        value: high,
        error,
        evals: evals.get(),
    })
}

/// Evaluates the integrand at `u`, adding `weight * sqrt(g) * density` to `acc`.
fn add_density<F>(
    ctx: &Context<F>,
    chart: usize,
    u: &[f64],
    weight: f64,
    buf: &mut [f64],
    acc: &mut [f64],
) -> Result<()>
where
    F: Fn(&Sample, &mut [f64]) -> Result<()> + Sync,
{
    let space = ctx.surface.space();
    let point = ctx.surface.curvature_at(chart, u)?;
    let rho = distance_raw(space, ctx.center, point.x.as_slice())?;
    let position = position_raw(space, ctx.center, point.x.as_slice());
    buf.iter_mut().for_each(|v| *v = 0.0);
    let sample = Sample {
        chart,
        point: &point,
        rho,
        position: &position,
        band: band_of(ctx.breaks, rho),
    };
    (ctx.integrand)(&sample, buf)?;
    let w = weight * point.sqrt_det;
    for (a, b) in acc.iter_mut().zip(buf.iter()) {
        *a += w * b;
    }
    Ok(())
}

fn restricted_rho<F>(
    ctx: &Context<F>,
    chart: &dyn Chart,
    u: &[f64],
    fixed: &Restriction,
) -> Result<f64> {
    let mut v = u.to_vec();
    for &(k, val) in fixed {
        v[k] = val;
    }
    distance_raw(ctx.surface.space(), ctx.center, chart.point(&v).as_slice())
}

/// Tensor Gauss rule over the free coordinates of the cell.
fn tensor(
    cell: &CellBox,
    free: &[usize],
    rule: &GaussRule,
    u: &mut [f64],
    weight: f64,
    inner: &Inner,
    acc: &mut [f64],
) -> Result<(), Fail> {
    let axes: Vec<Vec<(f64, f64)>> = free
        .iter()
        .map(|&k| rule.mapped(cell.lo[k], cell.hi[k]).collect())
        .collect();
    let mut idx = vec![0usize; free.len()];
    loop {
        let mut w = weight;
        for (j, &k) in free.iter().enumerate() {
            let (x, wk) = axes[j][idx[j]];
            u[k] = x;
            w *= wk;
        }
        inner(u, w, acc)?;
        if !advance(&mut idx, rule.order()) {
            return Ok(());
        }
    }
}

/// Integrates `inner` over the free coordinates of the cell, where `inner` is smooth
/// away from the level sets `{phi = level}` of the given level functions.
///
/// Each level function that crosses a level inside the box must be monotone along
/// one common coordinate `k`; the integral along `k` is then split at the crossings
/// and the remaining coordinates are integrated recursively against the level
/// functions restricted to the two faces normal to `k`.
#[allow(clippy::too_many_arguments)]
fn nested<F>(
    ctx: &Context<F>,
    chart: &dyn Chart,
    cell: &CellBox,
    free: &[usize],
    fns: &[Restriction],
    rule: &GaussRule,
    u: &mut [f64],
    weight: f64,
    inner: &Inner,
    acc: &mut [f64],
    top: bool,
) -> Result<(), Fail> {
    let d = free.len();
    let lip = chart.lipschitz_on(&cell.lo, &cell.hi);
    let probes = ctx.options.probes;
    let spacing: Vec<f64> = free
        .iter()
        .map(|&k| (cell.hi[k] - cell.lo[k]) / (probes - 1) as f64)
        .collect();
    let half_diag = 0.5 * spacing.iter().map(|h| h * h).sum::<f64>().sqrt();
    let grid_len = probes.pow(d as u32);
    let mut active = Vec::new();
    let mut grids = Vec::new();
    for fixed in fns {
        let mut grid = Vec::with_capacity(grid_len);
        let mut idx = vec![0usize; d];
        let mut probe = u.to_vec();
        loop {
            for (j, &k) in free.iter().enumerate() {
                probe[k] = cell.lo[k] + spacing[j] * idx[j] as f64;
            }
            grid.push(restricted_rho(ctx, chart, &probe, fixed)?);
            if !advance(&mut idx, probes) {
                break;
            }
        }
        let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let margin = match lip {
            Some(l) => l * half_diag * (1.0 + 1e-12) + 1e-14 * (1.0 + hi),
            None => 0.25 * (hi - lo) + 1e-12 * (1.0 + hi),
        };
        if top && lo - margin >= ctx.support {
            return Ok(());
        }
        let levels: Vec<f64> = ctx
            .breaks
            .iter()
            .copied()
            .filter(|&b| b > lo - margin && b < hi + margin)
            .collect();
        if !levels.is_empty() {
            active.push(Active { fixed, levels });
            grids.push(grid);
        }
    }
    if active.is_empty() {
        return tensor(cell, free, rule, u, weight, inner, acc);
    }
    // every crossing multiplies the pieces per axis, so crowded cells are split first
    let crossings = grids
        .iter()
        .flat_map(|g| {
            let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            ctx.breaks.iter().filter(move |&&b| b > lo && b < hi)
        })
        .count();
    if top && d > 1 && crossings > MAX_TOP_LEVELS {
        return Err(Fail::Unresolved);
    }
    if d == 1 {
        let k = free[0];
        let segments = 4 * (probes - 1);
        return line(ctx, chart, k, cell.lo[k], cell.hi[k], segments, &active, rule, u, weight, inner, acc);
    }
    let k = match monotone_axis(&grids, d, probes) {
        Some(j) => free[j],
        None => return Err(Fail::Unresolved),
    };
    let (a, b) = (cell.lo[k], cell.hi[k]);
    let faces: Vec<Restriction> = active
        .iter()
        .flat_map(|f| {
            [a, b].into_iter().map(move |end| {
                let mut r = f.fixed.clone();
                r.push((k, end));
                r
            })
        })
        .collect();
    let rest: Vec<usize> = free.iter().copied().filter(|&j| j != k).collect();
    let along = |u: &mut [f64], w: f64, acc: &mut [f64]| -> Result<(), Fail> {
        line(ctx, chart, k, a, b, 1, &active, rule, u, w, inner, acc)
    };
    nested(ctx, chart, cell, &rest, &faces, rule, u, weight, &along, acc, false)
}

/// Free-coordinate index along which every probed level function is monotone,
/// preferring the one with the largest change.
fn monotone_axis(grids: &[Vec<f64>], d: usize, probes: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for j in 0..d {
        let stride = probes.pow(j as u32);
        let mut score = f64::INFINITY;
        let mut ok = true;
        'fns: for grid in grids {
            let mut dir = 0i8;
            for start in 0..grid.len() {
                if (start / stride) % probes != 0 {
                    continue;
                }
                for step in 0..probes - 1 {
                    let v0 = grid[start + step * stride];
                    let v1 = grid[start + (step + 1) * stride];
                    let diff = v1 - v0;
                    if diff.abs() <= 1e-13 * (1.0 + v0.abs()) {
                        continue;
                    }
                    let s = if diff > 0.0 { 1 } else { -1 };
                    if dir == 0 {
                        dir = s;
                    } else if dir != s {
                        ok = false;
                        break 'fns;
                    }
                }
                let span = (grid[start + (probes - 1) * stride] - grid[start]).abs();
                score = score.min(span);
            }
        }
        if ok && best.map_or(true, |(_, s)| score > s) {
            best = Some((j, score));
        }
    }
    best.map(|(j, _)| j)
}

/// Integral along coordinate `k` over `[a, b]`, split at the level crossings of the
/// active level functions found by sign changes over `segments` equal pieces.
#[allow(clippy::too_many_arguments)]
fn line<F>(
    ctx: &Context<F>,
    chart: &dyn Chart,
    k: usize,
    a: f64,
    b: f64,
    segments: usize,
    active: &[Active],
    rule: &GaussRule,
    u: &mut [f64],
    weight: f64,
    inner: &Inner,
    acc: &mut [f64],
) -> Result<(), Fail> {
    let mut cuts = vec![a, b];
    let mut probe = u.to_vec();
    let h = (b - a) / segments as f64;
    let at = |i: usize| if i == segments { b } else { a + h * i as f64 };
    for f in active {
        let mut values = Vec::with_capacity(segments + 1);
        for i in 0..=segments {
            probe[k] = at(i);
            values.push(restricted_rho(ctx, chart, &probe, f.fixed)?);
        }
        for &level in &f.levels {
            for i in 0..segments {
                let (fa, fb) = (values[i] - level, values[i + 1] - level);
                if fa * fb < 0.0 {
                    let root = illinois(
                        |t| {
                            probe[k] = t;
                            restricted_rho(ctx, chart, &probe, f.fixed).map(|r| r - level)
                        },
                        at(i),
                        at(i + 1),
                        fa,
                        fb,
                    )?;
                    cuts.push(root);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    for w in cuts.windows(2) {
        let (p, q) = (w[0], w[1]);
        if !(q > p) {
            continue;
        }
        for (t, wt) in rule.mapped(p, q) {
            u[k] = t;
            inner(u, weight * wt, acc)?;
        }
    }
    Ok(())
}

/// Root of `f` in `[a, b]` given opposite-signed end values (Illinois variant of
/// regula falsi).
fn illinois(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
) -> Result<f64> {
    let tol = 4.0 * f64::EPSILON * (a.abs() + b.abs()) + 1e-300;
    let mut side = 0i32;
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let fc = f(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if fa.abs() < f64::MIN_POSITIVE && fb.abs() < f64::MIN_POSITIVE {
            break;
        }
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

struct Totals {
    value: Vec<f64>,
    error: Vec<f64>,
    magnitude: Vec<f64>,
}

/// Compensated sums over cells in their stored order.
fn totals(cells: &[Cell], ncomp: usize) -> Totals {
    let mut value = vec![Neumaier::default(); ncomp];
    let mut error = vec![Neumaier::default(); ncomp];
    let mut magnitude = vec![Neumaier::default(); ncomp];
    for c in cells {
        for k in 0..ncomp {
            value[k].add(c.value[k]);
            error[k].add(c.error[k]);
            magnitude[k].add(c.value[k].abs());
        }
    }
    Totals {
        value: value.iter().map(Neumaier::sum).collect(),
        error: error.iter().map(Neumaier::sum).collect(),
        magnitude: magnitude.iter().map(Neumaier::sum).collect(),
    }
}

fn targets(t: &Totals, tolerances: &[Tolerance]) -> Vec<f64> {
    tolerances
        .iter()
        .enumerate()
        .map(|(k, tol)| {
            let r = tol.relative_to.unwrap_or(k);
            let floor = 1e-13 * t.magnitude[r];
            (tol.rel * t.value[r].abs()).max(tol.abs).max(floor)
        })
        .collect()
}

fn finish(t: &Totals, converged: &[bool], evaluations: u64) -> Vec<IntegralEstimate> {
    (0..converged.len())
        .map(|k| IntegralEstimate {
            value: t.value[k],
            abs_error: t.error[k],
            evaluations,
            converged: converged[k],
        })
        .collect()
}

#[derive(Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests;
