//! Executes the suites of one experiment and collects the report.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hyperlab::{
    corollary_from_series, cutoff_inequality_check, divergence_criterion,
    divergence_theorem_check, hypothesis_report, lemma_trace_residual, phi_series,
    prop_divergence_residual, verify_monotonicity, AmbientPoint, BallBound, CatalogSpec,
    CorollaryReport, CoordKind, CutoffFamily, CutoffInequality, DivergenceCheck,
    HypothesisReport, ImmersedHypersurface, IntegralEstimate, Location, PhiSeries,
    QuadratureOptions, Residual, TestFunction, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig, GammaSetting, SpaceConfig, Suite};
use crate::expr_chart::ChartConfig;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ExitStatus {
    Passed = 0,
    VerdictFailed = 1,
    ConfigError = 2,
    Numerical = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Overrides given on the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub out: Option<PathBuf>,
    pub budget: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub budget: u64,
}

/// Statistics of a sampled pointwise identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualStats {
    pub count: usize,
    /// Sample points skipped because the identity is singular there.
    pub skipped: usize,
    pub max_relative: f64,
    pub mean_relative: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceTheoremReport {
    pub radius: f64,
    pub check: DivergenceCheck,
    pub relative: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub trace: ResidualStats,
    pub divergence_unit: ResidualStats,
    pub divergence_bump: ResidualStats,
    pub divergence_theorem: Option<DivergenceTheoremReport>,
}

impl IdentityReport {
    fn verdicts(&self) -> Vec<&Verdict> {
        let mut v = vec![
            &self.trace.verdict,
            &self.divergence_unit.verdict,
            &self.divergence_bump.verdict,
        ];
        if let Some(d) = &self.divergence_theorem {
            v.push(&d.verdict);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub applies: bool,
    /// `((n-3) c - Gamma)/2`.
    pub rate: f64,
    /// `ln(B(r_k)/B(r_{k-1}))/(r_k - r_{k-1})` over the last two grid radii.
    pub observed_rate: Option<f64>,
    /// When the criterion applies: `∫ H dM >= B` at the largest radius.
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CenterReport {
    pub label: String,
    pub coords: Vec<f64>,
    pub csv: Option<String>,
    pub plot: Option<String>,
    pub series: Option<PhiSeries>,
    pub monotonicity: Option<Verdict>,
    pub corollary: Option<CorollaryReport>,
    pub cutoff_inequality: Option<CutoffInequality>,
    pub identities: Option<IdentityReport>,
    pub divergence_criterion: Option<CriterionReport>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub passed: bool,
    pub worst_violation: f64,
    pub verdict_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub provenance: Provenance,
    pub space: SpaceConfig,
    pub surface: Option<CatalogSpec>,
    pub chart: Option<ChartConfig>,
    pub gamma: f64,
    pub gamma_auto: bool,
    pub hypotheses: Option<HypothesisReport>,
    /// Whether `gamma` satisfies the sampled hypotheses.
    pub admissible: bool,
    pub suites: BTreeMap<Suite, SuiteSummary>,
    pub centers: Vec<CenterReport>,
    pub errors: Vec<String>,
    pub converged: bool,
    pub exit_code: i32,
}

/// CSV row data of one center: grid radii with the series values and the bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    pub r: Vec<f64>,
    pub integral_sinh_h: Vec<f64>,
    pub integral_h: Vec<f64>,
    pub g: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_err: Vec<f64>,
    pub bound: Vec<f64>,
    pub margin: Vec<f64>,
}

/// Outcome of a run before anything is written.
pub struct RunResult {
    pub report: VerificationReport,
    pub tables: Vec<(String, SeriesTable)>,
    pub status: ExitStatus,
}

fn sha256_hex(text: &str) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Runs every requested suite. Errors that prevent any work are configuration
/// errors; numerical failures are recorded in the report.
pub fn execute(
    config: &ExperimentConfig,
    config_text: &str,
    overrides: &RunOverrides,
) -> Result<RunResult, ConfigError> {
    let space = config.space()?;
    let surface = config.build_surface(&space)?;
    let centers = config.centers(&space, &surface)?;
    let options = config.quadrature_options(overrides.budget);
    options
        .validate()
        .map_err(|e| ConfigError(format!("quadrature: {e}")))?;
    let mut sampling = config.sampling.clone();
    if let Some(seed) = overrides.seed {
        sampling.seed = seed;
    }
    let grid = config.grid.radii()?;
    let r0 = config.r0.unwrap_or(grid[0]);
    let cutoff = CutoffFamily::new(config.cutoff.m).map_err(|e| ConfigError(e.to_string()))?;

    let mut errors = Vec::new();
    let mut numerical = false;
    let hypotheses = match hypothesis_report(&surface, &sampling) {
        Ok(h) => Some(h),
        Err(e) => {
            errors.push(format!("hypothesis sampling: {e}"));
            numerical = true;
            None
        }
    };
    let (gamma, gamma_auto) = match config.gamma {
        GammaSetting::Value(g) => (g, false),
        GammaSetting::Auto(_) => match &hypotheses {
            Some(h) => (h.gamma_min, true),
            None => {
                return Err(ConfigError(
                    "gamma = \"auto\" needs the hypothesis sampling to succeed".into(),
                ))
            }
        },
    };
    let admissible = hypotheses.as_ref().is_some_and(|h| h.admissible(gamma));

    // the series is computed on the grid with r0 inserted
    let mut full_grid = grid.clone();
    let r0_index = match full_grid.iter().position(|&r| r == r0) {
        Some(i) => i,
        None => {
            let i = full_grid.partition_point(|&r| r < r0);
            full_grid.insert(i, r0);
            i
        }
    };
    let on_grid: Vec<usize> = (0..full_grid.len())
        .filter(|&i| i != r0_index || grid.contains(&r0))
        .collect();

    let wants = |s: Suite| config.suites.contains(&s);
    let mut centers_out = Vec::new();
    let mut tables = Vec::new();
    let mut converged = true;
    for (index, (label, p)) in centers.iter().enumerate() {
        let mut center = CenterReport {
            label: label.clone(),
            coords: p.as_slice().to_vec(),
            csv: None,
            plot: None,
            series: None,
            monotonicity: None,
            corollary: None,
            cutoff_inequality: None,
            identities: None,
            divergence_criterion: None,
            errors: Vec::new(),
        };
        let needs_series = wants(Suite::Monotonicity)
            || wants(Suite::Corollary)
            || wants(Suite::DivergenceCriterion);
        if needs_series {
            match phi_series(&surface, p, gamma, &full_grid, config.tolerances.quadrature, &options) {
                Ok(full) => {
                    converged &= full.all_converged();
                    let series = restrict(&full, &on_grid);
                    let corollary = if r0_index + 1 < full.r_grid.len() {
                        match corollary_from_series(&full, r0_index) {
                            Ok(c) => Some(c),
                            Err(e) => {
                                center.errors.push(format!("corollary: {e}"));
                                None
                            }
                        }
                    } else {
                        None
                    };
                    tables.push((label.clone(), table(&series, corollary.as_ref())));
                    if wants(Suite::Monotonicity) {
                        center.monotonicity = Some(verify_monotonicity(&series));
                    }
                    if wants(Suite::DivergenceCriterion) {
                        match criterion(&space, gamma, corollary.as_ref()) {
                            Ok(c) => center.divergence_criterion = Some(c),
                            Err(e) => center.errors.push(format!("divergence criterion: {e}")),
                        }
                    }
                    if wants(Suite::Corollary) {
                        if corollary.is_none() {
                            center
                                .errors
                                .push("corollary: no grid radius beyond r0".to_string());
                        }
                        center.corollary = corollary;
                    }
                    center.series = Some(series);
                }
                Err(e) => center.errors.push(format!("phi series: {e}")),
            }
        }
        if wants(Suite::CutoffInequality) {
            let s = config.cutoff.s.unwrap_or(grid[0]);
            let t = config.cutoff.t.unwrap_or(grid[grid.len() - 1]);
            match cutoff_inequality_check(
                &surface,
                p,
                &TestFunction::Unit,
                gamma,
                s,
                t,
                &cutoff,
                config.tolerances.quadrature,
                &options,
            ) {
                Ok(c) => center.cutoff_inequality = Some(c),
                Err(e) => center.errors.push(format!("cutoff inequality: {e}")),
            }
        }
        if wants(Suite::Identities) {
            let seed = sampling.seed.wrapping_add(index as u64);
            match identities(config, &surface, p, seed, &cutoff, &options) {
                Ok(r) => center.identities = Some(r),
                Err(e) => center.errors.push(format!("identities: {e}")),
            }
        }
        numerical |= !center.errors.is_empty();
        centers_out.push(center);
    }

    let suites = summarize(&config.suites, &centers_out);
    let failed = suites.values().any(|s| !s.passed);
    let status = if numerical || !converged {
        ExitStatus::Numerical
    } else if failed {
        ExitStatus::VerdictFailed
    } else {
        ExitStatus::Passed
    };
    let report = VerificationReport {
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(config_text),
            seed: sampling.seed,
            budget: options.budget,
        },
        space: config.space.clone(),
        surface: config.surface.clone(),
        chart: config.chart.clone(),
        gamma,
        gamma_auto,
        hypotheses,
        admissible,
        suites,
        centers: centers_out,
        errors,
        converged,
        exit_code: status.code(),
    };
    Ok(RunResult {
        report,
        tables,
        status,
    })
}

/// The series at the given grid indices.
fn restrict(full: &PhiSeries, keep: &[usize]) -> PhiSeries {
    let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let pick_est =
        |v: &[IntegralEstimate]| keep.iter().map(|&i| v[i]).collect::<Vec<IntegralEstimate>>();
    PhiSeries {
        gamma: full.gamma,
        r_grid: pick(&full.r_grid),
        integral_sinh_h: pick_est(&full.integral_sinh_h),
        integral_h: pick_est(&full.integral_h),
        g_values: pick(&full.g_values),
        g_err: pick(&full.g_err),
        phi: pick(&full.phi),
        phi_err: pick(&full.phi_err),
        converged: keep.iter().map(|&i| full.converged[i]).collect(),
        c: full.c,
        n: full.n,
    }
}

/// CSV columns; the bound is 0 at radii up to `r0`.
fn table(series: &PhiSeries, corollary: Option<&CorollaryReport>) -> SeriesTable {
    let bound: Vec<f64> = series
        .r_grid
        .iter()
        .map(|&r| {
            corollary
                .and_then(|c| c.r_grid.iter().position(|&x| x == r).map(|k| c.bound[k]))
                .unwrap_or(0.0)
        })
        .collect();
    let integral_h: Vec<f64> = series.integral_h.iter().map(|e| e.value).collect();
    SeriesTable {
        r: series.r_grid.clone(),
        integral_sinh_h: series.integral_sinh_h.iter().map(|e| e.value).collect(),
        margin: integral_h.iter().zip(&bound).map(|(i, b)| i - b).collect(),
        integral_h,
        g: series.g_values.clone(),
        phi: series.phi.clone(),
        phi_err: series.phi_err.clone(),
        bound,
    }
}

fn criterion(
    space: &hyperlab::SpaceForm,
    gamma: f64,
    corollary: Option<&CorollaryReport>,
) -> hyperlab::Result<CriterionReport> {
    let dc = divergence_criterion(space, gamma)?;
    let mut observed_rate = None;
    let mut items = Vec::new();
    if let Some(c) = corollary {
        let k = c.r_grid.len();
        if k >= 2 && c.bound[k - 1] > 0.0 && c.bound[k - 2] > 0.0 {
            observed_rate =
                Some((c.bound[k - 1] / c.bound[k - 2]).ln() / (c.r_grid[k - 1] - c.r_grid[k - 2]));
        }
        if dc.applies && k >= 1 {
            let ih = c.integral_h[k - 1];
            items.push((c.bound[k - 1] - ih.value, c.bound_err[k - 1] + ih.abs_error));
        }
    }
    let last = corollary.map_or(0, |c| c.r_grid.len().saturating_sub(1));
    Ok(CriterionReport {
        applies: dc.applies,
        rate: dc.rate,
        observed_rate,
        verdict: Verdict::from_deficits(&items, |_| Location::GridIndex(last)),
    })
}

/// Parameter boxes of the charts within `radius` of `p`.
fn sample_boxes(
    surface: &ImmersedHypersurface,
    p: &AmbientPoint,
    radius: f64,
) -> hyperlab::Result<Vec<(usize, Vec<(f64, f64)>)>> {
    let space = surface.space();
    let mut boxes = Vec::new();
    for (index, chart) in surface.charts().iter().enumerate() {
        let domain = chart.domain();
        let b = if domain.is_bounded() {
            domain.lo.iter().copied().zip(domain.hi.iter().copied()).collect()
        } else {
            match chart.ball_bound(space, p.as_slice(), radius) {
                Some(BallBound::Within(b)) => b
                    .into_iter()
                    .enumerate()
                    .map(|(k, (lo, hi))| match domain.kinds[k] {
                        CoordKind::Unbounded => (lo, hi),
                        _ => (lo.max(domain.lo[k]), hi.min(domain.hi[k])),
                    })
                    .collect(),
                Some(BallBound::Empty) => continue,
                None => {
                    return Err(hyperlab::Error::Capability(format!(
                        "chart {index} cannot bound a ball of radius {radius}"
                    )))
                }
            }
        };
        boxes.push((index, b));
    }
    Ok(boxes)
}

struct Accumulator {
    relative: Vec<f64>,
    skipped: usize,
    tolerance: f64,
    locations: Vec<Location>,
}

impl Accumulator {
    fn new(tolerance: f64) -> Self {
        Self {
            relative: Vec::new(),
            skipped: 0,
            tolerance,
            locations: Vec::new(),
        }
    }

    fn push(&mut self, r: hyperlab::Result<Residual>, chart: usize, u: &[f64]) -> hyperlab::Result<()> {
        match r {
            Ok(res) => {
                self.relative.push(res.relative());
                self.locations.push(Location::ChartPoint {
                    chart,
                    u: u.to_vec(),
                });
                Ok(())
            }
            Err(hyperlab::Error::Singularity(_)) => {
                self.skipped += 1;
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    fn finish(self) -> ResidualStats {
        let items: Vec<(f64, f64)> = self
            .relative
            .iter()
            .map(|&r| (r - self.tolerance, 0.0))
            .collect();
        let locations = self.locations;
        let count = self.relative.len();
        ResidualStats {
            count,
            skipped: self.skipped,
            max_relative: self.relative.iter().copied().fold(0.0, f64::max),
            mean_relative: if count == 0 {
                0.0
            } else {
                self.relative.iter().sum::<f64>() / count as f64
            },
            tolerance: self.tolerance,
            verdict: Verdict::from_deficits(&items, |i| locations[i].clone()),
        }
    }
}

fn identities(
    config: &ExperimentConfig,
    surface: &ImmersedHypersurface,
    p: &AmbientPoint,
    seed: u64,
    cutoff: &CutoffFamily,
    options: &QuadratureOptions,
) -> hyperlab::Result<IdentityReport> {
    let settings = &config.identities;
    let tol = config.tolerances.identity;
    let step = config.tolerances.fd_step;
    let chart0 = surface.chart(0)?;
    let bump_center = surface.point(0, &chart0.base_point())?;
    let bump = TestFunction::bump(bump_center, settings.bump_radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Accumulator::new(tol);
    let mut unit = Accumulator::new(tol);
    let mut bumped = Accumulator::new(tol);
    for (chart, bounds) in sample_boxes(surface, p, settings.radius)? {
        for _ in 0..settings.points {
            let u: Vec<f64> = bounds.iter().map(|&(a, b)| rng.gen_range(a..=b)).collect();
            trace.push(lemma_trace_residual(surface, p, chart, &u, step), chart, &u)?;
            unit.push(
                prop_divergence_residual(surface, p, &TestFunction::Unit, chart, &u, step),
                chart,
                &u,
            )?;
            bumped.push(
                prop_divergence_residual(surface, p, &bump, chart, &u, step),
                chart,
                &u,
            )?;
        }
    }
    let divergence_theorem = match settings.divergence_radius {
        Some(r) => {
            let check = divergence_theorem_check(
                surface,
                p,
                &TestFunction::Unit,
                cutoff,
                r,
                config.tolerances.divergence,
                step,
                options,
            )?;
            let tolerance = config.tolerances.divergence;
            let (i, m) = (check.integral, check.magnitude);
            let deficit = i.value.abs() - tolerance * m.value;
            let bar = i.abs_error + tolerance * m.abs_error;
            Some(DivergenceTheoremReport {
                radius: r,
                check,
                relative: check.relative(),
                tolerance,
                verdict: Verdict::from_deficits(&[(deficit, bar)], |_| Location::None),
            })
        }
        None => None,
    };
    Ok(IdentityReport {
        trace: trace.finish(),
        divergence_unit: unit.finish(),
        divergence_bump: bumped.finish(),
        divergence_theorem,
    })
}

fn summarize(requested: &[Suite], centers: &[CenterReport]) -> BTreeMap<Suite, SuiteSummary> {
    let mut out = BTreeMap::new();
    for &suite in requested {
        let mut verdicts: Vec<&Verdict> = Vec::new();
        for c in centers {
            match suite {
                Suite::Monotonicity => verdicts.extend(c.monotonicity.iter()),
                Suite::Corollary => verdicts.extend(c.corollary.iter().map(|r| &r.verdict)),
                Suite::CutoffInequality => {
                    if let Some(ci) = &c.cutoff_inequality {
                        verdicts.push(&ci.verdict);
                        verdicts.extend(ci.gamma_verdict.iter());
                    }
                }
                Suite::Identities => {
                    if let Some(r) = &c.identities {
                        verdicts.extend(r.verdicts());
                    }
                }
                Suite::DivergenceCriterion => {
                    verdicts.extend(c.divergence_criterion.iter().map(|r| &r.verdict))
                }
            }
        }
        let worst = verdicts
            .iter()
            .map(|v| v.worst_violation)
            .fold(f64::NEG_INFINITY, f64::max);
        out.insert(
            suite,
            SuiteSummary {
                passed: verdicts.iter().all(|v| v.passed),
                worst_violation: if verdicts.is_empty() { 0.0 } else { worst },
                verdict_count: verdicts.len(),
            },
        );
    }
    out
}
