//! Experiment configuration, read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use hyperlab::{
    catalog_build, AmbientPoint, CatalogSpec, ImmersedHypersurface, Orientation,
    QuadratureOptions, SamplingSpec, SpaceForm,
};
use serde::{Deserialize, Serialize};

use crate::expr_chart::ChartConfig;

/// Error in the configuration or its consistency; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub kappa: f64,
    /// Dimension of the hypersurface; the ambient space has dimension `n + 1`.
    pub n: usize,
}

/// A center `p`, either in Minkowski coordinates or by its spatial part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CenterConfig {
    pub label: String,
    #[serde(default)]
    pub coords: Option<Vec<f64>>,
    #[serde(default)]
    pub spatial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSetting {
    Value(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

impl Default for GammaSetting {
    fn default() -> Self {
        GammaSetting::Auto(AutoTag::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl GridConfig {
    pub fn radii(&self) -> Result<Vec<f64>, ConfigError> {
        if self.count == 0 {
            return bad("grid.count must be at least 1");
        }
        if !(self.min > 0.0 && self.max.is_finite()) {
            return bad("grid radii must be positive and finite");
        }
        if self.count == 1 {
            return Ok(vec![self.min]);
        }
        if !(self.max > self.min) {
            return bad("grid.max must exceed grid.min");
        }
        let last = (self.count - 1) as f64;
        Ok((0..self.count)
            .map(|i| {
                let s = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.min + (self.max - self.min) * s,
                    Spacing::Log => self.min * (self.max / self.min).powf(s),
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative quadrature tolerance of the ball integrals.
    pub quadrature: f64,
    /// Step of the finite differences in the identity checks.
    pub fd_step: f64,
    /// Largest admissible relative residual of a pointwise identity.
    pub identity: f64,
    /// Largest admissible `|∫ div| / ∫ |div|` in the divergence-theorem check.
    pub divergence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            quadrature: 1e-6,
            fd_step: 1e-3,
            identity: 1e-4,
            divergence: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Identities,
    Monotonicity,
    CutoffInequality,
    Corollary,
    DivergenceCriterion,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Identities,
        Suite::Monotonicity,
        Suite::CutoffInequality,
        Suite::Corollary,
        Suite::DivergenceCriterion,
    ];
}

/// Settings of the pointwise identity suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityConfig {
    /// Random chart points per chart and center.
    pub points: usize,
    /// Unbounded charts are sampled within this distance of the center.
    pub radius: f64,
    /// Support radius of the bump test function, centered at the chart base point.
    pub bump_radius: f64,
    /// Radius of the divergence-theorem check; skipped when absent.
    pub divergence_radius: Option<f64>,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self {
            points: 100,
            radius: 2.0,
            bump_radius: 1.5,
            divergence_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoffConfig {
    pub m: f64,
    /// Radii of the cutoff inequality; default to the grid ends.
    pub s: Option<f64>,
    pub t: Option<f64>,
}

impl Default for CutoffConfig {
    fn default() -> Self {
        Self {
            m: 20.0,
            s: None,
            t: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub plot: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("hyperlab-out"),
            plot: true,
        }
    }
}

/// Parameter varied by `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Sphere or tube radius, or equidistant distance.
    Shape,
    Gamma,
    /// One cell per center; takes no values.
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    #[serde(default)]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceConfig,
    /// Catalog surface; exactly one of `surface` and `chart` must be given.
    #[serde(default)]
    pub surface: Option<CatalogSpec>,
    #[serde(default)]
    pub chart: Option<ChartConfig>,
    /// Centers `p`; defaults to the catalog's standard centers or the chart base point.
    #[serde(default)]
    pub centers: Vec<CenterConfig>,
    #[serde(default)]
    pub gamma: GammaSetting,
    pub grid: GridConfig,
    /// Base radius of the lower bound; defaults to the first grid radius.
    #[serde(default)]
    pub r0: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub quadrature: QuadratureOptions,
    #[serde(default)]
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub identities: IdentityConfig,
    #[serde(default)]
    pub cutoff: CutoffConfig,
    #[serde(default = "all_suites")]
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn all_suites() -> Vec<Suite> {
    Suite::ALL.to_vec()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::from_toml(&text)?, text))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.space.kappa < 0.0) {
            return bad(format!(
                "space.kappa must satisfy kappa < 0, got {}",
                self.space.kappa
            ));
        }
        if self.space.n < 3 {
            return bad(format!("space.n must be at least 3, got {}", self.space.n));
        }
        match (&self.surface, &self.chart) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return bad("give exactly one of [surface] and [chart]"),
        }
        let grid = self.grid.radii()?;
        if let Some(r0) = self.r0 {
            if !(r0 > 0.0 && r0 < grid[grid.len() - 1]) {
                return bad("r0 must be positive and below the largest grid radius");
            }
        }
        if let GammaSetting::Value(g) = self.gamma {
            if !(g >= 0.0) {
                return bad(format!("gamma must be >= 0, got {g}"));
            }
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("quadrature", t.quadrature),
            ("fd_step", t.fd_step),
            ("identity", t.identity),
            ("divergence", t.divergence),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("tolerances.{name} must be positive"));
            }
        }
        if !(self.cutoff.m > 0.0) {
            return bad("cutoff.m must be positive");
        }
        if let (Some(s), Some(t)) = (self.cutoff.s, self.cutoff.t) {
            if !(s > 0.0 && t >= s) {
                return bad("cutoff radii must satisfy t >= s > 0");
            }
        }
        if self.suites.is_empty() {
            return bad("no suites requested");
        }
        for c in &self.centers {
            if c.coords.is_some() == c.spatial.is_some() {
                return bad(format!(
                    "center {} needs exactly one of coords and spatial",
                    c.label
                ));
            }
        }
        if let Some(sweep) = &self.sweep {
            let wants_values = sweep.parameter != SweepParameter::Center;
            if wants_values && sweep.values.is_empty() {
                return bad("sweep.values is empty");
            }
        }
        Ok(())
    }

    pub fn space(&self) -> Result<SpaceForm, ConfigError> {
        SpaceForm::new(self.space.kappa, self.space.n).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn quadrature_options(&self, budget: Option<u64>) -> QuadratureOptions {
        let mut options = self.quadrature.clone();
        if let Some(b) = budget {
            options.budget = b;
        }
        options
    }

    pub fn build_surface(&self, space: &SpaceForm) -> Result<ImmersedHypersurface, ConfigError> {
        let built = match (&self.surface, &self.chart) {
            (Some(spec), _) => catalog_build(space, spec),
            (_, Some(chart)) => chart.build(space).map_err(|e| ConfigError(e.to_string()))?,
            _ => return bad("no surface"),
        };
        built.map_err(|e| ConfigError(format!("cannot build surface: {e}")))
    }

    pub fn centers(
        &self,
        space: &SpaceForm,
        surface: &ImmersedHypersurface,
    ) -> Result<Vec<(String, AmbientPoint)>, ConfigError> {
        let wrap = |e: hyperlab::Error| ConfigError(e.to_string());
        if self.centers.is_empty() {
            return match &self.surface {
                Some(spec) => spec.default_centers(space).map_err(wrap),
                None => {
                    let chart = &surface.charts()[0];
                    let p = surface.point(0, &chart.base_point()).map_err(wrap)?;
                    Ok(vec![("base_point".to_string(), p)])
                }
            };
        }
        self.centers
            .iter()
            .map(|c| {
                let p = match (&c.coords, &c.spatial) {
                    (Some(x), _) => AmbientPoint::new(space, x.clone()),
                    (_, Some(s)) => AmbientPoint::from_spatial(space, s),
                    _ => unreachable!("validated"),
                }
                .map_err(|e| ConfigError(format!("center {}: {e}", c.label)))?;
                Ok((c.label.clone(), p))
            })
            .collect()
    }

    pub fn orientation(&self) -> Orientation {
        match (&self.surface, &self.chart) {
            (Some(spec), _) => spec.orientation,
            (_, Some(chart)) => chart.orientation,
            _ => Orientation::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPHERE: &str = r#"
space = { kappa = -1.0, n = 3 }
surface = { family = "geodesic_sphere", radius = 1.0 }
grid = { min = 0.2, max = 5.0, count = 12 }
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::from_toml(SPHERE).unwrap();
        assert_eq!(c.gamma, GammaSetting::default());
        assert_eq!(c.suites.len(), 5);
        let grid = c.grid.radii().unwrap();
        assert_eq!(grid.len(), 12);
        assert_eq!(grid[0], 0.2);
        assert_eq!(grid[11], 5.0);
    }

    #[test]
    fn explicit_gamma_and_placement() {
        let text = r#"
gamma = 1.0
space = { kappa = -1.0, n = 3 }
grid = { min = 0.2, max = 5.0, count = 12 }

[surface]
family = "geodesic_sphere"
radius = 1.0

[surface.placement]
origin_to = [1.5430806348152437, 1.1752011936438014, 0.0, 0.0, 0.0]
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.gamma, GammaSetting::Value(1.0));
        assert!(c.surface.unwrap().placement.origin_to.is_some());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = format!("{SPHERE}colour = 3\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        let text = SPHERE.replace("radius = 1.0", "radius = 1.0, radios = 2.0");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        let text = format!("{SPHERE}[tolerances]\nquadratur = 1e-6\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn positive_curvature_is_rejected() {
        let text = SPHERE.replace("kappa = -1.0", "kappa = 1.0");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.0.contains("kappa < 0"), "{err}");
    }

    #[test]
    fn log_grid() {
        let g = GridConfig {
            min: 0.5,
            max: 8.0,
            count: 5,
            spacing: Spacing::Log,
        };
        let r = g.radii().unwrap();
        for (a, b) in r.iter().zip([0.5, 1.0, 2.0, 4.0, 8.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
