//! Batch runs over a family parameter, Gamma, or the centers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hyperlab::Family;

use crate::config::{CenterConfig, ConfigError, ExperimentConfig, GammaSetting, SweepParameter};
use crate::output::write_all;
use crate::run::{execute, ExitStatus, RunOverrides};

/// One cell of a sweep: its configuration and the value shown in the index.
pub struct SweepCell {
    pub value: String,
    pub config: ExperimentConfig,
}

pub fn cells(config: &ExperimentConfig) -> Result<Vec<SweepCell>, ConfigError> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| ConfigError("sweep needs a [sweep] table".into()))?;
    let mut out = Vec::new();
    match sweep.parameter {
        SweepParameter::Shape => {
            if sweep.values.is_empty() {
                return Err(ConfigError("sweep.values is empty".into()));
            }
            for &v in &sweep.values {
                let mut cell = config.clone();
                let spec = cell.surface.as_mut().ok_or_else(|| {
                    ConfigError("a shape sweep needs a catalog [surface]".into())
                })?;
                match &mut spec.family {
                    Family::GeodesicSphere { radius } | Family::GeodesicTube { radius } => {
                        *radius = v
                    }
                    Family::Equidistant { distance } => *distance = v,
                    Family::Horosphere => {
                        return Err(ConfigError("horospheres have no shape parameter".into()))
                    }
                }
                out.push(SweepCell {
                    value: v.to_string(),
                    config: cell,
                });
            }
        }
        SweepParameter::Gamma => {
            if sweep.values.is_empty() {
                return Err(ConfigError("sweep.values is empty".into()));
            }
            for &v in &sweep.values {
                let mut cell = config.clone();
                cell.gamma = GammaSetting::Value(v);
                out.push(SweepCell {
                    value: v.to_string(),
                    config: cell,
                });
            }
        }
        SweepParameter::Center => {
            if !sweep.values.is_empty() {
                return Err(ConfigError(
                    "a center sweep runs over the centers and takes no values".into(),
                ));
            }
            let space = config.space()?;
            let surface = config.build_surface(&space)?;
            for (label, p) in config.centers(&space, &surface)? {
                let mut cell = config.clone();
                cell.centers = vec![CenterConfig {
                    label: label.clone(),
                    coords: Some(p.as_slice().to_vec()),
                    spatial: None,
                }];
                out.push(SweepCell {
                    value: label,
                    config: cell,
                });
            }
        }
    }
    for cell in &mut out {
        cell.config.sweep = None;
        cell.config.validate()?;
    }
    Ok(out)
}

/// Runs every cell into `dir/cell_XXX` and writes `dir/index.csv`. The exit
/// status is the worst over the cells.
pub fn run_sweep(
    config: &ExperimentConfig,
    config_text: &str,
    overrides: &RunOverrides,
    dir: &Path,
) -> Result<ExitStatus, ConfigError> {
    let cells = cells(config)?;
    let parameter = match config.sweep.as_ref().map(|s| s.parameter) {
        Some(SweepParameter::Shape) => "shape",
        Some(SweepParameter::Gamma) => "gamma",
        _ => "center",
    };
    let mut index = String::from("cell,parameter,value,gamma,admissible,exit_code\n");
    let mut worst = ExitStatus::Passed;
    for (i, cell) in cells.iter().enumerate() {
        let name = format!("cell_{i:03}");
        let (status, gamma, admissible) = match execute(&cell.config, config_text, overrides) {
            Ok(mut result) => {
                let status = match write_all(&mut result, &dir.join(&name), cell.config.output.plot)
                {
                    Ok(_) => result.status,
                    Err(e) => {
                        eprintln!("error: cannot write {name}: {e}");
                        ExitStatus::Numerical
                    }
                };
                (status, result.report.gamma.to_string(), result.report.admissible.to_string())
            }
            Err(e) => {
                eprintln!("error in {name}: {e}");
                (ExitStatus::ConfigError, String::new(), String::new())
            }
        };
        worst = worst.max(status);
        let _ = writeln!(
            index,
            "{name},{parameter},{},{gamma},{admissible},{}",
            cell.value,
            status.code()
        );
    }
    if let Err(e) = fs::create_dir_all(dir).and_then(|_| fs::write(dir.join("index.csv"), index)) {
        eprintln!("error: cannot write the sweep index: {e}");
        worst = ExitStatus::Numerical;
    }
    Ok(worst)
}
