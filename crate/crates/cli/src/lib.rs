//! Configuration-driven experiment runner for the `hyperlab` library.
//!
//! A run builds the configured hypersurface, executes the requested suites for
//! every center and writes `report.json`, one CSV series per center and
//! optional SVG plots of `phi(r)`.

pub mod config;
pub mod expr_chart;
pub mod output;
pub mod run;
pub mod sweep;

use std::path::{Path, PathBuf};

pub use config::{ConfigError, ExperimentConfig, Suite};
pub use run::{execute, ExitStatus, RunOverrides, RunResult, VerificationReport};

/// Environment variable setting the number of worker threads.
pub const THREADS_ENV: &str = "HYPERLAB_THREADS";

/// Sizes the global thread pool from [`THREADS_ENV`], if set.
pub fn init_threads() -> Result<(), ConfigError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| ConfigError(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    if threads == 0 {
        return Err(ConfigError(format!("{THREADS_ENV} must be positive")));
    }
    // a pool built earlier in the process wins
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

fn output_dir(config: &ExperimentConfig, overrides: &RunOverrides) -> PathBuf {
    overrides
        .out
        .clone()
        .unwrap_or_else(|| config.output.dir.clone())
}

fn summary(result: &RunResult, dir: &Path) {
    let report = &result.report;
    println!(
        "gamma = {} ({}), admissible = {}",
        report.gamma,
        if report.gamma_auto { "auto" } else { "given" },
        report.admissible
    );
    for (suite, s) in &report.suites {
        println!(
            "{:<22} {}  worst violation {:e}",
            format!("{suite:?}"),
            if s.passed { "pass" } else { "FAIL" },
            s.worst_violation
        );
    }
    for e in report
        .errors
        .iter()
        .chain(report.centers.iter().flat_map(|c| c.errors.iter()))
    {
        eprintln!("error: {e}");
    }
    if !report.converged {
        eprintln!("error: some integrals did not reach their tolerance");
    }
    println!("report written to {}", dir.join("report.json").display());
}

/// `run`: all configured suites. `only` restricts the suites.
pub fn run_command(path: &Path, overrides: &RunOverrides, only: Option<Vec<Suite>>) -> ExitStatus {
    let (mut config, text) = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => return config_failure(e),
    };
    if let Some(suites) = only {
        config.suites = suites;
    }
    if let Err(e) = init_threads() {
        return config_failure(e);
    }
    let mut result = match execute(&config, &text, overrides) {
        Ok(r) => r,
        Err(e) => return config_failure(e),
    };
    let dir = output_dir(&config, overrides);
    if let Err(e) = output::write_all(&mut result, &dir, config.output.plot) {
        eprintln!("error: cannot write results to {}: {e}", dir.display());
        return ExitStatus::Numerical;
    }
    summary(&result, &dir);
    result.status
}

/// `sweep`: one run per value of the `[sweep]` parameter.
pub fn sweep_command(path: &Path, overrides: &RunOverrides) -> ExitStatus {
    let (config, text) = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => return config_failure(e),
    };
    if let Err(e) = init_threads() {
        return config_failure(e);
    }
    let dir = output_dir(&config, overrides);
    match sweep::run_sweep(&config, &text, overrides, &dir) {
        Ok(status) => {
            println!("sweep index written to {}", dir.join("index.csv").display());
            status
        }
        Err(e) => config_failure(e),
    }
}

fn config_failure(e: ConfigError) -> ExitStatus {
    eprintln!("config error: {e}");
    ExitStatus::ConfigError
}
