use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hyperlab_cli::{run_command, sweep_command, ExitStatus, RunOverrides, Suite};

/// Numerical checks of curvature monotonicity for hypersurfaces in hyperbolic space.
///
/// Exit codes: 0 all verdicts passed, 1 a verdict failed, 2 configuration error,
/// 3 numerical failure or non-convergence. The number of worker threads is read
/// from HYPERLAB_THREADS.
#[derive(Parser)]
#[command(name = "hyperlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every suite listed in the configuration.
    Run(Common),
    /// Run once per value of the [sweep] parameter and write an index.
    Sweep(Common),
    /// Run only the pointwise and integrated identity checks.
    Identities(Common),
    /// Print the version.
    Version,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Density evaluations allowed per integral.
    #[arg(long)]
    budget: Option<u64>,
    /// Seed of the sampled checks.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn overrides(&self) -> RunOverrides {
        RunOverrides {
            out: self.out.clone(),
            budget: self.budget,
            seed: self.seed,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { ExitStatus::ConfigError.code() as u8 } else { 0 });
        }
    };
    let status = match cli.command {
        Command::Run(c) => run_command(&c.config, &c.overrides(), None),
        Command::Sweep(c) => sweep_command(&c.config, &c.overrides()),
        Command::Identities(c) => {
            run_command(&c.config, &c.overrides(), Some(vec![Suite::Identities]))
        }
        Command::Version => {
            println!("hyperlab {}", env!("CARGO_PKG_VERSION"));
            ExitStatus::Passed
        }
    };
    ExitCode::from(status.code() as u8)
}
