use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qnewton::trajectory::Law;

mod commands;
mod config;
mod failure;

use failure::Failure;

/// Quantum trajectories from the reduced action: run scenarios, verify the
/// identities behind them, and determine the kinetic-series coefficients.
#[derive(Debug, Parser)]
#[command(name = "qnewton", version)]
struct Cli {
    /// Seed for every random draw (jets, random states).
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Multiplies integrator tolerances and verification thresholds.
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
    /// Print only errors and the final verdict.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one scenario and write its samples.
    Trajectory(TrajectoryArgs),
    /// Check an identity and exit 1 if it is violated.
    #[command(subcommand)]
    Verify(Verify),
    /// Determine the kinetic-series lattice level by level.
    Coefficients(CoefficientsArgs),
    #[command(subcommand)]
    Demo(Demo),
    /// Run a scenario over a grid of (a, b, E), one summary row per cell.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct TrajectoryArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.law`: velocity, newton or legacy.
    #[arg(long, value_parser = parse_law)]
    law: Option<Law>,
    /// Overrides `run.t1`.
    #[arg(long)]
    t1: Option<f64>,
    /// Overrides `run.samples`.
    #[arg(long)]
    samples: Option<usize>,
    /// Overrides `output.path`; `-` writes to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Verify {
    /// Residual of the quantum stationary Hamilton-Jacobi equation.
    Qshje {
        /// Scenario to check; without it a built-in free and harmonic suite runs.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 601)]
        points: usize,
    },
    /// Term-scaled residual of the master relation at random jets.
    Master {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Coefficient lattice JSON; the canonical lattice by default.
        #[arg(long)]
        coefficients: Option<PathBuf>,
        /// Set one entry, e.g. `alpha20=0.7`; repeatable.
        #[arg(long)]
        perturb: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        hbar: f64,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
    },
    /// Energy, free momentum and Bohm relation along both quantum laws.
    Conservation {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Random (a, b) states in the built-in suite.
        #[arg(long, default_value_t = 5)]
        states: usize,
    },
}

#[derive(Debug, Args)]
struct CoefficientsArgs {
    #[arg(long, default_value_t = 2)]
    levels: u32,
    /// Also write the lattice as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Demo {
    /// Lagrangian with a term linear in a power of the velocity.
    Appendix1 {
        /// Power of the velocity in the extra term.
        #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
        power: i32,
        /// Polynomial coefficients of f(x), lowest first.
        #[arg(long, value_delimiter = ',', default_value = "1", allow_hyphen_values = true)]
        f: Vec<f64>,
        /// `free`, `linear:<slope>` or `harmonic:<stiffness>`.
        #[arg(long, default_value = "harmonic:1")]
        potential: String,
        /// Regularization weight; 0 runs the naive formulation.
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
    },
    /// Legacy first integral stalling at a turning point, against the velocity law.
    LegacyStall {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Base scenario; the grid overrides its a, b and energy.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    a: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    b: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    energy: Vec<f64>,
    /// Summary CSV; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_law(s: &str) -> Result<Law, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown law '{s}', expected velocity, newton or legacy"))
}

pub struct Ctx {
    pub seed: u64,
    pub tol_scale: f64,
    pub quiet: bool,
}

impl Ctx {
    pub fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool, Failure> {
    let ctx = Ctx { seed: cli.seed, tol_scale: cli.tol_scale, quiet: cli.quiet };
    if !(ctx.tol_scale > 0.0 && ctx.tol_scale.is_finite()) {
        return Err(Failure::config(format!("--tol-scale must be positive, got {}", ctx.tol_scale)));
    }
    match cli.command {
        Command::Trajectory(a) => commands::trajectory(&ctx, &a.config, a.law, a.t1, a.samples, a.output),
        Command::Verify(Verify::Qshje { config, points }) => commands::verify_qshje(&ctx, config.as_deref(), points),
        Command::Verify(Verify::Master { samples, coefficients, perturb, hbar, mu }) => {
            commands::verify_master(&ctx, samples, coefficients.as_deref(), &perturb, hbar, mu)
        }
        Command::Verify(Verify::Conservation { config, states }) => {
            commands::verify_conservation(&ctx, config.as_deref(), states)
        }
        Command::Coefficients(a) => commands::coefficients(&ctx, a.levels, a.output.as_deref()),
        Command::Demo(Demo::Appendix1 { power, f, potential, lambda }) => {
            commands::demo_appendix1(&ctx, power, f, &potential, lambda)
        }
        Command::Demo(Demo::LegacyStall { config }) => commands::demo_legacy_stall(&ctx, config.as_deref()),
        Command::Sweep(a) => commands::sweep(&ctx, &a.config, &a.a, &a.b, &a.energy, a.output.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
