use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qpsolve::app::{run, Command, OutputFormat, RunOptions};

/// Solver and verifier for time-quasiperiodic natural Lagrangian systems on
/// Riemannian charts.
#[derive(Parser)]
#[command(name = "qpsolve", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Problem definition file.
    problem: PathBuf,
    /// RNG seed for condition sampling and restart probes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fourier truncation override (band half-width N).
    #[arg(long)]
    trunc: Option<i32>,
    /// Analysis grid override (points per torus axis P).
    #[arg(long)]
    grid: Option<usize>,
    /// Verification time-window half-width T.
    #[arg(long)]
    window: Option<f64>,
    /// Output directory for report.txt and CSV side files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// What to emit besides stdout.
    #[arg(long, value_enum, default_value_t = Format::Report)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Report,
    Csv,
    Both,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check conditions C1, C2 and the Theorem-1 inequalities only.
    Check(Common),
    /// Conditions plus action minimization.
    Solve(Common),
    /// Conditions, solve, residual checks, d1 and the uniqueness probe.
    Verify(Common),
    /// Conditions, solve and the variational-system dichotomy analysis.
    Dichotomy(Common),
    /// The full pipeline.
    All(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Check(c) => (Command::Check, c),
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Dichotomy(c) => (Command::Dichotomy, c),
        Cmd::All(c) => (Command::All, c),
    };
    let opts = RunOptions {
        command,
        problem_path: common.problem,
        seed: common.seed,
        trunc: common.trunc,
        grid: common.grid,
        window: common.window,
        out: common.out,
        format: match common.format {
            Format::Report => OutputFormat::Report,
            Format::Csv => OutputFormat::Csv,
            Format::Both => OutputFormat::Both,
        },
    };
    match run(&opts) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
