//! Run orchestration: wires problem files through conditions, solve, verify
//! and dichotomy, emits the report and CSV side files, and maps verdicts to
//! exit codes (0 pass, 2 fail, 3 inconclusive; execution errors are left to
//! the caller as 1).

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conditions::{check_c1, check_c2, check_theorem1, ConditionReport, Verdict};
use crate::dichotomy::{estimate_exponents, VariationalSystem};
use crate::error::Result;
use crate::problem::{load_problem, LoadedProblem};
use crate::report::{exponents_csv, line_residual_csv, Report};
use crate::solver::{minimize, SolveReport};
use crate::verify::{line_residual, uniqueness_probe, verify_solution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    Solve,
    Verify,
    Dichotomy,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Report,
    Csv,
    Both,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub command: Command,
    pub problem_path: PathBuf,
    pub seed: u64,
    pub trunc: Option<i32>,
    pub grid: Option<usize>,
    pub window: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

fn worst(a: Verdict, b: Verdict) -> Verdict {
    match (a, b) {
        (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
        (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
        _ => Verdict::Pass,
    }
}

fn exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => 0,
        Verdict::Fail => 2,
        Verdict::Inconclusive => 3,
    }
}

fn run_conditions(loaded: &LoadedProblem, seed: u64) -> Result<ConditionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fragments = Vec::new();
    fragments.push(check_c1(
        &loaded.spec.manifold,
        &loaded.spec.dom,
        &loaded.conditions,
    )?);
    let c2 = check_c2(
        &loaded.spec.manifold,
        &loaded.spec.dom,
        &loaded.conditions,
        &mut rng,
    )?;
    fragments.extend(c2.fragments);
    let t1 = check_theorem1(
        &loaded.spec.manifold,
        &loaded.spec.dom,
        &loaded.spec.w_field,
        &loaded.conditions,
    )?;
    fragments.extend(t1.fragments);
    Ok(ConditionReport { fragments })
}

fn solve_verdict(report: &SolveReport) -> Verdict {
    if report.containment_margin <= 0.0 {
        Verdict::Fail
    } else if report.converged {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    }
}

fn write_output(
    report: &Report,
    csv_files: &[(String, String)],
    out: &Option<PathBuf>,
    format: OutputFormat,
) -> Result<()> {
    let text = report.render();
    print!("{text}");
    let dir: &Path = out.as_deref().unwrap_or_else(|| Path::new("."));
    if out.is_some() {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.txt"), &text)?;
    }
    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        std::fs::create_dir_all(dir)?;
        for (name, contents) in csv_files {
            std::fs::write(dir.join(name), contents)?;
        }
    }
    Ok(())
}

/// Execute one subcommand; returns the process exit code.
pub fn run(opts: &RunOptions) -> Result<i32> {
    let total = Instant::now();
    let mut loaded = load_problem(&opts.problem_path)?;
    if let Some(trunc) = opts.trunc {
        let grid = opts.grid.unwrap_or(loaded.galerkin.grid_p.max(2 * trunc as usize + 2));
        let g_tol = loaded.galerkin.g_tol;
        loaded.galerkin = crate::solver::GalerkinConfig::new(trunc, grid)?;
        loaded.galerkin.g_tol = g_tol;
    } else if let Some(grid) = opts.grid {
        let mut cfg = loaded.galerkin.clone();
        cfg.grid_p = grid;
        loaded.galerkin = crate::solver::GalerkinConfig::new(cfg.n_max, grid)?;
        loaded.galerkin.g_tol = cfg.g_tol;
    }
    if let Some(window) = opts.window {
        loaded.window = window;
    }

    let mut report = Report::new(&loaded.spec.label, &loaded.source, opts.seed);
    let mut verdict;
    let mut csv_files: Vec<(String, String)> = Vec::new();

    // conditions run for every subcommand
    let t = Instant::now();
    let conditions = run_conditions(&loaded, opts.seed)?;
    eprintln!("timing: conditions {:.3}s", t.elapsed().as_secs_f64());
    report.conditions(&conditions);
    verdict = conditions.overall();
    let conditions_pass = conditions.overall() == Verdict::Pass;

    if opts.command == Command::Check || verdict == Verdict::Fail {
        if opts.command != Command::Check {
            report.section("run");
            report.kv("note", "conditions failed; solve and verification skipped");
        }
        write_output(&report, &csv_files, &opts.out, opts.format)?;
        eprintln!("timing: total {:.3}s", total.elapsed().as_secs_f64());
        return Ok(exit_code(verdict));
    }

    // every remaining subcommand needs a solution
    let t = Instant::now();
    let solve = minimize(&loaded.spec, &loaded.galerkin)?;
    eprintln!("timing: solve {:.3}s", t.elapsed().as_secs_f64());
    report.solve(&solve);
    verdict = worst(verdict, solve_verdict(&solve));

    let phi0 = vec![0.0; loaded.spec.k];
    if matches!(opts.command, Command::Verify | Command::All) {
        let t = Instant::now();
        let grid = crate::torus::TorusGrid::new(loaded.spec.k, loaded.galerkin.grid_p)?;
        let dt = 0.05;
        let mut residuals =
            verify_solution(&loaded.spec, &solve.u, &grid, &phi0, loaded.window, dt)?;
        let probe = uniqueness_probe(&loaded.spec, &loaded.galerkin, 5, opts.seed, conditions_pass)?;
        if probe.inconclusive {
            verdict = worst(verdict, Verdict::Inconclusive);
        }
        // empirical stability bound on the strong residual of a converged solve
        let resid_ok = residuals.torus_l2 <= 1e3 * loaded.galerkin.g_tol;
        if !resid_ok {
            verdict = worst(verdict, Verdict::Fail);
        }
        residuals.uniqueness = Some(probe);
        report.residuals(&residuals);
        if matches!(opts.format, OutputFormat::Csv | OutputFormat::Both) {
            let line = line_residual(&loaded.spec, &solve.u, &phi0, loaded.window, dt)?;
            csv_files.push((
                "residuals.csv".to_string(),
                line_residual_csv(&line, loaded.spec.m),
            ));
        }
        eprintln!("timing: verify {:.3}s", t.elapsed().as_secs_f64());
    }

    if matches!(opts.command, Command::Dichotomy | Command::All) {
        let t = Instant::now();
        let horizon = loaded.window.min(50.0);
        let vs = VariationalSystem::along_solution(
            &loaded.spec,
            &solve.u,
            &phi0,
            horizon + 5.0,
            0.05,
            true,
        )?;
        let dich = estimate_exponents(&vs, horizon, 0.5)?;
        report.dichotomy(&dich);
        verdict = worst(verdict, dich.verdict);
        if matches!(opts.format, OutputFormat::Csv | OutputFormat::Both) {
            csv_files.push(("exponents.csv".to_string(), exponents_csv(&dich)));
        }
        eprintln!("timing: dichotomy {:.3}s", t.elapsed().as_secs_f64());
    }

    write_output(&report, &csv_files, &opts.out, opts.format)?;
    eprintln!("timing: total {:.3}s", total.elapsed().as_secs_f64());
    Ok(exit_code(verdict))
}
