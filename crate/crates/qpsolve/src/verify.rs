//! Post-hoc verification of candidate solutions: strong-form residuals on the
//! torus and along time lines, derivative bounds, the finite-window d1
//! pseudometric, and the multi-start uniqueness probe.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::solver::{minimize_from, GalerkinConfig, ProblemSpec};
use crate::torus::{FourierField, TorusGrid};

/// Residual field sampled on a torus grid, with its norms.
#[derive(Debug, Clone)]
pub struct TorusResidual {
    /// Chart residual vector at each grid point, in grid order.
    pub values: Vec<DVector<f64>>,
    /// Pointwise maximum of the metric norm.
    pub sup: f64,
    /// Quadrature L^2 norm (root mean square over the grid).
    pub l2: f64,
}

/// Residual time series along the line phi0 + t omega.
#[derive(Debug, Clone)]
pub struct LineResidual {
    pub times: Vec<f64>,
    /// Chart residual vector at each time.
    pub values: Vec<DVector<f64>>,
    /// Metric speed ||x'(t)||_g at each time.
    pub speeds: Vec<f64>,
    pub sup: f64,
    pub l2: f64,
    pub sup_speed: f64,
}

/// Finite-window d1 estimate, with the doubled-window value as a convergence
/// indicator and the metric-equivalence constants over the sampled hull.
#[derive(Debug, Clone, Copy)]
pub struct D1Estimate {
    /// Mean of ||x1' - x2'||^2 + |x1 - x2|^2 over the window [-T, T].
    pub value: f64,
    /// Same quantity over [-2T, 2T].
    pub doubled: f64,
    /// Smallest metric eigenvalue over the sampled points (lower equivalence
    /// constant between chart and metric distance).
    pub equiv_lower: f64,
    /// Largest metric eigenvalue over the sampled points.
    pub equiv_upper: f64,
}

/// Outcome of re-running the minimizer from random interior constants.
#[derive(Debug, Clone)]
pub struct UniquenessReport {
    pub trials: usize,
    pub converged_runs: usize,
    pub max_coeff_distance: f64,
    pub max_d1: f64,
    /// Some run failed to converge: the probe is inconclusive.
    pub inconclusive: bool,
    pub note: Option<String>,
}

/// Verdict-bearing summary of the residual checks for one solution.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub torus_sup: f64,
    pub torus_l2: f64,
    pub line_sup: f64,
    pub line_l2: f64,
    pub window: f64,
    pub dt: f64,
    pub sup_speed: f64,
    /// sup ||x'|| recomputed over the doubled window.
    pub sup_speed_doubled: f64,
    pub d1: Option<D1Estimate>,
    pub uniqueness: Option<UniquenessReport>,
}

fn time_grid(t_max: f64, dt: f64) -> Vec<f64> {
    assert!(t_max > 0.0 && dt > 0.0);
    let steps = (t_max / dt).round() as i64;
    (-steps..=steps).map(|i| i as f64 * dt).collect()
}

/// Chart residual D_w^2 u + Gamma(D_w u, D_w u) - g^{-1} W_x at one point.
fn residual_at(
    problem: &ProblemSpec,
    phi: &[f64],
    x: &DVector<f64>,
    d: &DVector<f64>,
    dd: &DVector<f64>,
) -> Result<(DVector<f64>, f64, f64)> {
    if !problem.manifold.chart_box.contains(x.as_slice()) {
        return Err(Error::DomainViolation(format!(
            "trajectory left the chart box at {:?}",
            x.as_slice()
        )));
    }
    let mp = problem.manifold.at(x.as_slice())?;
    let jet = problem.w_field.jet_x(phi, x.as_slice())?;
    let r = dd + mp.christoffel(d, d) - &mp.g_inv * &jet.grad_x;
    let rn = mp.norm(&r);
    let speed = mp.norm(d);
    Ok((r, rn, speed))
}

/// Strong-form Euler-Lagrange residual of `u` evaluated on the padded grid.
pub fn torus_residual(
    problem: &ProblemSpec,
    u: &FourierField,
    grid: &TorusGrid,
) -> Result<TorusResidual> {
    let padded = grid.padded();
    let du = u.directional_derivative(&problem.omega);
    let ddu = du.directional_derivative(&problem.omega);
    let mut values = Vec::with_capacity(padded.len());
    let mut sup = 0.0f64;
    let mut sumsq = 0.0f64;
    for phi in padded.points() {
        let x = u.eval(&phi);
        let d = du.eval(&phi);
        let dd = ddu.eval(&phi);
        let (r, rn, _) = residual_at(problem, &phi, &x, &d, &dd)?;
        sup = sup.max(rn);
        sumsq += rn * rn;
        values.push(r);
    }
    let l2 = (sumsq / padded.len() as f64).sqrt();
    Ok(TorusResidual { values, sup, l2 })
}

/// Euler-Lagrange residual and metric speed along t -> u(phi0 + t omega),
/// sampled over [-T, T] with step dt; derivatives are exact mode sums.
pub fn line_residual(
    problem: &ProblemSpec,
    u: &FourierField,
    phi0: &[f64],
    t_max: f64,
    dt: f64,
) -> Result<LineResidual> {
    let times = time_grid(t_max, dt);
    let samples = u.line_sample(phi0, &problem.omega, &times);
    let mut values = Vec::with_capacity(times.len());
    let mut speeds = Vec::with_capacity(times.len());
    let mut sup = 0.0f64;
    let mut sumsq = 0.0f64;
    let mut sup_speed = 0.0f64;
    for (t, (x, d, dd)) in times.iter().zip(&samples) {
        let phi: Vec<f64> = phi0
            .iter()
            .zip(problem.omega.entries())
            .map(|(&p, &w)| p + t * w)
            .collect();
        let (r, rn, speed) = residual_at(problem, &phi, x, d, dd)?;
        sup = sup.max(rn);
        sup_speed = sup_speed.max(speed);
        sumsq += rn * rn;
        values.push(r);
        speeds.push(speed);
    }
    let l2 = (sumsq / times.len() as f64).sqrt();
    Ok(LineResidual {
        times,
        values,
        speeds,
        sup,
        l2,
        sup_speed,
    })
}

fn d1_window(
    u1: &FourierField,
    u2: &FourierField,
    phi0: &[f64],
    omega: &crate::torus::FrequencyVector,
    t_max: f64,
    dt: f64,
) -> (f64, Vec<DVector<f64>>) {
    let times = time_grid(t_max, dt);
    let s1 = u1.line_sample(phi0, omega, &times);
    let s2 = u2.line_sample(phi0, omega, &times);
    let mut acc = 0.0f64;
    let mut hull = Vec::with_capacity(2 * times.len());
    for ((x1, d1, _), (x2, d2, _)) in s1.into_iter().zip(s2) {
        acc += (&d1 - &d2).norm_squared() + (&x1 - &x2).norm_squared();
        hull.push(x1);
        hull.push(x2);
    }
    (acc / (2.0 * (t_max / dt).round() + 1.0), hull)
}

/// Finite-window approximation of the d1 pseudometric between the
/// trajectories of u1 and u2 through phi0, in chart coordinates.
///
/// The manifold distance is replaced by the chart Euclidean distance; the
/// two-sided equivalence constants (extremal metric eigenvalues over the
/// sampled hull) are reported so the metric pseudodistance can be bracketed.
pub fn d1_distance(
    problem: &ProblemSpec,
    u1: &FourierField,
    u2: &FourierField,
    phi0: &[f64],
    t_max: f64,
    dt: f64,
) -> Result<D1Estimate> {
    let (value, hull) = d1_window(u1, u2, phi0, &problem.omega, t_max, dt);
    let (doubled, _) = d1_window(u1, u2, phi0, &problem.omega, 2.0 * t_max, dt);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for x in &hull {
        let g = problem.manifold.metric_at(x.as_slice())?;
        let eig = g.symmetric_eigenvalues();
        lo = lo.min(eig.min());
        hi = hi.max(eig.max());
    }
    Ok(D1Estimate {
        value,
        doubled,
        equiv_lower: lo,
        equiv_upper: hi,
    })
}

/// Re-run the minimizer from `trials` random interior constant fields and
/// report the spread among the converged runs. `conditions_pass` marks
/// whether the uniqueness theorem applies; when it does not, disagreement is
/// expected and noted rather than flagged.
pub fn uniqueness_probe(
    problem: &ProblemSpec,
    cfg: &GalerkinConfig,
    trials: usize,
    seed: u64,
    conditions_pass: bool,
) -> Result<UniquenessReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = problem.m;
    let chart_box = &problem.manifold.chart_box;
    let mut runs: Vec<FourierField> = Vec::new();
    let mut converged_runs = 0usize;
    for _ in 0..trials {
        // rejection-sample a strictly interior start point
        let mut point = None;
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..m)
                .map(|i| rng.gen_range(chart_box.lo[i]..chart_box.hi[i]))
                .collect();
            if problem.dom.level - problem.dom.v_field.value(&[], &x)? > 1e-6 {
                point = Some(x);
                break;
            }
        }
        let point = point.ok_or_else(|| {
            Error::Solver("could not sample an interior start point".into())
        })?;
        let u0 = FourierField::constant(problem.k, &DVector::from_vec(point), cfg.n_max);
        let report = minimize_from(problem, cfg, &u0)?;
        if report.converged {
            converged_runs += 1;
            runs.push(report.u);
        }
    }
    let mut max_coeff = 0.0f64;
    let mut max_d1 = 0.0f64;
    let phi0 = vec![0.0; problem.k];
    for i in 0..runs.len() {
        for j in (i + 1)..runs.len() {
            max_coeff = max_coeff.max(runs[i].coeff_distance(&runs[j]));
            let est = d1_distance(problem, &runs[i], &runs[j], &phi0, 50.0, 0.05)?;
            max_d1 = max_d1.max(est.value);
        }
    }
    let inconclusive = converged_runs < trials;
    let note = if !conditions_pass {
        Some("conditions fail, uniqueness not expected".into())
    } else if inconclusive {
        Some(format!(
            "{} of {trials} restarts failed to converge",
            trials - converged_runs
        ))
    } else {
        None
    };
    Ok(UniquenessReport {
        trials,
        converged_runs,
        max_coeff_distance: max_coeff,
        max_d1,
        inconclusive,
        note,
    })
}

/// Assemble the residual half of a report: torus norms, line norms over
/// [-T, T], and the speed bound with its doubled-window recomputation.
pub fn verify_solution(
    problem: &ProblemSpec,
    u: &FourierField,
    grid: &TorusGrid,
    phi0: &[f64],
    t_max: f64,
    dt: f64,
) -> Result<ResidualReport> {
    let torus = torus_residual(problem, u, grid)?;
    let line = line_residual(problem, u, phi0, t_max, dt)?;
    let doubled = line_residual(problem, u, phi0, 2.0 * t_max, dt)?;
    Ok(ResidualReport {
        torus_sup: torus.sup,
        torus_l2: torus.l2,
        line_sup: line.sup,
        line_l2: line.l2,
        window: t_max,
        dt,
        sup_speed: line.sup_speed,
        sup_speed_doubled: doubled.sup_speed,
        d1: None,
        uniqueness: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::scalar::ScalarField;
    use crate::solver::{benchmark_forcing, benchmark_problem, linear_benchmark_solution};
    use crate::torus::TorusGrid;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn closed_form() -> FourierField {
        let problem = benchmark_problem();
        linear_benchmark_solution(&problem.omega, &benchmark_forcing())
    }

    #[test]
    fn torus_residual_vanishes_on_closed_form_solution() {
        let problem = benchmark_problem();
        let grid = TorusGrid::new(2, 16).unwrap();
        let res = torus_residual(&problem, &closed_form(), &grid).unwrap();
        assert!(res.sup <= 1e-8, "sup residual {}", res.sup);
        assert!(res.l2 <= res.sup);
    }

    #[test]
    fn torus_residual_zero_for_constant_solution() {
        let mut problem = benchmark_problem();
        problem.w_field = ScalarField::new(
            parse_expression("(x1^2 + x2^2)/2 - x1/5 + x2/10").unwrap(),
            2,
            2,
        )
        .unwrap();
        let u = FourierField::constant(2, &DVector::from_vec(vec![0.2, -0.1]), 4);
        let grid = TorusGrid::new(2, 16).unwrap();
        let res = torus_residual(&problem, &u, &grid).unwrap();
        assert!(res.sup <= 1e-13, "sup residual {}", res.sup);
    }

    #[test]
    fn torus_residual_detects_non_solution() {
        let problem = benchmark_problem();
        let mut u = closed_form();
        // perturb one mode well past the closed form
        u.set_mode(&[1, 0], vec![Complex64::new(0.25, 0.0), Complex64::new(0.0, 0.0)]);
        let grid = TorusGrid::new(2, 16).unwrap();
        let res = torus_residual(&problem, &u, &grid).unwrap();
        assert!(res.l2 > 1e-3, "l2 residual {}", res.l2);
    }

    #[test]
    fn line_residual_and_speed_on_closed_form() {
        let problem = benchmark_problem();
        let u = closed_form();
        let res = line_residual(&problem, &u, &[0.0, 0.0], 100.0, 0.05).unwrap();
        assert!(res.sup <= 1e-8, "sup residual {}", res.sup);
        // x(t) = (0.15 cos t, (0.2/3) sin(sqrt2 t)): compare the reported
        // speeds against the differentiated closed form on the same grid
        let mut expect_sup = 0.0f64;
        for &t in &res.times {
            let v1 = -0.15 * t.sin();
            let v2 = 0.2 * std::f64::consts::SQRT_2 / 3.0 * (std::f64::consts::SQRT_2 * t).cos();
            expect_sup = expect_sup.max((v1 * v1 + v2 * v2).sqrt());
        }
        assert_relative_eq!(res.sup_speed, expect_sup, epsilon = 1e-12);
        // the two speed amplitudes combine to sqrt(0.0225 + 0.2^2 * 2 / 9)
        assert!(res.sup_speed < 0.17718);
        assert!(res.sup_speed > 0.17);
    }

    #[test]
    fn constant_solution_has_zero_speed_and_residual() {
        let mut problem = benchmark_problem();
        problem.w_field = ScalarField::new(
            parse_expression("(x1^2 + x2^2)/2 - x1/5 + x2/10").unwrap(),
            2,
            2,
        )
        .unwrap();
        let u = FourierField::constant(2, &DVector::from_vec(vec![0.2, -0.1]), 4);
        let res = line_residual(&problem, &u, &[0.3, 0.7], 10.0, 0.1).unwrap();
        assert!(res.sup <= 1e-13);
        assert!(res.sup_speed <= 1e-13);
    }

    #[test]
    fn line_residual_at_origin_matches_torus_residual() {
        let problem = benchmark_problem();
        let mut u = closed_form();
        u.set_mode(&[1, 1], vec![Complex64::new(0.02, 0.01), Complex64::new(0.0, 0.03)]);
        let grid = TorusGrid::new(2, 16).unwrap();
        let torus = torus_residual(&problem, &u, &grid).unwrap();
        // grid point 0 of the padded grid is phi = 0
        let line = line_residual(&problem, &u, &[0.0, 0.0], 1.0, 1.0).unwrap();
        let at0 = &line.values[1]; // times -1, 0, 1
        assert!((at0 - &torus.values[0]).norm() <= 1e-9);
    }

    #[test]
    fn line_residual_rejects_escaping_trajectory() {
        let problem = benchmark_problem();
        let u = FourierField::constant(2, &DVector::from_vec(vec![2.5, 0.0]), 4);
        let err = line_residual(&problem, &u, &[0.0, 0.0], 1.0, 0.5).unwrap_err();
        assert!(matches!(err, Error::DomainViolation(_)));
    }

    #[test]
    fn d1_coincident_and_offset_oracles() {
        let problem = benchmark_problem();
        let u = closed_form();
        let zero = d1_distance(&problem, &u, &u, &[0.0, 0.0], 5.0, 0.1).unwrap();
        assert_eq!(zero.value, 0.0);
        let mut shifted = u.clone();
        let mut z0 = shifted.mode(&[0, 0]);
        z0[0] += Complex64::new(0.05, 0.0);
        shifted.set_mode(&[0, 0], z0);
        let est = d1_distance(&problem, &u, &shifted, &[0.0, 0.0], 5.0, 0.1).unwrap();
        assert_relative_eq!(est.value, 0.05 * 0.05, epsilon = 1e-14);
        assert_relative_eq!(est.doubled, 0.05 * 0.05, epsilon = 1e-14);
        // flat metric: equivalence constants are both 1
        assert_relative_eq!(est.equiv_lower, 1.0, epsilon = 1e-12);
        assert_relative_eq!(est.equiv_upper, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn d1_symmetric_and_sqrt_triangle() {
        use rand::{Rng, SeedableRng};
        let problem = benchmark_problem();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut random_field = || {
            let mut f = FourierField::zero(2, 2, 4);
            for n in [[0, 0], [1, 0], [0, 1], [1, -1]] {
                f.set_mode(
                    &n,
                    (0..2)
                        .map(|_| Complex64::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)))
                        .collect(),
                );
            }
            f
        };
        for _ in 0..5 {
            let (a, b, c) = (random_field(), random_field(), random_field());
            let ab = d1_distance(&problem, &a, &b, &[0.1, 0.2], 3.0, 0.1).unwrap();
            let ba = d1_distance(&problem, &b, &a, &[0.1, 0.2], 3.0, 0.1).unwrap();
            assert_eq!(ab.value, ba.value);
            let ac = d1_distance(&problem, &a, &c, &[0.1, 0.2], 3.0, 0.1).unwrap();
            let cb = d1_distance(&problem, &c, &b, &[0.1, 0.2], 3.0, 0.1).unwrap();
            assert!(
                ab.value.sqrt() <= ac.value.sqrt() + cb.value.sqrt() + 1e-10,
                "triangle violated: {} > {} + {}",
                ab.value.sqrt(),
                ac.value.sqrt(),
                cb.value.sqrt()
            );
        }
    }

    #[test]
    fn uniqueness_probe_agrees_on_benchmark() {
        let problem = benchmark_problem();
        let cfg = GalerkinConfig::new(4, 16).unwrap();
        let report = uniqueness_probe(&problem, &cfg, 3, 11, true).unwrap();
        assert!(!report.inconclusive);
        assert_eq!(report.converged_runs, 3);
        assert!(
            report.max_coeff_distance <= 1e-8,
            "coefficient spread {}",
            report.max_coeff_distance
        );
        assert!(report.max_d1 <= 1e-12);
        assert!(report.note.is_none());
    }

    #[test]
    fn uniqueness_probe_single_trial_is_trivially_zero() {
        let problem = benchmark_problem();
        let cfg = GalerkinConfig::new(4, 16).unwrap();
        let report = uniqueness_probe(&problem, &cfg, 1, 7, true).unwrap();
        assert_eq!(report.max_coeff_distance, 0.0);
        assert_eq!(report.max_d1, 0.0);
    }

    #[test]
    fn uniqueness_probe_notes_failed_conditions() {
        let problem = benchmark_problem();
        let cfg = GalerkinConfig::new(4, 16).unwrap();
        let report = uniqueness_probe(&problem, &cfg, 1, 7, false).unwrap();
        assert_eq!(
            report.note.as_deref(),
            Some("conditions fail, uniqueness not expected")
        );
    }

    #[test]
    fn verify_solution_reports_consistent_norms() {
        let problem = benchmark_problem();
        let u = closed_form();
        let grid = TorusGrid::new(2, 16).unwrap();
        let report = verify_solution(&problem, &u, &grid, &[0.0, 0.0], 20.0, 0.1).unwrap();
        assert!(report.torus_sup <= 1e-8);
        assert!(report.line_sup <= 1e-8);
        assert!(report.torus_l2 <= report.torus_sup);
        assert!(report.line_l2 <= report.line_sup);
        // sup speed is stable under window doubling on the benchmark
        assert!((report.sup_speed_doubled - report.sup_speed).abs() <= 1e-3);
        assert!(report.sup_speed_doubled >= report.sup_speed);
    }
}
