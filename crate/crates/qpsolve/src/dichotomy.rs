//! The system in variations along a solution trajectory, written in a
//! parallel-transported orthonormal frame as y'' = A(t) y, together with the
//! two dichotomy diagnostics: positivity of the derivative of the quadratic
//! form F, and Lyapunov exponents by discrete QR.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conditions::{lambda_v, sample_domain, Verdict};
use crate::error::{Error, Result};
use crate::geometry::{hessian_form_matrix, max_sectional, transport_frame, Curve, SampledCurve, TangentFrame};
use crate::ode::{integrate_nodes, OdeOptions};
use crate::solver::ProblemSpec;
use crate::torus::{FourierField, TorusGrid};

/// The variational system along one trajectory, with the cutoff data of the
/// bounded-derivative construction.
pub struct VariationalSystem<'a> {
    pub problem: &'a ProblemSpec,
    pub phi0: Vec<f64>,
    /// The base trajectory x(t) with its velocity field xi(t).
    pub curve: SampledCurve,
    /// Parallel-transported g-orthonormal frame along the trajectory.
    pub frame: TangentFrame,
    /// Velocity cutoff B > 1 of r(s).
    pub b_cutoff: f64,
    /// C = max over the closed domain of ||grad V||, ||grad W||, ||H_W||.
    pub c_const: f64,
    /// Coercivity constant of the mixed z1/z2 quadratic form.
    pub alpha2: f64,
    /// Whether alpha2 B^2 >= 1 + C(1 + 3C/2) holds (it does by the choice of
    /// B whenever alpha2 > 0).
    pub cutoff_ok: bool,
    /// Use r == 1 (the system in variations proper, bounded-velocity case).
    pub r_is_one: bool,
    pub t_span: (f64, f64),
}

/// Verdict-bearing summary of the exponent and F-derivative diagnostics.
#[derive(Debug, Clone)]
pub struct DichotomyReport {
    /// Time-averaged QR exponents, descending.
    pub exponents: Vec<f64>,
    pub stable_dim: usize,
    pub unstable_dim: usize,
    /// Distance of the exponent set from zero.
    pub gap: f64,
    /// Empirical minimum of dF/dt / (|y|^2 + |y'|^2), when computed.
    pub alpha: Option<f64>,
    /// Two-sigma spread of windowed exponent estimates.
    pub confidence: f64,
    pub window: (f64, f64),
    pub verdict: Verdict,
    /// Running exponent estimates after each reorthonormalization, for CSV
    /// export: (t, exponents-so-far).
    pub series: Vec<(f64, Vec<f64>)>,
}

/// Closure constants of the Prop.-3 construction: C over T^k x closure(Omega)
/// and the coercivity constant alpha2 = min eig [[1, -b/2], [-b/2, c]] with
/// b = max ||grad V|| and c = min (lambda_V/2 - K*).
fn cutoff_constants(problem: &ProblemSpec) -> Result<(f64, f64)> {
    let sample = sample_domain(&problem.manifold, &problem.dom)?;
    let mut closure: Vec<&Vec<f64>> = sample
        .points
        .iter()
        .zip(&sample.strict)
        .filter(|(_, &s)| s)
        .map(|(p, _)| p)
        .collect();
    closure.extend(sample.boundary.iter());
    if closure.is_empty() {
        return Err(Error::Geometry("empty domain sample".into()));
    }
    let phi_grid = TorusGrid::new(problem.k, 8)?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut c_const = 0.0f64;
    let mut b_max = 0.0f64;
    let mut c_min = f64::INFINITY;
    for x in closure {
        let mp = problem.manifold.at(x.as_slice())?;
        let vjet = problem.dom.v_field.jet_x(&[], x)?;
        let grad_v = &mp.g_inv * &vjet.grad_x;
        let nv = mp.norm(&grad_v);
        b_max = b_max.max(nv);
        c_const = c_const.max(nv);
        let kstar = max_sectional(&problem.manifold, x, 4, &mut rng)?;
        c_min = c_min.min(0.5 * lambda_v(&problem.manifold, &problem.dom.v_field, x)? - kstar);
        for phi in phi_grid.points() {
            let wjet = problem.w_field.jet_x(&phi, x)?;
            let grad_w = &mp.g_inv * &wjet.grad_x;
            c_const = c_const.max(mp.norm(&grad_w));
            // operator norm of the covariant Hessian in a g-orthonormal frame
            let a = hessian_form_matrix(&mp, &wjet);
            let l = mp.chol.l();
            let mut rel = l
                .solve_lower_triangular(&a)
                .ok_or_else(|| Error::Geometry("singular metric factor".into()))?
                .transpose();
            rel = l
                .solve_lower_triangular(&rel)
                .ok_or_else(|| Error::Geometry("singular metric factor".into()))?;
            let spec = rel
                .symmetric_eigenvalues()
                .iter()
                .fold(0.0f64, |acc, e| acc.max(e.abs()));
            c_const = c_const.max(spec);
        }
    }
    let quad = DMatrix::from_row_slice(2, 2, &[1.0, -b_max / 2.0, -b_max / 2.0, c_min]);
    let alpha2 = quad.symmetric_eigenvalues().min();
    Ok((c_const, alpha2))
}

impl<'a> VariationalSystem<'a> {
    /// Build the variational system along t -> u(phi0 + t omega) over
    /// [-t_max, t_max], sampling the trajectory at step dt and transporting a
    /// g-orthonormal frame along it.
    pub fn along_solution(
        problem: &'a ProblemSpec,
        u: &FourierField,
        phi0: &[f64],
        t_max: f64,
        dt: f64,
        r_is_one: bool,
    ) -> Result<Self> {
        let steps = (t_max / dt).round() as i64;
        let times: Vec<f64> = (-steps..=steps).map(|i| i as f64 * dt).collect();
        let samples = u.line_sample(phi0, &problem.omega, &times);
        let mut xs = Vec::with_capacity(times.len());
        let mut vels = Vec::with_capacity(times.len());
        for (x, v, _) in samples {
            if !problem.manifold.chart_box.contains(x.as_slice()) {
                return Err(Error::DomainViolation(
                    "trajectory left the chart box".into(),
                ));
            }
            xs.push(x);
            vels.push(v);
        }
        let curve = SampledCurve {
            times: times.clone(),
            xs,
            vels,
        };
        let frame = transport_frame(&problem.manifold, &curve, &times)?;
        let drift = frame.orthonormality_defect(&problem.manifold)?;
        if drift > 1e-6 {
            return Err(Error::Integration(format!(
                "frame orthogonality drift {drift:.3e} exceeds 1e-6; re-transport with finer nodes"
            )));
        }
        let (c_const, alpha2) = cutoff_constants(problem)?;
        let rhs_bound = 1.0 + c_const * (1.0 + 1.5 * c_const);
        let b_cutoff = if alpha2 > 0.0 {
            (rhs_bound / alpha2).sqrt().max(2.0)
        } else {
            2.0
        };
        let cutoff_ok = alpha2 * b_cutoff * b_cutoff >= rhs_bound;
        Ok(VariationalSystem {
            problem,
            phi0: phi0.to_vec(),
            curve,
            frame,
            b_cutoff,
            c_const,
            alpha2,
            cutoff_ok,
            r_is_one,
            t_span: (-t_max, t_max),
        })
    }

    /// The velocity cutoff r(s): 1 on [0, B], B^2/s^2 beyond.
    pub fn r(&self, s: f64) -> f64 {
        if self.r_is_one || s <= self.b_cutoff {
            1.0
        } else {
            (self.b_cutoff / s).powi(2)
        }
    }

    fn phi_at(&self, t: f64) -> Vec<f64> {
        self.phi0
            .iter()
            .zip(self.problem.omega.entries())
            .map(|(&p, &w)| p + t * w)
            .collect()
    }

    /// Assemble A(t) in frame coordinates: column j is
    /// E^T g [ H_W (E e_j) - r(|xi|) R(xi, E e_j) xi ].
    pub fn build_a(&self, t: f64) -> Result<DMatrix<f64>> {
        let m = self.problem.m;
        let (x, xi) = self.curve.at(t);
        let e = self.frame.frame_at(t);
        let mp = self.problem.manifold.at_with_curvature(x.as_slice())?;
        let jet = self.problem.w_field.jet_x(&self.phi_at(t), x.as_slice())?;
        let hform = hessian_form_matrix(&mp, &jet);
        let r = self.r(mp.norm(&xi));
        let mut a = DMatrix::zeros(m, m);
        for j in 0..m {
            let eta = DVector::from_column_slice(e.column(j).as_slice());
            let mut w = &mp.g_inv * (&hform * &eta);
            if r != 0.0 {
                w -= mp.curvature(&xi, &eta, &xi) * r;
            }
            let col = e.transpose() * (&mp.g * w);
            a.set_column(j, &col);
        }
        Ok(a)
    }

    /// Right-hand side of the first-order form z' = (z_2, A(t) z_1).
    fn rhs(&self, t: f64, z: &DVector<f64>) -> DVector<f64> {
        let m = self.problem.m;
        let y = z.rows(0, m).into_owned();
        let dy = z.rows(m, m).into_owned();
        let ay = match self.build_a(t) {
            Ok(a) => a * y,
            Err(_) => DVector::zeros(m),
        };
        let mut out = DVector::zeros(2 * m);
        out.rows_mut(0, m).copy_from(&dy);
        out.rows_mut(m, m).copy_from(&ay);
        out
    }
}

/// The quadratic form F(t, y, y') in frame coordinates.
fn f_form(vs: &VariationalSystem, t: f64, z: &DVector<f64>) -> Result<f64> {
    let m = vs.problem.m;
    let y = z.rows(0, m);
    let dy = z.rows(m, m);
    let (x, xi) = vs.curve.at(t);
    let mp = vs.problem.manifold.at(x.as_slice())?;
    let vjet = vs.problem.dom.v_field.jet_x(&[], x.as_slice())?;
    // <grad V, xi> = V_x . xi in chart coordinates
    let pairing = vjet.grad_x.dot(&xi);
    Ok(dy.dot(&y) + 0.5 * vs.r(mp.norm(&xi)) * pairing * y.norm_squared())
}

/// Ratio series dF/dt / (|y|^2 + |y'|^2) along one solution of y'' = A(t) y
/// from initial state z0, by centered differences at step dt over [0, t_max].
pub fn f_derivative_along(
    vs: &VariationalSystem,
    z0: &DVector<f64>,
    t_max: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    let opts = OdeOptions {
        rtol: 1e-10,
        atol: 1e-12,
        ..OdeOptions::default()
    };
    let mut ratios = Vec::new();
    // integrate in segments, renormalizing between them so exponential
    // growth cannot overflow; the ratio is scale-invariant (homogeneity 2)
    let seg_len = 5.0f64.min(t_max);
    let mut t0 = 0.0;
    let mut z = z0.clone();
    while t0 < t_max - 1e-12 {
        let t1 = (t0 + seg_len).min(t_max);
        let steps = ((t1 - t0) / dt).round().max(1.0) as usize;
        let times: Vec<f64> = (0..=steps)
            .map(|i| t0 + (t1 - t0) * i as f64 / steps as f64)
            .collect();
        let states = integrate_nodes(|t, z| vs.rhs(t, z), &times, z.clone(), &opts)?;
        let f_vals: Vec<f64> = times
            .iter()
            .zip(&states)
            .map(|(&t, z)| f_form(vs, t, z))
            .collect::<Result<_>>()?;
        let h = (t1 - t0) / steps as f64;
        for i in 1..times.len() - 1 {
            let denom = states[i].norm_squared();
            if denom < 1e-12 {
                continue;
            }
            ratios.push((f_vals[i + 1] - f_vals[i - 1]) / (2.0 * h) / denom);
        }
        z = states.last().unwrap().clone();
        let n = z.norm();
        if n > 0.0 {
            z /= n;
        }
        t0 = t1;
    }
    Ok(ratios)
}

/// Empirical alpha: the minimum of dF/dt / (|y|^2 + |y'|^2) over `n_s`
/// random-initial-condition solutions on [0, t_max].
pub fn check_f_derivative(
    vs: &VariationalSystem,
    n_s: usize,
    t_max: f64,
    dt: f64,
    seed: u64,
) -> Result<f64> {
    let m2 = 2 * vs.problem.m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alpha = f64::INFINITY;
    for _ in 0..n_s {
        let mut z0 = DVector::from_fn(m2, |_, _| rng.gen_range(-1.0..1.0));
        let n = z0.norm();
        if n < 1e-12 {
            continue; // degenerate draw: y = 0 gives a 0/0 ratio
        }
        z0 /= n;
        for r in f_derivative_along(vs, &z0, t_max, dt)? {
            alpha = alpha.min(r);
        }
    }
    if !alpha.is_finite() {
        return Err(Error::Integration("no valid F-derivative samples".into()));
    }
    Ok(alpha)
}

/// Lyapunov exponents of z' = (z_2, A(t) z_1) over [0, t_end] (t_end may be
/// negative for backward windows) by discrete QR with reorthonormalization
/// every `reorth_dt`, combined with the F-derivative margin into a verdict.
pub fn estimate_exponents(
    vs: &VariationalSystem,
    t_end: f64,
    reorth_dt: f64,
) -> Result<DichotomyReport> {
    let gap_min = 0.05;
    let m2 = 2 * vs.problem.m;
    let opts = OdeOptions {
        rtol: 1e-10,
        atol: 1e-12,
        ..OdeOptions::default()
    };
    let n_steps = (t_end.abs() / reorth_dt).round().max(1.0) as usize;
    let h = t_end / n_steps as f64;
    let mut y = DMatrix::<f64>::identity(m2, m2);
    let mut sums = vec![0.0f64; m2];
    let mut step_logs: Vec<Vec<f64>> = Vec::with_capacity(n_steps);
    let mut series = Vec::with_capacity(n_steps);
    for step in 0..n_steps {
        let t0 = step as f64 * h;
        let t1 = t0 + h;
        for j in 0..m2 {
            let col = DVector::from_column_slice(y.column(j).as_slice());
            let out = integrate_nodes(|t, z| vs.rhs(t, z), &[t0, t1], col, &opts)?;
            y.set_column(j, out.last().unwrap());
        }
        let qr = y.clone().qr();
        let mut q = qr.q();
        let r = qr.r();
        let mut logs = vec![0.0f64; m2];
        for i in 0..m2 {
            let d = r[(i, i)];
            if d < 0.0 {
                for k in 0..m2 {
                    q[(k, i)] = -q[(k, i)];
                }
            }
            let l = d.abs().max(f64::MIN_POSITIVE).ln();
            logs[i] = l;
            sums[i] += l;
        }
        y = q;
        step_logs.push(logs);
        series.push((t1, sums.iter().map(|s| s / (t1 - 0.0)).collect()));
    }
    let mut exponents: Vec<f64> = sums.iter().map(|s| s / t_end).collect();
    exponents.sort_by(|a, b| b.partial_cmp(a).unwrap());

    // windowed variance of the per-window rates -> two-sigma confidence
    let n_windows = 5.min(n_steps);
    let mut confidence = 0.0f64;
    if n_windows >= 2 {
        for i in 0..m2 {
            let mut rates = Vec::with_capacity(n_windows);
            for w in 0..n_windows {
                let lo = w * n_steps / n_windows;
                let hi = ((w + 1) * n_steps / n_windows).max(lo + 1);
                let sum: f64 = step_logs[lo..hi].iter().map(|l| l[i]).sum();
                rates.push(sum / ((hi - lo) as f64 * h));
            }
            let mean = rates.iter().sum::<f64>() / rates.len() as f64;
            let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
                / (rates.len() - 1) as f64;
            confidence = confidence.max(2.0 * (var / rates.len() as f64).sqrt());
        }
    }

    let stable_dim = exponents.iter().filter(|&&l| l < 0.0).count();
    let unstable_dim = m2 - stable_dim;
    let gap = exponents.iter().fold(f64::INFINITY, |acc, l| acc.min(l.abs()));
    let alpha = check_f_derivative(vs, 8, t_end.abs().min(20.0), 0.01, 23)?;
    let verdict = if gap < gap_min || alpha <= 0.0 {
        Verdict::Fail
    } else if confidence > gap {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    Ok(DichotomyReport {
        exponents,
        stable_dim,
        unstable_dim,
        gap,
        alpha: Some(alpha),
        confidence,
        window: (0.0, t_end),
        verdict,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::scalar::ScalarField;
    use crate::solver::{benchmark_forcing, benchmark_problem, linear_benchmark_solution};
    use approx::assert_relative_eq;

    fn benchmark_system(problem: &ProblemSpec) -> VariationalSystem<'_> {
        let u = linear_benchmark_solution(&problem.omega, &benchmark_forcing());
        VariationalSystem::along_solution(problem, &u, &[0.0, 0.0], 55.0, 0.05, true).unwrap()
    }

    #[test]
    fn build_a_is_identity_on_flat_quadratic_benchmark() {
        let problem = benchmark_problem();
        let vs = benchmark_system(&problem);
        for &t in &[-40.0, -7.3, 0.0, 1.44, 33.0] {
            let a = vs.build_a(t).unwrap();
            let d = &a - DMatrix::<f64>::identity(2, 2);
            assert!(d.amax() <= 1e-9, "A({t}) deviates by {}", d.amax());
        }
    }

    #[test]
    fn cutoff_constants_match_benchmark_closed_forms() {
        let problem = benchmark_problem();
        let vs = benchmark_system(&problem);
        // C = max ||x - c(phi)|| <= 1 + sqrt(0.13); alpha2 from b = 1, c = 1/2
        assert!(vs.c_const > 1.2 && vs.c_const < 1.0 + 0.13f64.sqrt() + 1e-6,
            "C = {}", vs.c_const);
        let quad = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 0.5]);
        assert_relative_eq!(vs.alpha2, quad.symmetric_eigenvalues().min(), epsilon = 1e-3);
        assert!(vs.b_cutoff > 1.0);
        assert!(vs.cutoff_ok);
        assert!(
            vs.alpha2 * vs.b_cutoff.powi(2) >= 1.0 + vs.c_const * (1.0 + 1.5 * vs.c_const) - 1e-12
        );
    }

    #[test]
    fn r_is_continuous_at_the_cutoff() {
        let problem = benchmark_problem();
        let u = linear_benchmark_solution(&problem.omega, &benchmark_forcing());
        let vs =
            VariationalSystem::along_solution(&problem, &u, &[0.0, 0.0], 2.0, 0.05, false).unwrap();
        let b = vs.b_cutoff;
        assert_eq!(vs.r(b - 1e-12), 1.0);
        assert_eq!(vs.r(b), 1.0);
        assert_relative_eq!(vs.r(b + 1e-9), 1.0, epsilon = 1e-8);
        assert_relative_eq!(vs.r(2.0 * b), 0.25);
    }

    #[test]
    fn build_a_symmetric_on_curved_manifold() {
        use crate::geometry::{ChartBox, ChartManifold};
        use crate::conditions::DomainSpec;
        use crate::torus::FrequencyVector;
        // stereographic sphere metric, nontrivial curvature term
        let entry = |i: usize, j: usize| -> ScalarField {
            let text = if i == j {
                "4/((1 + x1^2 + x2^2)^2)"
            } else {
                "0"
            };
            ScalarField::spatial(parse_expression(text).unwrap(), 2).unwrap()
        };
        let man = ChartManifold::new(
            2,
            (0..4).map(|idx| entry(idx / 2, idx % 2)).collect(),
            ChartBox {
                lo: vec![-0.9; 2],
                hi: vec![0.9; 2],
            },
        )
        .unwrap();
        let (omega, _) =
            FrequencyVector::new(vec![1.0, std::f64::consts::SQRT_2], 16, 1e-9).unwrap();
        let w = ScalarField::new(
            parse_expression("(x1^2 + x2^2)/2 - cos(phi1)*x1/10").unwrap(),
            2,
            2,
        )
        .unwrap();
        let v = ScalarField::spatial(parse_expression("(x1^2 + x2^2)/2").unwrap(), 2).unwrap();
        let dom = DomainSpec::new(v, 0.18);
        let problem = ProblemSpec {
            k: 2,
            m: 2,
            omega,
            manifold: man,
            w_field: w,
            dom,
            label: "sphere".into(),
        };
        // a genuinely curved trajectory with nonzero velocity
        let mut u = FourierField::constant(2, &DVector::from_vec(vec![0.2, -0.1]), 2);
        u.set_mode(
            &[1, 0],
            vec![
                num_complex::Complex64::new(0.08, 0.02),
                num_complex::Complex64::new(0.0, -0.05),
            ],
        );
        let vs =
            VariationalSystem::along_solution(&problem, &u, &[0.0, 0.0], 3.0, 0.01, true).unwrap();
        for &t in &[-2.5, -1.0, 0.3, 2.0] {
            let a = vs.build_a(t).unwrap();
            let d = &a - a.transpose();
            assert!(d.amax() <= 1e-9, "A({t}) asymmetry {}", d.amax());
        }
    }

    #[test]
    fn f_derivative_positive_on_benchmark() {
        let problem = benchmark_problem();
        let vs = benchmark_system(&problem);
        let alpha = check_f_derivative(&vs, 6, 20.0, 0.01, 9).unwrap();
        assert!(alpha > 0.0, "alpha = {alpha}");
    }

    #[test]
    fn f_derivative_ratio_is_scale_invariant() {
        let problem = benchmark_problem();
        let vs = benchmark_system(&problem);
        let z0 = DVector::from_vec(vec![0.3, -0.4, 0.5, 0.1]);
        let r1 = f_derivative_along(&vs, &z0, 5.0, 0.01).unwrap();
        let r2 = f_derivative_along(&vs, &(&z0 * 2.0), 5.0, 0.01).unwrap();
        assert_eq!(r1.len(), r2.len());
        for (a, b) in r1.iter().zip(&r2) {
            assert_relative_eq!(a, b, epsilon = 1e-12, max_relative = 1e-9);
        }
    }

    #[test]
    fn benchmark_exponents_are_plus_minus_one() {
        let problem = benchmark_problem();
        let vs = benchmark_system(&problem);
        let report = estimate_exponents(&vs, 50.0, 0.5).unwrap();
        assert_eq!(report.exponents.len(), 4);
        for (l, expect) in report.exponents.iter().zip([1.0, 1.0, -1.0, -1.0]) {
            assert!((l - expect).abs() <= 0.05, "exponent {l} vs {expect}");
        }
        assert_eq!(report.stable_dim, 2);
        assert_eq!(report.unstable_dim, 2);
        assert!(report.gap >= 0.9);
        assert!(report.alpha.unwrap() > 0.0);
        assert_eq!(report.verdict, Verdict::Pass);
    }

    #[test]
    fn free_motion_is_not_dichotomic() {
        let mut problem = benchmark_problem();
        // linear W: H_W = 0, so A == 0 and the fundamental matrix grows
        // polynomially
        problem.w_field =
            ScalarField::new(parse_expression("x1/10").unwrap(), 2, 2).unwrap();
        let u = FourierField::constant(2, &DVector::from_vec(vec![0.0, 0.0]), 4);
        let vs =
            VariationalSystem::along_solution(&problem, &u, &[0.0, 0.0], 55.0, 0.1, true).unwrap();
        let report = estimate_exponents(&vs, 50.0, 0.5).unwrap();
        assert!(report.gap < 0.05, "gap = {}", report.gap);
        assert_eq!(report.verdict, Verdict::Fail);
    }

    #[test]
    fn backward_window_negates_the_exponent_multiset() {
        let problem = benchmark_problem();
        let vs = benchmark_system(&problem);
        let fwd = estimate_exponents(&vs, 50.0, 0.5).unwrap();
        let bwd = estimate_exponents(&vs, -50.0, 0.5).unwrap();
        let mut negated: Vec<f64> = bwd.exponents.iter().map(|l| -l).collect();
        negated.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b) in fwd.exponents.iter().zip(&negated) {
            assert!((a - b).abs() <= 0.05, "{a} vs {b}");
        }
    }

    #[test]
    fn fundamental_determinant_follows_the_trace_formula() {
        let problem = benchmark_problem();
        let vs = benchmark_system(&problem);
        // tr [[0, I], [A, 0]] = 0, so det Y(t) stays 1
        let opts = OdeOptions {
            rtol: 1e-12,
            atol: 1e-13,
            ..OdeOptions::default()
        };
        let mut y = DMatrix::<f64>::identity(4, 4);
        for j in 0..4 {
            let col = DVector::from_column_slice(y.column(j).as_slice());
            let out = integrate_nodes(|t, z| vs.rhs(t, z), &[0.0, 10.0], col, &opts).unwrap();
            y.set_column(j, out.last().unwrap());
        }
        assert_relative_eq!(y.determinant(), 1.0, max_relative = 1e-6);
    }
}
