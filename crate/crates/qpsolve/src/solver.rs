//! Spectral Galerkin minimization of the torus action functional
//!
//! ```text
//! J[u] = (2 pi)^{-k} integral of  1/2 (g(u) D_w u, D_w u) + W(phi, u)  d phi
//! ```
//!
//! over truncated Fourier fields, with containment in Omega = {V < v}
//! enforced by a vanishing logarithmic barrier. Nonlinear terms are evaluated
//! pseudo-spectrally on a 2x padded grid to suppress aliasing.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::conditions::DomainSpec;
use crate::error::{Error, Result};
use crate::geometry::ChartManifold;
use crate::scalar::ScalarField;
use crate::torus::{analyze, is_canonical, synthesize, FourierField, FrequencyVector, TorusGrid};

/// A complete problem instance: geometry, force function and domain.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub k: usize,
    pub m: usize,
    pub omega: FrequencyVector,
    pub manifold: ChartManifold,
    pub w_field: ScalarField,
    pub dom: DomainSpec,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct GalerkinConfig {
    /// Fourier truncation: cubic band ||n||_inf <= N.
    pub n_max: i32,
    /// Analysis grid points per torus axis; must satisfy P >= 2N + 2.
    pub grid_p: usize,
    pub max_iters: usize,
    pub g_tol: f64,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub lbfgs_mem: usize,
    pub beta0: f64,
    pub beta_factor: f64,
    pub beta_min: f64,
}

impl GalerkinConfig {
    pub fn new(n_max: i32, grid_p: usize) -> Result<Self> {
        if grid_p < 2 * n_max as usize + 2 {
            return Err(Error::GridTooSmall(format!(
                "P = {grid_p} cannot resolve band N = {n_max} (need P >= {})",
                2 * n_max + 2
            )));
        }
        Ok(GalerkinConfig {
            n_max,
            grid_p,
            max_iters: 2000,
            g_tol: 1e-9,
            armijo_c: 1e-4,
            backtrack: 0.5,
            lbfgs_mem: 10,
            beta0: 1e-3,
            beta_factor: 0.5,
            beta_min: 1e-9,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub j_value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub u: FourierField,
    /// min over the padded grid of (v - V(u(phi))).
    pub containment_margin: f64,
    pub converged: bool,
    /// Energy fraction of the outermost coefficient shell.
    pub tail_ratio: f64,
    pub initial_guess_fallback: bool,
    pub notes: Vec<String>,
}

/// Lexicographic list of canonical band modes (zero mode first position in
/// lexicographic order over [-N, N]^k restricted to the canonical half-space).
fn canonical_band(k: usize, n_max: i32) -> Vec<Vec<i32>> {
    let mut out = Vec::new();
    let mut n = vec![-n_max; k];
    'modes: loop {
        if is_canonical(&n) {
            out.push(n.clone());
        }
        for j in (0..k).rev() {
            n[j] += 1;
            if n[j] <= n_max {
                continue 'modes;
            }
            n[j] = -n_max;
        }
        break;
    }
    out
}

/// Real coefficient vector layout: for each canonical mode (lexicographic),
/// for each component: the zero mode contributes one real, every other mode
/// contributes (re, im).
pub struct CoeffMap {
    pub k: usize,
    pub m: usize,
    pub n_max: i32,
    pub modes: Vec<Vec<i32>>,
}

impl CoeffMap {
    pub fn new(k: usize, m: usize, n_max: i32) -> Self {
        CoeffMap {
            k,
            m,
            n_max,
            modes: canonical_band(k, n_max),
        }
    }

    pub fn dim(&self) -> usize {
        self.modes
            .iter()
            .map(|n| {
                if n.iter().all(|&v| v == 0) {
                    self.m
                } else {
                    2 * self.m
                }
            })
            .sum()
    }

    pub fn pack(&self, u: &FourierField) -> DVector<f64> {
        let mut z = DVector::zeros(self.dim());
        let mut at = 0;
        for n in &self.modes {
            let c = u.mode(n);
            if n.iter().all(|&v| v == 0) {
                for j in 0..self.m {
                    z[at + j] = c[j].re;
                }
                at += self.m;
            } else {
                for j in 0..self.m {
                    z[at + 2 * j] = c[j].re;
                    z[at + 2 * j + 1] = c[j].im;
                }
                at += 2 * self.m;
            }
        }
        z
    }

    pub fn unpack(&self, z: &DVector<f64>) -> FourierField {
        let mut u = FourierField::zero(self.k, self.m, self.n_max);
        let mut at = 0;
        for n in &self.modes {
            if n.iter().all(|&v| v == 0) {
                let c: Vec<Complex64> =
                    (0..self.m).map(|j| Complex64::new(z[at + j], 0.0)).collect();
                u.set_mode(n, c);
                at += self.m;
            } else {
                let c: Vec<Complex64> = (0..self.m)
                    .map(|j| Complex64::new(z[at + 2 * j], z[at + 2 * j + 1]))
                    .collect();
                u.set_mode(n, c);
                at += 2 * self.m;
            }
        }
        u
    }

    /// Pack a coefficient-space gradient field: the zero mode carries its real
    /// part, every other mode carries 2 (re, im) — the Jacobian of the
    /// Hermitian-symmetric synthesis with respect to the packed layout.
    pub fn pack_gradient(&self, g: &FourierField) -> DVector<f64> {
        let mut z = DVector::zeros(self.dim());
        let mut at = 0;
        for n in &self.modes {
            let c = g.mode(n);
            if n.iter().all(|&v| v == 0) {
                for j in 0..self.m {
                    z[at + j] = c[j].re;
                }
                at += self.m;
            } else {
                for j in 0..self.m {
                    z[at + 2 * j] = 2.0 * c[j].re;
                    z[at + 2 * j + 1] = 2.0 * c[j].im;
                }
                at += 2 * self.m;
            }
        }
        z
    }
}

/// Quadrature value of J over the (padded) torus grid.
pub fn functional_j(
    problem: &ProblemSpec,
    u: &FourierField,
    grid: &TorusGrid,
) -> Result<f64> {
    let padded = grid.padded();
    let (value, _) = eval_core(problem, u, &padded, 0.0, false)?;
    Ok(value)
}

/// Coefficient-space gradient of J: mode n carries -i (n, w) p_n + s_n with
/// p = g(u) D_w u and s = G_u(D_w u, D_w u) + W_x, both analyzed on the
/// padded grid.
pub fn gradient_j(
    problem: &ProblemSpec,
    u: &FourierField,
    grid: &TorusGrid,
) -> Result<FourierField> {
    let padded = grid.padded();
    let (_, g) = eval_core(problem, u, &padded, 0.0, true)?;
    Ok(g.unwrap())
}

/// Shared pointwise evaluation: value of the (optionally barriered)
/// functional and, on request, its coefficient gradient field.
fn eval_core(
    problem: &ProblemSpec,
    u: &FourierField,
    padded: &TorusGrid,
    beta: f64,
    want_grad: bool,
) -> Result<(f64, Option<FourierField>)> {
    let m = problem.m;
    let xs = synthesize(u, padded);
    let du = u.directional_derivative(&problem.omega);
    let ds = synthesize(&du, padded);
    let mut total = 0.0;
    let mut p_samples = want_grad.then(Vec::new);
    let mut s_samples = want_grad.then(Vec::new);
    for (flat, phi) in padded.points().enumerate() {
        let x = &xs[flat];
        if !problem.manifold.chart_box.contains(x.as_slice()) {
            return Err(Error::DomainViolation(format!(
                "u(phi) leaves the chart box at phi = {phi:?}"
            )));
        }
        let d = &ds[flat];
        let mp = problem.manifold.at(x.as_slice())?;
        let wjet = problem.w_field.jet_x(&phi, x.as_slice())?;
        let mut val = 0.5 * mp.inner(d, d) + wjet.value;
        let mut s = if want_grad {
            mp.gee(d, d) + &wjet.grad_x
        } else {
            DVector::zeros(0)
        };
        if beta > 0.0 {
            let vjet = problem.dom.v_field.jet_x(&[], x.as_slice())?;
            let gap = problem.dom.level - vjet.value;
            if gap <= 0.0 {
                return Err(Error::DomainViolation(format!(
                    "u(phi) leaves the sublevel region at phi = {phi:?}"
                )));
            }
            val -= beta * gap.ln();
            if want_grad {
                s += &vjet.grad_x * (beta / gap);
            }
        }
        total += val;
        if want_grad {
            p_samples.as_mut().unwrap().push(&mp.g * d);
            s_samples.as_mut().unwrap().push(std::mem::replace(&mut s, DVector::zeros(0)));
        }
    }
    let value = total / padded.len() as f64;
    let grad = if want_grad {
        let p_hat = analyze(&p_samples.unwrap(), padded, m, u.truncation())?;
        let s_hat = analyze(&s_samples.unwrap(), padded, m, u.truncation())?;
        let mut g = FourierField::zero(problem.k, m, u.truncation());
        for n in canonical_band(problem.k, u.truncation()) {
            let mul = Complex64::new(0.0, -problem.omega.dot(&n));
            let p = p_hat.mode(&n);
            let s = s_hat.mode(&n);
            let c: Vec<Complex64> = (0..m).map(|j| mul * p[j] + s[j]).collect();
            if c.iter().any(|z| z.norm_sqr() > 0.0) {
                g.set_mode(&n, c);
            }
        }
        Some(g)
    } else {
        None
    };
    Ok((value, grad))
}

/// Containment margin min (v - V(u(phi))) over the padded grid.
pub fn containment_margin(
    problem: &ProblemSpec,
    u: &FourierField,
    grid: &TorusGrid,
) -> Result<f64> {
    let padded = grid.padded();
    let mut margin = f64::INFINITY;
    for x in synthesize(u, &padded) {
        margin = margin.min(problem.dom.level - problem.dom.v_field.value(&[], x.as_slice())?);
    }
    Ok(margin)
}

/// Constant initial field at the most nearly critical point of the averaged
/// force function on the sampled domain interior, with a barycenter fallback.
pub fn initial_guess(problem: &ProblemSpec, cfg: &GalerkinConfig) -> Result<(FourierField, bool)> {
    let sample = crate::conditions::sample_domain(&problem.manifold, &problem.dom)?;
    let phi_grid = TorusGrid::new(problem.k, cfg.grid_p)?;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut barycenter = vec![0.0; problem.m];
    let mut count = 0usize;
    for (x, &inside) in sample.points.iter().zip(&sample.strict) {
        if !inside {
            continue;
        }
        count += 1;
        for (b, &xi) in barycenter.iter_mut().zip(x.iter()) {
            *b += xi;
        }
        // averaged gradient of W over the torus
        let mut grad = DVector::zeros(problem.m);
        for phi in phi_grid.points() {
            let jet = problem.w_field.jet_x(&phi, x)?;
            grad += jet.grad_x;
        }
        grad /= phi_grid.len() as f64;
        let mp = problem.manifold.at(x)?;
        let norm = ((&mp.g_inv * &grad).dot(&grad)).max(0.0).sqrt();
        if best.as_ref().map_or(true, |(b, _)| norm < *b) {
            best = Some((norm, x.clone()));
        }
    }
    if count == 0 {
        return Err(Error::Solver("empty domain sample".into()));
    }
    for b in &mut barycenter {
        *b /= count as f64;
    }
    let (norm, x0) = best.unwrap();
    let (point, fallback) = if norm <= 1e-3 {
        (x0, false)
    } else {
        (barycenter, true)
    };
    let u = FourierField::constant(
        problem.k,
        &DVector::from_vec(point),
        cfg.n_max,
    );
    Ok((u, fallback))
}

/// L-BFGS with Armijo backtracking under a geometric barrier schedule,
/// started from the averaged-force initial guess.
pub fn minimize(problem: &ProblemSpec, cfg: &GalerkinConfig) -> Result<SolveReport> {
    let (u0, fallback) = initial_guess(problem, cfg)?;
    let mut report = minimize_from(problem, cfg, &u0)?;
    report.initial_guess_fallback = fallback;
    if fallback {
        report
            .notes
            .insert(0, "initial guess fell back to the domain barycenter".into());
    }
    Ok(report)
}

/// As `minimize`, from a caller-supplied starting field (uniqueness probes
/// restart the descent from random interior constants).
pub fn minimize_from(
    problem: &ProblemSpec,
    cfg: &GalerkinConfig,
    u0: &FourierField,
) -> Result<SolveReport> {
    let map = CoeffMap::new(problem.k, problem.m, cfg.n_max);
    let grid = TorusGrid::new(problem.k, cfg.grid_p)?;
    let padded = grid.padded();
    let mut notes = Vec::new();
    let mut z = map.pack(u0);

    // feasibility of the start point for the barrier
    {
        let u = map.unpack(&z);
        if containment_margin(problem, &u, &grid)? <= 0.0 {
            return Err(Error::Solver(
                "initial guess is not strictly inside the sublevel region".into(),
            ));
        }
    }

    let eval = |z: &DVector<f64>, beta: f64, want_grad: bool| -> Result<(f64, Option<DVector<f64>>)> {
        let u = map.unpack(z);
        match eval_core(problem, &u, &padded, beta, want_grad) {
            Ok((v, g)) => Ok((v, g.map(|g| map.pack_gradient(&g)))),
            Err(Error::DomainViolation(_)) => Ok((f64::INFINITY, None)),
            Err(e) => Err(e),
        }
    };

    // barrier schedule beta0, beta0/2, ..., down to beta_min, then 0
    let mut betas = Vec::new();
    let mut b = cfg.beta0;
    while b > cfg.beta_min {
        betas.push(b);
        b *= cfg.beta_factor;
    }
    betas.push(0.0);

    let mut total_iters = 0usize;
    let mut converged = false;
    for (stage, &beta) in betas.iter().enumerate() {
        let stage_tol = if beta == 0.0 {
            cfg.g_tol
        } else {
            (0.1 * beta).max(cfg.g_tol)
        };
        let (mut f, mut g) = {
            let (f, g) = eval(&z, beta, true)?;
            if !f.is_finite() {
                return Err(Error::Solver(format!(
                    "iterate infeasible at barrier stage {stage}"
                )));
            }
            (f, g.unwrap())
        };
        let mut s_hist: Vec<DVector<f64>> = Vec::new();
        let mut y_hist: Vec<DVector<f64>> = Vec::new();
        let mut rho_hist: Vec<f64> = Vec::new();
        // Once f-decreases fall to roundoff the line search can no longer
        // resolve progress; two such iterations in a row end the stage.
        let mut stagnant = 0usize;
        loop {
            if g.norm() <= stage_tol || total_iters >= cfg.max_iters || stagnant >= 4 {
                break;
            }
            // two-loop recursion
            let mut q = g.clone();
            let mut alphas = vec![0.0; s_hist.len()];
            for i in (0..s_hist.len()).rev() {
                let a = rho_hist[i] * s_hist[i].dot(&q);
                alphas[i] = a;
                q -= &y_hist[i] * a;
            }
            if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
                let gamma = s.dot(y) / y.dot(y);
                q *= gamma;
            }
            for i in 0..s_hist.len() {
                let bmul = rho_hist[i] * y_hist[i].dot(&q);
                q += &s_hist[i] * (alphas[i] - bmul);
            }
            let mut p = -q;
            let mut slope = g.dot(&p);
            if slope >= 0.0 {
                p = -g.clone();
                slope = g.dot(&p);
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
            }
            // Armijo backtracking
            let mut t = 1.0;
            let mut accepted = false;
            let f_noise = 8.0 * f64::EPSILON * f.abs().max(1e-6);
            for _ in 0..60 {
                let zt = &z + &p * t;
                let (ft, _) = eval(&zt, beta, false)?;
                if ft <= f + cfg.armijo_c * t * slope + f_noise {
                    let (ft2, gt) = eval(&zt, beta, true)?;
                    let gt = gt.unwrap();
                    let s = &zt - &z;
                    let y = &gt - &g;
                    let sy = s.dot(&y);
                    if sy > 1e-12 * s.norm() * y.norm() {
                        if s_hist.len() == cfg.lbfgs_mem {
                            s_hist.remove(0);
                            y_hist.remove(0);
                            rho_hist.remove(0);
                        }
                        s_hist.push(s);
                        y_hist.push(y);
                        rho_hist.push(1.0 / sy);
                    }
                    if f - ft2 <= f_noise && gt.norm() >= 0.99 * g.norm() {
                        stagnant += 1;
                    } else {
                        stagnant = 0;
                    }
                    z = zt;
                    f = ft2;
                    g = gt;
                    accepted = true;
                    break;
                }
                t *= cfg.backtrack;
            }
            total_iters += 1;
            if !accepted {
                // line search exhausted: accept stage result as-is
                break;
            }
        }
        if std::env::var("QPSOLVE_TRACE").is_ok() {
            eprintln!(
                "stage {stage} beta={beta:.3e} tol={stage_tol:.3e} iters={total_iters} f={f:.9e} |g|={:.3e}",
                g.norm()
            );
        }
        if beta == 0.0 {
            converged = g.norm() <= cfg.g_tol;
        }
        if total_iters >= cfg.max_iters {
            notes.push("iteration cap reached".into());
            break;
        }
    }

    let u = map.unpack(&z);
    let margin = containment_margin(problem, &u, &grid)?;
    let j_value = functional_j(problem, &u, &grid)?;
    let grad = gradient_j(problem, &u, &grid)?;
    let grad_norm = map.pack_gradient(&grad).norm();
    let tail_ratio = u.tail_shell_ratio();
    let converged = converged && grad_norm <= cfg.g_tol && margin > 0.0;
    Ok(SolveReport {
        j_value,
        grad_norm,
        iterations: total_iters,
        u,
        containment_margin: margin,
        converged,
        tail_ratio,
        initial_guess_fallback: false,
        notes,
    })
}

/// The closed-form minimizer of the linear flat benchmark
/// (W = |x|^2/2 - c(phi) . x, g = I): mode-wise a_n = c_n / (1 + (n, w)^2).
pub fn linear_benchmark_solution(
    omega: &FrequencyVector,
    c: &FourierField,
) -> FourierField {
    let mut u = FourierField::zero(c.torus_dim(), c.target_dim(), c.truncation());
    for (n, coeff) in c.canonical_modes() {
        let denom = 1.0 + omega.dot(n).powi(2);
        u.set_mode(n, coeff.iter().map(|z| z / denom).collect());
    }
    u
}

#[cfg(test)]
pub(crate) fn benchmark_problem() -> ProblemSpec {
    use crate::expr::parse_expression;
    use crate::geometry::ChartBox;
    let man = ChartManifold::euclidean(
        2,
        ChartBox {
            lo: vec![-2.0; 2],
            hi: vec![2.0; 2],
        },
    );
    let (omega, _) = FrequencyVector::new(vec![1.0, std::f64::consts::SQRT_2], 16, 1e-9).unwrap();
    let w = ScalarField::new(
        parse_expression("(x1^2 + x2^2)/2 - 3*cos(phi1)*x1/10 - sin(phi2)*x2/5").unwrap(),
        2,
        2,
    )
    .unwrap();
    let v = ScalarField::spatial(parse_expression("(x1^2 + x2^2)/2").unwrap(), 2).unwrap();
    let mut dom = DomainSpec::new(v, 0.5);
    dom.resolution = 48;
    ProblemSpec {
        k: 2,
        m: 2,
        omega,
        manifold: man,
        w_field: w,
        dom,
        label: "linear_flat".into(),
    }
}

#[cfg(test)]
pub(crate) fn benchmark_forcing() -> FourierField {
    // c(phi) = (0.3 cos phi1, 0.2 sin phi2)
    let mut c = FourierField::zero(2, 2, 4);
    c.set_mode(&[1, 0], vec![Complex64::new(0.15, 0.0), Complex64::new(0.0, 0.0)]);
    c.set_mode(&[0, 1], vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, -0.1)]);
    c
}
