//! Connecting map chi(s, x, y): the boundary value problem
//!
//! ```text
//! x'' + Gamma(x', x') = (||x'||_g^2 / 2) g^{-1} V_x,   x(0) = x, x(1) = y
//! ```
//!
//! solved by single shooting with a finite-difference sensitivity Newton
//! iteration, with a multiple-shooting fallback. Geodesics of the conformal
//! metric e^V g trace the same images, which is what the oracle tests use.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::metric::ChartManifold;
use crate::geometry::transport::{Curve, SampledCurve};
use crate::ode::{integrate, integrate_nodes, OdeOptions};
use crate::scalar::ScalarField;

#[derive(Debug, Clone)]
pub struct BvpConfig {
    /// Endpoint / defect tolerance.
    pub tol_bvp: f64,
    pub max_iter: usize,
    /// Number of output nodes on [0, 1] (odd keeps s = 1/2 on the grid).
    pub nodes: usize,
    /// Sublevel value v of Omega = {V < v}; when set, every node of the path
    /// must satisfy V < v.
    pub sublevel: Option<f64>,
    /// Step for the s-finite-differences in `convexity_margin`.
    pub h_s: f64,
}

impl Default for BvpConfig {
    fn default() -> Self {
        BvpConfig {
            tol_bvp: 1e-8,
            max_iter: 60,
            nodes: 201,
            sublevel: None,
            h_s: 1e-3,
        }
    }
}

/// Discretized connecting path on [0, 1] with first derivatives at the nodes.
pub struct CurvePath {
    pub curve: SampledCurve,
    /// Endpoint mismatch of the final shooting solution.
    pub endpoint_error: f64,
}

impl CurvePath {
    pub fn eval(&self, s: f64) -> (DVector<f64>, DVector<f64>) {
        self.curve.at(s)
    }

    pub fn nodes(&self) -> usize {
        self.curve.times.len()
    }
}

fn ode_opts() -> OdeOptions {
    OdeOptions {
        rtol: 1e-12,
        atol: 1e-13,
        ..OdeOptions::default()
    }
}

/// Right-hand side of the first-order system z = (x, v).
fn rhs(manifold: &ChartManifold, v_field: &ScalarField, z: &DVector<f64>) -> Result<DVector<f64>> {
    let m = manifold.dim();
    let x = z.rows(0, m).into_owned();
    let v = z.rows(m, m).into_owned();
    let mp = manifold.at(x.as_slice())?;
    let jet = v_field.jet_x(&[], x.as_slice())?;
    let speed2 = mp.inner(&v, &v);
    let acc = -mp.christoffel(&v, &v) + (&mp.g_inv * &jet.grad_x) * (0.5 * speed2);
    let mut out = DVector::zeros(2 * m);
    out.rows_mut(0, m).copy_from(&v);
    out.rows_mut(m, m).copy_from(&acc);
    Ok(out)
}

fn shoot_end(
    manifold: &ChartManifold,
    v_field: &ScalarField,
    s0: f64,
    s1: f64,
    z0: DVector<f64>,
) -> Result<DVector<f64>> {
    let mut failed = None;
    let out = integrate(
        |_t, z| match rhs(manifold, v_field, z) {
            Ok(d) => d,
            Err(e) => {
                failed.get_or_insert(e);
                DVector::zeros(z.len())
            }
        },
        s0,
        s1,
        z0,
        &ode_opts(),
        |_, _| {},
    );
    if let Some(e) = failed {
        return Err(e);
    }
    out
}

/// Solve the connecting-map BVP between chart points `x` and `y`.
pub fn conformal_connect(
    manifold: &ChartManifold,
    v_field: &ScalarField,
    x: &DVector<f64>,
    y: &DVector<f64>,
    cfg: &BvpConfig,
) -> Result<CurvePath> {
    let m = manifold.dim();
    for (label, p) in [("start", x), ("end", y)] {
        if !manifold.chart_box.contains(p.as_slice()) {
            return Err(Error::DomainViolation(format!(
                "{label} point lies outside the chart box"
            )));
        }
        if let Some(v) = cfg.sublevel {
            let val = v_field.value(&[], p.as_slice())?;
            if val >= v {
                return Err(Error::DomainViolation(format!(
                    "{label} point is not in the sublevel region (V = {val:.6} >= {v:.6})"
                )));
            }
        }
    }
    let times: Vec<f64> = (0..cfg.nodes)
        .map(|i| i as f64 / (cfg.nodes - 1) as f64)
        .collect();

    if (y - x).amax() == 0.0 {
        // The only connecting path between coincident endpoints is constant.
        return Ok(CurvePath {
            curve: SampledCurve {
                times,
                xs: vec![x.clone(); cfg.nodes],
                vels: vec![DVector::zeros(m); cfg.nodes],
            },
            endpoint_error: 0.0,
        });
    }

    let (v0, err) = match single_shooting(manifold, v_field, x, y, cfg) {
        Ok(pair) => pair,
        Err(_) => multiple_shooting(manifold, v_field, x, y, cfg)?,
    };
    assemble_path(manifold, v_field, x, &v0, err, &times, cfg)
}

fn single_shooting(
    manifold: &ChartManifold,
    v_field: &ScalarField,
    x: &DVector<f64>,
    y: &DVector<f64>,
    cfg: &BvpConfig,
) -> Result<(DVector<f64>, f64)> {
    let m = manifold.dim();
    let mut v0 = y - x;
    let end = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let mut z0 = DVector::zeros(2 * m);
        z0.rows_mut(0, m).copy_from(x);
        z0.rows_mut(m, m).copy_from(v);
        let z1 = shoot_end(manifold, v_field, 0.0, 1.0, z0)?;
        Ok(z1.rows(0, m).into_owned() - y)
    };
    let mut f = end(&v0)?;
    for _ in 0..cfg.max_iter {
        if f.amax() <= cfg.tol_bvp {
            return Ok((v0, f.amax()));
        }
        // finite-difference sensitivity matrix dF/dv0
        let mut jac = DMatrix::zeros(m, m);
        for d in 0..m {
            let h = 1e-7 * (1.0 + v0[d].abs());
            let mut vp = v0.clone();
            vp[d] += h;
            let fp = end(&vp)?;
            jac.set_column(d, &((&fp - &f) / h));
        }
        let step = jac
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::NoConnection("singular shooting sensitivity matrix".into()))?;
        // damped update
        let mut lam = 1.0;
        let mut advanced = false;
        while lam > 1e-4 {
            let vt = &v0 - &step * lam;
            if let Ok(ft) = end(&vt) {
                if ft.amax() < f.amax() {
                    v0 = vt;
                    f = ft;
                    advanced = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !advanced {
            return Err(Error::NoConnection(format!(
                "shooting Newton stagnated with endpoint error {:.3e}",
                f.amax()
            )));
        }
    }
    if f.amax() <= cfg.tol_bvp {
        Ok((v0, f.amax()))
    } else {
        Err(Error::NoConnection(format!(
            "shooting Newton did not converge (endpoint error {:.3e})",
            f.amax()
        )))
    }
}

/// Multiple shooting over S = 8 segments; unknowns are the initial velocity
/// and the interior junction states.
fn multiple_shooting(
    manifold: &ChartManifold,
    v_field: &ScalarField,
    x: &DVector<f64>,
    y: &DVector<f64>,
    cfg: &BvpConfig,
) -> Result<(DVector<f64>, f64)> {
    const SEGMENTS: usize = 8;
    let m = manifold.dim();
    let dim = m + (SEGMENTS - 1) * 2 * m;
    let seg = |j: usize| j as f64 / SEGMENTS as f64;

    // straight-segment initial guess
    let mut u = DVector::zeros(dim);
    u.rows_mut(0, m).copy_from(&(y - x));
    for j in 1..SEGMENTS {
        let xj = x + (y - x) * seg(j);
        let off = m + (j - 1) * 2 * m;
        u.rows_mut(off, m).copy_from(&xj);
        u.rows_mut(off + m, m).copy_from(&(y - x));
    }

    let residual = |u: &DVector<f64>| -> Result<DVector<f64>> {
        let mut r = DVector::zeros(dim);
        for j in 0..SEGMENTS {
            let mut z0 = DVector::zeros(2 * m);
            if j == 0 {
                z0.rows_mut(0, m).copy_from(x);
                z0.rows_mut(m, m).copy_from(&u.rows(0, m).into_owned());
            } else {
                let off = m + (j - 1) * 2 * m;
                z0.copy_from(&u.rows(off, 2 * m).into_owned());
            }
            let z1 = shoot_end(manifold, v_field, seg(j), seg(j + 1), z0)?;
            if j + 1 < SEGMENTS {
                let off = m + j * 2 * m;
                let target = u.rows(off, 2 * m).into_owned();
                r.rows_mut(off - m, 2 * m).copy_from(&(z1 - target));
            } else {
                r.rows_mut(dim - m, m)
                    .copy_from(&(z1.rows(0, m).into_owned() - y));
            }
        }
        Ok(r)
    };

    let mut f = residual(&u)?;
    for _ in 0..cfg.max_iter {
        if f.amax() <= cfg.tol_bvp {
            return Ok((u.rows(0, m).into_owned(), f.amax()));
        }
        let mut jac = DMatrix::zeros(dim, dim);
        for d in 0..dim {
            let h = 1e-7 * (1.0 + u[d].abs());
            let mut up = u.clone();
            up[d] += h;
            let fp = residual(&up)?;
            jac.set_column(d, &((&fp - &f) / h));
        }
        let step = jac
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::NoConnection("singular multiple-shooting matrix".into()))?;
        let mut lam = 1.0;
        let mut advanced = false;
        while lam > 1e-4 {
            let ut = &u - &step * lam;
            if let Ok(ft) = residual(&ut) {
                if ft.amax() < f.amax() {
                    u = ut;
                    f = ft;
                    advanced = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    if f.amax() <= cfg.tol_bvp {
        Ok((u.rows(0, m).into_owned(), f.amax()))
    } else {
        Err(Error::NoConnection(format!(
            "multiple shooting did not converge (residual {:.3e})",
            f.amax()
        )))
    }
}

fn assemble_path(
    manifold: &ChartManifold,
    v_field: &ScalarField,
    x: &DVector<f64>,
    v0: &DVector<f64>,
    endpoint_error: f64,
    times: &[f64],
    cfg: &BvpConfig,
) -> Result<CurvePath> {
    let m = manifold.dim();
    let mut z0 = DVector::zeros(2 * m);
    z0.rows_mut(0, m).copy_from(x);
    z0.rows_mut(m, m).copy_from(v0);
    let mut failed = None;
    let states = integrate_nodes(
        |_t, z| match rhs(manifold, v_field, z) {
            Ok(d) => d,
            Err(e) => {
                failed.get_or_insert(e);
                DVector::zeros(z.len())
            }
        },
        times,
        z0,
        &ode_opts(),
    )?;
    if let Some(e) = failed {
        return Err(e);
    }
    let mut xs = Vec::with_capacity(times.len());
    let mut vels = Vec::with_capacity(times.len());
    for z in &states {
        let xi = z.rows(0, m).into_owned();
        if !manifold.chart_box.contains(xi.as_slice()) {
            return Err(Error::DomainViolation(
                "connecting path exits the chart box".into(),
            ));
        }
        if let Some(v) = cfg.sublevel {
            let val = v_field.value(&[], xi.as_slice())?;
            if val >= v {
                return Err(Error::DomainViolation(format!(
                    "connecting path exits the sublevel region (V = {val:.6} >= {v:.6})"
                )));
            }
        }
        xs.push(xi);
        vels.push(z.rows(m, m).into_owned());
    }
    Ok(CurvePath {
        curve: SampledCurve {
            times: times.to_vec(),
            xs,
            vels,
        },
        endpoint_error,
    })
}

/// Maximum ODE defect of a path: at interior nodes the node velocities are
/// differentiated with a five-point stencil and compared against the
/// right-hand side; the endpoint of a fresh re-integration from the initial
/// state is compared against the stored endpoint.
pub fn path_defect(
    manifold: &ChartManifold,
    v_field: &ScalarField,
    path: &CurvePath,
) -> Result<f64> {
    let m = manifold.dim();
    let c = &path.curve;
    let n = c.times.len();
    if n < 5 {
        return Err(Error::Geometry("path too short for defect estimate".into()));
    }
    let h = c.times[1] - c.times[0];
    let mut worst = 0.0f64;
    for i in 2..n - 2 {
        let vdot = (-(&c.vels[i + 2]) + &c.vels[i + 1] * 8.0 - &c.vels[i - 1] * 8.0
            + &c.vels[i - 2])
            / (12.0 * h);
        let mut z = DVector::zeros(2 * m);
        z.rows_mut(0, m).copy_from(&c.xs[i]);
        z.rows_mut(m, m).copy_from(&c.vels[i]);
        let f = rhs(manifold, v_field, &z)?;
        let acc = f.rows(m, m).into_owned();
        worst = worst.max((vdot - acc).amax());
    }
    // re-integration cross-check
    let mut z0 = DVector::zeros(2 * m);
    z0.rows_mut(0, m).copy_from(&c.xs[0]);
    z0.rows_mut(m, m).copy_from(&c.vels[0]);
    let z1 = shoot_end(manifold, v_field, c.times[0], c.times[n - 1], z0)?;
    worst = worst.max((z1.rows(0, m).into_owned() - &c.xs[n - 1]).amax());
    Ok(worst)
}

/// Empirical convexity constant of the Lagrangian density along the family of
/// connecting paths chi(s, x1(t), x2(t)):
///
/// ```text
/// min over (s, t) of  d^2/ds^2 L(t*omega, chi, d/dt chi)
///                     ----------------------------------------
///                     ||cov_xi eta||^2 + ||xi||^2 (||eta||^2 + 1)
/// ```
///
/// with xi = d/ds chi and eta = d/dt chi. The s-second derivative uses
/// Richardson-extrapolated central differences at step 1e-3; eta uses central
/// differences in t over freshly solved connecting paths. Returns +infinity
/// when all sampled (s, t) have xi = 0 (coincident endpoints).
pub fn convexity_margin(
    manifold: &ChartManifold,
    v_field: &ScalarField,
    w_field: &ScalarField,
    omega: &[f64],
    x1: &dyn Curve,
    x2: &dyn Curve,
    s_grid: &[f64],
    t_grid: &[f64],
    cfg: &BvpConfig,
) -> Result<f64> {
    let h_t = 1e-4;
    let h_s = cfg.h_s;
    let mut min_ratio = f64::INFINITY;

    for &t in t_grid {
        let path_at = |tt: f64| -> Result<CurvePath> {
            let (a, _) = x1.at(tt);
            let (b, _) = x2.at(tt);
            conformal_connect(manifold, v_field, &a, &b, cfg)
        };
        let mid = path_at(t)?;
        let plus = path_at(t + h_t)?;
        let minus = path_at(t - h_t)?;

        let phi: Vec<f64> = omega.iter().map(|&w| w * t).collect();
        // Lagrangian value of the family at parameter s
        let lagr = |s: f64| -> Result<f64> {
            let (x, _) = mid.eval(s);
            let (xp, _) = plus.eval(s);
            let (xm, _) = minus.eval(s);
            let eta = (xp - xm) / (2.0 * h_t);
            let mp = manifold.at(x.as_slice())?;
            Ok(0.5 * mp.inner(&eta, &eta) + w_field.value(&phi, x.as_slice())?)
        };
        let eta_at = |s: f64| -> Result<DVector<f64>> {
            let (xp, _) = plus.eval(s);
            let (xm, _) = minus.eval(s);
            Ok((xp - xm) / (2.0 * h_t))
        };

        for &s in s_grid {
            // keep the full Richardson stencil inside [0, 1]
            if s - 2.0 * h_s < 0.0 || s + 2.0 * h_s > 1.0 {
                continue;
            }
            let d2 = |h: f64| -> Result<f64> {
                Ok((lagr(s + h)? - 2.0 * lagr(s)? + lagr(s - h)?) / (h * h))
            };
            let coarse = d2(h_s)?;
            let fine = d2(0.5 * h_s)?;
            let num = (4.0 * fine - coarse) / 3.0;

            let (x, xi) = mid.eval(s);
            let eta = eta_at(s)?;
            let deta = (eta_at(s + h_s)? - eta_at(s - h_s)?) / (2.0 * h_s);
            let mp = manifold.at(x.as_slice())?;
            let cov = deta + mp.christoffel(&xi, &eta);
            let denom = mp.inner(&cov, &cov)
                + mp.inner(&xi, &xi) * (mp.inner(&eta, &eta) + 1.0);
            if denom <= 1e-12 {
                continue;
            }
            min_ratio = min_ratio.min(num / denom);
        }
    }
    Ok(min_ratio)
}
