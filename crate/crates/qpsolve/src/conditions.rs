//! Sampling-based verification of the sublevel-set conditions C1 and C2 and
//! of the force-function inequalities of Theorem 1, with signed margins.
//!
//! Every check reports "pass at resolution S with margin delta", never a
//! proof: the underlying conditions quantify over continua and are sampled on
//! a fencepost grid of S cells (S + 1 points) per axis.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{hessian_form_matrix, max_sectional, ChartManifold, MetricPoint};
use crate::scalar::ScalarField;

/// The sublevel-set domain Omega = {x in box : V(x) < v}.
#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub v_field: ScalarField,
    pub level: f64,
    /// Cells per axis of the sampling grid (S + 1 sample points per axis).
    pub resolution: usize,
    /// Band half-width (in V-units) defining the sampled boundary region.
    pub eps_bnd: f64,
}

impl DomainSpec {
    pub fn new(v_field: ScalarField, level: f64) -> Self {
        DomainSpec {
            v_field,
            level,
            resolution: 24,
            eps_bnd: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConditionConfig {
    /// Noncriticality threshold for min ||grad V|| on the boundary.
    pub delta_crit: f64,
    /// Positive-definiteness threshold for the tangential boundary Hessian.
    pub delta_pd: f64,
    /// Strict inequalities pass only with at least this much margin.
    pub delta_strict: f64,
    /// Torus sampling resolution per angle for Theorem-1 checks.
    pub phi_resolution: usize,
    /// Random restarts for the max-sectional-curvature search (m >= 3).
    pub kstar_restarts: usize,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        ConditionConfig {
            delta_crit: 1e-4,
            delta_pd: 1e-6,
            delta_strict: 1e-8,
            phi_resolution: 12,
            kstar_restarts: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Outcome of one sampled inequality.
#[derive(Debug, Clone)]
pub struct ConditionFragment {
    pub name: String,
    pub verdict: Verdict,
    /// Minimal sampled margin (sign carries the verdict for strict checks).
    pub margin: f64,
    /// Location of the minimal margin, `[x]` or `[phi.., x..]`.
    pub argmin: Vec<f64>,
    pub samples: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ConditionReport {
    pub fragments: Vec<ConditionFragment>,
}

impl ConditionReport {
    pub fn overall(&self) -> Verdict {
        let mut v = Verdict::Pass;
        for f in &self.fragments {
            match f.verdict {
                Verdict::Fail => return Verdict::Fail,
                Verdict::Inconclusive => v = Verdict::Inconclusive,
                Verdict::Pass => {}
            }
        }
        v
    }

    pub fn fragment(&self, name: &str) -> Option<&ConditionFragment> {
        self.fragments.iter().find(|f| f.name == name)
    }
}

/// Minimal eigenvalue of the Hessian bilinear form of V relative to g:
/// min eigenvalue of L^{-1} A L^{-T} with g = L L^T.
pub fn lambda_v(manifold: &ChartManifold, v_field: &ScalarField, x: &[f64]) -> Result<f64> {
    let mp = manifold.at(x)?;
    let jet = v_field.jet_x(&[], x)?;
    let a = hessian_form_matrix(&mp, &jet);
    relative_min_eig(&mp, &a)
}

/// As `lambda_v` for the form A - 1/2 V_x V_x^T (condition C2's mu_V).
pub fn mu_v(manifold: &ChartManifold, v_field: &ScalarField, x: &[f64]) -> Result<f64> {
    let mp = manifold.at(x)?;
    let jet = v_field.jet_x(&[], x)?;
    let a = hessian_form_matrix(&mp, &jet) - &jet.grad_x * jet.grad_x.transpose() * 0.5;
    relative_min_eig(&mp, &a)
}

fn relative_min_eig(mp: &MetricPoint, a: &DMatrix<f64>) -> Result<f64> {
    let l = mp.chol.l();
    let m1 = l
        .clone()
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Geometry("singular metric factor".into()))?;
    let bt = l
        .solve_lower_triangular(&m1.transpose())
        .ok_or_else(|| Error::Geometry("singular metric factor".into()))?;
    let b = (&bt + bt.transpose()) * 0.5;
    let eig = SymmetricEigen::new(b);
    Ok(eig.eigenvalues.min())
}

/// Grid samples of the closed sublevel set plus Newton-projected boundary
/// points of the level set V = v.
pub struct DomainSample {
    /// Points with V <= v + eps_bnd, in lexicographic grid order.
    pub points: Vec<Vec<f64>>,
    /// Whether the corresponding point satisfies V < v strictly.
    pub strict: Vec<bool>,
    /// Projected points on the level set V = v.
    pub boundary: Vec<Vec<f64>>,
    pub touches_box: bool,
    pub connected: bool,
}

pub fn sample_domain(manifold: &ChartManifold, dom: &DomainSpec) -> Result<DomainSample> {
    let m = manifold.dim();
    let s = dom.resolution;
    let box_ = &manifold.chart_box;
    let n_axis = s + 1;
    let total = n_axis.pow(m as u32);
    let coord = |idx: &[usize]| -> Vec<f64> {
        (0..m)
            .map(|d| box_.lo[d] + (box_.hi[d] - box_.lo[d]) * idx[d] as f64 / s as f64)
            .collect()
    };
    let unflatten = |mut flat: usize| -> Vec<usize> {
        let mut idx = vec![0usize; m];
        for d in (0..m).rev() {
            idx[d] = flat % n_axis;
            flat /= n_axis;
        }
        idx
    };
    let flatten = |idx: &[usize]| -> usize {
        idx.iter().fold(0usize, |acc, &i| acc * n_axis + i)
    };

    let mut values = vec![0.0f64; total];
    for flat in 0..total {
        let x = coord(&unflatten(flat));
        values[flat] = dom.v_field.value(&[], &x)?;
    }

    let mut points = Vec::new();
    let mut strict = Vec::new();
    let mut strict_flags = vec![false; total];
    let mut touches_box = false;
    for flat in 0..total {
        let idx = unflatten(flat);
        let v = values[flat];
        if v <= dom.level + dom.eps_bnd {
            points.push(coord(&idx));
            strict.push(v < dom.level);
            if idx.iter().any(|&i| i == 0 || i == s) {
                touches_box = true;
            }
        }
        strict_flags[flat] = v < dom.level;
    }
    if !strict.iter().any(|&b| b) {
        return Err(Error::DomainViolation(
            "sampled sublevel set {V < v} is empty".into(),
        ));
    }

    // connectivity of the strict sublevel samples under face adjacency
    let start = strict_flags.iter().position(|&b| b).unwrap();
    let mut seen = vec![false; total];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(flat) = queue.pop_front() {
        let idx = unflatten(flat);
        for d in 0..m {
            for dir in [-1i64, 1] {
                let ni = idx[d] as i64 + dir;
                if ni < 0 || ni > s as i64 {
                    continue;
                }
                let mut nidx = idx.clone();
                nidx[d] = ni as usize;
                let nflat = flatten(&nidx);
                if strict_flags[nflat] && !seen[nflat] {
                    seen[nflat] = true;
                    queue.push_back(nflat);
                }
            }
        }
    }
    let connected = strict_flags
        .iter()
        .zip(&seen)
        .all(|(&inside, &visited)| !inside || visited);

    // boundary: sign changes of V - v along grid edges, refined by Newton
    let mut boundary = Vec::new();
    for flat in 0..total {
        let idx = unflatten(flat);
        let va = values[flat] - dom.level;
        for d in 0..m {
            if idx[d] + 1 > s {
                continue;
            }
            let mut nidx = idx.clone();
            nidx[d] += 1;
            let vb = values[flatten(&nidx)] - dom.level;
            if va == 0.0 {
                // node exactly on the level set
                if d == 0 {
                    boundary.push(coord(&idx));
                }
                continue;
            }
            if va * vb < 0.0 {
                let a = coord(&idx);
                let b = coord(&nidx);
                let t = va / (va - vb);
                let mut x: Vec<f64> = a
                    .iter()
                    .zip(&b)
                    .map(|(&p, &q)| p + t * (q - p))
                    .collect();
                for _ in 0..3 {
                    let jet = dom.v_field.jet_x(&[], &x)?;
                    let gn = jet.grad_x.norm_squared();
                    if gn < 1e-30 {
                        break;
                    }
                    let step = (jet.value - dom.level) / gn;
                    for (xi, gi) in x.iter_mut().zip(jet.grad_x.iter()) {
                        *xi -= step * gi;
                    }
                }
                if box_.contains(&x) {
                    boundary.push(x);
                }
            }
        }
    }

    Ok(DomainSample {
        points,
        strict,
        boundary,
        touches_box,
        connected,
    })
}

fn grad_norm_g(mp: &MetricPoint, grad_x: &DVector<f64>) -> f64 {
    // ||grad V||_g^2 = V_x^T g^{-1} V_x
    ((&mp.g_inv * grad_x).dot(grad_x)).max(0.0).sqrt()
}

/// C1: 2 lambda_V + ||grad V||_g^2 > 0 on the closed sublevel set, the level
/// value v is noncritical, and the sampled component is bounded and connected.
pub fn check_c1(
    manifold: &ChartManifold,
    dom: &DomainSpec,
    cfg: &ConditionConfig,
) -> Result<ConditionFragment> {
    let sample = sample_domain(manifold, dom)?;
    let mut margin = f64::INFINITY;
    let mut argmin = Vec::new();
    for x in &sample.points {
        let mp = manifold.at(x)?;
        let jet = dom.v_field.jet_x(&[], x)?;
        let a = hessian_form_matrix(&mp, &jet);
        let lam = relative_min_eig(&mp, &a)?;
        let val = 2.0 * lam + grad_norm_g(&mp, &jet.grad_x).powi(2);
        if val < margin {
            margin = val;
            argmin = x.clone();
        }
    }

    let mut min_grad = f64::INFINITY;
    for x in &sample.boundary {
        let mp = manifold.at(x)?;
        let jet = dom.v_field.jet_x(&[], x)?;
        min_grad = min_grad.min(grad_norm_g(&mp, &jet.grad_x));
    }

    let mut notes = Vec::new();
    let mut failed = margin <= cfg.delta_strict;
    let mut inconclusive = false;
    if sample.boundary.is_empty() {
        notes.push("no boundary sample points found".into());
        inconclusive = true;
    } else if min_grad <= cfg.delta_crit {
        notes.push(format!(
            "level value may be critical: min ||grad V|| on boundary = {min_grad:.3e}"
        ));
        failed = true;
    }
    if sample.touches_box {
        notes.push("sublevel set touches the chart box boundary".into());
        inconclusive = true;
    }
    if !sample.connected {
        notes.push("sampled sublevel set is not connected".into());
        inconclusive = true;
    }
    // a negative sampled margin is decisive even when the chart coverage is
    // structurally suspect
    let verdict = if failed {
        Verdict::Fail
    } else if inconclusive {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    Ok(ConditionFragment {
        name: "C1".into(),
        verdict,
        margin,
        argmin,
        samples: sample.points.len(),
        notes,
    })
}

/// C2: min over the closed sublevel set of mu_V - 2 K* plus positive
/// definiteness of the Hessian form restricted tangentially to the boundary.
pub fn check_c2(
    manifold: &ChartManifold,
    dom: &DomainSpec,
    cfg: &ConditionConfig,
    rng: &mut impl Rng,
) -> Result<ConditionReport> {
    let sample = sample_domain(manifold, dom)?;
    let mut margin = f64::INFINITY;
    let mut argmin = Vec::new();
    for x in &sample.points {
        let mu = mu_v(manifold, &dom.v_field, x)?;
        let kstar = max_sectional(manifold, x, cfg.kstar_restarts, rng)?;
        let val = mu - 2.0 * kstar;
        if val < margin {
            margin = val;
            argmin = x.clone();
        }
    }
    let interior = ConditionFragment {
        name: "C2.curvature".into(),
        verdict: if margin > cfg.delta_strict {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        margin,
        argmin,
        samples: sample.points.len(),
        notes: Vec::new(),
    };

    let mut bmargin = f64::INFINITY;
    let mut bargmin = Vec::new();
    for x in &sample.boundary {
        let mp = manifold.at(x)?;
        let jet = dom.v_field.jet_x(&[], x)?;
        let a = hessian_form_matrix(&mp, &jet);
        if let Some(lam) = tangential_min_eig(&mp, &a, &jet.grad_x) {
            if lam < bmargin {
                bmargin = lam;
                bargmin = x.clone();
            }
        }
    }
    let boundary = if sample.boundary.is_empty() || bmargin == f64::INFINITY {
        ConditionFragment {
            name: "C2.boundary".into(),
            verdict: Verdict::Inconclusive,
            margin: f64::NAN,
            argmin: Vec::new(),
            samples: 0,
            notes: vec!["empty boundary sample".into()],
        }
    } else {
        ConditionFragment {
            name: "C2.boundary".into(),
            verdict: if bmargin > cfg.delta_pd {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            margin: bmargin,
            argmin: bargmin,
            samples: sample.boundary.len(),
            notes: Vec::new(),
        }
    };
    Ok(ConditionReport {
        fragments: vec![interior, boundary],
    })
}

/// Minimal eigenvalue of the form `a` restricted to the g-orthogonal
/// complement of the gradient direction g^{-1} grad_x. Returns None for m = 1
/// (no tangential directions).
fn tangential_min_eig(
    mp: &MetricPoint,
    a: &DMatrix<f64>,
    grad_x: &DVector<f64>,
) -> Option<f64> {
    let m = mp.dim();
    if m < 2 {
        return None;
    }
    let n_dir = &mp.g_inv * grad_x;
    let nn = mp.inner(&n_dir, &n_dir).sqrt();
    if nn < 1e-14 {
        return None;
    }
    let n_unit = n_dir / nn;
    // start from the g-orthonormal frame L^{-T}, project out the normal and
    // re-orthonormalize; keep the m - 1 best-conditioned columns
    let l = mp.chol.l();
    let e = l.transpose().try_inverse()?;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for c in 0..m {
        let mut w = e.column(c).into_owned();
        let p = mp.inner(&w, &n_unit);
        w -= &n_unit * p;
        for b in &basis {
            let p = mp.inner(&w, b);
            w -= b * p;
        }
        let norm = mp.inner(&w, &w).max(0.0).sqrt();
        if norm > 1e-8 {
            basis.push(w / norm);
        }
        if basis.len() == m - 1 {
            break;
        }
    }
    if basis.len() != m - 1 {
        return None;
    }
    let mut t = DMatrix::zeros(m, m - 1);
    for (c, b) in basis.iter().enumerate() {
        t.set_column(c, b);
    }
    let restricted = t.transpose() * a * &t;
    let sym = (&restricted + restricted.transpose()) * 0.5;
    Some(SymmetricEigen::new(sym).eigenvalues.min())
}

/// Theorem 1 hypotheses on the force function W:
/// lambda_W + 1/2 <grad W, grad V> > 0 on T^k x closed sublevel set, and
/// <grad W, grad V> > 0 on T^k x boundary.
pub fn check_theorem1(
    manifold: &ChartManifold,
    dom: &DomainSpec,
    w_field: &ScalarField,
    cfg: &ConditionConfig,
) -> Result<ConditionReport> {
    let sample = sample_domain(manifold, dom)?;
    let k = w_field.k;
    let q = cfg.phi_resolution;
    let phi_total = q.pow(k as u32);
    let phi_at = |flat: usize| -> Vec<f64> {
        let mut idx = flat;
        let mut phi = vec![0.0; k];
        for d in (0..k).rev() {
            phi[d] = TAU * (idx % q) as f64 / q as f64;
            idx /= q;
        }
        phi
    };

    let mut margin1 = f64::INFINITY;
    let mut argmin1 = Vec::new();
    for x in &sample.points {
        let mp = manifold.at(x)?;
        let vjet = dom.v_field.jet_x(&[], x)?;
        let ginv_v = &mp.g_inv * &vjet.grad_x;
        for pf in 0..phi_total {
            let phi = phi_at(pf);
            let wjet = w_field.jet_x(&phi, x)?;
            let a = hessian_form_matrix(&mp, &wjet);
            let lam = relative_min_eig(&mp, &a)?;
            let pairing = wjet.grad_x.dot(&ginv_v);
            let val = lam + 0.5 * pairing;
            if val < margin1 {
                margin1 = val;
                argmin1 = phi.iter().chain(x.iter()).copied().collect();
            }
        }
    }
    let interior = ConditionFragment {
        name: "Theorem1.interior".into(),
        verdict: if margin1 > cfg.delta_strict {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        margin: margin1,
        argmin: argmin1,
        samples: sample.points.len() * phi_total,
        notes: Vec::new(),
    };

    let mut margin2 = f64::INFINITY;
    let mut argmin2 = Vec::new();
    for x in &sample.boundary {
        let mp = manifold.at(x)?;
        let vjet = dom.v_field.jet_x(&[], x)?;
        let ginv_v = &mp.g_inv * &vjet.grad_x;
        for pf in 0..phi_total {
            let phi = phi_at(pf);
            let wjet = w_field.jet_x(&phi, x)?;
            let val = wjet.grad_x.dot(&ginv_v);
            if val < margin2 {
                margin2 = val;
                argmin2 = phi.iter().chain(x.iter()).copied().collect();
            }
        }
    }
    let boundary = if sample.boundary.is_empty() {
        ConditionFragment {
            name: "Theorem1.boundary".into(),
            verdict: Verdict::Inconclusive,
            margin: f64::NAN,
            argmin: Vec::new(),
            samples: 0,
            notes: vec!["empty boundary sample".into()],
        }
    } else {
        ConditionFragment {
            name: "Theorem1.boundary".into(),
            verdict: if margin2 > cfg.delta_strict {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            margin: margin2,
            argmin: argmin2,
            samples: sample.boundary.len() * phi_total,
            notes: Vec::new(),
        }
    };
    Ok(ConditionReport {
        fragments: vec![interior, boundary],
    })
}
