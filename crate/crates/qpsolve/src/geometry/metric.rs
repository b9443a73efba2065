//! Metric tensor evaluation and the derived connection / curvature objects.
//!
//! Everything is computed in a single coordinate chart from exact first and
//! second derivatives of the metric entries (dual-number evaluation), via the
//! Levi-Civita formulas:
//!
//! ```text
//! Gamma^l_ij = 1/2 g^{lk} (d_i g_kj + d_j g_ki - d_k g_ij)
//! R^l_kij    = d_i Gamma^l_jk - d_j Gamma^l_ik
//!              + Gamma^l_is Gamma^s_jk - Gamma^l_js Gamma^s_ik
//! ```

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::ScalarField;

/// Axis-aligned chart domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ChartBox {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| 0.5 * (a + b))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: DVector<f64>,
    pub components: DVector<f64>,
}

/// Riemannian metric given entrywise as expressions in the chart coordinates.
#[derive(Debug, Clone)]
pub struct ChartManifold {
    m: usize,
    /// Row-major m x m entries, expressions in x only.
    entries: Vec<ScalarField>,
    pub chart_box: ChartBox,
}

/// Metric data assembled at one chart point.
pub struct MetricPoint {
    pub x: DVector<f64>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub chol: Cholesky<f64, nalgebra::Dyn>,
    /// gamma[l] is the matrix (i, j) -> Gamma^l_ij.
    pub gamma: Vec<DMatrix<f64>>,
    /// dgamma[a][l][(i, j)] = d_a Gamma^l_ij; populated on demand.
    dgamma: Option<Vec<Vec<DMatrix<f64>>>>,
}

impl ChartManifold {
    pub fn new(m: usize, entries: Vec<ScalarField>, chart_box: ChartBox) -> Result<Self> {
        if entries.len() != m * m {
            return Err(Error::Geometry(format!(
                "metric needs {} entries, got {}",
                m * m,
                entries.len()
            )));
        }
        if chart_box.dim() != m {
            return Err(Error::Geometry("chart box dimension mismatch".into()));
        }
        Ok(ChartManifold {
            m,
            entries,
            chart_box,
        })
    }

    pub fn euclidean(m: usize, chart_box: ChartBox) -> Self {
        let entries = (0..m * m)
            .map(|idx| {
                let (i, j) = (idx / m, idx % m);
                ScalarField::spatial(
                    crate::expr::Expr::Const(if i == j { 1.0 } else { 0.0 }),
                    m,
                )
                .unwrap()
            })
            .collect();
        ChartManifold {
            m,
            entries,
            chart_box,
        }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn metric_entries(&self) -> &[ScalarField] {
        &self.entries
    }

    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.m;
        let mut g = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                g[(i, j)] = self.entries[i * m + j].value(&[], x)?;
            }
        }
        // symmetrize roundoff
        let g = (&g + g.transpose()) * 0.5;
        Ok(g)
    }

    /// Metric inner product of chart vectors at x.
    pub fn inner(&self, x: &[f64], a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        let g = self.metric_at(x)?;
        Ok((&g * b).dot(a))
    }

    pub fn norm(&self, x: &[f64], a: &DVector<f64>) -> Result<f64> {
        Ok(self.inner(x, a, a)?.max(0.0).sqrt())
    }

    /// Assemble metric, inverse, Cholesky factor and Christoffel data at x.
    pub fn at(&self, x: &[f64]) -> Result<MetricPoint> {
        self.at_impl(x, false)
    }

    /// As `at`, additionally with the Christoffel derivatives needed by the
    /// curvature tensor.
    pub fn at_with_curvature(&self, x: &[f64]) -> Result<MetricPoint> {
        self.at_impl(x, true)
    }

    fn at_impl(&self, x: &[f64], with_curvature: bool) -> Result<MetricPoint> {
        let m = self.m;
        let mut g = DMatrix::zeros(m, m);
        // dg[d][(i, j)] = d_d g_ij ; d2g[c][d] likewise
        let mut dg = vec![DMatrix::zeros(m, m); m];
        let mut d2g = vec![vec![DMatrix::zeros(m, m); m]; m];
        for i in 0..m {
            for j in 0..m {
                let jet = self.entries[i * m + j].jet_x(&[], x)?;
                g[(i, j)] = jet.value;
                for d in 0..m {
                    dg[d][(i, j)] = jet.grad_x[d];
                    for c in 0..m {
                        d2g[c][d][(i, j)] = jet.hess_x[(c, d)];
                    }
                }
            }
        }
        let g = (&g + g.transpose()) * 0.5;
        let chol = Cholesky::new(g.clone()).ok_or_else(|| {
            Error::Geometry(format!("metric not positive definite at x = {x:?}"))
        })?;
        let g_inv = chol.inverse();

        // Gamma^l_ij
        let mut gamma = vec![DMatrix::zeros(m, m); m];
        for l in 0..m {
            for i in 0..m {
                for j in 0..m {
                    let mut acc = 0.0;
                    for kk in 0..m {
                        acc += g_inv[(l, kk)]
                            * (dg[i][(kk, j)] + dg[j][(kk, i)] - dg[kk][(i, j)]);
                    }
                    gamma[l][(i, j)] = 0.5 * acc;
                }
            }
        }

        let dgamma = if with_curvature {
            // d_a g_inv = -g_inv (d_a g) g_inv
            let dginv: Vec<DMatrix<f64>> = (0..m)
                .map(|a| -(&g_inv * &dg[a] * &g_inv))
                .collect();
            let mut dgm = vec![vec![DMatrix::zeros(m, m); m]; m];
            for a in 0..m {
                for l in 0..m {
                    for i in 0..m {
                        for j in 0..m {
                            let mut acc = 0.0;
                            for kk in 0..m {
                                acc += dginv[a][(l, kk)]
                                    * (dg[i][(kk, j)] + dg[j][(kk, i)] - dg[kk][(i, j)])
                                    + g_inv[(l, kk)]
                                        * (d2g[a][i][(kk, j)] + d2g[a][j][(kk, i)]
                                            - d2g[a][kk][(i, j)]);
                            }
                            dgm[a][l][(i, j)] = 0.5 * acc;
                        }
                    }
                }
            }
            Some(dgm)
        } else {
            None
        };

        Ok(MetricPoint {
            x: DVector::from_column_slice(x),
            g,
            g_inv,
            chol,
            gamma,
            dgamma,
        })
    }
}

impl MetricPoint {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (&self.g * b).dot(a)
    }

    pub fn norm(&self, a: &DVector<f64>) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    /// Gamma_x(a, b), bilinear symmetric.
    pub fn christoffel(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let m = self.dim();
        let mut out = DVector::zeros(m);
        for l in 0..m {
            out[l] = (&self.gamma[l] * b).dot(a);
        }
        out
    }

    /// The dual bilinear map G_x defined by (g a, Gamma(b, c)) = (G(a, b), c).
    pub fn gee(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let m = self.dim();
        let ga = &self.g * a;
        let mut out = DVector::zeros(m);
        for j in 0..m {
            let mut acc = 0.0;
            for l in 0..m {
                for i in 0..m {
                    acc += ga[l] * self.gamma[l][(i, j)] * b[i];
                }
            }
            out[j] = acc;
        }
        out
    }

    /// Curvature tensor R(a, b)c. Requires `at_with_curvature`.
    pub fn curvature(&self, a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>) -> DVector<f64> {
        let m = self.dim();
        let dgamma = self
            .dgamma
            .as_ref()
            .expect("curvature data not assembled; use at_with_curvature");
        let mut out = DVector::zeros(m);
        for l in 0..m {
            let mut acc = 0.0;
            for i in 0..m {
                for j in 0..m {
                    for kk in 0..m {
                        let mut term = dgamma[i][l][(j, kk)] - dgamma[j][l][(i, kk)];
                        for s in 0..m {
                            term += self.gamma[l][(i, s)] * self.gamma[s][(j, kk)]
                                - self.gamma[l][(j, s)] * self.gamma[s][(i, kk)];
                        }
                        acc += term * a[i] * b[j] * c[kk];
                    }
                }
            }
            out[l] = acc;
        }
        out
    }

    /// Sectional curvature of the plane spanned by (a, b).
    pub fn sectional_curvature(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        let gram = self.inner(a, a) * self.inner(b, b) - self.inner(a, b).powi(2);
        if gram <= 1e-10 {
            return Err(Error::Geometry(format!(
                "degenerate span (Gram determinant {gram:.3e})"
            )));
        }
        let rabba = self.inner(&self.curvature(a, b, b), a);
        Ok(rabba / gram)
    }
}

/// Maximal sectional curvature K*(x). For m = 2 the single plane; for m >= 3
/// projected gradient ascent over orthonormal 2-frames with random restarts.
pub fn max_sectional(
    manifold: &ChartManifold,
    x: &[f64],
    restarts: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let m = manifold.dim();
    let mp = manifold.at_with_curvature(x)?;
    if m < 2 {
        return Err(Error::Geometry("sectional curvature needs m >= 2".into()));
    }
    if m == 2 {
        let a = DVector::from_fn(m, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let b = DVector::from_fn(m, |i, _| if i == 1 { 1.0 } else { 0.0 });
        return mp.sectional_curvature(&a, &b);
    }
    let mut best = f64::NEG_INFINITY;
    for r in 0..restarts.max(1) {
        let mut a = DVector::from_fn(m, |i, _| {
            if r == 0 {
                if i == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                rng.gen_range(-1.0..1.0)
            }
        });
        let mut b = DVector::from_fn(m, |i, _| {
            if r == 0 {
                if i == 1 {
                    1.0
                } else {
                    0.0
                }
            } else {
                rng.gen_range(-1.0..1.0)
            }
        });
        gram_schmidt(&mp, &mut a, &mut b)?;
        let mut step = 0.3;
        let mut value = mp.sectional_curvature(&a, &b)?;
        for _ in 0..200 {
            // finite-difference ascent direction in the (a, b) parametrization
            let h = 1e-6;
            let mut grad_a = DVector::zeros(m);
            let mut grad_b = DVector::zeros(m);
            for d in 0..m {
                let mut ap = a.clone();
                ap[d] += h;
                let (mut a2, mut b2) = (ap, b.clone());
                if gram_schmidt(&mp, &mut a2, &mut b2).is_ok() {
                    grad_a[d] = (mp.sectional_curvature(&a2, &b2)? - value) / h;
                }
                let mut bp = b.clone();
                bp[d] += h;
                let (mut a2, mut b2) = (a.clone(), bp);
                if gram_schmidt(&mp, &mut a2, &mut b2).is_ok() {
                    grad_b[d] = (mp.sectional_curvature(&a2, &b2)? - value) / h;
                }
            }
            let gnorm = (grad_a.norm_squared() + grad_b.norm_squared()).sqrt();
            if gnorm < 1e-10 {
                break;
            }
            let mut improved = false;
            while step > 1e-10 {
                let mut a2 = &a + &grad_a * step;
                let mut b2 = &b + &grad_b * step;
                if gram_schmidt(&mp, &mut a2, &mut b2).is_ok() {
                    let v2 = mp.sectional_curvature(&a2, &b2)?;
                    if v2 > value + 1e-14 {
                        a = a2;
                        b = b2;
                        value = v2;
                        improved = true;
                        step *= 1.5;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        best = best.max(value);
    }
    Ok(best)
}

fn gram_schmidt(mp: &MetricPoint, a: &mut DVector<f64>, b: &mut DVector<f64>) -> Result<()> {
    let na = mp.norm(a);
    if na < 1e-12 {
        return Err(Error::Geometry("zero vector in frame".into()));
    }
    *a /= na;
    let proj = mp.inner(a, b);
    *b -= &*a * proj;
    let nb = mp.norm(b);
    if nb < 1e-12 {
        return Err(Error::Geometry("collapsed frame".into()));
    }
    *b /= nb;
    Ok(())
}

/// Riemannian gradient of a (phi-parametrized) scalar field at x.
pub fn gradient(
    manifold: &ChartManifold,
    f: &ScalarField,
    phi: &[f64],
    x: &[f64],
) -> Result<TangentVector> {
    let jet = f.jet_x(phi, x)?;
    let mp = manifold.at(x)?;
    Ok(TangentVector {
        base: DVector::from_column_slice(x),
        components: &mp.g_inv * &jet.grad_x,
    })
}

/// Covariant Hessian quadratic form Hess f (xi, xi).
pub fn hessian_quadform(
    manifold: &ChartManifold,
    f: &ScalarField,
    phi: &[f64],
    x: &[f64],
    xi: &DVector<f64>,
) -> Result<f64> {
    let jet = f.jet_x(phi, x)?;
    let mp = manifold.at(x)?;
    Ok((&jet.hess_x * xi).dot(xi) - jet.grad_x.dot(&mp.christoffel(xi, xi)))
}

/// Coordinate matrix of the covariant Hessian bilinear form:
/// A_ij = f_xx_ij - sum_l f_x_l Gamma^l_ij.
pub fn hessian_form_matrix(
    mp: &MetricPoint,
    jet: &crate::scalar::ScalarJet,
) -> DMatrix<f64> {
    let m = mp.dim();
    let mut a = jet.hess_x.clone();
    for l in 0..m {
        a -= &mp.gamma[l] * jet.grad_x[l];
    }
    (&a + a.transpose()) * 0.5
}
