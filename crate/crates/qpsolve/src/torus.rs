//! Truncated real Fourier fields on the k-torus.
//!
//! Fields are stored on the canonical half-space of the cubic band
//! `max_i |n_i| <= N`: the zero mode plus every multi-index whose first
//! nonzero entry is positive. The mirror coefficient is the complex
//! conjugate, which keeps the represented field real by construction.

use std::collections::BTreeMap;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const TAU: f64 = std::f64::consts::TAU;

/// Basis frequency vector of the quasiperiodic time dependence.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVector {
    entries: Vec<f64>,
}

impl FrequencyVector {
    /// Validates finiteness and (approximate) rational independence up to
    /// `n_check`. Small divisors are reported as warnings, not errors: they
    /// degrade conditioning, not the correctness of torus quadrature.
    pub fn new(entries: Vec<f64>, n_check: i32, delta_indep: f64) -> Result<(Self, Vec<String>)> {
        if entries.is_empty() {
            return Err(Error::ProblemFile("frequency vector must have k >= 1".into()));
        }
        for (i, w) in entries.iter().enumerate() {
            if !w.is_finite() || *w == 0.0 {
                return Err(Error::ProblemFile(format!(
                    "frequency component {} is {} (must be finite and nonzero)",
                    i + 1,
                    w
                )));
            }
        }
        let mut warnings = Vec::new();
        let k = entries.len();
        let mut idx = vec![-n_check; k];
        'outer: loop {
            if idx.iter().any(|&v| v != 0) {
                // only one of {n, -n} needs checking
                if idx.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0) {
                    let dot: f64 = idx
                        .iter()
                        .zip(&entries)
                        .map(|(&n, &w)| f64::from(n) * w)
                        .sum();
                    if dot.abs() <= delta_indep {
                        warnings.push(format!(
                            "near-resonance: |(n, omega)| = {:.3e} <= {:.1e} for n = {:?}",
                            dot.abs(),
                            delta_indep,
                            idx
                        ));
                    }
                }
            }
            for j in (0..k).rev() {
                idx[j] += 1;
                if idx[j] <= n_check {
                    continue 'outer;
                }
                idx[j] = -n_check;
            }
            break;
        }
        Ok((FrequencyVector { entries }, warnings))
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// (n, omega) for a multi-index.
    pub fn dot(&self, n: &[i32]) -> f64 {
        n.iter()
            .zip(&self.entries)
            .map(|(&ni, &w)| f64::from(ni) * w)
            .sum()
    }
}

/// True if `n` is the stored representative of the pair {n, -n}.
pub fn is_canonical(n: &[i32]) -> bool {
    match n.iter().find(|&&v| v != 0) {
        None => true,
        Some(&v) => v > 0,
    }
}

/// Real-valued truncated Fourier field T^k -> R^m.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierField {
    k: usize,
    m: usize,
    n_max: i32,
    /// Canonical half-space coefficients; the zero mode is stored with zero
    /// imaginary part.
    coeffs: BTreeMap<Vec<i32>, Vec<Complex64>>,
}

impl FourierField {
    pub fn zero(k: usize, m: usize, n_max: i32) -> Self {
        FourierField {
            k,
            m,
            n_max,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(k: usize, value: &DVector<f64>, n_max: i32) -> Self {
        let mut f = Self::zero(k, value.len(), n_max);
        f.set_mode(
            &vec![0; k],
            value.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        );
        f
    }

    pub fn torus_dim(&self) -> usize {
        self.k
    }

    pub fn target_dim(&self) -> usize {
        self.m
    }

    pub fn truncation(&self) -> i32 {
        self.n_max
    }

    /// Set c_n (and implicitly c_{-n} = conj c_n). Panics if the index is out
    /// of band; the zero mode keeps only its real part.
    pub fn set_mode(&mut self, n: &[i32], c: Vec<Complex64>) {
        assert_eq!(n.len(), self.k);
        assert_eq!(c.len(), self.m);
        assert!(
            n.iter().all(|&v| v.abs() <= self.n_max),
            "mode {n:?} outside band N = {}",
            self.n_max
        );
        if is_canonical(n) {
            if n.iter().all(|&v| v == 0) {
                let re: Vec<Complex64> = c.iter().map(|z| Complex64::new(z.re, 0.0)).collect();
                if re.iter().all(|z| z.re == 0.0) {
                    self.coeffs.remove(n);
                } else {
                    self.coeffs.insert(n.to_vec(), re);
                }
            } else if c.iter().all(|z| z.norm_sqr() == 0.0) {
                self.coeffs.remove(n);
            } else {
                self.coeffs.insert(n.to_vec(), c);
            }
        } else {
            let neg: Vec<i32> = n.iter().map(|&v| -v).collect();
            self.set_mode(&neg, c.into_iter().map(|z| z.conj()).collect());
        }
    }

    /// Build from a full (possibly redundant) mode list, validating Hermitian
    /// symmetry of duplicated pairs to 1e-9.
    pub fn from_full_modes(
        k: usize,
        m: usize,
        n_max: i32,
        modes: impl IntoIterator<Item = (Vec<i32>, Vec<Complex64>)>,
    ) -> Result<Self> {
        let mut seen: BTreeMap<Vec<i32>, Vec<Complex64>> = BTreeMap::new();
        for (n, c) in modes {
            seen.insert(n, c);
        }
        let mut field = Self::zero(k, m, n_max);
        for (n, c) in &seen {
            let neg: Vec<i32> = n.iter().map(|&v| -v).collect();
            if let Some(cm) = seen.get(&neg) {
                let err: f64 = c
                    .iter()
                    .zip(cm)
                    .map(|(a, b)| (a - b.conj()).norm())
                    .fold(0.0, f64::max);
                if err > 1e-9 {
                    return Err(Error::MalformedField(format!(
                        "Hermitian symmetry violated at mode {n:?}: |c(n) - conj(c(-n))| = {err:.3e}"
                    )));
                }
            }
            if is_canonical(n) {
                field.set_mode(n, c.clone());
            } else if !seen.contains_key(&neg) {
                field.set_mode(n, c.clone());
            }
        }
        Ok(field)
    }

    /// Coefficient of an arbitrary in-band multi-index.
    pub fn mode(&self, n: &[i32]) -> Vec<Complex64> {
        if is_canonical(n) {
            self.coeffs
                .get(n)
                .cloned()
                .unwrap_or_else(|| vec![Complex64::default(); self.m])
        } else {
            let neg: Vec<i32> = n.iter().map(|&v| -v).collect();
            self.mode(&neg).into_iter().map(|z| z.conj()).collect()
        }
    }

    /// Canonical stored modes in deterministic (lexicographic) order.
    pub fn canonical_modes(&self) -> impl Iterator<Item = (&Vec<i32>, &Vec<Complex64>)> {
        self.coeffs.iter()
    }

    pub fn eval(&self, phi: &[f64]) -> DVector<f64> {
        assert_eq!(phi.len(), self.k);
        let mut out = DVector::zeros(self.m);
        for (n, c) in &self.coeffs {
            let theta: f64 = n
                .iter()
                .zip(phi)
                .map(|(&ni, &p)| f64::from(ni) * p)
                .sum();
            let e = Complex64::from_polar(1.0, theta);
            let factor = if n.iter().all(|&v| v == 0) { 1.0 } else { 2.0 };
            for j in 0..self.m {
                out[j] += factor * (c[j] * e).re;
            }
        }
        out
    }

    /// D_omega: coefficient map n -> i (n, omega) c_n.
    pub fn directional_derivative(&self, omega: &FrequencyVector) -> FourierField {
        assert_eq!(omega.dim(), self.k);
        let mut out = FourierField::zero(self.k, self.m, self.n_max);
        for (n, c) in &self.coeffs {
            let mul = Complex64::new(0.0, omega.dot(n));
            out.coeffs.insert(
                n.clone(),
                c.iter().map(|z| z * mul).collect(),
            );
        }
        // zero mode maps to zero; drop it
        out.coeffs.retain(|_, c| c.iter().any(|z| z.norm_sqr() != 0.0));
        out
    }

    /// Restriction to the line phi0 + t omega: exact values and first two
    /// t-derivatives at each requested time.
    pub fn line_sample(
        &self,
        phi0: &[f64],
        omega: &FrequencyVector,
        t_grid: &[f64],
    ) -> Vec<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        assert_eq!(phi0.len(), self.k);
        let modes: Vec<(&Vec<i32>, &Vec<Complex64>, f64, f64)> = self
            .coeffs
            .iter()
            .map(|(n, c)| {
                let theta0: f64 = n
                    .iter()
                    .zip(phi0)
                    .map(|(&ni, &p)| f64::from(ni) * p)
                    .sum();
                (n, c, theta0, omega.dot(n))
            })
            .collect();
        t_grid
            .iter()
            .map(|&t| {
                let mut v = DVector::zeros(self.m);
                let mut d1 = DVector::zeros(self.m);
                let mut d2 = DVector::zeros(self.m);
                for (n, c, theta0, nw) in &modes {
                    let e = Complex64::from_polar(1.0, theta0 + nw * t);
                    let factor = if n.iter().all(|&x| x == 0) { 1.0 } else { 2.0 };
                    let i_nw = Complex64::new(0.0, *nw);
                    for j in 0..self.m {
                        let base = c[j] * e;
                        v[j] += factor * base.re;
                        d1[j] += factor * (base * i_nw).re;
                        d2[j] -= factor * (base * nw * nw).re;
                    }
                }
                (v, d1, d2)
            })
            .collect()
    }

    /// Sum of squared coefficient norms, counting mirror modes (Parseval mass).
    pub fn energy(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(n, c)| {
                let factor = if n.iter().all(|&v| v == 0) { 1.0 } else { 2.0 };
                factor * c.iter().map(|z| z.norm_sqr()).sum::<f64>()
            })
            .sum()
    }

    /// Energy fraction carried by the outermost shell `max_i |n_i| = N`,
    /// used as the truncation ("resolved") diagnostic.
    pub fn tail_shell_ratio(&self) -> f64 {
        let total = self.energy();
        if total == 0.0 {
            return 0.0;
        }
        let tail: f64 = self
            .coeffs
            .iter()
            .filter(|(n, _)| n.iter().map(|v| v.abs()).max() == Some(self.n_max))
            .map(|(_, c)| 2.0 * c.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum();
        tail / total
    }

    /// Max |c_n| distance over the union of both fields' bands.
    pub fn coeff_distance(&self, other: &FourierField) -> f64 {
        let mut keys: Vec<Vec<i32>> = self.coeffs.keys().cloned().collect();
        for k in other.coeffs.keys() {
            if !self.coeffs.contains_key(k) {
                keys.push(k.clone());
            }
        }
        let mut d = 0.0f64;
        for n in keys {
            let a = self.mode(&n);
            let b = other.mode(&n);
            for j in 0..self.m.min(other.m) {
                d = d.max((a[j] - b[j]).norm());
            }
        }
        d
    }
}

/// Uniform tensor-product quadrature grid on [0, 2pi)^k.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    k: usize,
    p: usize,
}

impl TorusGrid {
    pub fn new(k: usize, points_per_axis: usize) -> Result<Self> {
        if points_per_axis < 2 {
            return Err(Error::GridTooSmall(
                "need at least 2 points per axis".into(),
            ));
        }
        Ok(TorusGrid {
            k,
            p: points_per_axis,
        })
    }

    pub fn torus_dim(&self) -> usize {
        self.k
    }

    pub fn points_per_axis(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.p.pow(self.k as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid with doubled per-axis resolution (for de-aliased products).
    pub fn padded(&self) -> TorusGrid {
        TorusGrid {
            k: self.k,
            p: 2 * self.p,
        }
    }

    /// True if analysis up to band `n_max` is alias-free on this grid.
    pub fn resolves(&self, n_max: i32) -> bool {
        self.p as i32 >= 2 * n_max + 2
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = flat;
        let mut phi = vec![0.0; self.k];
        for j in (0..self.k).rev() {
            phi[j] = TAU * (idx % self.p) as f64 / self.p as f64;
            idx /= self.p;
        }
        phi
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }
}

/// Pointwise samples of a field over a grid, in flat iteration order.
pub fn synthesize(field: &FourierField, grid: &TorusGrid) -> Vec<DVector<f64>> {
    assert_eq!(field.k, grid.k);
    grid.points().map(|phi| field.eval(&phi)).collect()
}

/// Discrete Fourier analysis of real samples up to band `n_max`.
/// Exact inverse of `synthesize` for in-band fields when `P >= 2N + 2`.
pub fn analyze(
    samples: &[DVector<f64>],
    grid: &TorusGrid,
    m: usize,
    n_max: i32,
) -> Result<FourierField> {
    if !grid.resolves(n_max) {
        return Err(Error::GridTooSmall(format!(
            "analysis up to band N = {} needs P >= {} points per axis, grid has {}",
            n_max,
            2 * n_max + 2,
            grid.p
        )));
    }
    assert_eq!(samples.len(), grid.len());
    let k = grid.k;
    let p = grid.p;
    // per-axis twiddle tables: e^{-i nu * 2pi i / P}
    let band = (2 * n_max + 1) as usize;
    let mut twiddle = vec![vec![Complex64::default(); p]; band];
    for (bi, row) in twiddle.iter_mut().enumerate() {
        let nu = bi as i32 - n_max;
        for (i, t) in row.iter_mut().enumerate() {
            *t = Complex64::from_polar(1.0, -TAU * f64::from(nu) * i as f64 / p as f64);
        }
    }
    let mut field = FourierField::zero(k, m, n_max);
    let norm = 1.0 / grid.len() as f64;
    // drop pure-roundoff modes (relative to the sample scale)
    let scale = samples
        .iter()
        .map(|f| f.amax())
        .fold(0.0f64, f64::max);
    let threshold = 1e-13 * scale;
    let mut n = vec![-n_max; k];
    'modes: loop {
        if is_canonical(&n) {
            let mut acc = vec![Complex64::default(); m];
            for (flat, f) in samples.iter().enumerate() {
                let mut idx = flat;
                let mut w = Complex64::new(1.0, 0.0);
                for j in (0..k).rev() {
                    let gi = idx % p;
                    idx /= p;
                    w *= twiddle[(n[j] + n_max) as usize][gi];
                }
                for (a, fj) in acc.iter_mut().zip(f.iter()) {
                    *a += w * *fj;
                }
            }
            for a in &mut acc {
                *a *= norm;
            }
            if acc.iter().any(|z| z.norm() > threshold) {
                field.set_mode(&n, acc);
            }
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
    Ok(field)
}

/// Torus-averaged L2 dot product: (2pi)^{-k} integral of the pointwise dot.
pub fn inner0(f: &FourierField, g: &FourierField, grid: &TorusGrid) -> f64 {
    assert_eq!(f.m, g.m);
    let mut acc = 0.0;
    for phi in grid.points() {
        acc += f.eval(&phi).dot(&g.eval(&phi));
    }
    acc / grid.len() as f64
}

/// H^1_omega dot product: inner0 plus inner0 of the omega-derivatives.
pub fn inner1(
    f: &FourierField,
    g: &FourierField,
    omega: &FrequencyVector,
    grid: &TorusGrid,
) -> f64 {
    inner0(f, g, grid)
        + inner0(
            &f.directional_derivative(omega),
            &g.directional_derivative(omega),
            grid,
        )
}

/// Coefficient-space inner product (Parseval route), for cross-checks.
pub fn inner0_parseval(f: &FourierField, g: &FourierField) -> f64 {
    let mut acc = 0.0;
    for (n, c) in f.canonical_modes() {
        let d = g.mode(n);
        let factor = if n.iter().all(|&v| v == 0) { 1.0 } else { 2.0 };
        for j in 0..f.m {
            acc += factor * (c[j] * d[j].conj()).re;
        }
    }
    acc
}
