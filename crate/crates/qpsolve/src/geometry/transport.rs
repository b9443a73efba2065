//! Parallel transport along curves: xi' + Gamma_x(t)(xdot(t), xi) = 0.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::ChartManifold;
use crate::ode::{integrate_nodes, OdeOptions};

/// A differentiable curve in the chart: position and velocity at a time.
pub trait Curve {
    fn at(&self, t: f64) -> (DVector<f64>, DVector<f64>);
}

impl<F> Curve for F
where
    F: Fn(f64) -> (DVector<f64>, DVector<f64>),
{
    fn at(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        self(t)
    }
}

/// Node samples with cubic Hermite interpolation between them.
pub struct SampledCurve {
    pub times: Vec<f64>,
    pub xs: Vec<DVector<f64>>,
    pub vels: Vec<DVector<f64>>,
}

impl SampledCurve {
    fn locate(&self, t: f64) -> usize {
        match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(self.times.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.times.len() - 2),
        }
    }
}

impl Curve for SampledCurve {
    fn at(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let i = self.locate(t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let (h00, h10, h01, h11) = hermite_basis(s);
        let (d00, d10, d01, d11) = hermite_basis_deriv(s);
        let x = &self.xs[i] * h00
            + &self.vels[i] * (h10 * h)
            + &self.xs[i + 1] * h01
            + &self.vels[i + 1] * (h11 * h);
        let v = (&self.xs[i] * d00
            + &self.vels[i] * (d10 * h)
            + &self.xs[i + 1] * d01
            + &self.vels[i + 1] * (d11 * h))
            / h;
        (x, v)
    }
}

fn hermite_basis(s: f64) -> (f64, f64, f64, f64) {
    (
        2.0 * s * s * s - 3.0 * s * s + 1.0,
        s * s * s - 2.0 * s * s + s,
        -2.0 * s * s * s + 3.0 * s * s,
        s * s * s - s * s,
    )
}

fn hermite_basis_deriv(s: f64) -> (f64, f64, f64, f64) {
    (
        6.0 * s * s - 6.0 * s,
        3.0 * s * s - 4.0 * s + 1.0,
        -6.0 * s * s + 6.0 * s,
        3.0 * s * s - 2.0 * s,
    )
}

/// Parallel-transported orthonormal frame along a trajectory.
pub struct TangentFrame {
    pub times: Vec<f64>,
    pub xs: Vec<DVector<f64>>,
    pub vels: Vec<DVector<f64>>,
    /// Columns of E(t_i) are the transported basis vectors.
    pub frames: Vec<DMatrix<f64>>,
    /// Frame time-derivatives at the nodes, for cubic Hermite interpolation.
    pub dframes: Vec<DMatrix<f64>>,
}

impl TangentFrame {
    /// Max over nodes of || E^T g E - I ||.
    pub fn orthonormality_defect(&self, manifold: &ChartManifold) -> Result<f64> {
        let m = manifold.dim();
        let mut worst = 0.0f64;
        for (x, e) in self.xs.iter().zip(&self.frames) {
            let g = manifold.metric_at(x.as_slice())?;
            let d = e.transpose() * g * e - DMatrix::<f64>::identity(m, m);
            worst = worst.max(d.amax());
        }
        Ok(worst)
    }

    pub fn frame_at(&self, t: f64) -> DMatrix<f64> {
        let i = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => return self.frames[i].clone(),
            Err(i) => i.saturating_sub(1).min(self.times.len() - 2),
        };
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let (h00, h10, h01, h11) = hermite_basis(s);
        &self.frames[i] * h00
            + &self.dframes[i] * (h10 * h)
            + &self.frames[i + 1] * h01
            + &self.dframes[i + 1] * (h11 * h)
    }
}

/// Transport a single vector from `times[0]` along the curve, returning the
/// transported vector at every node.
pub fn transport_vector(
    manifold: &ChartManifold,
    curve: &dyn Curve,
    times: &[f64],
    xi0: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    let manifold = manifold.clone();
    let rhs = move |t: f64, xi: &DVector<f64>| -> DVector<f64> {
        let (x, v) = curve.at(t);
        match manifold.at(x.as_slice()) {
            Ok(mp) => -mp.christoffel(&v, xi),
            Err(_) => DVector::zeros(xi.len()),
        }
    };
    integrate_nodes(rhs, times, xi0.clone(), &OdeOptions::default())
}

/// Transport a g-orthonormal frame (seeded from the Cholesky factor at the
/// start point) along the curve.
pub fn transport_frame(
    manifold: &ChartManifold,
    curve: &dyn Curve,
    times: &[f64],
) -> Result<TangentFrame> {
    if times.len() < 2 {
        return Err(Error::Integration("frame transport needs >= 2 nodes".into()));
    }
    let m = manifold.dim();
    let (x0, _) = curve.at(times[0]);
    let mp0 = manifold.at(x0.as_slice())?;
    // E0 = L^{-T}: columns are g-orthonormal
    let l = mp0.chol.l();
    let e0 = l
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Geometry("singular Cholesky factor".into()))?;

    let rhs = |t: f64, y: &DVector<f64>| -> DVector<f64> {
        let (x, v) = curve.at(t);
        let mut out = DVector::zeros(m * m);
        if let Ok(mp) = manifold.at(x.as_slice()) {
            for col in 0..m {
                let xi = DVector::from_fn(m, |r, _| y[col * m + r]);
                let dxi = -mp.christoffel(&v, &xi);
                for r in 0..m {
                    out[col * m + r] = dxi[r];
                }
            }
        }
        out
    };
    let y0 = DVector::from_fn(m * m, |i, _| e0[(i % m, i / m)]);
    let states = integrate_nodes(rhs, times, y0, &OdeOptions::default())?;

    let mut xs = Vec::with_capacity(times.len());
    let mut vels = Vec::with_capacity(times.len());
    let mut frames = Vec::with_capacity(times.len());
    let mut dframes = Vec::with_capacity(times.len());
    for (t, y) in times.iter().zip(&states) {
        let (x, v) = curve.at(*t);
        let e = DMatrix::from_fn(m, m, |r, c| y[c * m + r]);
        let mp = manifold.at(x.as_slice())?;
        let mut de = DMatrix::zeros(m, m);
        for c in 0..m {
            let xi = e.column(c).into_owned();
            let dxi = -mp.christoffel(&v, &xi);
            de.set_column(c, &dxi);
        }
        xs.push(x);
        vels.push(v);
        frames.push(e);
        dframes.push(de);
    }
    Ok(TangentFrame {
        times: times.to_vec(),
        xs,
        vels,
        frames,
        dframes,
    })
}
