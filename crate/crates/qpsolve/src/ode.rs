//! Adaptive Dormand-Prince 4(5) integration for the small ODE systems used by
//! parallel transport, the connecting-map shooting solver and the variational
//! sweeps.

use nalgebra::DVector;

use crate::error::{Error, Result};

pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-11,
            atol: 1e-12,
            h_init: 1e-3,
            h_min: 1e-14,
            max_steps: 2_000_000,
        }
    }
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate y' = f(t, y) from t0 to t1 (t1 may be < t0), returning the final
/// state. `observer` is called after every accepted step with (t, y).
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: DVector<f64>,
    opts: &OdeOptions,
    mut observer: O,
) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
    O: FnMut(f64, &DVector<f64>),
{
    if t0 == t1 {
        return Ok(y0);
    }
    let dir = (t1 - t0).signum();
    let mut t = t0;
    let mut y = y0;
    let mut h = opts.h_init.min((t1 - t0).abs()) * dir;
    let mut k = vec![DVector::zeros(y.len()); 7];
    k[0] = f(t, &y);
    for _ in 0..opts.max_steps {
        if (t - t1) * dir >= 0.0 {
            return Ok(y);
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        for s in 0..6 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(s + 1) {
                let a = A[s][j];
                if a != 0.0 {
                    ys += kj * (a * h);
                }
            }
            k[s + 1] = f(t + C[s] * h, &ys);
        }
        let mut y5 = y.clone();
        let mut err = DVector::zeros(y.len());
        for (j, kj) in k.iter().enumerate() {
            if B5[j] != 0.0 {
                y5 += kj * (B5[j] * h);
            }
            let db = B5[j] - B4[j];
            if db != 0.0 {
                err += kj * (db * h);
            }
        }
        let mut scale = 0.0f64;
        for i in 0..y.len() {
            let tol = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
            scale = scale.max(err[i].abs() / tol);
        }
        if scale <= 1.0 {
            t += h;
            y = y5;
            // FSAL
            k[0] = k[6].clone();
            observer(t, &y);
        } else {
            k[0] = f(t, &y);
        }
        let factor = if scale > 0.0 {
            (0.9 * scale.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
        if h.abs() < opts.h_min {
            return Err(Error::Integration(format!(
                "step size underflow at t = {t} (|h| = {:.3e})",
                h.abs()
            )));
        }
    }
    Err(Error::Integration(format!(
        "step budget exhausted at t = {t}"
    )))
}

/// Integrate and record the state at prescribed output times (monotone in the
/// direction of integration). Integration restarts at each node so the nodes
/// are hit exactly.
pub fn integrate_nodes<F>(
    mut f: F,
    times: &[f64],
    y0: DVector<f64>,
    opts: &OdeOptions,
) -> Result<Vec<DVector<f64>>>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let mut out = Vec::with_capacity(times.len());
    let mut y = y0;
    out.push(y.clone());
    for w in times.windows(2) {
        y = integrate(&mut f, w[0], w[1], y, opts, |_, _| {})?;
        out.push(y.clone());
    }
    Ok(out)
}
