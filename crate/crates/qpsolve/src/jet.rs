//! Second-order forward-mode dual numbers over a fixed set of variables.
//!
//! A `Jet2` carries a value together with the full gradient and Hessian with
//! respect to `n` independent variables. Arithmetic propagates both orders
//! exactly through the expression grammar, so no truncation error enters any
//! derivative used elsewhere in the crate.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
}

impl Jet2 {
    pub fn constant(n: usize, v: f64) -> Self {
        Jet2 {
            v,
            g: DVector::zeros(n),
            h: DMatrix::zeros(n, n),
        }
    }

    /// Seed the `i`-th independent variable with value `v`.
    pub fn variable(n: usize, i: usize, v: f64) -> Self {
        let mut g = DVector::zeros(n);
        g[i] = 1.0;
        Jet2 {
            v,
            g,
            h: DMatrix::zeros(n, n),
        }
    }

    pub fn nvars(&self) -> usize {
        self.g.len()
    }

    pub fn add(&self, o: &Jet2) -> Jet2 {
        Jet2 {
            v: self.v + o.v,
            g: &self.g + &o.g,
            h: &self.h + &o.h,
        }
    }

    pub fn sub(&self, o: &Jet2) -> Jet2 {
        Jet2 {
            v: self.v - o.v,
            g: &self.g - &o.g,
            h: &self.h - &o.h,
        }
    }

    pub fn neg(&self) -> Jet2 {
        Jet2 {
            v: -self.v,
            g: -&self.g,
            h: -&self.h,
        }
    }

    pub fn mul(&self, o: &Jet2) -> Jet2 {
        let gh = &self.g * o.g.transpose();
        Jet2 {
            v: self.v * o.v,
            g: &self.g * o.v + &o.g * self.v,
            h: &self.h * o.v + &o.h * self.v + &gh + gh.transpose(),
        }
    }

    pub fn div(&self, o: &Jet2) -> Jet2 {
        self.mul(&o.recip())
    }

    pub fn recip(&self) -> Jet2 {
        // 1/u: d = -1/u^2, dd = 2/u^3
        let u = self.v;
        self.chain(1.0 / u, -1.0 / (u * u), 2.0 / (u * u * u))
    }

    pub fn scale(&self, c: f64) -> Jet2 {
        Jet2 {
            v: self.v * c,
            g: &self.g * c,
            h: &self.h * c,
        }
    }

    /// Apply a scalar function given its value and first two derivatives at `self.v`.
    fn chain(&self, f: f64, df: f64, ddf: f64) -> Jet2 {
        let outer = &self.g * self.g.transpose();
        Jet2 {
            v: f,
            g: &self.g * df,
            h: &self.h * df + outer * ddf,
        }
    }

    pub fn sin(&self) -> Jet2 {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(&self) -> Jet2 {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(&self) -> Jet2 {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(&self) -> Jet2 {
        let u = self.v;
        self.chain(u.ln(), 1.0 / u, -1.0 / (u * u))
    }

    pub fn sqrt(&self) -> Jet2 {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * s * s))
    }

    pub fn tanh(&self) -> Jet2 {
        let t = self.v.tanh();
        // d = 1 - t^2, dd = -2 t (1 - t^2)
        let sech2 = 1.0 - t * t;
        self.chain(t, sech2, -2.0 * t * sech2)
    }

    /// Integer power with exact derivative propagation. Supports negative
    /// exponents away from zero.
    pub fn powi(&self, p: i32) -> Jet2 {
        match p {
            0 => Jet2::constant(self.nvars(), 1.0),
            1 => self.clone(),
            _ => {
                let u = self.v;
                let f = u.powi(p);
                let df = f64::from(p) * u.powi(p - 1);
                let ddf = f64::from(p) * f64::from(p - 1) * u.powi(p - 2);
                self.chain(f, df, ddf)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd2(f: impl Fn(f64) -> f64, x: f64, h: f64) -> (f64, f64) {
        let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
        let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        (d1, d2)
    }

    #[test]
    fn product_rule_matches_finite_differences() {
        let f = |x: f64| (x.sin() * x.exp()) / (1.0 + x * x);
        let x0 = 0.7;
        let j = {
            let x = Jet2::variable(1, 0, x0);
            let one = Jet2::constant(1, 1.0);
            x.sin().mul(&x.exp()).div(&one.add(&x.mul(&x)))
        };
        let (d1, d2) = fd2(f, x0, 1e-5);
        assert_relative_eq!(j.v, f(x0), max_relative = 1e-14);
        assert_relative_eq!(j.g[0], d1, max_relative = 1e-8);
        assert_relative_eq!(j.h[(0, 0)], d2, max_relative = 1e-5);
    }

    #[test]
    fn mixed_partials_symmetric() {
        // f(x, y) = sin(x y) + x^3 y
        let x0 = 0.4;
        let y0 = -1.3;
        let x = Jet2::variable(2, 0, x0);
        let y = Jet2::variable(2, 1, y0);
        let j = x.mul(&y).sin().add(&x.powi(3).mul(&y));
        assert_relative_eq!(j.h[(0, 1)], j.h[(1, 0)], max_relative = 1e-14);
        // d2/dxdy [sin(xy) + x^3 y] = cos(xy) - xy sin(xy) + 3 x^2
        let analytic = (x0 * y0).cos() - x0 * y0 * (x0 * y0).sin() + 3.0 * x0 * x0;
        assert_relative_eq!(j.h[(0, 1)], analytic, max_relative = 1e-12);
    }

    #[test]
    fn powi_handles_zero_base_square() {
        let x = Jet2::variable(1, 0, 0.0);
        let j = x.powi(2);
        assert_eq!(j.v, 0.0);
        assert_eq!(j.g[0], 0.0);
        assert_eq!(j.h[(0, 0)], 2.0);
    }
}
