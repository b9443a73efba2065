//! Scalar fields on (an optional torus factor times) the chart, with exact
//! first and second derivatives from the dual-number evaluator.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::expr::Expr;
use crate::jet::Jet2;

/// A scalar expression in `phi1..phik` and `x1..xm` together with the
/// dimensions it is evaluated against. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub expr: Expr,
    pub k: usize,
    pub m: usize,
}

/// Value, x-gradient and x-Hessian of a scalar field at a point.
#[derive(Debug, Clone)]
pub struct ScalarJet {
    pub value: f64,
    pub grad_x: DVector<f64>,
    pub hess_x: DMatrix<f64>,
}

impl ScalarField {
    pub fn new(expr: Expr, k: usize, m: usize) -> Result<Self> {
        let (pmax, xmax) = expr.var_bounds();
        if pmax > k || xmax > m {
            return Err(crate::error::Error::ProblemFile(format!(
                "expression references phi{pmax} / x{xmax} but dims are k={k}, m={m}"
            )));
        }
        Ok(ScalarField { expr, k, m })
    }

    /// Expression in `x` only.
    pub fn spatial(expr: Expr, m: usize) -> Result<Self> {
        Self::new(expr, 0, m)
    }

    pub fn value(&self, phi: &[f64], x: &[f64]) -> Result<f64> {
        self.expr.eval(phi, x)
    }

    /// Value, gradient and Hessian with respect to `x`; `phi` held fixed.
    pub fn jet_x(&self, phi: &[f64], x: &[f64]) -> Result<ScalarJet> {
        let n = self.m;
        let phi_jets: Vec<Jet2> = phi.iter().map(|&p| Jet2::constant(n, p)).collect();
        let x_jets: Vec<Jet2> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet2::variable(n, i, v))
            .collect();
        let j = self.expr.eval_jet(&phi_jets, &x_jets, n)?;
        Ok(ScalarJet {
            value: j.v,
            grad_x: j.g,
            hess_x: j.h,
        })
    }

    /// Full jet over (phi, x): returns the joint gradient and Hessian with phi
    /// variables first. Used for mixed phi/x derivatives.
    pub fn jet_full(&self, phi: &[f64], x: &[f64]) -> Result<Jet2> {
        let n = self.k + self.m;
        let phi_jets: Vec<Jet2> = phi
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet2::variable(n, i, v))
            .collect();
        let x_jets: Vec<Jet2> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet2::variable(n, self.k + i, v))
            .collect();
        self.expr.eval_jet(&phi_jets, &x_jets, n)
    }

    /// Directional derivative of the x-gradient along `omega` in phi, i.e. the
    /// mixed derivative block H[phi, x] contracted with omega.
    pub fn dphi_of_grad_x(&self, phi: &[f64], x: &[f64], omega: &[f64]) -> Result<DVector<f64>> {
        let j = self.jet_full(phi, x)?;
        let mut out = DVector::zeros(self.m);
        for i in 0..self.m {
            let mut acc = 0.0;
            for (a, &w) in omega.iter().enumerate() {
                acc += j.h[(a, self.k + i)] * w;
            }
            out[i] = acc;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use approx::assert_relative_eq;

    #[test]
    fn bowl_jet() {
        let f = ScalarField::new(parse_expression("x1^2/2 + x2^2/2").unwrap(), 0, 2).unwrap();
        let j = f.jet_x(&[], &[0.3, 0.4]).unwrap();
        assert_relative_eq!(j.value, 0.125);
        assert_relative_eq!(j.grad_x[0], 0.3);
        assert_relative_eq!(j.grad_x[1], 0.4);
        assert_relative_eq!(j.hess_x[(0, 0)], 1.0);
        assert_relative_eq!(j.hess_x[(1, 1)], 1.0);
        assert_relative_eq!(j.hess_x[(0, 1)], 0.0);
    }

    #[test]
    fn mixed_derivative_along_omega() {
        // d/dx1 of cos(phi1)*x1 is cos(phi1); its omega-directional phi
        // derivative is -omega1 sin(phi1).
        let f = ScalarField::new(parse_expression("cos(phi1)*x1").unwrap(), 2, 2).unwrap();
        let omega = [1.0, std::f64::consts::SQRT_2];
        let at0 = f.dphi_of_grad_x(&[0.0, 0.0], &[0.5, 0.5], &omega).unwrap();
        assert_relative_eq!(at0[0], 0.0, epsilon = 1e-14);
        let at_half_pi = f
            .dphi_of_grad_x(&[std::f64::consts::FRAC_PI_2, 0.0], &[0.5, 0.5], &omega)
            .unwrap();
        assert_relative_eq!(at_half_pi[0], -1.0, max_relative = 1e-14);
    }

    #[test]
    fn ad_matches_finite_differences_on_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let f = ScalarField::new(
            parse_expression("sin(x1*x2) + exp(x1/4) + cos(phi1)*x2^3").unwrap(),
            1,
            2,
        )
        .unwrap();
        for _ in 0..100 {
            let phi = [rng.gen_range(0.0..std::f64::consts::TAU)];
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let j = f.jet_x(&phi, &x).unwrap();
            let h = 1e-5;
            for d in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                let fd =
                    (f.value(&phi, &xp).unwrap() - f.value(&phi, &xm).unwrap()) / (2.0 * h);
                let scale = fd.abs().max(1.0);
                assert!(
                    (j.grad_x[d] - fd).abs() / scale <= 1e-6,
                    "grad mismatch: {} vs {}",
                    j.grad_x[d],
                    fd
                );
            }
        }
    }
}
