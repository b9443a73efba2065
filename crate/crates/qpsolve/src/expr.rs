//! The scalar expression language used in problem files.
//!
//! Grammar (standard precedence, left associative except `^`):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := factor (('*' | '/') factor)*
//! factor  := '-' factor | power
//! power   := atom ('^' integer)?
//! atom    := number | ident '(' expr ')' | ident | '(' expr ')'
//! ```
//!
//! Variables are `phi1..phik` and `x1..xm`; the exponent of `^` must be a
//! constant integer literal. Error messages carry byte offsets.

use crate::error::{Error, Result};
use crate::jet::Jet2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Torus angle variable, zero-based index.
    Phi(usize),
    /// Chart coordinate variable, zero-based index.
    X(usize),
    Unary(UnaryFn, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// Integer power with constant exponent.
    Pow(Box<Expr>, i32),
}

impl Expr {
    /// Plain evaluation. `phi` has length `k`, `x` has length `m`.
    pub fn eval(&self, phi: &[f64], x: &[f64]) -> Result<f64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Phi(i) => phi[*i],
            Expr::X(i) => x[*i],
            Expr::Unary(f, a) => {
                let v = a.eval(phi, x)?;
                apply_unary(*f, v, || format!("phi={phi:?}, x={x:?}"))?
            }
            Expr::Bin(op, a, b) => {
                let va = a.eval(phi, x)?;
                let vb = b.eval(phi, x)?;
                match op {
                    BinOp::Add => va + vb,
                    BinOp::Sub => va - vb,
                    BinOp::Mul => va * vb,
                    BinOp::Div => va / vb,
                }
            }
            Expr::Pow(a, p) => a.eval(phi, x)?.powi(*p),
        })
    }

    /// Jet evaluation: variables listed in `vars` are seeded as independent,
    /// everything else is held constant. `vars[i]` gives the jet slot of the
    /// corresponding variable.
    pub fn eval_jet(&self, phi: &[Jet2], x: &[Jet2], n: usize) -> Result<Jet2> {
        Ok(match self {
            Expr::Const(c) => Jet2::constant(n, *c),
            Expr::Phi(i) => phi[*i].clone(),
            Expr::X(i) => x[*i].clone(),
            Expr::Unary(f, a) => {
                let j = a.eval_jet(phi, x, n)?;
                match f {
                    UnaryFn::Neg => j.neg(),
                    UnaryFn::Sin => j.sin(),
                    UnaryFn::Cos => j.cos(),
                    UnaryFn::Exp => j.exp(),
                    UnaryFn::Log => {
                        if j.v <= 0.0 {
                            return Err(domain_err("log", j.v));
                        }
                        j.ln()
                    }
                    UnaryFn::Sqrt => {
                        if j.v < 0.0 {
                            return Err(domain_err("sqrt", j.v));
                        }
                        j.sqrt()
                    }
                    UnaryFn::Tanh => j.tanh(),
                }
            }
            Expr::Bin(op, a, b) => {
                let ja = a.eval_jet(phi, x, n)?;
                let jb = b.eval_jet(phi, x, n)?;
                match op {
                    BinOp::Add => ja.add(&jb),
                    BinOp::Sub => ja.sub(&jb),
                    BinOp::Mul => ja.mul(&jb),
                    BinOp::Div => {
                        if jb.v == 0.0 {
                            return Err(domain_err("division", 0.0));
                        }
                        ja.div(&jb)
                    }
                }
            }
            Expr::Pow(a, p) => {
                let j = a.eval_jet(phi, x, n)?;
                if *p < 0 && j.v == 0.0 {
                    return Err(domain_err("negative power", 0.0));
                }
                j.powi(*p)
            }
        })
    }

    /// Highest phi / x variable indices referenced (one past), for validation.
    pub fn var_bounds(&self) -> (usize, usize) {
        match self {
            Expr::Const(_) => (0, 0),
            Expr::Phi(i) => (i + 1, 0),
            Expr::X(i) => (0, i + 1),
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.var_bounds(),
            Expr::Bin(_, a, b) => {
                let (pa, xa) = a.var_bounds();
                let (pb, xb) = b.var_bounds();
                (pa.max(pb), xa.max(xb))
            }
        }
    }
}

fn domain_err(what: &str, v: f64) -> Error {
    Error::EvalDomain {
        what: what.to_string(),
        point: format!("{v}"),
        message: "argument outside function domain".to_string(),
    }
}

fn apply_unary(f: UnaryFn, v: f64, point: impl Fn() -> String) -> Result<f64> {
    Ok(match f {
        UnaryFn::Neg => -v,
        UnaryFn::Sin => v.sin(),
        UnaryFn::Cos => v.cos(),
        UnaryFn::Exp => v.exp(),
        UnaryFn::Log => {
            if v <= 0.0 {
                return Err(Error::EvalDomain {
                    what: "log".into(),
                    point: point(),
                    message: format!("log of nonpositive value {v}"),
                });
            }
            v.ln()
        }
        UnaryFn::Sqrt => {
            if v < 0.0 {
                return Err(Error::EvalDomain {
                    what: "sqrt".into(),
                    point: point(),
                    message: format!("sqrt of negative value {v}"),
                });
            }
            v.sqrt()
        }
        UnaryFn::Tanh => v.tanh(),
    })
}

pub fn parse_expression(text: &str) -> Result<Expr> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(Error::Syntax {
            offset: p.pos,
            message: format!("unexpected trailing input `{}`", p.rest()),
        });
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn rest(&self) -> String {
        String::from_utf8_lossy(&self.src[self.pos..]).into_owned()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Expr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Expr::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        self.skip_ws();
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(Expr::Unary(UnaryFn::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let mut sign = 1i32;
            if self.peek() == Some(b'-') {
                sign = -1;
                self.pos += 1;
            }
            let start = self.pos;
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
            if self.pos == start {
                return Err(Error::Syntax {
                    offset: start,
                    message: "exponent must be a constant integer".to_string(),
                });
            }
            let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let p: i32 = digits.parse().map_err(|_| Error::Syntax {
                offset: start,
                message: "integer exponent out of range".to_string(),
            })?;
            return Ok(Expr::Pow(Box::new(base), sign * p));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(b')') {
                    return Err(Error::Syntax {
                        offset: self.pos,
                        message: "expected `)`".to_string(),
                    });
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            _ => Err(Error::Syntax {
                offset: self.pos,
                message: "expected expression".to_string(),
            }),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9' | b'.')) {
            self.pos += 1;
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let v: f64 = text.parse().map_err(|_| Error::Syntax {
            offset: start,
            message: format!("invalid number literal `{text}`"),
        })?;
        Ok(Expr::Const(v))
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        self.skip_ws();
        if self.peek() == Some(b'(') {
            let f = match name.as_str() {
                "sin" => UnaryFn::Sin,
                "cos" => UnaryFn::Cos,
                "exp" => UnaryFn::Exp,
                "log" | "ln" => UnaryFn::Log,
                "sqrt" => UnaryFn::Sqrt,
                "tanh" => UnaryFn::Tanh,
                _ => {
                    return Err(Error::UnknownIdentifier {
                        name,
                        offset: start,
                    })
                }
            };
            self.pos += 1;
            let arg = self.expr()?;
            self.skip_ws();
            if self.peek() != Some(b')') {
                return Err(Error::Syntax {
                    offset: self.pos,
                    message: "expected `)` after function argument".to_string(),
                });
            }
            self.pos += 1;
            return Ok(Expr::Unary(f, Box::new(arg)));
        }
        if let Some(idx) = name.strip_prefix("phi").and_then(|s| s.parse::<usize>().ok()) {
            if idx >= 1 {
                return Ok(Expr::Phi(idx - 1));
            }
        }
        if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            if idx >= 1 {
                return Ok(Expr::X(idx - 1));
            }
        }
        if name == "pi" {
            return Ok(Expr::Const(std::f64::consts::PI));
        }
        Err(Error::UnknownIdentifier {
            name,
            offset: start,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_bowl() {
        let e = parse_expression("x1^2/2 + x2^2/2").unwrap();
        assert_relative_eq!(e.eval(&[], &[0.3, 0.4]).unwrap(), 0.125);
    }

    #[test]
    fn torus_forcing() {
        let e = parse_expression("0.3*cos(phi1)").unwrap();
        assert_relative_eq!(e.eval(&[0.0, 1.0], &[]).unwrap(), 0.3);
    }

    #[test]
    fn syntax_error_carries_offset() {
        let err = parse_expression("x1 +").unwrap_err();
        match err {
            crate::error::Error::Syntax { offset, .. } => assert_eq!(offset, 4),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = parse_expression("-x1^2 + 2*3").unwrap();
        // -(x1^2) + 6
        assert_relative_eq!(e.eval(&[], &[2.0]).unwrap(), 2.0);
    }

    #[test]
    fn unknown_identifier() {
        assert!(matches!(
            parse_expression("foo(x1)"),
            Err(crate::error::Error::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn nested_functions() {
        let e = parse_expression("exp(log(sqrt(x1^2)))").unwrap();
        assert_relative_eq!(e.eval(&[], &[3.0]).unwrap(), 3.0, max_relative = 1e-14);
    }
}
