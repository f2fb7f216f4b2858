use super::{BinOp, Expr, Expression, Func};
use crate::error::{Error, Result};

/// Value with its gradient with respect to all declared variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub grad: Vec<f64>,
}

impl Dual {
    fn constant(value: f64, dim: usize) -> Self {
        Dual {
            value,
            grad: vec![0.0; dim],
        }
    }

    fn map(self, value: f64, slope: f64) -> Self {
        Dual {
            value,
            grad: self.grad.into_iter().map(|g| slope * g).collect(),
        }
    }

    fn combine(self, other: Dual, value: f64, da: f64, db: f64) -> Self {
        Dual {
            value,
            grad: self
                .grad
                .iter()
                .zip(&other.grad)
                .map(|(a, b)| da * a + db * b)
                .collect(),
        }
    }

    fn is_constant(&self) -> bool {
        self.grad.iter().all(|&g| g == 0.0)
    }
}

impl Expression {
    /// Value at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval_dual(x, false)?.value)
    }

    /// Exact gradient at `x` (forward mode).
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_dual(x, true)?.grad)
    }

    pub fn eval_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = self.eval_dual(x, true)?;
        Ok((d.value, d.grad))
    }

    fn eval_dual(&self, x: &[f64], with_grad: bool) -> Result<Dual> {
        if x.len() != self.arity() {
            return Err(Error::Eval {
                expr: self.to_string(),
                reason: format!("expected {} arguments, got {}", self.arity(), x.len()),
            });
        }
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Eval {
                expr: self.to_string(),
                reason: format!("non-finite argument {bad}"),
            });
        }
        let dim = if with_grad { x.len() } else { 0 };
        self.walk(&self.ast, x, dim)
    }

    fn fail(&self, e: &Expr, reason: impl Into<String>) -> Error {
        Error::Eval {
            expr: self.render(e),
            reason: reason.into(),
        }
    }

    fn walk(&self, e: &Expr, x: &[f64], dim: usize) -> Result<Dual> {
        let out = match e {
            Expr::Num(c) => Dual::constant(*c, dim),
            Expr::Var(i) => {
                let mut d = Dual::constant(x[*i], dim);
                if dim > 0 {
                    d.grad[*i] = 1.0;
                }
                d
            }
            Expr::Neg(a) => {
                let a = self.walk(a, x, dim)?;
                let v = -a.value;
                a.map(v, -1.0)
            }
            Expr::Bin(op, a, b) => {
                let a = self.walk(a, x, dim)?;
                let b = self.walk(b, x, dim)?;
                match op {
                    BinOp::Add => {
                        let v = a.value + b.value;
                        a.combine(b, v, 1.0, 1.0)
                    }
                    BinOp::Sub => {
                        let v = a.value - b.value;
                        a.combine(b, v, 1.0, -1.0)
                    }
                    BinOp::Mul => {
                        let (av, bv) = (a.value, b.value);
                        a.combine(b, av * bv, bv, av)
                    }
                    BinOp::Div => {
                        if b.value == 0.0 {
                            return Err(self.fail(e, "division by zero"));
                        }
                        let (av, bv) = (a.value, b.value);
                        a.combine(b, av / bv, 1.0 / bv, -av / (bv * bv))
                    }
                    BinOp::Pow => self.pow(e, a, b)?,
                }
            }
            Expr::Call(f, a) => {
                let a = self.walk(a, x, dim)?;
                let u = a.value;
                match f {
                    Func::Sin => a.map(u.sin(), u.cos()),
                    Func::Cos => a.map(u.cos(), -u.sin()),
                    Func::Exp => {
                        let v = u.exp();
                        a.map(v, v)
                    }
                    Func::Tanh => {
                        let v = u.tanh();
                        a.map(v, 1.0 - v * v)
                    }
                    Func::Log => {
                        if u <= 0.0 {
                            return Err(self.fail(e, format!("log of non-positive value {u}")));
                        }
                        a.map(u.ln(), 1.0 / u)
                    }
                    Func::Sqrt => {
                        if u < 0.0 || (dim > 0 && u == 0.0) {
                            return Err(self.fail(e, format!("sqrt outside its C¹ domain at {u}")));
                        }
                        let v = u.sqrt();
                        let slope = if v > 0.0 { 0.5 / v } else { 0.0 };
                        a.map(v, slope)
                    }
                }
            }
        };
        if !out.value.is_finite() || out.grad.iter().any(|g| !g.is_finite()) {
            return Err(self.fail(e, "non-finite result"));
        }
        Ok(out)
    }

    fn pow(&self, e: &Expr, base: Dual, exponent: Dual) -> Result<Dual> {
        let (b, p) = (base.value, exponent.value);
        let integral = p.fract() == 0.0 && p.abs() < 1024.0;
        if integral && exponent.is_constant() {
            if b == 0.0 && p < 0.0 {
                return Err(self.fail(e, "zero raised to a negative power"));
            }
            let n = p as i32;
            let value = b.powi(n);
            let slope = if n == 0 { 0.0 } else { p * b.powi(n - 1) };
            return Ok(base.map(value, slope));
        }
        if b <= 0.0 {
            return Err(self.fail(e, format!("non-integer power of non-positive base {b}")));
        }
        let value = b.powf(p);
        Ok(base.combine(exponent, value, p * b.powf(p - 1.0), value * b.ln()))
    }
}
