use std::f64::consts::PI;

use thiserror::Error;

use super::ast::{BinOp, Expr, Func, SymbolTable};
use super::dual::Dual2;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("point has {found} entries, expected {expected}")]
    PointLength { expected: usize, found: usize },
    #[error("{found} parameter values supplied, expected {expected}")]
    ParamLength { expected: usize, found: usize },
    #[error("domain error in {op} at node #{node} (value {value})")]
    Domain {
        op: &'static str,
        /// Pre-order index of the offending node.
        node: usize,
        value: f64,
    },
}

impl EvalError {
    /// Attach the printed offending sub-expression for diagnostics.
    pub fn describe(&self, expr: &Expr, table: &SymbolTable) -> String {
        match self {
            EvalError::Domain { node, .. } => match node_at(expr, *node) {
                Some(sub) => format!("{self}: `{}`", sub.display(table)),
                None => self.to_string(),
            },
            _ => self.to_string(),
        }
    }
}

/// Node with the given pre-order index.
pub fn node_at(expr: &Expr, index: usize) -> Option<&Expr> {
    fn walk<'a>(e: &'a Expr, target: usize, next: &mut usize) -> Option<&'a Expr> {
        if *next == target {
            return Some(e);
        }
        *next += 1;
        match e {
            Expr::Neg(a) | Expr::Call { arg: a, .. } => walk(a, target, next),
            Expr::Binary { lhs, rhs, .. } => {
                walk(lhs, target, next).or_else(|| walk(rhs, target, next))
            }
            _ => None,
        }
    }
    walk(expr, index, &mut 0)
}

/// Numeric domain shared by value-only and jet (`Dual2`) evaluation.
trait Scalar: Sized {
    fn constant(v: f64, n: usize) -> Self;
    fn var(v: f64, index: usize, n: usize) -> Self;
    fn value(&self) -> f64;
    fn is_const(&self) -> bool;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn recip(&self) -> Self;
    fn powi(&self, n: i32) -> Self;
    fn func(&self, f: Func) -> Self;
    fn finite(&self) -> bool;
}

/// Value-only scalar that remembers whether it depends on a variable, so the
/// `^` branch chosen matches the jet evaluation.
#[derive(Clone, Copy)]
struct Plain {
    v: f64,
    varying: bool,
}

impl Plain {
    fn lift(&self, v: f64) -> Self {
        Plain {
            v,
            varying: self.varying,
        }
    }
    fn join(&self, o: &Self, v: f64) -> Self {
        Plain {
            v,
            varying: self.varying || o.varying,
        }
    }
}

impl Scalar for Plain {
    fn constant(v: f64, _: usize) -> Self {
        Plain { v, varying: false }
    }
    fn var(v: f64, _: usize, _: usize) -> Self {
        Plain { v, varying: true }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn is_const(&self) -> bool {
        !self.varying
    }
    fn add(&self, o: &Self) -> Self {
        self.join(o, self.v + o.v)
    }
    fn sub(&self, o: &Self) -> Self {
        self.join(o, self.v - o.v)
    }
    fn mul(&self, o: &Self) -> Self {
        self.join(o, self.v * o.v)
    }
    fn neg(&self) -> Self {
        self.lift(-self.v)
    }
    fn recip(&self) -> Self {
        self.lift(1.0 / self.v)
    }
    fn powi(&self, n: i32) -> Self {
        self.lift(self.v.powi(n))
    }
    fn func(&self, f: Func) -> Self {
        let v = self.v;
        self.lift(match f {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
        })
    }
    fn finite(&self) -> bool {
        self.v.is_finite()
    }
}

impl Scalar for Dual2 {
    fn constant(v: f64, n: usize) -> Self {
        Dual2::constant(v, n)
    }
    fn var(v: f64, index: usize, n: usize) -> Self {
        Dual2::variable(v, index, n)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn is_const(&self) -> bool {
        self.is_constant()
    }
    fn add(&self, o: &Self) -> Self {
        Dual2::add(self, o)
    }
    fn sub(&self, o: &Self) -> Self {
        Dual2::sub(self, o)
    }
    fn mul(&self, o: &Self) -> Self {
        Dual2::mul(self, o)
    }
    fn neg(&self) -> Self {
        Dual2::neg(self)
    }
    fn recip(&self) -> Self {
        Dual2::recip(self)
    }
    fn powi(&self, n: i32) -> Self {
        Dual2::powi(self, n)
    }
    fn func(&self, f: Func) -> Self {
        match f {
            Func::Sin => self.sin(),
            Func::Cos => self.cos(),
            Func::Tan => self.tan(),
            Func::Exp => self.exp(),
            Func::Log => self.ln(),
            Func::Sqrt => self.sqrt(),
        }
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

struct Evaluator<'a> {
    point: &'a [f64],
    params: &'a [f64],
    n: usize,
    next_node: usize,
}

fn integral_exponent(v: f64) -> Option<i32> {
    (v.fract() == 0.0 && v.abs() <= i32::MAX as f64).then_some(v as i32)
}

impl Evaluator<'_> {
    fn domain<S>(&self, op: &'static str, node: usize, value: f64) -> Result<S, EvalError> {
        Err(EvalError::Domain { op, node, value })
    }

    fn eval<S: Scalar>(&mut self, e: &Expr) -> Result<S, EvalError> {
        let node = self.next_node;
        self.next_node += 1;
        let out = match e {
            Expr::Const(c) => S::constant(*c, self.n),
            Expr::Pi => S::constant(PI, self.n),
            Expr::Var(i) => S::var(self.point[*i], *i, self.n),
            Expr::Param(i) => S::constant(self.params[*i], self.n),
            Expr::Neg(a) => self.eval::<S>(a)?.neg(),
            Expr::Binary { op, lhs, rhs } => {
                let a: S = self.eval(lhs)?;
                let b: S = self.eval(rhs)?;
                match op {
                    BinOp::Add => a.add(&b),
                    BinOp::Sub => a.sub(&b),
                    BinOp::Mul => a.mul(&b),
                    BinOp::Div => {
                        if b.value() == 0.0 {
                            return self.domain("division", node, b.value());
                        }
                        a.mul(&b.recip())
                    }
                    BinOp::Pow => self.pow(a, b, node)?,
                }
            }
            Expr::Call { func, arg } => {
                let a: S = self.eval(arg)?;
                let v = a.value();
                match func {
                    Func::Log if v <= 0.0 => return self.domain("log", node, v),
                    Func::Sqrt if v <= 0.0 => return self.domain("sqrt", node, v),
                    _ => {}
                }
                a.func(*func)
            }
        };
        if !out.finite() {
            return self.domain("non-finite result", node, out.value());
        }
        Ok(out)
    }

    fn pow<S: Scalar>(&self, base: S, exponent: S, node: usize) -> Result<S, EvalError> {
        let (bv, ev) = (base.value(), exponent.value());
        if exponent.is_const() {
            if let Some(k) = integral_exponent(ev) {
                if bv == 0.0 && k < 0 {
                    return self.domain("0^negative", node, bv);
                }
                return Ok(base.powi(k));
            }
        }
        if bv <= 0.0 {
            return self.domain("power with non-integer exponent", node, bv);
        }
        Ok(base.func(Func::Log).mul(&exponent).func(Func::Exp))
    }
}

fn check_lengths(expr_table: &SymbolTable, point: &[f64], params: &[f64]) -> Result<(), EvalError> {
    if point.len() != expr_table.num_variables() {
        return Err(EvalError::PointLength {
            expected: expr_table.num_variables(),
            found: point.len(),
        });
    }
    if params.len() != expr_table.params().len() {
        return Err(EvalError::ParamLength {
            expected: expr_table.params().len(),
            found: params.len(),
        });
    }
    Ok(())
}

/// Value, gradient and Hessian of `expr` at `point`.
pub fn eval2(
    expr: &Expr,
    table: &SymbolTable,
    point: &[f64],
    params: &[f64],
) -> Result<Dual2, EvalError> {
    check_lengths(table, point, params)?;
    Evaluator {
        point,
        params,
        n: point.len(),
        next_node: 0,
    }
    .eval(expr)
}

/// Value of `expr` at `point`, without derivatives.
pub fn eval_value(
    expr: &Expr,
    table: &SymbolTable,
    point: &[f64],
    params: &[f64],
) -> Result<f64, EvalError> {
    check_lengths(table, point, params)?;
    Evaluator {
        point,
        params,
        n: point.len(),
        next_node: 0,
    }
    .eval::<Plain>(expr)
    .map(|p| p.v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn one(coord: &str) -> SymbolTable {
        SymbolTable::new(&[coord], &[]).unwrap()
    }

    #[test]
    fn kinetic_quadratic() {
        let t = one("x");
        let e = parse("x_dot^2/2", &t).unwrap();
        let d = eval2(&e, &t, &[0.0, 3.0], &[]).unwrap();
        assert_eq!(d.value, 4.5);
        assert_eq!(d.gradient.as_slice(), &[0.0, 3.0]);
        assert_eq!(d.hessian[(1, 1)], 1.0);
    }

    #[test]
    fn sine_at_zero() {
        let t = SymbolTable::positions_only(&["q"], &[]).unwrap();
        let e = parse("sin(q)", &t).unwrap();
        let d = eval2(&e, &t, &[0.0], &[]).unwrap();
        assert_eq!(d.value, 0.0);
        assert_eq!(d.gradient[0], 1.0);
        assert_eq!(d.hessian[(0, 0)], 0.0);
    }

    #[test]
    fn domain_errors_locate_node() {
        let t = one("q");
        let e = parse("1 + log(q)", &t).unwrap();
        let err = eval2(&e, &t, &[-1.0, 0.0], &[]).unwrap_err();
        assert!(matches!(err, EvalError::Domain { op: "log", node: 2, .. }));
        assert!(err.describe(&e, &t).contains("log(q)"));

        let e = parse("1/q", &t).unwrap();
        assert!(matches!(
            eval2(&e, &t, &[0.0, 0.0], &[]),
            Err(EvalError::Domain { op: "division", .. })
        ));
        let e = parse("q^-2", &t).unwrap();
        assert!(matches!(
            eval2(&e, &t, &[0.0, 0.0], &[]),
            Err(EvalError::Domain { op: "0^negative", .. })
        ));
        let e = parse("q^0.5", &t).unwrap();
        assert!(matches!(
            eval2(&e, &t, &[-2.0, 0.0], &[]),
            Err(EvalError::Domain { .. })
        ));
    }

    #[test]
    fn integer_exponents_allow_negative_base() {
        let t = one("q");
        let e = parse("q_dot^4/4", &t).unwrap();
        let d = eval2(&e, &t, &[0.0, -2.0], &[]).unwrap();
        assert_eq!(d.value, 4.0);
        assert_eq!(d.gradient[1], -8.0);
        assert_eq!(d.hessian[(1, 1)], 12.0);
        // a constant-valued exponent expression still takes the integer path
        let e = parse("q^(1+1)", &t).unwrap();
        assert_eq!(eval2(&e, &t, &[-3.0, 0.0], &[]).unwrap().value, 9.0);
    }

    #[test]
    fn variable_exponent_uses_exp_log() {
        let t = one("q");
        let e = parse("2^q", &t).unwrap();
        let d = eval2(&e, &t, &[3.0, 0.0], &[]).unwrap();
        assert!((d.value - 8.0).abs() < 1e-12);
        assert!((d.gradient[0] - 8.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let t = one("q");
        let e = parse("q", &t).unwrap();
        assert_eq!(
            eval2(&e, &t, &[1.0], &[]),
            Err(EvalError::PointLength {
                expected: 2,
                found: 1
            })
        );
    }

    #[test]
    fn value_only_agrees_with_jet() {
        let t = SymbolTable::new(&["q"], &[("k", 0.3)]).unwrap();
        let e = parse("exp(-k*q)*cos(q_dot) + sqrt(q^2 + 1) - tan(q/4)", &t).unwrap();
        let p = [0.7, -1.2];
        let v = eval_value(&e, &t, &p, &[0.3]).unwrap();
        let d = eval2(&e, &t, &p, &[0.3]).unwrap();
        assert_eq!(v, d.value);
    }
}
