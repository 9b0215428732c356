//! Nonlinear expression trees.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{distance_to_union, IntervalBox};
use crate::space::Value;

/// Domain fault raised while evaluating an expression.
///
/// Faults are never treated as "satisfied": the checker reports them and
/// fails safe.
#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum EvalFault {
    #[error("division by zero")]
    DivisionByZero,
    #[error("zero raised to a negative power")]
    ZeroToNegativePower,
    #[error("non-finite result from {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Func {
    Abs,
    Sin,
    Cos,
    Exp,
    Min,
    Max,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "abs" => Func::Abs,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    /// Required argument count; `None` means "two or more".
    pub fn arity(self) -> Option<usize> {
        match self {
            Func::Abs | Func::Sin | Func::Cos | Func::Exp => Some(1),
            Func::Min | Func::Max => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    /// Positional variable reference.
    Var(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    /// Euclidean distance from the point `args` to a union of boxes.
    DistUnion {
        args: Vec<Expr>,
        boxes: Vec<IntervalBox>,
    },
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn eval(&self, values: &[Value]) -> Result<f64, EvalFault> {
        let out = match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => values[*i].as_f64(),
            Expr::Neg(e) => -e.eval(values)?,
            Expr::Binary(op, l, r) => {
                let a = l.eval(values)?;
                let b = r.eval(values)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalFault::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        if a == 0.0 && b < 0.0 {
                            return Err(EvalFault::ZeroToNegativePower);
                        }
                        a.powf(b)
                    }
                }
            }
            Expr::Call(f, args) => {
                let first = args[0].eval(values)?;
                match f {
                    Func::Abs => first.abs(),
                    Func::Sin => first.sin(),
                    Func::Cos => first.cos(),
                    Func::Exp => first.exp(),
                    Func::Min | Func::Max => {
                        let mut acc = first;
                        for a in &args[1..] {
                            let x = a.eval(values)?;
                            acc = if *f == Func::Min { acc.min(x) } else { acc.max(x) };
                        }
                        acc
                    }
                }
            }
            Expr::DistUnion { args, boxes } => {
                let point = args.iter().map(|a| a.eval(values)).collect::<Result<Vec<_>, _>>()?;
                distance_to_union(&point, boxes)
            }
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(EvalFault::NonFinite(self.describe_op()))
        }
    }

    fn describe_op(&self) -> String {
        match self {
            Expr::Const(_) => "constant".into(),
            Expr::Var(_) => "variable".into(),
            Expr::Neg(_) => "negation".into(),
            Expr::Binary(op, ..) => format!("`{}`", op.symbol()),
            Expr::Call(f, _) => format!("`{}`", f.name()),
            Expr::DistUnion { .. } => "`dist_union`".into(),
        }
    }

    /// Visits every variable index referenced by the expression.
    pub fn for_each_var(&self, f: &mut impl FnMut(usize)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(i) => f(*i),
            Expr::Neg(e) => e.for_each_var(f),
            Expr::Binary(_, l, r) => {
                l.for_each_var(f);
                r.for_each_var(f);
            }
            Expr::Call(_, args) | Expr::DistUnion { args, .. } => args.iter().for_each(|a| a.for_each_var(f)),
        }
    }

    /// Rewrites the expression as `sum(coeffs[i] * var_i) + constant`, or
    /// `None` when it is not affine.
    pub fn linearize(&self, n_vars: usize) -> Option<(Vec<f64>, f64)> {
        match self {
            Expr::Const(c) => Some((vec![0.0; n_vars], *c)),
            Expr::Var(i) => {
                let mut coeffs = vec![0.0; n_vars];
                coeffs[*i] = 1.0;
                Some((coeffs, 0.0))
            }
            Expr::Neg(e) => {
                let (c, k) = e.linearize(n_vars)?;
                Some((c.into_iter().map(|x| -x).collect(), -k))
            }
            Expr::Binary(op, l, r) => {
                let (lc, lk) = l.linearize(n_vars)?;
                let (rc, rk) = r.linearize(n_vars)?;
                let l_const = lc.iter().all(|&x| x == 0.0);
                let r_const = rc.iter().all(|&x| x == 0.0);
                match op {
                    BinOp::Add => Some((lc.iter().zip(&rc).map(|(a, b)| a + b).collect(), lk + rk)),
                    BinOp::Sub => Some((lc.iter().zip(&rc).map(|(a, b)| a - b).collect(), lk - rk)),
                    BinOp::Mul if r_const => Some((lc.iter().map(|a| a * rk).collect(), lk * rk)),
                    BinOp::Mul if l_const => Some((rc.iter().map(|b| b * lk).collect(), lk * rk)),
                    BinOp::Div if r_const && rk != 0.0 => Some((lc.iter().map(|a| a / rk).collect(), lk / rk)),
                    BinOp::Pow if l_const && r_const => {
                        let v = lk.powf(rk);
                        v.is_finite().then(|| (vec![0.0; n_vars], v))
                    }
                    _ => None,
                }
            }
            Expr::Call(..) | Expr::DistUnion { .. } => None,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "${i}"),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Expr::DistUnion { args, boxes } => {
                write!(f, "dist_union(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, "; {} boxes)", boxes.len())
            }
        }
    }
}
