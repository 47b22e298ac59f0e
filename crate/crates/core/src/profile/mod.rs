//! One-variable expression language for radial profiles.
//!
//! Profiles such as the base metric profile `sigma(t)`, the warp `f(t)` and
//! fiber-volume functions `V(t)` are written as small expressions in the
//! variable `t`:
//!
//! ```text
//! exp(-t^2)      2*sinh(t)+1      pow(t, 3) / (1 + t)
//! ```
//!
//! Precedence, tightest first: function application and parentheses, `^`
//! (right-associative), unary minus, `*` `/`, then `+` `-`. So `-t^2` is
//! `-(t^2)` and `2^-t` is `2^(-t)`.
//!
//! [`ProfileExpr::eval_log`] evaluates `log |e(t)|` without forming `e(t)`
//! when intermediate values leave the normal `f64` range, which is what
//! makes Gaussian warps raised to large powers usable downstream.

mod eval;
mod parser;

use std::fmt;
use std::str::FromStr;

pub use eval::EvalError;
pub use parser::ParseError;

/// Binary operators. `Pow` covers both `a^b` and `pow(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// One-argument built-in functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            _ => return None,
        })
    }
}

/// Expression tree over the single variable `t`.
///
/// Trees produced by [`ProfileExpr::parse`] never contain negative constants;
/// a leading minus is always a [`ProfileExpr::Neg`] node.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileExpr {
    Const(f64),
    Var,
    Neg(Box<ProfileExpr>),
    Binary(BinaryOp, Box<ProfileExpr>, Box<ProfileExpr>),
    Call(Func, Box<ProfileExpr>),
}

impl ProfileExpr {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        parser::parse(text)
    }

    pub fn constant(c: f64) -> Self {
        ProfileExpr::Const(c)
    }

    pub fn binary(op: BinaryOp, lhs: ProfileExpr, rhs: ProfileExpr) -> Self {
        ProfileExpr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn call(func: Func, arg: ProfileExpr) -> Self {
        ProfileExpr::Call(func, Box::new(arg))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(arg: ProfileExpr) -> Self {
        ProfileExpr::Neg(Box::new(arg))
    }

    /// Evaluates the expression at `t`.
    pub fn eval(&self, t: f64) -> Result<f64, EvalError> {
        eval::eval(self, t)
    }

    /// Returns `log(self(t))`, requiring a strictly positive value.
    pub fn eval_log(&self, t: f64) -> Result<f64, EvalError> {
        let v = eval::eval_signed_log(self, t)?;
        if v.sign > 0 {
            Ok(v.log_abs)
        } else {
            Err(EvalError::NonPositive { t })
        }
    }

    /// Returns the tree for `c * self`.
    pub fn scaled(&self, c: f64) -> Self {
        ProfileExpr::binary(BinaryOp::Mul, ProfileExpr::Const(c), self.clone())
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            ProfileExpr::Const(_) | ProfileExpr::Var => 1,
            ProfileExpr::Neg(a) | ProfileExpr::Call(_, a) => 1 + a.size(),
            ProfileExpr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            ProfileExpr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            ProfileExpr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            ProfileExpr::Neg(_) => 3,
            ProfileExpr::Binary(BinaryOp::Pow, ..) => 4,
            ProfileExpr::Const(c) if c.is_sign_negative() => 0,
            _ => 5,
        }
    }
}

impl FromStr for ProfileExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProfileExpr::parse(s)
    }
}

fn write_const(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    let a = c.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        write!(f, "{c}")
    } else {
        write!(f, "{c:e}")
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &ProfileExpr, min_prec: u8) -> fmt::Result {
    if child.precedence() < min_prec {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for ProfileExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileExpr::Const(c) => write_const(f, *c),
            ProfileExpr::Var => f.write_str("t"),
            ProfileExpr::Neg(a) => {
                f.write_str("-")?;
                write_child(f, a, 3)
            }
            ProfileExpr::Call(func, a) => write!(f, "{}({a})", func.name()),
            ProfileExpr::Binary(op, a, b) => {
                // left-associative levels need parens on an equal-precedence
                // right operand; `^` is the mirror image
                let (sym, lmin, rmin) = match op {
                    BinaryOp::Add => (" + ", 1, 2),
                    BinaryOp::Sub => (" - ", 1, 2),
                    BinaryOp::Mul => ("*", 2, 3),
                    BinaryOp::Div => ("/", 2, 3),
                    BinaryOp::Pow => ("^", 5, 3),
                };
                write_child(f, a, lmin)?;
                f.write_str(sym)?;
                write_child(f, b, rmin)
            }
        }
    }
}
