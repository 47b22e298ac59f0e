use std::f64::consts::LN_2;

use thiserror::Error;

use super::{BinaryOp, Func, ProfileExpr};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error at t = {t}: {what}")]
    Domain { what: &'static str, t: f64 },
    #[error("overflow at t = {t}")]
    Overflow { t: f64 },
    #[error("expression is not positive at t = {t}")]
    NonPositive { t: f64 },
}

fn finite(v: f64, t: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else if v.is_nan() {
        Err(EvalError::Domain {
            what: "undefined result",
            t,
        })
    } else {
        Err(EvalError::Overflow { t })
    }
}

fn pow_checked(a: f64, b: f64, t: f64) -> Result<f64, EvalError> {
    if a == 0.0 && b < 0.0 {
        return Err(EvalError::Domain {
            what: "zero raised to a negative power",
            t,
        });
    }
    if a < 0.0 && b.fract() != 0.0 {
        return Err(EvalError::Domain {
            what: "negative base with non-integer exponent",
            t,
        });
    }
    finite(a.powf(b), t)
}

pub(super) fn eval(e: &ProfileExpr, t: f64) -> Result<f64, EvalError> {
    match e {
        ProfileExpr::Const(c) => Ok(*c),
        ProfileExpr::Var => Ok(t),
        ProfileExpr::Neg(a) => Ok(-eval(a, t)?),
        ProfileExpr::Binary(op, a, b) => {
            let a = eval(a, t)?;
            let b = eval(b, t)?;
            match op {
                BinaryOp::Add => finite(a + b, t),
                BinaryOp::Sub => finite(a - b, t),
                BinaryOp::Mul => finite(a * b, t),
                BinaryOp::Div => {
                    if b == 0.0 {
                        Err(EvalError::Domain {
                            what: "division by zero",
                            t,
                        })
                    } else {
                        finite(a / b, t)
                    }
                }
                BinaryOp::Pow => pow_checked(a, b, t),
            }
        }
        ProfileExpr::Call(func, a) => {
            let a = eval(a, t)?;
            match func {
                Func::Exp => finite(a.exp(), t),
                Func::Log => {
                    if a <= 0.0 {
                        Err(EvalError::Domain {
                            what: "log of a non-positive number",
                            t,
                        })
                    } else {
                        Ok(a.ln())
                    }
                }
                Func::Sqrt => {
                    if a < 0.0 {
                        Err(EvalError::Domain {
                            what: "sqrt of a negative number",
                            t,
                        })
                    } else {
                        Ok(a.sqrt())
                    }
                }
                Func::Sinh => finite(a.sinh(), t),
                Func::Cosh => finite(a.cosh(), t),
            }
        }
    }
}

/// A value stored as `sign * exp(log_abs)`, plus the plain value when that
/// is a finite normal (or zero) `f64`.
#[derive(Debug, Clone, Copy)]
pub(super) struct SignedLog {
    pub(super) sign: i8,
    pub(super) log_abs: f64,
    lin: Option<f64>,
}

impl SignedLog {
    const ZERO: SignedLog = SignedLog {
        sign: 0,
        log_abs: f64::NEG_INFINITY,
        lin: Some(0.0),
    };

    fn from_lin(v: f64) -> Self {
        if v == 0.0 {
            return Self::ZERO;
        }
        SignedLog {
            sign: if v > 0.0 { 1 } else { -1 },
            log_abs: v.abs().ln(),
            lin: v.is_normal().then_some(v),
        }
    }

    fn from_log(sign: i8, log_abs: f64) -> Self {
        if sign == 0 || log_abs == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        let v = f64::from(sign) * log_abs.exp();
        SignedLog {
            sign,
            log_abs,
            lin: v.is_normal().then_some(v),
        }
    }

    fn negated(self) -> Self {
        SignedLog {
            sign: -self.sign,
            log_abs: self.log_abs,
            lin: self.lin.map(|v| -v),
        }
    }

    /// The plain value, or `Overflow` when it is too large for `f64`.
    /// Magnitudes too small to represent come back as zero.
    fn value(self, t: f64) -> Result<f64, EvalError> {
        if let Some(v) = self.lin {
            return Ok(v);
        }
        let v = f64::from(self.sign) * self.log_abs.exp();
        finite(v, t)
    }
}

/// Accepts a linear result only when it is a finite normal number; zeros and
/// subnormals may be the product of underflow and go the structural route.
fn normal(v: f64) -> Option<SignedLog> {
    v.is_normal().then(|| SignedLog::from_lin(v))
}

fn add_signed(a: SignedLog, b: SignedLog) -> SignedLog {
    if a.sign == 0 {
        return b;
    }
    if b.sign == 0 {
        return a;
    }
    if let (Some(x), Some(y)) = (a.lin, b.lin) {
        let v = x + y;
        if v == 0.0 {
            return SignedLog::ZERO;
        }
        if let Some(s) = normal(v) {
            return s;
        }
    }
    let (big, small) = if a.log_abs >= b.log_abs {
        (a, b)
    } else {
        (b, a)
    };
    let d = (small.log_abs - big.log_abs).exp();
    if big.sign == small.sign {
        SignedLog::from_log(big.sign, big.log_abs + d.ln_1p())
    } else if d == 1.0 {
        SignedLog::ZERO
    } else {
        SignedLog::from_log(big.sign, big.log_abs + (-d).ln_1p())
    }
}

fn checked_log(v: f64, t: f64) -> Result<f64, EvalError> {
    if v == f64::INFINITY {
        Err(EvalError::Overflow { t })
    } else {
        Ok(v)
    }
}

pub(super) fn eval_signed_log(e: &ProfileExpr, t: f64) -> Result<SignedLog, EvalError> {
    match e {
        ProfileExpr::Const(c) => Ok(SignedLog::from_lin(*c)),
        ProfileExpr::Var => Ok(SignedLog::from_lin(t)),
        ProfileExpr::Neg(a) => Ok(eval_signed_log(a, t)?.negated()),
        ProfileExpr::Binary(op, a, b) => {
            let a = eval_signed_log(a, t)?;
            let b = eval_signed_log(b, t)?;
            match op {
                BinaryOp::Add => Ok(add_signed(a, b)),
                BinaryOp::Sub => Ok(add_signed(a, b.negated())),
                BinaryOp::Mul => {
                    if let (Some(x), Some(y)) = (a.lin, b.lin) {
                        if let Some(s) = normal(x * y) {
                            return Ok(s);
                        }
                    }
                    if a.sign == 0 || b.sign == 0 {
                        return Ok(SignedLog::ZERO);
                    }
                    Ok(SignedLog::from_log(
                        a.sign * b.sign,
                        checked_log(a.log_abs + b.log_abs, t)?,
                    ))
                }
                BinaryOp::Div => {
                    if b.sign == 0 {
                        return Err(EvalError::Domain {
                            what: "division by zero",
                            t,
                        });
                    }
                    if let (Some(x), Some(y)) = (a.lin, b.lin) {
                        if let Some(s) = normal(x / y) {
                            return Ok(s);
                        }
                    }
                    if a.sign == 0 {
                        return Ok(SignedLog::ZERO);
                    }
                    Ok(SignedLog::from_log(
                        a.sign * b.sign,
                        checked_log(a.log_abs - b.log_abs, t)?,
                    ))
                }
                BinaryOp::Pow => {
                    let exponent = b.value(t)?;
                    if let Some(x) = a.lin {
                        if let Ok(v) = pow_checked(x, exponent, t) {
                            if let Some(s) = normal(v) {
                                return Ok(s);
                            }
                        }
                    }
                    match a.sign {
                        0 if exponent < 0.0 => Err(EvalError::Domain {
                            what: "zero raised to a negative power",
                            t,
                        }),
                        0 if exponent == 0.0 => Ok(SignedLog::from_lin(1.0)),
                        0 => Ok(SignedLog::ZERO),
                        s => {
                            let sign = if s > 0 {
                                1
                            } else if exponent.fract() != 0.0 {
                                return Err(EvalError::Domain {
                                    what: "negative base with non-integer exponent",
                                    t,
                                });
                            } else if (exponent / 2.0).fract() == 0.0 {
                                1
                            } else {
                                -1
                            };
                            let log_abs = exponent * a.log_abs;
                            if log_abs.is_nan() {
                                // 1^inf style degenerate; exponent is finite here
                                return Ok(SignedLog::from_lin(1.0));
                            }
                            Ok(SignedLog::from_log(sign, checked_log(log_abs, t)?))
                        }
                    }
                }
            }
        }
        ProfileExpr::Call(func, a) => {
            let a = eval_signed_log(a, t)?;
            match func {
                Func::Exp => {
                    let x = match a.value(t) {
                        Ok(x) => x,
                        // exp of a hugely negative number
                        Err(EvalError::Overflow { .. }) if a.sign < 0 => {
                            return Ok(SignedLog::ZERO)
                        }
                        Err(err) => return Err(err),
                    };
                    // linear underflow or overflow still has an exact log
                    Ok(normal(x.exp())
                        .filter(|s| s.sign != 0)
                        .unwrap_or(SignedLog {
                            sign: 1,
                            log_abs: x,
                            lin: None,
                        }))
                }
                Func::Log => {
                    if a.sign <= 0 {
                        return Err(EvalError::Domain {
                            what: "log of a non-positive number",
                            t,
                        });
                    }
                    Ok(SignedLog::from_lin(a.log_abs))
                }
                Func::Sqrt => match a.sign {
                    s if s < 0 => Err(EvalError::Domain {
                        what: "sqrt of a negative number",
                        t,
                    }),
                    0 => Ok(SignedLog::ZERO),
                    _ => match a.lin.map(f64::sqrt).and_then(normal) {
                        Some(s) => Ok(s),
                        None => Ok(SignedLog::from_log(1, a.log_abs / 2.0)),
                    },
                },
                Func::Sinh | Func::Cosh => {
                    let x = a.value(t)?;
                    let lin = if *func == Func::Sinh {
                        x.sinh()
                    } else {
                        x.cosh()
                    };
                    if let Some(s) = normal(lin) {
                        return Ok(s);
                    }
                    if *func == Func::Sinh && x == 0.0 {
                        return Ok(SignedLog::ZERO);
                    }
                    // log sinh|x| = |x| - ln 2 + ln(1 - e^{-2|x|}), cosh with a plus
                    let ax = x.abs();
                    let tail = (-2.0 * ax).exp();
                    let (sign, corr) = if *func == Func::Sinh {
                        (if x > 0.0 { 1 } else { -1 }, (-tail).ln_1p())
                    } else {
                        (1, tail.ln_1p())
                    };
                    Ok(SignedLog::from_log(sign, ax - LN_2 + corr))
                }
            }
        }
    }
}
