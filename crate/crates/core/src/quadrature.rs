//! Adaptive Simpson quadrature of positive integrands given by their log.
//!
//! Integrals such as `int_1^R S(t)^{1/(1-p)} dt` range over hundreds of
//! orders of magnitude, so the integrand is supplied as `phi(t) = log g(t)`
//! and each panel is integrated as `exp(m) * int exp(phi - m)` with `m` the
//! panel maximum. Panels are geometric (`a, 2a, 4a, ...`), which matches
//! power-like integrands; results are combined by log-sum-exp in panel
//! order so the answer does not depend on scheduling.

use thiserror::Error;

use crate::profile::EvalError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    /// The subdivision budget ran out. `partial_log_value` is the estimate at
    /// that point and must not be used as a result.
    #[error("quadrature hit the subdivision limit ({limit}); partial result is unusable")]
    SubdivisionLimit {
        limit: usize,
        partial_log_value: f64,
    },
    #[error("integrand overflowed at t = {t}")]
    Overflow { t: f64 },
    #[error("invalid integration interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
    #[error("relative tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Integrate `exp(phi - m)` per panel. Turning this off integrates
    /// `exp(phi)` directly, which overflows for steep integrands.
    pub log_domain: bool,
}

pub const DEFAULT_REL_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_SUBDIVISIONS: usize = 1 << 20;

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: DEFAULT_REL_TOL,
            max_subdivisions: DEFAULT_MAX_SUBDIVISIONS,
            log_domain: true,
        }
    }
}

impl QuadratureSpec {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadratureSpec {
            rel_tol,
            ..Self::default()
        }
    }
}

/// A positive integral held as its logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogIntegral {
    pub log_value: f64,
    /// Estimated relative error of `exp(log_value)`.
    pub rel_error: f64,
    pub subdivisions: usize,
}

impl LogIntegral {
    pub const ZERO: LogIntegral = LogIntegral {
        log_value: f64::NEG_INFINITY,
        rel_error: 0.0,
        subdivisions: 0,
    };

    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }

    /// Integral over the union of two disjoint intervals.
    pub fn plus(&self, other: &LogIntegral) -> LogIntegral {
        let log_value = log_add(self.log_value, other.log_value);
        let rel_error = if log_value == f64::NEG_INFINITY {
            0.0
        } else {
            self.rel_error * (self.log_value - log_value).exp()
                + other.rel_error * (other.log_value - log_value).exp()
        };
        LogIntegral {
            log_value,
            rel_error,
            subdivisions: self.subdivisions + other.subdivisions,
        }
    }
}

pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Splits `[a, b]` into geometric panels `[a 2^k, a 2^{k+1}]`, or returns it
/// whole when `a <= 0`.
pub fn geometric_panels(a: f64, b: f64) -> Vec<(f64, f64)> {
    if a <= 0.0 {
        return vec![(a, b)];
    }
    let mut out = Vec::new();
    let mut lo = a;
    while lo < b {
        let hi = (2.0 * lo).min(b);
        // avoid a sliver panel at the end
        let hi = if hi < b && b - hi < 1e-3 * (hi - lo) {
            b
        } else {
            hi
        };
        out.push((lo, hi));
        lo = hi;
    }
    out
}

const INITIAL_PIECES: usize = 8;

struct Panel {
    a: f64,
    b: f64,
    shift: f64,
    coarse: f64,
    // samples of exp(phi - shift) on 2 * INITIAL_PIECES + 1 points
    samples: Vec<f64>,
}

struct Budget {
    used: usize,
    limit: usize,
}

/// `int_a^b exp(phi(t)) dt` for an integrand given in log form.
pub fn integrate_log<F>(
    phi: F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<LogIntegral, QuadratureError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    integrate_log_panels(&phi, &geometric_panels(a, b), spec)
}

/// Like [`integrate_log`] on a caller-chosen panel partition.
pub fn integrate_log_panels<F>(
    phi: &F,
    panels: &[(f64, f64)],
    spec: &QuadratureSpec,
) -> Result<LogIntegral, QuadratureError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    if !(spec.rel_tol > 0.0) {
        return Err(QuadratureError::InvalidTolerance(spec.rel_tol));
    }
    for &(a, b) in panels {
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(QuadratureError::InvalidInterval { a, b });
        }
    }
    let n = 2 * INITIAL_PIECES;
    let mut prepared = Vec::with_capacity(panels.len());
    for &(a, b) in panels {
        let h = (b - a) / n as f64;
        let mut logs = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let t = if k == n { b } else { a + h * k as f64 };
            let v = phi(t)?;
            if v.is_nan() || v == f64::INFINITY {
                return Err(QuadratureError::Overflow { t });
            }
            logs.push(v);
        }
        let mut shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !spec.log_domain || shift == f64::NEG_INFINITY {
            shift = 0.0;
        }
        let samples: Vec<f64> = logs.iter().map(|&v| (v - shift).exp()).collect();
        if let Some(k) = samples.iter().position(|v| !v.is_finite()) {
            return Err(QuadratureError::Overflow {
                t: a + h * k as f64,
            });
        }
        let coarse = simpson_composite(&samples, h);
        prepared.push(Panel {
            a,
            b,
            shift,
            coarse,
            samples,
        });
    }

    let coarse_total = prepared
        .iter()
        .map(|p| p.shift + p.coarse.ln())
        .fold(f64::NEG_INFINITY, log_add);
    let share = (panels.len().max(1) as f64).ln();

    let mut budget = Budget {
        used: 0,
        limit: spec.max_subdivisions,
    };
    let mut total = LogIntegral::ZERO;
    for panel in &prepared {
        // absolute tolerance in shifted units: relative to the panel itself,
        // or to an equal share of the whole integral, whichever is looser
        let share_tol = (coarse_total - share - panel.shift).exp();
        let tol = 0.5 * spec.rel_tol * panel.coarse.max(share_tol);
        let result = match refine_panel(phi, panel, tol, &mut budget) {
            Ok(r) => r,
            Err(QuadratureError::SubdivisionLimit { limit, .. }) => {
                return Err(QuadratureError::SubdivisionLimit {
                    limit,
                    partial_log_value: total.log_value,
                })
            }
            Err(e) => return Err(e),
        };
        if !result.0.is_finite() {
            return Err(QuadratureError::Overflow { t: panel.b });
        }
        let piece = if result.0 > 0.0 {
            LogIntegral {
                log_value: panel.shift + result.0.ln(),
                rel_error: result.1 / result.0,
                subdivisions: result.2,
            }
        } else {
            LogIntegral {
                subdivisions: result.2,
                ..LogIntegral::ZERO
            }
        };
        total = total.plus(&piece);
    }
    if !spec.log_domain && total.log_value.exp().is_infinite() {
        return Err(QuadratureError::Overflow {
            t: panels.last().map_or(f64::NAN, |p| p.1),
        });
    }
    Ok(total)
}

fn simpson_composite(samples: &[f64], h: f64) -> f64 {
    let n = samples.len() - 1;
    let mut acc = samples[0] + samples[n];
    for (k, v) in samples.iter().enumerate().take(n).skip(1) {
        acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

struct Segment {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
}

/// Returns (integral, abs error estimate, subdivisions) in shifted units.
fn refine_panel<F>(
    phi: &F,
    panel: &Panel,
    tol: f64,
    budget: &mut Budget,
) -> Result<(f64, f64, usize), QuadratureError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    let f = |t: f64| -> Result<f64, QuadratureError> {
        let v = (phi(t)? - panel.shift).exp();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadratureError::Overflow { t })
        }
    };
    let h = (panel.b - panel.a) / INITIAL_PIECES as f64;
    let mut stack: Vec<Segment> = (0..INITIAL_PIECES)
        .map(|k| {
            let a = panel.a + h * k as f64;
            let b = if k + 1 == INITIAL_PIECES {
                panel.b
            } else {
                a + h
            };
            let (fa, fm, fb) = (
                panel.samples[2 * k],
                panel.samples[2 * k + 1],
                panel.samples[2 * k + 2],
            );
            Segment {
                a,
                b,
                fa,
                fm,
                fb,
                whole: (b - a) / 6.0 * (fa + 4.0 * fm + fb),
                tol: tol / INITIAL_PIECES as f64,
            }
        })
        .rev()
        .collect();

    let mut sum = 0.0;
    let mut err = 0.0;
    let mut count = 0;
    while let Some(s) = stack.pop() {
        let m = 0.5 * (s.a + s.b);
        let lm = 0.5 * (s.a + m);
        let rm = 0.5 * (m + s.b);
        let flm = f(lm)?;
        let frm = f(rm)?;
        let left = (m - s.a) / 6.0 * (s.fa + 4.0 * flm + s.fm);
        let right = (s.b - m) / 6.0 * (s.fm + 4.0 * frm + s.fb);
        let diff = left + right - s.whole;
        let width_floor = (s.b - s.a) <= 64.0 * f64::EPSILON * m.abs().max(1.0);
        if diff.abs() <= 15.0 * s.tol || width_floor {
            sum += left + right + diff / 15.0;
            err += diff.abs() / 15.0;
            continue;
        }
        count += 1;
        budget.used += 1;
        if budget.used > budget.limit {
            return Err(QuadratureError::SubdivisionLimit {
                limit: budget.limit,
                partial_log_value: f64::NAN,
            });
        }
        let tol = 0.5 * s.tol;
        stack.push(Segment {
            a: m,
            b: s.b,
            fa: s.fm,
            fm: frm,
            fb: s.fb,
            whole: right,
            tol,
        });
        stack.push(Segment {
            a: s.a,
            b: m,
            fa: s.fa,
            fm: flm,
            fb: s.fm,
            whole: left,
            tol,
        });
    }
    // Richardson correction can nudge a tiny integral negative
    Ok((sum.max(0.0), err, count))
}

/// Cumulative integrals `int_{points[0]}^{points[k]} exp(phi)` for sorted
/// points, one adaptive pass per gap.
pub fn cumulative_log<F>(
    phi: &F,
    points: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<LogIntegral>, QuadratureError>
where
    F: Fn(f64) -> Result<f64, EvalError>,
{
    let mut out = Vec::with_capacity(points.len());
    let mut acc = LogIntegral::ZERO;
    out.push(acc);
    for w in points.windows(2) {
        let piece = integrate_log_panels(phi, &geometric_panels(w[0], w[1]), spec)?;
        acc = acc.plus(&piece);
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn power_laws() {
        // int_1^10 t^-2 = 0.9
        let r = integrate_log(|t| Ok(-2.0 * t.ln()), 1.0, 10.0, &spec()).unwrap();
        assert!((r.value() - 0.9).abs() < 1e-12);
        // int_1^e t^-1 = 1
        let r = integrate_log(|t| Ok(-t.ln()), 1.0, std::f64::consts::E, &spec()).unwrap();
        assert!((r.value() - 1.0).abs() < 1e-12);
        // int_1^1e16 t^-1 = 16 ln 10
        let r = integrate_log(|t| Ok(-t.ln()), 1.0, 1e16, &spec()).unwrap();
        assert!((r.value() / (16.0 * 10f64.ln()) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn steep_integrands_stay_finite_in_log_form() {
        // int_1^30 exp(2 t^2) ~ exp(1800) / 120
        let r = integrate_log(|t| Ok(2.0 * t * t), 1.0, 30.0, &spec()).unwrap();
        let approx = 1800.0 - 120f64.ln();
        assert!((r.log_value - approx).abs() < 1e-3, "{}", r.log_value);
        // exponentially decaying tail far beyond underflow
        let r = integrate_log(|t| Ok(-2.0 * t), 1.0, 1e6, &spec()).unwrap();
        assert!((r.log_value - (-2.0 - 2f64.ln())).abs() < 1e-10);
    }

    #[test]
    fn linear_mode_overflows() {
        let s = QuadratureSpec {
            log_domain: false,
            ..spec()
        };
        assert!(matches!(
            integrate_log(|t| Ok(2.0 * t * t), 1.0, 30.0, &s),
            Err(QuadratureError::Overflow { .. })
        ));
        let r = integrate_log(|t| Ok(-2.0 * t.ln()), 1.0, 10.0, &s).unwrap();
        assert!((r.value() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn subdivision_limit_is_reported() {
        let s = QuadratureSpec {
            max_subdivisions: 4,
            ..spec()
        };
        let r = integrate_log(
            |t| Ok((10.0 * t).sin().abs().max(1e-300).ln()),
            1.0,
            50.0,
            &s,
        );
        assert!(matches!(
            r,
            Err(QuadratureError::SubdivisionLimit { limit: 4, .. })
        ));
    }

    #[test]
    fn error_estimate_tracks_tolerance() {
        let loose = QuadratureSpec::with_rel_tol(1e-4);
        let r = integrate_log(|t| Ok(-1.5 * t.ln()), 1.0, 100.0, &loose).unwrap();
        let exact = 2.0 * (1.0 - 0.1);
        assert!((r.value() - exact).abs() / exact < 1e-4);
        assert!(r.rel_error < 1e-4);
    }

    #[test]
    fn cumulative_matches_direct() {
        let pts = [1.0, 1.5, 2.0, 4.0, 10.0];
        let c = cumulative_log(&|t: f64| Ok(-2.0 * t.ln()), &pts, &spec()).unwrap();
        for (k, &t) in pts.iter().enumerate() {
            assert!((c[k].value() - (1.0 - 1.0 / t)).abs() < 1e-12);
        }
    }

    #[test]
    fn panels_cover_interval() {
        let p = geometric_panels(1.0, 10.0);
        assert_eq!(p.first().unwrap().0, 1.0);
        assert_eq!(p.last().unwrap().1, 10.0);
        assert!(p.windows(2).all(|w| w[0].1 == w[1].0));
        assert_eq!(geometric_panels(1.0, 1.5), vec![(1.0, 1.5)]);
        assert_eq!(geometric_panels(-1.0, 1.0), vec![(-1.0, 1.0)]);
    }

    #[test]
    fn deterministic() {
        let f = |t: f64| Ok(-(t.sinh().ln()));
        let a = integrate_log(f, 1.0, 200.0, &spec()).unwrap();
        let b = integrate_log(f, 1.0, 200.0, &spec()).unwrap();
        assert_eq!(a.log_value.to_bits(), b.log_value.to_bits());
    }
}
