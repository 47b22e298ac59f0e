//! Numerical test for divergence of `int_1^inf (int_{dB_t} f^l)^{1/(1-p)} dt`.
//!
//! The manifold is p-parabolic exactly when that integral diverges. There is
//! no finite procedure that decides divergence, so [`classify`] gathers
//! evidence and only commits when it is unambiguous:
//!
//! 1. partial integrals over doubling panels `[r0 2^k, r0 2^{k+1}]` up to
//!    `t_max`; a partial integral past `divergence_threshold` is taken as
//!    divergence;
//! 2. least-squares fits of `log g` against `log t` (power tail) and against
//!    `t` (exponential tail) on `[sqrt(t_max), t_max]`, the better `R^2`
//!    winning and near-ties giving `Inconclusive`;
//! 3. for power tails with exponent within `margin` of `-1`, a refit of
//!    `log g + log t` against `log log t`: `t^{-1} (log t)^beta` diverges iff
//!    `beta >= -1`;
//! 4. `Hyperbolic` additionally requires the partial integrals to have
//!    converged, either outright (rel. change `< cauchy_rel` over the last
//!    doubling) or after geometric extrapolation of the doubling increments.

use rayon::prelude::*;
use thiserror::Error;

use crate::capacity::{
    self, capacity_limit, CapacityError, CapacityLimit, LimitOptions, Trend, DEFAULT_SCHEDULE,
};
use crate::geometry::ModelManifold;
use crate::profile::EvalError;
use crate::quadrature::{
    integrate_log_panels, log_add, LogIntegral, QuadratureError, QuadratureSpec,
};
use crate::regression::{self, LinearFit};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriterionError {
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid options: {0}")]
    Options(String),
    #[error("p grid is empty")]
    EmptyGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Parabolic,
    Hyperbolic,
    Inconclusive,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Parabolic => "Parabolic",
            Decision::Hyperbolic => "Hyperbolic",
            Decision::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    pub t_max: f64,
    pub margin: f64,
    /// Number of log-spaced sample points in the tail window.
    pub tail_samples: usize,
    pub divergence_threshold: f64,
    pub cauchy_rel: f64,
    /// `R^2` differences at or below this are ties.
    pub r2_tie: f64,
    pub quadrature: QuadratureSpec,
}

pub const DEFAULT_T_MAX: f64 = 1e6;
pub const DEFAULT_MARGIN: f64 = 0.05;

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            t_max: DEFAULT_T_MAX,
            margin: DEFAULT_MARGIN,
            tail_samples: 64,
            divergence_threshold: 1e100,
            cauchy_rel: 1e-8,
            r2_tie: 1e-9,
            quadrature: QuadratureSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub decision: Decision,
    pub p: f64,
    pub t_max: f64,
    /// Partial integral at the last checkpoint reached; infinite when it
    /// exceeds the `f64` range.
    pub partial_integral: f64,
    pub log_partial_integral: f64,
    /// Where integration stopped (`t_max` unless divergence was certified early).
    pub reached_t: f64,
    /// Slope of `log g` against `log t` over the tail window.
    pub tail_exponent: f64,
    pub tail_exponent_interval: (f64, f64),
    /// Slope of `log g` against `t` over the tail window.
    pub exponential_rate: f64,
    pub r2_power: f64,
    pub r2_exponential: f64,
    /// `beta` of the `t^{-1} (log t)^beta` refit when it was needed.
    pub log_exponent: Option<f64>,
    pub evidence_notes: Vec<String>,
}

impl Verdict {
    pub fn is_parabolic(&self) -> bool {
        self.decision == Decision::Parabolic
    }
}

/// `g(t) = criterion_inner(t)^{1/(1-p)}`.
pub fn criterion_integrand(m: &ModelManifold, p: f64, t: f64) -> Result<f64, CriterionError> {
    Ok(log_criterion_integrand(m, p, t)?.exp())
}

pub fn log_criterion_integrand(m: &ModelManifold, p: f64, t: f64) -> Result<f64, CriterionError> {
    capacity::check_exponent(p)?;
    Ok(m.log_criterion_inner(t)? / (1.0 - p))
}

/// `(t, log g(t))` on `count` log-spaced points of `[r0, t_max]`.
pub fn log_integrand_samples(
    m: &ModelManifold,
    p: f64,
    t_max: f64,
    count: usize,
) -> Result<Vec<(f64, f64)>, CriterionError> {
    let r0 = m.inner_radius();
    log_spaced(r0, t_max, count)
        .into_iter()
        .map(|t| Ok((t, log_criterion_integrand(m, p, t)?)))
        .collect()
}

fn log_spaced(a: f64, b: f64, count: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    let last = count.saturating_sub(1).max(1) as f64;
    (0..count)
        .map(|k| match k {
            0 => a,
            k if k + 1 == count => b,
            k => (la + (lb - la) * k as f64 / last).exp(),
        })
        .collect()
}

struct TailFits {
    power: LinearFit,
    exponential: LinearFit,
    log_refit: LinearFit,
}

fn fit_tail(m: &ModelManifold, p: f64, opts: &ClassifyOptions) -> Result<TailFits, CriterionError> {
    let r0 = m.inner_radius();
    let lo = opts.t_max.sqrt().max(r0 * std::f64::consts::E);
    let ts = log_spaced(lo, opts.t_max, opts.tail_samples);
    let ys = ts
        .iter()
        .map(|&t| log_criterion_integrand(m, p, t))
        .collect::<Result<Vec<_>, _>>()?;
    let log_t: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let log_log_t: Vec<f64> = log_t.iter().map(|l| l.ln()).collect();
    let shifted: Vec<f64> = ys.iter().zip(&log_t).map(|(y, l)| y + l).collect();
    let bad = || CriterionError::Options("tail window too narrow to fit".into());
    Ok(TailFits {
        power: regression::fit(&log_t, &ys).ok_or_else(bad)?,
        exponential: regression::fit(&ts, &ys).ok_or_else(bad)?,
        log_refit: regression::fit(&log_log_t, &shifted).ok_or_else(bad)?,
    })
}

struct Integration {
    partial: LogIntegral,
    reached: f64,
    /// Log-integrals over the full doubling panels, in order.
    doublings: Vec<f64>,
    overflowed: bool,
}

fn integrate_checkpoints(
    m: &ModelManifold,
    p: f64,
    opts: &ClassifyOptions,
) -> Result<Integration, CriterionError> {
    let r0 = m.inner_radius();
    let phi = capacity::log_flux_integrand(m, p);
    let log_vol = m.fiber_volume().ln();
    // g = S^{1/(1-p)} / vol(L)^{1/(1-p)}
    let offset = log_vol / (1.0 - p);
    let threshold = opts.divergence_threshold.ln();
    let mut partial = LogIntegral::ZERO;
    let mut doublings = Vec::new();
    let mut lo = r0;
    while lo < opts.t_max {
        let hi = (2.0 * lo).min(opts.t_max);
        let piece = integrate_log_panels(&phi, &[(lo, hi)], &opts.quadrature)?;
        let piece = LogIntegral {
            log_value: piece.log_value - offset,
            ..piece
        };
        if hi == 2.0 * lo {
            doublings.push(piece.log_value);
        }
        partial = partial.plus(&piece);
        lo = hi;
        if partial.log_value > threshold {
            return Ok(Integration {
                partial,
                reached: hi,
                doublings,
                overflowed: true,
            });
        }
    }
    Ok(Integration {
        partial,
        reached: opts.t_max,
        doublings,
        overflowed: false,
    })
}

/// Convergence evidence from the doubling increments: either the last
/// doubling changed the partial integral by less than `cauchy_rel`, or the
/// increments shrink geometrically and successive extrapolated limits agree
/// to `cauchy_rel`.
fn cauchy_converged(integ: &Integration, opts: &ClassifyOptions, notes: &mut Vec<String>) -> bool {
    let d = &integ.doublings;
    if d.len() < 3 {
        notes.push("too few doubling panels to test convergence".into());
        return false;
    }
    let total = integ.partial.log_value;
    let last_change = (d[d.len() - 1] - total).exp();
    if last_change < opts.cauchy_rel {
        notes.push(format!(
            "partial integrals Cauchy-converged (last doubling changed by {last_change:.3e})"
        ));
        return true;
    }
    // running partial sums at each doubling checkpoint
    let mut sums = Vec::with_capacity(d.len());
    let mut acc = f64::NEG_INFINITY;
    for &v in d {
        acc = log_add(acc, v);
        sums.push(acc.exp());
    }
    let k = d.len() - 1;
    let extrapolate = |j: usize| -> Option<f64> {
        let r = (d[j] - d[j - 1]).exp();
        (r < 1.0).then(|| sums[j] + d[j].exp() * r / (1.0 - r))
    };
    match (extrapolate(k), extrapolate(k - 1)) {
        (Some(a), Some(b)) => {
            let change = (a - b).abs() / a;
            if change < opts.cauchy_rel {
                notes.push(format!(
                    "geometric tail extrapolation converged (limits {a:.12e} and {b:.12e}, rel. change {change:.3e})"
                ));
                true
            } else {
                notes.push(format!(
                    "extrapolated limits still moving (rel. change {change:.3e})"
                ));
                false
            }
        }
        _ => {
            notes.push("doubling increments are not shrinking".into());
            false
        }
    }
}

pub fn classify(
    m: &ModelManifold,
    p: f64,
    opts: &ClassifyOptions,
) -> Result<Verdict, CriterionError> {
    capacity::check_exponent(p)?;
    let r0 = m.inner_radius();
    if !(opts.t_max.is_finite() && opts.t_max > 16.0 * r0) {
        return Err(CriterionError::Options(format!(
            "t_max must exceed {}",
            16.0 * r0
        )));
    }
    if !(opts.margin >= 0.0 && opts.margin < 1.0) {
        return Err(CriterionError::Options(format!(
            "margin must lie in [0, 1), got {}",
            opts.margin
        )));
    }
    if opts.tail_samples < 3 {
        return Err(CriterionError::Options(
            "need at least 3 tail samples".into(),
        ));
    }

    let integ = integrate_checkpoints(m, p, opts)?;
    let fits = fit_tail(m, p, opts)?;
    let mut notes = Vec::new();
    let (tail_exponent, exponential_rate) = (fits.power.slope, fits.exponential.slope);
    let margin = opts.margin;

    let mut log_exponent = None;
    let decision = if integ.overflowed {
        notes.push(format!(
            "partial integral exceeded {:e} by t = {}; divergence certified",
            opts.divergence_threshold, integ.reached
        ));
        Decision::Parabolic
    } else if fits.power.flat {
        notes.push("integrand is constant on the tail window".into());
        Decision::Parabolic
    } else if fits.exponential.r_squared > fits.power.r_squared + opts.r2_tie {
        notes.push(format!(
            "exponential tail fits better (R^2 {:.9} vs {:.9}), rate {exponential_rate:.6e}",
            fits.exponential.r_squared, fits.power.r_squared
        ));
        if exponential_rate > 0.0 {
            notes.push("exponential growth".into());
            Decision::Parabolic
        } else if cauchy_converged(&integ, opts, &mut notes) {
            notes.push("exponential decay".into());
            Decision::Hyperbolic
        } else {
            Decision::Inconclusive
        }
    } else if fits.power.r_squared > fits.exponential.r_squared + opts.r2_tie {
        notes.push(format!(
            "power tail fits better (R^2 {:.9} vs {:.9}), exponent {tail_exponent:.6}",
            fits.power.r_squared, fits.exponential.r_squared
        ));
        if tail_exponent >= -1.0 + margin {
            Decision::Parabolic
        } else if tail_exponent < -1.0 - margin {
            if cauchy_converged(&integ, opts, &mut notes) {
                Decision::Hyperbolic
            } else {
                Decision::Inconclusive
            }
        } else {
            let beta = fits.log_refit.slope;
            log_exponent = Some(beta);
            notes.push(format!(
                "borderline exponent; t^-1 (log t)^beta refit gives beta = {beta:.6}"
            ));
            if beta >= -1.0 + margin {
                notes.push("t^-1 (log t)^beta with beta >= -1 diverges".into());
                Decision::Parabolic
            } else if beta < -1.0 - margin && cauchy_converged(&integ, opts, &mut notes) {
                Decision::Hyperbolic
            } else {
                Decision::Inconclusive
            }
        }
    } else {
        notes.push(format!(
            "power and exponential fits tie (R^2 {:.9} vs {:.9})",
            fits.power.r_squared, fits.exponential.r_squared
        ));
        Decision::Inconclusive
    };

    Ok(Verdict {
        decision,
        p,
        t_max: opts.t_max,
        partial_integral: integ.partial.value(),
        log_partial_integral: integ.partial.log_value,
        reached_t: integ.reached,
        tail_exponent,
        tail_exponent_interval: fits.power.slope_interval(),
        exponential_rate,
        r2_power: fits.power.r_squared,
        r2_exponential: fits.exponential.r_squared,
        log_exponent,
        evidence_notes: notes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub rows: Vec<Verdict>,
    /// Midpoint between the last hyperbolic and first parabolic `p`, when
    /// the verdicts switch exactly once.
    pub critical_p: Option<f64>,
    pub notes: Vec<String>,
}

/// Classifies every `p` of an increasing grid; rows follow grid order.
pub fn sweep_p(
    m: &ModelManifold,
    p_grid: &[f64],
    opts: &ClassifyOptions,
) -> Result<Sweep, CriterionError> {
    if p_grid.is_empty() {
        return Err(CriterionError::EmptyGrid);
    }
    if p_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CriterionError::Options(
            "p grid must be strictly increasing".into(),
        ));
    }
    for &p in p_grid {
        capacity::check_exponent(p)?;
    }
    let rows = p_grid
        .par_iter()
        .map(|&p| classify(m, p, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let (critical_p, notes) = critical_exponent(&rows);
    Ok(Sweep {
        rows,
        critical_p,
        notes,
    })
}

fn critical_exponent(rows: &[Verdict]) -> (Option<f64>, Vec<String>) {
    if rows.iter().any(|r| r.decision == Decision::Inconclusive) {
        return (None, vec!["inconclusive verdicts in the grid".into()]);
    }
    let first_parabolic = rows.iter().position(Verdict::is_parabolic);
    match first_parabolic {
        None => (None, vec!["hyperbolic on the whole grid".into()]),
        Some(0) => (None, vec!["parabolic on the whole grid".into()]),
        Some(k) => {
            if rows[k..].iter().all(Verdict::is_parabolic) {
                (Some(0.5 * (rows[k - 1].p + rows[k].p)), Vec::new())
            } else {
                (None, vec!["verdict is not monotone in p".into()])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossCheck {
    /// `None` when the criterion itself is inconclusive.
    pub agrees: Option<bool>,
    pub criterion: Verdict,
    pub capacity: CapacityLimit,
}

/// Runs [`classify`] and [`capacity_limit`] (default schedule scaled by the
/// inner radius) and compares them: parabolic should go with capacities
/// tending to zero, hyperbolic with a positive limit.
pub fn cross_check(
    m: &ModelManifold,
    p: f64,
    opts: &ClassifyOptions,
    limit_opts: &LimitOptions,
) -> Result<CrossCheck, CriterionError> {
    let criterion = classify(m, p, opts)?;
    let schedule: Vec<f64> = DEFAULT_SCHEDULE
        .iter()
        .map(|r| r * m.inner_radius())
        .collect();
    let capacity = capacity_limit(m, p, &schedule, limit_opts)?;
    let agrees = match criterion.decision {
        Decision::Inconclusive => None,
        d => {
            let parabolic = d == Decision::Parabolic;
            Some(
                parabolic == (capacity.trend == Trend::ToZero)
                    && !parabolic == (capacity.trend == Trend::ToPositive),
            )
        }
    };
    Ok(CrossCheck {
        agrees,
        criterion,
        capacity,
    })
}
