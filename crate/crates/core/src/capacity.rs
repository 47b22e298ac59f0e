//! Capacity of the core `D = B_{r0} x_f L` inside `D_R`.
//!
//! Two independent routes:
//!
//! * [`flux_capacity`] evaluates `[int_{r0}^R S(t)^{1/(1-p)} dt]^{1-p}` by
//!   log-domain quadrature.
//! * [`variational_capacity`] minimizes the discrete radial p-energy
//!   `sum_i |(u_{i+1} - u_i)/h|^p S(mid_i) h` with `u = 1` at `r0` and
//!   `u = 0` at `R`, by damped Newton on the tridiagonal Hessian.
//!
//! [`capacity_limit`] follows the flux value along an increasing schedule
//! of outer radii and classifies its behaviour as `R -> infinity`.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::ModelManifold;
use crate::profile::EvalError;
use crate::quadrature::{
    geometric_panels, integrate_log, integrate_log_panels, log_add, QuadratureError, QuadratureSpec,
};

/// Smallest accepted exponent; `1/(1-p)` is unusable closer to 1.
pub const MIN_P: f64 = 1.0 + 1e-3;
pub const DEFAULT_GRID_SIZE: usize = 2000;
pub const NEWTON_MAX_ITERATIONS: usize = 200;
/// Newton stops once the gradient max-norm is below this fraction of the
/// largest edge flux.
pub const NEWTON_GRADIENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CapacityError {
    #[error("p must exceed 1 (at least {MIN_P}), got {0}")]
    InvalidExponent(f64),
    #[error("outer radius {outer} must exceed the inner radius {inner}")]
    InvalidRadius { outer: f64, inner: f64 },
    #[error("grid needs at least 2 nodes, got {0}")]
    GridTooSmall(usize),
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("Newton iteration did not converge after {iterations} steps (gradient {gradient:e})")]
    NoConvergence { iterations: usize, gradient: f64 },
    #[error("invalid radius schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Flux,
    Variational,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Flux => "flux",
            Method::Variational => "variational",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityEstimate {
    pub value: f64,
    /// `ln value`, finite even when `value` under- or overflows.
    pub log_value: f64,
    pub error_bound: f64,
    pub method: Method,
    pub p: f64,
    pub outer_radius: f64,
    /// Number of grid nodes, variational route only.
    pub grid_size: Option<usize>,
}

pub(crate) fn check_exponent(p: f64) -> Result<(), CapacityError> {
    if p.is_finite() && p >= MIN_P {
        Ok(())
    } else {
        Err(CapacityError::InvalidExponent(p))
    }
}

fn check_radius(m: &ModelManifold, r: f64) -> Result<(), CapacityError> {
    if r.is_finite() && r > m.inner_radius() {
        Ok(())
    } else {
        Err(CapacityError::InvalidRadius {
            outer: r,
            inner: m.inner_radius(),
        })
    }
}

/// `log S(t)^{1/(1-p)}`.
pub(crate) fn log_flux_integrand(
    m: &ModelManifold,
    p: f64,
) -> impl Fn(f64) -> Result<f64, EvalError> + '_ {
    let fd = m.flux_density();
    let k = 1.0 / (1.0 - p);
    move |t| Ok(k * fd.log_value(t)?)
}

/// `[int_{r0}^R S^{1/(1-p)}]^{1-p}` via log-domain adaptive Simpson.
pub fn flux_capacity(
    m: &ModelManifold,
    p: f64,
    outer_radius: f64,
    q: &QuadratureSpec,
) -> Result<CapacityEstimate, CapacityError> {
    check_exponent(p)?;
    check_radius(m, outer_radius)?;
    let integral = integrate_log(log_flux_integrand(m, p), m.inner_radius(), outer_radius, q)?;
    let log_value = (1.0 - p) * integral.log_value;
    let value = log_value.exp();
    let rel = integral.rel_error.max(q.rel_tol);
    // (1 - rel)^{1-p} - 1 bounds the relative change of x^{1-p}
    let error_bound = value * ((1.0 - rel).powf(1.0 - p) - 1.0);
    Ok(CapacityEstimate {
        value,
        log_value,
        error_bound,
        method: Method::Flux,
        p,
        outer_radius,
        grid_size: None,
    })
}

/// Discrete minimizer of the radial p-energy.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalSolution {
    pub estimate: CapacityEstimate,
    /// Grid nodes from the inner radius to `R`, inclusive.
    pub nodes: Vec<f64>,
    /// Minimizer values at `nodes`; `1` first, `0` last.
    pub values: Vec<f64>,
    pub iterations: usize,
    /// Final gradient max-norm relative to the largest edge flux.
    pub relative_gradient: f64,
}

pub fn variational_capacity(
    m: &ModelManifold,
    p: f64,
    outer_radius: f64,
    grid_size: usize,
) -> Result<CapacityEstimate, CapacityError> {
    variational_solve(m, p, outer_radius, grid_size).map(|s| s.estimate)
}

/// Minimizes the discrete energy on `grid_size` uniform nodes and reports
/// the minimizer. The error bound combines the Newton residual with a
/// Richardson estimate from a companion grid of half (or, for the smallest
/// grid, double) the spacing count.
pub fn variational_solve(
    m: &ModelManifold,
    p: f64,
    outer_radius: f64,
    grid_size: usize,
) -> Result<VariationalSolution, CapacityError> {
    check_exponent(p)?;
    check_radius(m, outer_radius)?;
    if grid_size < 2 {
        return Err(CapacityError::GridTooSmall(grid_size));
    }
    let intervals = grid_size - 1;
    let fine = DiscreteEnergy::new(m, p, outer_radius, intervals)?.minimize()?;
    let companion = if intervals >= 2 { intervals / 2 } else { 2 };
    let coarse = DiscreteEnergy::new(m, p, outer_radius, companion)?.minimize()?;

    let value = fine.energy;
    // midpoint sampling is second order in the spacing
    let ratio = (intervals as f64 / companion as f64).powi(2);
    let discretization = (fine.energy - coarse.energy).abs() / (ratio - 1.0).abs();
    let solver = value * fine.relative_gradient * intervals as f64;
    let estimate = CapacityEstimate {
        value,
        log_value: value.ln(),
        error_bound: discretization + solver,
        method: Method::Variational,
        p,
        outer_radius,
        grid_size: Some(grid_size),
    };
    Ok(VariationalSolution {
        estimate,
        nodes: fine.nodes,
        values: fine.values,
        iterations: fine.iterations,
        relative_gradient: fine.relative_gradient,
    })
}

struct DiscreteEnergy {
    p: f64,
    nodes: Vec<f64>,
    /// `S(mid_i) h_i / scale`; the true energy is `scale * sum`.
    weights: Vec<f64>,
    spacing: Vec<f64>,
    log_scale: f64,
}

struct Minimum {
    energy: f64,
    nodes: Vec<f64>,
    values: Vec<f64>,
    iterations: usize,
    relative_gradient: f64,
}

impl DiscreteEnergy {
    fn new(m: &ModelManifold, p: f64, outer: f64, intervals: usize) -> Result<Self, CapacityError> {
        let r0 = m.inner_radius();
        let h = (outer - r0) / intervals as f64;
        let nodes: Vec<f64> = (0..=intervals)
            .map(|i| {
                if i == intervals {
                    outer
                } else {
                    r0 + h * i as f64
                }
            })
            .collect();
        let spacing: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        if spacing.iter().any(|&d| !(d > 0.0)) {
            return Err(CapacityError::DegenerateGrid("non-increasing nodes".into()));
        }
        let fd = m.flux_density();
        let logs = nodes
            .windows(2)
            .map(|w| fd.log_value(0.5 * (w[0] + w[1])))
            .collect::<Result<Vec<_>, _>>()?;
        let log_scale = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logs
            .iter()
            .zip(&spacing)
            .map(|(&l, &d)| (l - log_scale).exp() * d)
            .collect();
        if weights.iter().any(|&w| !w.is_normal()) {
            return Err(CapacityError::DegenerateGrid(
                "flux density spans more orders of magnitude than f64 holds on this interval"
                    .into(),
            ));
        }
        Ok(DiscreteEnergy {
            p,
            nodes,
            weights,
            spacing,
            log_scale,
        })
    }

    fn slopes(&self, u: &[f64]) -> Vec<f64> {
        u.windows(2)
            .zip(&self.spacing)
            .map(|(w, &h)| (w[1] - w[0]) / h)
            .collect()
    }

    fn energy(&self, u: &[f64]) -> f64 {
        self.slopes(u)
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| w * d.abs().powf(self.p))
            .sum()
    }

    /// Edge fluxes `dE/du_{i+1}` contributions `p w |d|^{p-2} d / h`.
    fn fluxes(&self, d: &[f64]) -> Vec<f64> {
        d.iter()
            .zip(&self.weights)
            .zip(&self.spacing)
            .map(|((&d, &w), &h)| self.p * w * d.abs().powf(self.p - 1.0) * d.signum() / h)
            .collect()
    }

    /// Gradient with respect to the interior values.
    fn gradient(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let q = self.fluxes(&self.slopes(u));
        let scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let g = q.windows(2).map(|w| w[0] - w[1]).collect();
        (g, scale)
    }

    fn minimize(&self) -> Result<Minimum, CapacityError> {
        let n = self.nodes.len() - 1;
        let span = self.nodes[n] - self.nodes[0];
        let mut u: Vec<f64> = self
            .nodes
            .iter()
            .map(|&t| (self.nodes[n] - t) / span)
            .collect();
        u[0] = 1.0;
        u[n] = 0.0;
        let mut energy = self.energy(&u);
        let mut iterations = 0;
        let (mut g, mut scale) = self.gradient(&u);
        loop {
            let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let rel = if scale > 0.0 { gnorm / scale } else { 0.0 };
            if rel <= NEWTON_GRADIENT_TOL || g.is_empty() {
                return Ok(self.finish(u, energy, iterations, rel));
            }
            if iterations >= NEWTON_MAX_ITERATIONS {
                return Err(CapacityError::NoConvergence {
                    iterations,
                    gradient: rel,
                });
            }
            iterations += 1;

            let step = self.newton_step(&u, &g);
            let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
            // Newton decrement at the rounding level of the energy itself
            if -slope <= 16.0 * f64::EPSILON * energy {
                return Ok(self.finish(u, energy, iterations, rel));
            }
            let trial = |alpha: f64| -> Vec<f64> {
                let mut v = u.clone();
                for (k, s) in step.iter().enumerate() {
                    v[k + 1] += alpha * s;
                }
                v
            };
            let mut accepted = None;
            let mut alpha = 1.0;
            for _ in 0..50 {
                let v = trial(alpha);
                let e = self.energy(&v);
                if e.is_finite() && e <= energy + 1e-4 * alpha * slope {
                    accepted = Some((v, e));
                    break;
                }
                alpha *= 0.5;
            }
            let (v, e) = match accepted {
                Some(x) => x,
                None => match self.bisection_search(&u, &step) {
                    Some(x) => x,
                    // no representable decrease left: the iterate sits at
                    // the rounding floor of the energy
                    None => return Ok(self.finish(u, energy, iterations, rel)),
                },
            };
            u = v;
            energy = e;
            let next = self.gradient(&u);
            g = next.0;
            scale = next.1;
        }
    }

    /// Finds a zero of the directional derivative on `[0, 1]` by bisection.
    fn bisection_search(&self, u: &[f64], step: &[f64]) -> Option<(Vec<f64>, f64)> {
        let at = |alpha: f64| {
            let mut v = u.to_vec();
            for (k, s) in step.iter().enumerate() {
                v[k + 1] += alpha * s;
            }
            v
        };
        let deriv = |alpha: f64| {
            let v = at(alpha);
            let (g, _) = self.gradient(&v);
            g.iter().zip(step).map(|(a, b)| a * b).sum::<f64>()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if deriv(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let v = at(lo);
        let e = self.energy(&v);
        (lo > 0.0 && e < self.energy(u)).then_some((v, e))
    }

    /// Solves `H s = -g` for the tridiagonal Hessian by the Thomas algorithm.
    fn newton_step(&self, u: &[f64], g: &[f64]) -> Vec<f64> {
        let p = self.p;
        let d = self.slopes(u);
        let tiny = f64::MIN_POSITIVE.sqrt();
        // a_i = p (p - 1) w_i |d_i|^{p-2} / h_i^2
        let a: Vec<f64> = d
            .iter()
            .zip(&self.weights)
            .zip(&self.spacing)
            .map(|((&d, &w), &h)| p * (p - 1.0) * w * d.abs().max(tiny).powf(p - 2.0) / (h * h))
            .collect();
        let k = g.len();
        let mut diag: Vec<f64> = (0..k).map(|i| a[i] + a[i + 1]).collect();
        let off: Vec<f64> = (0..k.saturating_sub(1)).map(|i| -a[i + 1]).collect();
        let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        for i in 1..k {
            let factor = off[i - 1] / diag[i - 1];
            diag[i] -= factor * off[i - 1];
            rhs[i] -= factor * rhs[i - 1];
        }
        let mut x = vec![0.0; k];
        for i in (0..k).rev() {
            let upper = if i + 1 < k { off[i] * x[i + 1] } else { 0.0 };
            x[i] = (rhs[i] - upper) / diag[i];
        }
        x
    }

    fn finish(&self, u: Vec<f64>, scaled_energy: f64, iterations: usize, rel: f64) -> Minimum {
        Minimum {
            energy: (scaled_energy.ln() + self.log_scale).exp(),
            nodes: self.nodes.clone(),
            values: u,
            iterations,
            relative_gradient: rel,
        }
    }
}

/// Continuum minimizer `u(t) = int_t^R g / int_{r0}^R g` with
/// `g = S^{1/(1-p)}`.
pub struct OptimalProfile<'a> {
    model: &'a ModelManifold,
    p: f64,
    inner: f64,
    outer: f64,
    log_total: f64,
    spec: QuadratureSpec,
}

pub fn optimal_profile<'a>(
    m: &'a ModelManifold,
    p: f64,
    outer_radius: f64,
    q: &QuadratureSpec,
) -> Result<OptimalProfile<'a>, CapacityError> {
    optimal_profile_between(m, p, m.inner_radius(), outer_radius, q)
}

/// Optimal profile of the annulus `[inner, outer]` for the same flux density.
pub fn optimal_profile_between<'a>(
    m: &'a ModelManifold,
    p: f64,
    inner: f64,
    outer: f64,
    q: &QuadratureSpec,
) -> Result<OptimalProfile<'a>, CapacityError> {
    check_exponent(p)?;
    if !(inner.is_finite() && outer.is_finite() && inner >= m.inner_radius() && outer > inner) {
        return Err(CapacityError::InvalidRadius { outer, inner });
    }
    let total = integrate_log(log_flux_integrand(m, p), inner, outer, q)?;
    Ok(OptimalProfile {
        model: m,
        p,
        inner,
        outer,
        log_total: total.log_value,
        spec: *q,
    })
}

impl OptimalProfile<'_> {
    pub fn inner_radius(&self) -> f64 {
        self.inner
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer
    }

    /// `ln int_inner^outer S^{1/(1-p)}`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_total
    }

    pub fn eval(&self, t: f64) -> Result<f64, CapacityError> {
        if t <= self.inner {
            return Ok(1.0);
        }
        if t >= self.outer {
            return Ok(0.0);
        }
        let tail = integrate_log(
            log_flux_integrand(self.model, self.p),
            t,
            self.outer,
            &self.spec,
        )?;
        Ok((tail.log_value - self.log_total).exp().min(1.0))
    }

    /// `ln |u'(t)|` inside the annulus.
    pub fn log_slope(&self, t: f64) -> Result<f64, EvalError> {
        Ok(log_flux_integrand(self.model, self.p)(t)? - self.log_total)
    }

    /// Values at ascending `points`, sharing one pass of quadrature.
    pub fn eval_many(&self, points: &[f64]) -> Result<Vec<f64>, CapacityError> {
        if points.windows(2).any(|w| w[1] < w[0]) {
            return Err(CapacityError::Schedule(
                "evaluation points must be ascending".into(),
            ));
        }
        let phi = log_flux_integrand(self.model, self.p);
        let mut out = vec![0.0; points.len()];
        let mut acc = f64::NEG_INFINITY;
        let mut upper = self.outer;
        for (k, &t) in points.iter().enumerate().rev() {
            if t >= self.outer {
                out[k] = 0.0;
                continue;
            }
            let lower = t.max(self.inner);
            if lower < upper {
                let piece =
                    integrate_log_panels(&phi, &geometric_panels(lower, upper), &self.spec)?;
                acc = log_add(acc, piece.log_value);
                upper = lower;
            }
            out[k] = if t <= self.inner {
                1.0
            } else {
                (acc - self.log_total).exp().min(1.0)
            };
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trend {
    ToZero,
    ToPositive,
    Undetermined,
}

impl Trend {
    pub fn as_str(self) -> &'static str {
        match self {
            Trend::ToZero => "to-zero",
            Trend::ToPositive => "to-positive",
            Trend::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOptions {
    /// Values below this count as vanished.
    pub floor: f64,
    /// Relative spread over the last three values that counts as converged.
    pub stabilization: f64,
    /// Ratio of successive log-log decay slopes at or above which the decay
    /// is treated as sustained rather than levelling off.
    pub sustained_slope_ratio: f64,
    pub quadrature: QuadratureSpec,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions {
            floor: 1e-8,
            stabilization: 1e-6,
            sustained_slope_ratio: 0.75,
            quadrature: QuadratureSpec::default(),
        }
    }
}

/// Outer radii (as multiples of the inner radius) used when no schedule is given.
pub const DEFAULT_SCHEDULE: [f64; 5] = [1e1, 1e2, 1e4, 1e8, 1e16];

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityLimit {
    pub limit_estimate: f64,
    pub trend: Trend,
    pub values: Vec<CapacityEstimate>,
    pub notes: Vec<String>,
}

/// Flux capacities along `schedule` and their behaviour as `R` grows.
///
/// Decaying to zero shows up either as values under `floor` or as a
/// sustained negative slope of `ln Cap` against `ln ln R`; the slope of a
/// positive limit instead shrinks geometrically, and its limit is
/// extrapolated from the last two log-increments.
pub fn capacity_limit(
    m: &ModelManifold,
    p: f64,
    schedule: &[f64],
    opts: &LimitOptions,
) -> Result<CapacityLimit, CapacityError> {
    check_exponent(p)?;
    if schedule.len() < 3 {
        return Err(CapacityError::Schedule(format!(
            "need at least 3 radii, got {}",
            schedule.len()
        )));
    }
    if schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CapacityError::Schedule(
            "radii must be strictly increasing".into(),
        ));
    }
    let values = schedule
        .par_iter()
        .map(|&r| flux_capacity(m, p, r, &opts.quadrature))
        .collect::<Result<Vec<_>, _>>()?;
    let (trend, limit_estimate, notes) = classify_trend(m.inner_radius(), &values, opts);
    Ok(CapacityLimit {
        limit_estimate,
        trend,
        values,
        notes,
    })
}

fn classify_trend(
    r0: f64,
    values: &[CapacityEstimate],
    opts: &LimitOptions,
) -> (Trend, f64, Vec<String>) {
    let mut notes = Vec::new();
    let n = values.len();
    let last = &values[n - 1];
    if last.value < opts.floor {
        notes.push(format!(
            "last value {:e} is below the floor {:e}",
            last.value, opts.floor
        ));
        return (Trend::ToZero, 0.0, notes);
    }
    for w in values.windows(2) {
        let slack = w[0].error_bound + w[1].error_bound + 1e-12 * w[0].value;
        if w[1].value > w[0].value + slack {
            notes.push(format!(
                "capacity increased between R = {} and R = {}",
                w[0].outer_radius, w[1].outer_radius
            ));
            return (Trend::Undetermined, f64::NAN, notes);
        }
    }
    let spread = values[n - 3..]
        .iter()
        .map(|v| (v.value - last.value).abs() / last.value)
        .fold(0.0, f64::max);
    if spread < opts.stabilization {
        notes.push(format!(
            "relative change {spread:e} over the last three radii"
        ));
        return (Trend::ToPositive, last.value, notes);
    }

    let u: Vec<f64> = values
        .iter()
        .map(|v| (v.outer_radius / r0).ln().ln())
        .collect();
    let lv: Vec<f64> = values.iter().map(|v| v.log_value).collect();
    let slope = |i: usize| (lv[i + 1] - lv[i]) / (u[i + 1] - u[i]);
    let (s_prev, s_last) = (slope(n - 3), slope(n - 2));
    if !(s_prev < 0.0 && s_last < 0.0) {
        notes.push("no consistent decrease to extrapolate".into());
        return (Trend::Undetermined, f64::NAN, notes);
    }
    let ratio = s_last / s_prev;
    notes.push(format!("log-log decay slopes {s_prev:.6} then {s_last:.6}"));
    if ratio >= opts.sustained_slope_ratio {
        notes.push(format!(
            "sustained decay in ln Cap against ln ln R (slope ratio {ratio:.4})"
        ));
        return (Trend::ToZero, 0.0, notes);
    }
    let d_prev = lv[n - 2] - lv[n - 3];
    let d_last = lv[n - 1] - lv[n - 2];
    let r = d_last / d_prev;
    if r > 0.0 && r < 1.0 {
        let remaining = d_last * r / (1.0 - r);
        let limit = (lv[n - 1] + remaining).exp();
        notes.push(format!(
            "geometric extrapolation of ln Cap with ratio {r:.4}"
        ));
        return (Trend::ToPositive, limit, notes);
    }
    notes.push(format!("log-increment ratio {r:.4} does not extrapolate"));
    (Trend::Undetermined, f64::NAN, notes)
}
