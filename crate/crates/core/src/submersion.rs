//! Parabolicity transfer along submersions with bounded fibers.
//!
//! The data is radial: a model base `(n, sigma)` and a fiber-volume profile
//! `V(t) = Vol(F_x)` for `x` on `dB_t`. Bounded fibers over a p-parabolic
//! base give a p-parabolic total space; the mechanism is that cutoffs
//! `u_j` on the base, pulled back, keep energy at most `sup V` times their
//! base energy, so the base sequence with energy tending to zero lifts.

use thiserror::Error;

use crate::capacity::{self, optimal_profile_between, CapacityError, OptimalProfile};
use crate::criterion::{self, ClassifyOptions, CriterionError, Decision, Verdict};
use crate::geometry::{check_positive, ModelError, ModelManifold};
use crate::profile::{EvalError, ProfileExpr};
use crate::quadrature::{integrate_log, QuadratureError, QuadratureSpec};
use crate::regression;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubmersionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Criterion(#[from] CriterionError),
    #[error("base verdict was computed at p = {verdict_p}, requested p = {p}")]
    ExponentMismatch { verdict_p: f64, p: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid bound range: T = {0} must exceed the inner radius")]
    Range(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmersionSpec {
    base: ModelManifold,
    fiber_volume_fn: ProfileExpr,
    claimed_bound: Option<f64>,
}

impl SubmersionSpec {
    pub fn new(
        base_dim: u32,
        sigma: ProfileExpr,
        fiber_volume_fn: ProfileExpr,
        claimed_bound: Option<f64>,
        inner_radius: f64,
    ) -> Result<Self, SubmersionError> {
        let base = ModelManifold::with_inner_radius(
            base_dim,
            sigma,
            ProfileExpr::Const(1.0),
            0,
            1.0,
            inner_radius,
        )?;
        check_positive("fiber volume", &fiber_volume_fn, inner_radius)?;
        if let Some(c) = claimed_bound {
            if !(c.is_finite() && c > 0.0) {
                return Err(SubmersionError::Precondition(format!(
                    "claimed bound must be positive, got {c}"
                )));
            }
        }
        Ok(SubmersionSpec {
            base,
            fiber_volume_fn,
            claimed_bound,
        })
    }

    /// The base as a model manifold with a trivial fiber.
    pub fn base_manifold(&self) -> &ModelManifold {
        &self.base
    }

    pub fn fiber_volume_fn(&self) -> &ProfileExpr {
        &self.fiber_volume_fn
    }

    pub fn claimed_bound(&self) -> Option<f64> {
        self.claimed_bound
    }

    pub fn inner_radius(&self) -> f64 {
        self.base.inner_radius()
    }

    /// Same base, fiber volume multiplied by `c`.
    pub fn with_scaled_volume(&self, c: f64) -> Result<Self, SubmersionError> {
        Self::new(
            self.base.base_dim(),
            self.base.base_profile().clone(),
            self.fiber_volume_fn.scaled(c),
            self.claimed_bound.map(|b| b * c),
            self.inner_radius(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub bounded: bool,
    pub sup_estimate: f64,
    pub argmax_t: f64,
    /// Slope of `log V` against `log t` on `[sqrt(T), T]`.
    pub tail_exponent: f64,
    /// Slope of `log V` against `t` on the same window.
    pub exponential_rate: f64,
    /// Whether `sup_estimate` respects the claimed bound, if one was given.
    pub claim_holds: Option<bool>,
    pub notes: Vec<String>,
}

/// Power-law growth below this exponent counts as levelling off.
pub const GROWTH_TOLERANCE: f64 = 0.01;

pub const DEFAULT_BOUND_RANGE: f64 = criterion::DEFAULT_T_MAX;

/// Estimates `sup V` on `[r0, t_max]` and decides from the tail whether `V`
/// stays bounded beyond it.
pub fn check_uniform_bound(s: &SubmersionSpec, t_max: f64) -> Result<BoundCheck, SubmersionError> {
    let r0 = s.inner_radius();
    if !(t_max.is_finite() && t_max > r0) {
        return Err(SubmersionError::Range(t_max));
    }
    let v = &s.fiber_volume_fn;
    let log_v = |t: f64| v.eval_log(t);

    // coarse log-spaced scan, then repeated zooming around the best point
    let mut grid = log_spaced(r0, t_max, 513);
    let mut best = (f64::NEG_INFINITY, r0);
    for _ in 0..6 {
        let mut k_best = 0;
        for (k, &t) in grid.iter().enumerate() {
            let y = log_v(t)?;
            if y > best.0 {
                best = (y, t);
                k_best = k;
            }
            if y == best.0 && t == best.1 {
                k_best = k;
            }
        }
        let lo = grid[k_best.saturating_sub(1)];
        let hi = grid[(k_best + 1).min(grid.len() - 1)];
        if hi <= lo {
            break;
        }
        grid = (0..=32)
            .map(|i| lo + (hi - lo) * f64::from(i) / 32.0)
            .collect();
    }

    let lo = t_max.sqrt().max(r0 * std::f64::consts::E);
    let mut notes = Vec::new();
    let (tail_exponent, exponential_rate, bounded) = if lo >= t_max {
        notes.push("range too short for a tail fit; bound judged on the grid only".into());
        (f64::NAN, f64::NAN, best.0.is_finite())
    } else {
        let ts = log_spaced(lo, t_max, 64);
        let ys = ts
            .iter()
            .map(|&t| log_v(t))
            .collect::<Result<Vec<_>, _>>()?;
        let lts: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let power = regression::fit(&lts, &ys).expect("distinct tail points");
        let expo = regression::fit(&ts, &ys).expect("distinct tail points");
        let bounded = if power.flat {
            notes.push("V is constant on the tail window".into());
            true
        } else if expo.r_squared > power.r_squared && expo.slope <= 0.0 {
            notes.push(format!("exponential tail, rate {:.6e}", expo.slope));
            true
        } else if power.slope < GROWTH_TOLERANCE {
            notes.push(format!("power tail, exponent {:.6}", power.slope));
            true
        } else {
            notes.push(format!(
                "V grows on the tail window (power exponent {:.6})",
                power.slope
            ));
            false
        };
        (power.slope, expo.slope, bounded)
    };

    let sup_estimate = best.0.exp();
    let claim_holds = s.claimed_bound.map(|c| sup_estimate <= c * (1.0 + 1e-12));
    if claim_holds == Some(false) {
        notes.push(format!(
            "sup estimate {sup_estimate} exceeds the claimed bound"
        ));
    }
    Ok(BoundCheck {
        bounded,
        sup_estimate,
        argmax_t: best.1,
        tail_exponent,
        exponential_rate,
        claim_holds,
        notes,
    })
}

fn log_spaced(a: f64, b: f64, count: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    let last = (count - 1) as f64;
    (0..count)
        .map(|k| match k {
            0 => a,
            k if k + 1 == count => b,
            k => (la + (lb - la) * k as f64 / last).exp(),
        })
        .collect()
}

/// Verdict for the total space given the base verdict at the same `p`.
///
/// Only the parabolic direction transfers, so the result is `Parabolic` or
/// `Inconclusive`, never `Hyperbolic`.
pub fn transfer_verdict(
    s: &SubmersionSpec,
    base_verdict: &Verdict,
    p: f64,
) -> Result<Verdict, SubmersionError> {
    if base_verdict.p != p {
        return Err(SubmersionError::ExponentMismatch {
            verdict_p: base_verdict.p,
            p,
        });
    }
    let bound = check_uniform_bound(s, base_verdict.t_max)?;
    let mut out = base_verdict.clone();
    let bounded = bound.bounded && bound.claim_holds != Some(false);
    out.decision = match (bounded, base_verdict.decision) {
        (true, Decision::Parabolic) => {
            out.evidence_notes.push(format!(
                "transfer: fibers bounded by {:.6e} over a parabolic base",
                bound.sup_estimate
            ));
            Decision::Parabolic
        }
        (true, d) => {
            out.evidence_notes.push(format!(
                "transfer: base is {}, only parabolicity lifts",
                d.as_str()
            ));
            Decision::Inconclusive
        }
        (false, _) => {
            out.evidence_notes
                .push("transfer: fiber volume not uniformly bounded".into());
            Decision::Inconclusive
        }
    };
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutoffShape {
    /// The base's capacity-optimal profile on `[j, R(j)]` at the given `p`.
    CapacityOptimal,
    /// `ln(R/t) / ln(R/j)`.
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffFamily {
    pub shape: CutoffShape,
    /// `R(j) = j^outer_power`.
    pub outer_power: f64,
    pub quadrature: QuadratureSpec,
}

impl Default for CutoffFamily {
    fn default() -> Self {
        CutoffFamily {
            shape: CutoffShape::CapacityOptimal,
            outer_power: 2.0,
            quadrature: QuadratureSpec::default(),
        }
    }
}

impl CutoffFamily {
    pub fn logarithmic() -> Self {
        CutoffFamily {
            shape: CutoffShape::Logarithmic,
            ..Self::default()
        }
    }

    pub fn outer_radius(&self, j: u64) -> f64 {
        (j as f64).powf(self.outer_power)
    }
}

enum Cutoff<'a> {
    Optimal(OptimalProfile<'a>),
    Log { log_width: f64 },
}

impl Cutoff<'_> {
    fn log_slope(&self, t: f64) -> Result<f64, EvalError> {
        match self {
            Cutoff::Optimal(u) => u.log_slope(t),
            Cutoff::Log { log_width } => Ok(-t.ln() - log_width),
        }
    }
}

fn cutoff<'a>(
    base: &'a ModelManifold,
    family: &CutoffFamily,
    p: f64,
    j: u64,
) -> Result<(Cutoff<'a>, f64, f64), SubmersionError> {
    capacity::check_exponent(p)?;
    let inner = j as f64;
    let outer = family.outer_radius(j);
    if j == 0 || inner < base.inner_radius() || !(outer > inner) || !outer.is_finite() {
        return Err(SubmersionError::Schedule(format!(
            "cutoff j = {j} needs inner radius <= j < R(j), R(j) = {outer}"
        )));
    }
    let u = match family.shape {
        CutoffShape::CapacityOptimal => Cutoff::Optimal(optimal_profile_between(
            base,
            p,
            inner,
            outer,
            &family.quadrature,
        )?),
        CutoffShape::Logarithmic => Cutoff::Log {
            log_width: (outer / inner).ln().ln(),
        },
    };
    Ok((u, inner, outer))
}

/// `ln E_j`, with `E_j = int_j^{R(j)} |u_j'|^p V omega_{n-1} sigma^{n-1} dt`.
pub fn log_pulled_back_energy(
    s: &SubmersionSpec,
    family: &CutoffFamily,
    p: f64,
    j: u64,
) -> Result<f64, SubmersionError> {
    let base = &s.base;
    let (u, inner, outer) = cutoff(base, family, p, j)?;
    let density = base.flux_density();
    let v = &s.fiber_volume_fn;
    let phi =
        |t: f64| Ok::<_, EvalError>(p * u.log_slope(t)? + v.eval_log(t)? + density.log_value(t)?);
    Ok(integrate_log(phi, inner, outer, &family.quadrature)?.log_value)
}

pub fn pulled_back_energy(
    s: &SubmersionSpec,
    family: &CutoffFamily,
    p: f64,
    j: u64,
) -> Result<f64, SubmersionError> {
    Ok(log_pulled_back_energy(s, family, p, j)?.exp())
}

/// Energy of `u_j` on the base alone (`V = 1`).
pub fn base_energy(
    s: &SubmersionSpec,
    family: &CutoffFamily,
    p: f64,
    j: u64,
) -> Result<f64, SubmersionError> {
    let plain = SubmersionSpec {
        fiber_volume_fn: ProfileExpr::Const(1.0),
        ..s.clone()
    };
    pulled_back_energy(&plain, family, p, j)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyPoint {
    pub j: u64,
    pub energy: f64,
    pub log_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub decays: bool,
    pub energies: Vec<EnergyPoint>,
    pub notes: Vec<String>,
}

/// Relative drop that certifies decay without a model fit.
pub const DECAY_DROP: f64 = 1e-6;

/// Computes `E_j` over the schedule after checking that the base is
/// parabolic at `p` and the fibers bounded.
///
/// `decays` requires the last steps to decrease, and then either the final
/// energy below `1e-6 E_{j_1}` or a fit of `ln E` against `ln j` or
/// `ln ln j` with a slope confidently below zero. A two-point schedule
/// decays if it decreases.
pub fn verify_decay(
    s: &SubmersionSpec,
    p: f64,
    schedule: &[u64],
    family: &CutoffFamily,
    classify_opts: &ClassifyOptions,
) -> Result<DecayReport, SubmersionError> {
    if schedule.len() < 2 {
        return Err(SubmersionError::Schedule(
            "need at least two values of j".into(),
        ));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SubmersionError::Schedule(
            "j values must be strictly increasing".into(),
        ));
    }
    if schedule[0] < 2 {
        return Err(SubmersionError::Schedule("j must be at least 2".into()));
    }
    let base_verdict = criterion::classify(&s.base, p, classify_opts)?;
    if base_verdict.decision != Decision::Parabolic {
        return Err(SubmersionError::Precondition(format!(
            "base is {} at p = {p}, not Parabolic",
            base_verdict.decision.as_str()
        )));
    }
    let bound = check_uniform_bound(s, classify_opts.t_max)?;
    if !bound.bounded || bound.claim_holds == Some(false) {
        return Err(SubmersionError::Precondition(
            "fiber volume is not uniformly bounded".into(),
        ));
    }

    use rayon::prelude::*;
    let energies = schedule
        .par_iter()
        .map(|&j| {
            let log_energy = log_pulled_back_energy(s, family, p, j)?;
            Ok(EnergyPoint {
                j,
                energy: log_energy.exp(),
                log_energy,
            })
        })
        .collect::<Result<Vec<_>, SubmersionError>>()?;
    let (decays, notes) = judge_decay(&energies);
    Ok(DecayReport {
        decays,
        energies,
        notes,
    })
}

fn judge_decay(e: &[EnergyPoint]) -> (bool, Vec<String>) {
    let logs: Vec<f64> = e.iter().map(|x| x.log_energy).collect();
    let steps = (logs.len() - 1).min(2);
    let decreasing = logs[logs.len() - steps - 1..]
        .windows(2)
        .all(|w| w[1] < w[0]);
    if !decreasing {
        return (false, vec!["energies are not eventually decreasing".into()]);
    }
    if logs[logs.len() - 1] - logs[0] < DECAY_DROP.ln() {
        return (
            true,
            vec![format!("final energy below {DECAY_DROP:e} of the first")],
        );
    }
    if logs.len() < 3 {
        return (true, vec!["two-point schedule, decreasing".into()]);
    }
    let ln_j: Vec<f64> = e.iter().map(|x| (x.j as f64).ln()).collect();
    let ln_ln_j: Vec<f64> = ln_j.iter().map(|l| l.ln()).collect();
    let fits = [
        ("power", regression::fit(&ln_j, &logs)),
        ("log", regression::fit(&ln_ln_j, &logs)),
    ];
    let best = fits
        .iter()
        .filter_map(|(name, f)| f.map(|f| (name, f)))
        .max_by(|a, b| a.1.r_squared.total_cmp(&b.1.r_squared));
    match best {
        Some((name, f)) if !f.flat && f.slope_interval().1 < 0.0 => (
            true,
            vec![format!(
                "{name} decay model, slope {:.6} (R^2 {:.9})",
                f.slope, f.r_squared
            )],
        ),
        _ => (false, vec!["no decaying model fits the energies".into()]),
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::capacity::flux_capacity;

    fn expr(s: &str) -> ProfileExpr {
        ProfileExpr::parse(s).unwrap()
    }

    fn plane(v: &str) -> SubmersionSpec {
        SubmersionSpec::new(2, expr("t"), expr(v), None, 1.0).unwrap()
    }

    fn gaussian_line() -> SubmersionSpec {
        SubmersionSpec::new(
            1,
            expr("1"),
            expr("12.566370614359172 * exp(-t^2)^2"),
            None,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn bound_examples() {
        let b = check_uniform_bound(&gaussian_line(), 1e6).unwrap();
        assert!(b.bounded);
        assert_eq!(b.argmax_t, 1.0);
        assert!((b.sup_estimate - 4.0 * PI * (-2.0f64).exp()).abs() < 1e-12);

        let b = check_uniform_bound(&plane("1"), 1e6).unwrap();
        assert!(b.bounded);
        assert_eq!(b.sup_estimate, 1.0);

        let b = check_uniform_bound(&plane("t"), 1e6).unwrap();
        assert!(!b.bounded);
        assert!((b.tail_exponent - 1.0).abs() < 1e-9);

        let b = check_uniform_bound(&plane("2 - 1/t"), 1e6).unwrap();
        assert!(b.bounded);
        assert!(b.sup_estimate < 2.0 && b.sup_estimate > 1.999);

        let b = check_uniform_bound(&plane("1 + exp(-(t - 3)^2)"), 1e3).unwrap();
        assert!((b.argmax_t - 3.0).abs() < 1e-3);
        assert!((b.sup_estimate - 2.0).abs() < 1e-6);
    }

    #[test]
    fn claimed_bound_is_checked() {
        let s = SubmersionSpec::new(2, expr("t"), expr("3"), Some(2.0), 1.0).unwrap();
        let b = check_uniform_bound(&s, 1e4).unwrap();
        assert_eq!(b.claim_holds, Some(false));
        let s = SubmersionSpec::new(2, expr("t"), expr("3"), Some(3.0), 1.0).unwrap();
        assert_eq!(
            check_uniform_bound(&s, 1e4).unwrap().claim_holds,
            Some(true)
        );
    }

    #[test]
    fn rejects_nonpositive_volume() {
        let e = SubmersionSpec::new(2, expr("t"), expr("1 - t"), None, 1.0).unwrap_err();
        assert!(matches!(
            e,
            SubmersionError::Model(ModelError::NonPositiveProfile { .. })
        ));
    }

    #[test]
    fn transfer_rules() {
        let o = ClassifyOptions::default();
        let r2 = plane("1");
        let base = criterion::classify(r2.base_manifold(), 2.0, &o).unwrap();
        assert_eq!(base.decision, Decision::Parabolic);
        let v = transfer_verdict(&r2, &base, 2.0).unwrap();
        assert_eq!(v.decision, Decision::Parabolic);

        let unbounded = plane("t");
        assert_eq!(
            transfer_verdict(&unbounded, &base, 2.0).unwrap().decision,
            Decision::Inconclusive
        );

        let r3 = SubmersionSpec::new(3, expr("t"), expr("1"), None, 1.0).unwrap();
        let base = criterion::classify(r3.base_manifold(), 2.0, &o).unwrap();
        assert_eq!(base.decision, Decision::Hyperbolic);
        assert_eq!(
            transfer_verdict(&r3, &base, 2.0).unwrap().decision,
            Decision::Inconclusive
        );

        assert!(matches!(
            transfer_verdict(&r3, &base, 3.0),
            Err(SubmersionError::ExponentMismatch { .. })
        ));
    }

    #[test]
    fn plane_energies_match_closed_form() {
        let s = plane("1");
        for family in [CutoffFamily::default(), CutoffFamily::logarithmic()] {
            for j in [2u64, 3, 4, 16, 256] {
                let e = pulled_back_energy(&s, &family, 2.0, j).unwrap();
                let want = 2.0 * PI / (j as f64).ln();
                assert!(
                    (e - want).abs() <= 1e-9 * want,
                    "{family:?} j={j}: {e} vs {want}"
                );
            }
        }
    }

    #[test]
    fn energy_is_linear_in_volume_and_bounded_by_sup() {
        let s = plane("1 + exp(-t)");
        let f = CutoffFamily::default();
        let doubled = s.with_scaled_volume(2.0).unwrap();
        for j in [2u64, 5, 9] {
            let e = pulled_back_energy(&s, &f, 3.0, j).unwrap();
            let e2 = pulled_back_energy(&doubled, &f, 3.0, j).unwrap();
            assert!((e2 - 2.0 * e).abs() <= 1e-9 * e);
            let sup = 1.0 + (-(j as f64)).exp();
            assert!(e <= sup * base_energy(&s, &f, 3.0, j).unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn optimal_cutoff_energy_is_annulus_capacity() {
        let s = SubmersionSpec::new(3, expr("t"), expr("1"), None, 1.0).unwrap();
        let f = CutoffFamily::default();
        let q = QuadratureSpec::default();
        for (p, j) in [(2.0, 3u64), (3.0, 4), (2.5, 10)] {
            let core = ModelManifold::with_inner_radius(3, expr("t"), expr("1"), 0, 1.0, j as f64)
                .unwrap();
            let cap = flux_capacity(&core, p, f.outer_radius(j), &q)
                .unwrap()
                .value;
            let e = base_energy(&s, &f, p, j).unwrap();
            assert!((e - cap).abs() <= 1e-9 * cap, "p={p} j={j}: {e} vs {cap}");
        }
    }

    #[test]
    fn gaussian_line_energies_vanish() {
        let s = gaussian_line();
        let f = CutoffFamily::default();
        let es: Vec<f64> = [2u64, 4, 8, 16]
            .iter()
            .map(|&j| pulled_back_energy(&s, &f, 2.0, j).unwrap())
            .collect();
        assert!(es.windows(2).all(|w| w[1] < w[0]));
        assert!(es[3] < 1e-100);
        let r = verify_decay(&s, 2.0, &[2, 4, 8, 16], &f, &ClassifyOptions::default()).unwrap();
        assert!(r.decays);
    }

    #[test]
    fn verify_decay_plane_and_refusal() {
        let o = ClassifyOptions::default();
        let f = CutoffFamily::default();
        let r = verify_decay(&plane("1"), 2.0, &[2, 4, 16, 256], &f, &o).unwrap();
        assert!(r.decays, "{:?}", r.notes);
        for e in &r.energies {
            let want = 2.0 * PI / (e.j as f64).ln();
            assert!((e.energy - want).abs() <= 1e-6 * want);
        }
        let r3 = SubmersionSpec::new(3, expr("t"), expr("1"), None, 1.0).unwrap();
        assert!(matches!(
            verify_decay(&r3, 2.0, &[2, 4], &f, &o),
            Err(SubmersionError::Precondition(_))
        ));
        assert!(matches!(
            verify_decay(&plane("1"), 2.0, &[4], &f, &o),
            Err(SubmersionError::Schedule(_))
        ));
        assert!(matches!(
            verify_decay(&plane("t"), 2.0, &[2, 4], &f, &o),
            Err(SubmersionError::Precondition(_))
        ));
    }

    #[test]
    fn degenerate_cutoff_rejected() {
        let s = plane("1");
        assert!(matches!(
            pulled_back_energy(&s, &CutoffFamily::default(), 2.0, 1),
            Err(SubmersionError::Schedule(_))
        ));
    }
}
