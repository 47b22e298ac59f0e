//! Corpus manifolds and property checks shared by the integration suites.

#![allow(dead_code)]

use std::f64::consts::PI;

use pcap_core::capacity::{optimal_profile, DEFAULT_SCHEDULE};
use pcap_core::profile::{BinaryOp, Func};
use pcap_core::{
    classify, flux_capacity, variational_capacity, ClassifyOptions, Decision, ModelManifold,
    ProfileExpr, QuadratureSpec,
};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub fn expr(s: &str) -> ProfileExpr {
    ProfileExpr::parse(s).unwrap()
}

pub fn euclidean(n: u32) -> ModelManifold {
    ModelManifold::euclidean(n).unwrap()
}

/// `n = 1, sigma = 1, f = exp(-t^2), l = 2, vol(L) = 4 pi`.
pub fn gaussian_line() -> ModelManifold {
    ModelManifold::new(1, expr("1"), expr("exp(-t^2)"), 2, 4.0 * PI).unwrap()
}

/// Bounded warp with a 3-dimensional fiber over the plane.
pub fn bounded_warp_plane() -> ModelManifold {
    ModelManifold::new(2, expr("t"), expr("1 + exp(-t)"), 3, 2.5).unwrap()
}

pub fn hyperbolic3() -> ModelManifold {
    ModelManifold::hyperbolic(3).unwrap()
}

/// `S(t) = 2 pi t exp(-t^2)`.
pub fn gaussian_warp() -> ModelManifold {
    ModelManifold::new(2, expr("t"), expr("exp(-t^2)"), 1, 1.0).unwrap()
}

/// `S = c` everywhere: `n = 1` contributes the factor 2.
pub fn constant_s(c: f64) -> ModelManifold {
    ModelManifold::new(1, expr("1"), expr("1"), 1, c / 2.0).unwrap()
}

pub fn named_corpus() -> Vec<(&'static str, ModelManifold)> {
    vec![
        ("R^1", euclidean(1)),
        ("R^2", euclidean(2)),
        ("R^3", euclidean(3)),
        ("R^4", euclidean(4)),
        ("H^3", hyperbolic3()),
        ("gaussian-line", gaussian_line()),
        ("bounded-warp-plane", bounded_warp_plane()),
        ("gaussian-warp", gaussian_warp()),
        ("constant-S", constant_s(3.0)),
    ]
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn q() -> QuadratureSpec {
    QuadratureSpec::default()
}

/// Expressions over `t` with non-negative constants, as the parser produces.
pub fn arb_expr() -> impl Strategy<Value = ProfileExpr> {
    let leaf = prop_oneof![
        Just(ProfileExpr::Var),
        (0u32..1000).prop_map(|k| ProfileExpr::Const(f64::from(k) / 8.0)),
        (0.0f64..1e6).prop_map(ProfileExpr::Const),
        prop::sample::select(vec![1e-7, 2.5e-12, 3e20, 6.02e23]).prop_map(ProfileExpr::Const),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        let op = prop::sample::select(vec![
            BinaryOp::Add,
            BinaryOp::Sub,
            BinaryOp::Mul,
            BinaryOp::Div,
            BinaryOp::Pow,
        ]);
        let func = prop::sample::select(vec![
            Func::Exp,
            Func::Log,
            Func::Sqrt,
            Func::Sinh,
            Func::Cosh,
        ]);
        prop_oneof![
            inner.clone().prop_map(ProfileExpr::neg),
            (func, inner.clone()).prop_map(|(f, a)| ProfileExpr::call(f, a)),
            (op, inner.clone(), inner).prop_map(|(o, a, b)| ProfileExpr::binary(o, a, b)),
        ]
    })
}

pub fn check_round_trip(e: &ProfileExpr) -> Result<(), TestCaseError> {
    let text = e.to_string();
    let back =
        ProfileExpr::parse(&text).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
    prop_assert_eq!(&back, e, "text {}", text);
    Ok(())
}

/// Linear evaluation is usable as an oracle only when no intermediate
/// overflowed or underflowed.
fn linear_exact(e: &ProfileExpr, t: f64) -> bool {
    let Ok(v) = e.eval(t) else { return false };
    if !v.is_finite() {
        return false;
    }
    if !v.is_normal() && e.eval_log(t).is_ok_and(f64::is_finite) {
        return false;
    }
    match e {
        ProfileExpr::Neg(a) | ProfileExpr::Call(_, a) => linear_exact(a, t),
        ProfileExpr::Binary(_, a, b) => linear_exact(a, t) && linear_exact(b, t),
        _ => true,
    }
}

/// Where both are finite and the linear value is exact, `eval_log` agrees
/// with `ln(eval)` to `1e-10` relative (absolute near zero).
pub fn check_eval_log(e: &ProfileExpr, t: f64) -> Result<(), TestCaseError> {
    let (Ok(v), Ok(l)) = (e.eval(t), e.eval_log(t)) else {
        return Ok(());
    };
    if !linear_exact(e, t) {
        return Ok(());
    }
    if v > 0.0 && v.is_finite() && l.is_finite() {
        let want = v.ln();
        prop_assert!(
            (l - want).abs() <= 1e-10 * want.abs().max(1.0),
            "{e} at {t}: {l} vs {want}"
        );
    }
    Ok(())
}

/// Random corpus manifold with a tame `S`: Euclidean, hyperbolic-like and
/// polynomially warped.
pub fn arb_manifold() -> impl Strategy<Value = ModelManifold> {
    prop_oneof![
        (1u32..=5).prop_map(euclidean),
        (1u32..=4).prop_map(|n| ModelManifold::hyperbolic(n).unwrap()),
        (1u32..=4, 0.5f64..3.0, 1u32..=3, 0.1f64..10.0).prop_map(|(n, a, l, vol)| {
            ModelManifold::new(
                n,
                expr("t"),
                ProfileExpr::parse(&format!("1 + t^{a}")).unwrap(),
                l,
                vol,
            )
            .unwrap()
        }),
        (1u32..=3, 0.2f64..2.0).prop_map(|(n, c)| {
            ModelManifold::new(
                n,
                ProfileExpr::parse(&format!("t + {c}*t^2")).unwrap(),
                expr("1"),
                0,
                1.0,
            )
            .unwrap()
        }),
    ]
}

pub fn check_domain_monotone(
    m: &ModelManifold,
    p: f64,
    r1: f64,
    r2: f64,
) -> Result<(), TestCaseError> {
    let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
    prop_assume!(hi > lo * (1.0 + 1e-9));
    let a = flux_capacity(m, p, lo, &q()).map_err(fail)?;
    let b = flux_capacity(m, p, hi, &q()).map_err(fail)?;
    prop_assert!(
        b.value <= a.value * (1.0 + 1e-9),
        "Cap(R={hi}) = {} > Cap(R={lo}) = {}",
        b.value,
        a.value
    );
    Ok(())
}

/// Scaling `S` by `c` (through `vol(L)`) scales every capacity by `c`;
/// scaling `sigma` scales it by `c^{n-1}`.
pub fn check_scaling(m: &ModelManifold, p: f64, r: f64, c: f64) -> Result<(), TestCaseError> {
    let base = flux_capacity(m, p, r, &q()).map_err(fail)?.value;
    let by_vol = m.with_fiber_volume(c * m.fiber_volume()).map_err(fail)?;
    let v = flux_capacity(&by_vol, p, r, &q()).map_err(fail)?.value;
    prop_assert!(rel(v, c * base) < 1e-8, "vol scaling: {v} vs {}", c * base);
    let by_sigma = m.with_scaled_profile(c).map_err(fail)?;
    let v = flux_capacity(&by_sigma, p, r, &q()).map_err(fail)?.value;
    let k = c.powi(m.base_dim() as i32 - 1);
    prop_assert!(
        rel(v, k * base) < 1e-8,
        "sigma scaling: {v} vs {}",
        k * base
    );
    Ok(())
}

/// Classification ignores constant factors on `f`, `sigma` and `vol(L)`.
pub fn check_verdict_invariance(m: &ModelManifold, p: f64, c: f64) -> Result<(), TestCaseError> {
    let o = ClassifyOptions::default();
    let d = classify(m, p, &o).map_err(fail)?.decision;
    let variants = [
        ("warp", m.with_scaled_warp(c).map_err(fail)?),
        ("sigma", m.with_scaled_profile(c).map_err(fail)?),
        (
            "vol",
            m.with_fiber_volume(c * m.fiber_volume()).map_err(fail)?,
        ),
    ];
    for (what, v) in variants {
        let dv = classify(&v, p, &o).map_err(fail)?.decision;
        prop_assert_eq!(dv, d, "scaling {} by {} at p = {}", what, c, p);
    }
    Ok(())
}

pub fn fail<E: std::fmt::Display>(e: E) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

pub const P_GRID: [f64; 8] = [1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0];

pub fn expected_rn(n: u32, p: f64) -> Decision {
    if p >= f64::from(n) {
        Decision::Parabolic
    } else {
        Decision::Hyperbolic
    }
}

/// Variational vs flux on one manifold; returns the relative gap and whether
/// the variational value sits above flux up to the combined error bounds.
pub fn variational_vs_flux(
    m: &ModelManifold,
    p: f64,
    r: f64,
    grid: usize,
) -> (f64, bool, f64, f64) {
    let f = flux_capacity(m, p, r, &q()).unwrap();
    let v = variational_capacity(m, p, r, grid).unwrap();
    let above = v.value >= f.value - (v.error_bound + f.error_bound);
    (rel(v.value, f.value), above, v.value, f.value)
}

pub fn default_schedule(m: &ModelManifold) -> Vec<f64> {
    DEFAULT_SCHEDULE
        .iter()
        .map(|r| r * m.inner_radius())
        .collect()
}

pub fn minimizer_error(m: &ModelManifold, p: f64, r: f64, grid: usize) -> f64 {
    let sol = pcap_core::variational_solve(m, p, r, grid).unwrap();
    let prof = optimal_profile(m, p, r, &q()).unwrap();
    let exact = prof.eval_many(&sol.nodes).unwrap();
    sol.values
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}
