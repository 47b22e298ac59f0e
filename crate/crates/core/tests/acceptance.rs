//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::*;
use pcap_core::submersion::{CutoffFamily, SubmersionSpec};
use pcap_core::{
    capacity_limit, classify, cross_check, flux_capacity, pulled_back_energy, sweep_p,
    variational_solve, verify_decay, ClassifyOptions, Decision, LimitOptions, ModelManifold, Trend,
};
use proptest::test_runner::{Config, TestRunner};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// R^n threshold matrix: 32 exact verdicts in under 10 s.
fn rn_threshold_matrix() -> Outcome {
    let start = Instant::now();
    let o = ClassifyOptions::default();
    let mut wrong = Vec::new();
    for n in 1..=4 {
        let m = euclidean(n);
        for &p in &P_GRID {
            let got = classify(&m, p, &o).unwrap().decision;
            if got != expected_rn(n, p) {
                wrong.push(format!("(n={n}, p={p}): {got:?}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        wrong.is_empty() && secs < 10.0,
        format!(
            "{}/32 verdicts match in {secs:.2} s {}",
            32 - wrong.len(),
            wrong.join(" ")
        ),
    )
}

fn gaussian_line_reproduction() -> Outcome {
    let o = ClassifyOptions::default();
    let m = gaussian_line();
    let at2 = classify(&m, 2.0, &o).unwrap().decision;
    let grid: Vec<f64> = (0..=9).map(|k| 1.5 + 0.5 * f64::from(k)).collect();
    let s = sweep_p(&m, &grid, &o).unwrap();
    let all = s.rows.iter().all(|r| r.decision == Decision::Parabolic);
    outcome(
        at2 == Decision::Parabolic && all,
        format!("p=2: {at2:?}; sweep 1.5..6 all Parabolic: {all}"),
    )
}

fn capacity_oracle_agreement() -> Outcome {
    let corpus: Vec<(&str, ModelManifold, f64, f64)> = vec![
        ("R^2 p=2", euclidean(2), 2.0, 10.0),
        ("R^2 p=3", euclidean(2), 3.0, 10.0),
        ("R^3 p=2", euclidean(3), 2.0, 10.0),
        ("R^3 p=3", euclidean(3), 3.0, 10.0),
        ("R^4 p=2", euclidean(4), 2.0, 10.0),
        ("R^4 p=3", euclidean(4), 3.0, 10.0),
        ("H^3 p=2", hyperbolic3(), 2.0, 5.0),
        ("gaussian-warp p=2", gaussian_warp(), 2.0, 3.0),
        ("constant-S p=2", constant_s(3.0), 2.0, 10.0),
        ("gaussian-line p=3", gaussian_line(), 3.0, 2.5),
    ];
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for (name, m, p, r) in &corpus {
        let (gap, above, _, _) = variational_vs_flux(m, *p, *r, 10_000);
        worst = worst.max(gap);
        if gap >= 1e-3 || !above {
            bad.push(format!("{name}: gap {gap:.3e} above-bound {above}"));
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "10 manifolds, worst relative gap {worst:.3e} {}",
            bad.join("; ")
        ),
    )
}

fn classical_constant() -> Outcome {
    let m = euclidean(3);
    let mut worst: f64 = 0.0;
    for r in [10.0, 100.0, 1000.0] {
        let v = flux_capacity(&m, 2.0, r, &q()).unwrap().value;
        worst = worst.max(rel(v, 4.0 * PI * r / (r - 1.0)));
    }
    let lim = capacity_limit(&m, 2.0, &[10.0, 100.0, 1e4], &LimitOptions::default()).unwrap();
    let at_1e4 = lim.values.last().unwrap().value;
    let limit_ok = lim.trend == Trend::ToPositive
        && rel(lim.limit_estimate, 4.0 * PI) < 0.01
        && rel(at_1e4, 4.0 * PI) < 0.01;
    outcome(
        worst < 1e-8 && limit_ok,
        format!(
            "max rel error {worst:.2e}; trend {} limit {:.8} Cap(1e4) = {at_1e4:.8}",
            lim.trend.as_str(),
            lim.limit_estimate
        ),
    )
}

fn two_route_consistency() -> Outcome {
    let o = ClassifyOptions::default();
    let l = LimitOptions::default();
    let (mut checked, mut agreed, mut skipped) = (0, 0, 0);
    let mut bad = Vec::new();
    for (name, m) in named_corpus() {
        for p in [1.5, 2.0, 3.0, 4.5] {
            let c = cross_check(&m, p, &o, &l).unwrap();
            match c.agrees {
                None => skipped += 1,
                Some(a) => {
                    checked += 1;
                    if a {
                        agreed += 1;
                    } else {
                        bad.push(format!(
                            "{name} p={p}: {:?} vs {}",
                            c.criterion.decision,
                            c.capacity.trend.as_str()
                        ));
                    }
                }
            }
        }
    }
    outcome(
        checked > 0 && agreed == checked,
        format!(
            "{agreed}/{checked} agree ({skipped} inconclusive) {}",
            bad.join("; ")
        ),
    )
}

fn energy_decay() -> Outcome {
    let s = SubmersionSpec::new(2, expr("t"), expr("1"), None, 1.0).unwrap();
    let f = CutoffFamily::default();
    let schedule = [2u64, 4, 16, 256];
    let r = verify_decay(&s, 2.0, &schedule, &f, &ClassifyOptions::default()).unwrap();
    let worst = r
        .energies
        .iter()
        .map(|e| rel(e.energy, 2.0 * PI / (e.j as f64).ln()))
        .fold(0.0, f64::max);
    let doubled = s.with_scaled_volume(2.0).unwrap();
    let worst_double = schedule
        .iter()
        .map(|&j| {
            let a = pulled_back_energy(&s, &f, 2.0, j).unwrap();
            rel(pulled_back_energy(&doubled, &f, 2.0, j).unwrap(), 2.0 * a)
        })
        .fold(0.0, f64::max);
    let d2 = verify_decay(&doubled, 2.0, &schedule, &f, &ClassifyOptions::default()).unwrap();
    outcome(
        worst < 1e-6 && r.decays && worst_double < 1e-8 && d2.decays,
        format!(
            "max rel error {worst:.2e}, decays {}; doubling V rel error {worst_double:.2e}",
            r.decays
        ),
    )
}

fn property_suites() -> Outcome {
    let run = |cases: u32| {
        TestRunner::new(Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        })
    };
    let mut results = Vec::new();
    let mut record = |name: &str, r: Result<(), String>| results.push((name.to_string(), r));

    record(
        "domain monotonicity",
        run(64)
            .run(
                &(arb_manifold(), 1.1f64..6.0, 1.5f64..1e4, 1.5f64..1e4),
                |(m, p, a, b)| check_domain_monotone(&m, p, a, b),
            )
            .map_err(|e| e.to_string()),
    );
    record(
        "S scaling",
        run(64)
            .run(
                &(
                    arb_manifold(),
                    1.1f64..6.0,
                    1.5f64..1e3,
                    proptest::sample::select(vec![0.5, 2.0, 10.0]),
                ),
                |(m, p, r, c)| check_scaling(&m, p, r, c),
            )
            .map_err(|e| e.to_string()),
    );
    record(
        "verdict invariance",
        run(24)
            .run(
                &(
                    arb_manifold(),
                    proptest::sample::select(P_GRID.to_vec()),
                    proptest::sample::select(vec![0.5, 2.0, 10.0]),
                ),
                |(m, p, c)| check_verdict_invariance(&m, p, c),
            )
            .map_err(|e| e.to_string()),
    );
    record(
        "parser round-trip x1000",
        run(1000)
            .run(&arb_expr(), |e| check_round_trip(&e))
            .map_err(|e| e.to_string()),
    );
    record(
        "eval_log vs log(eval)",
        run(1000)
            .run(&(arb_expr(), 1.0f64..1e6), |(e, t)| check_eval_log(&e, t))
            .map_err(|e| e.to_string()),
    );
    let failed: Vec<String> = results
        .iter()
        .filter_map(|(n, r)| r.as_ref().err().map(|e| format!("{n}: {e}")))
        .collect();
    outcome(
        failed.is_empty(),
        format!(
            "{}/{} suites hold {}",
            results.len() - failed.len(),
            results.len(),
            failed.join("; ")
        ),
    )
}

fn minimizer_shape() -> Outcome {
    let sol = variational_solve(&euclidean(3), 2.0, 10.0, 4000).unwrap();
    let err = sol
        .nodes
        .iter()
        .zip(&sol.values)
        .map(|(t, u)| (u - (1.0 / t - 0.1) / 0.9).abs())
        .fold(0.0, f64::max);
    outcome(err <= 1e-3, format!("max-norm error {err:.3e}"))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("1 R^n threshold matrix", rn_threshold_matrix),
        ("2 gaussian-line reproduction", gaussian_line_reproduction),
        ("3 capacity oracle agreement", capacity_oracle_agreement),
        ("4 classical constant 4 pi R/(R-1)", classical_constant),
        ("5 two-route consistency", two_route_consistency),
        ("6 energy decay on the plane", energy_decay),
        ("7 property suites", property_suites),
        ("8 minimizer shape", minimizer_shape),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failures += 1;
        }
        println!(
            "[{}] criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail.trim_end()
        );
    }
    println!("acceptance: {}/8 criteria pass", 8 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
