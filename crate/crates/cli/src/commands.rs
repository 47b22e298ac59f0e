use std::path::Path;
use std::time::Instant;

use pcap_core::criterion::{log_integrand_samples, DEFAULT_MARGIN, DEFAULT_T_MAX};
use pcap_core::quadrature::DEFAULT_REL_TOL;
use pcap_core::submersion::check_uniform_bound;
use pcap_core::{
    capacity::DEFAULT_GRID_SIZE, classify, flux_capacity, sweep_p, transfer_verdict,
    variational_solve, verify_decay, ClassifyOptions, CutoffFamily, CutoffShape, Decision,
    QuadratureSpec, Verdict,
};

use crate::error::CliError;
use crate::record::{write_csv, ResultRecord};
use crate::spec::{self, Kind, LoadedSpec, Manifold};
use crate::{
    CapacityArgs, ClassifyArgs, Cli, Command, CommonArgs, CriterionArgs, EnergyArgs, Format,
    MethodArg, ShapeArg, SweepArgs,
};

/// What the binary prints and returns.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub stdout: String,
    pub stderr: Vec<String>,
    pub code: i32,
}

const LOG_DATA_SAMPLES: usize = 256;

/// Resolved numeric settings: flag, then environment (tolerance only), then
/// the spec's `options`, then the library default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub t_max: f64,
    pub margin: f64,
    pub rel_tol: f64,
    pub grid_size: usize,
}

impl Settings {
    pub fn resolve(
        common: &CommonArgs,
        criterion: Option<&CriterionArgs>,
        grid: Option<usize>,
        spec: &LoadedSpec,
        env_rel_tol: Option<&str>,
    ) -> Result<Self, CliError> {
        let o = &spec.file.options;
        // a malformed variable only matters when no flag overrides it
        let env = match (common.rel_tol, env_rel_tol) {
            (None, Some(text)) => Some(text.trim().parse::<f64>().map_err(|_| {
                CliError::Usage(format!("{}: not a number: {text:?}", crate::RELTOL_ENV))
            })?),
            _ => None,
        };
        let s = Settings {
            t_max: criterion
                .and_then(|c| c.t_max)
                .or(o.t_max)
                .unwrap_or(DEFAULT_T_MAX),
            margin: criterion
                .and_then(|c| c.margin)
                .or(o.margin)
                .unwrap_or(DEFAULT_MARGIN),
            rel_tol: common
                .rel_tol
                .or(env)
                .or(o.rel_tol)
                .unwrap_or(DEFAULT_REL_TOL),
            grid_size: grid.or(o.grid_size).unwrap_or(DEFAULT_GRID_SIZE),
        };
        if !(s.rel_tol > 0.0 && s.rel_tol < 1.0) {
            return Err(CliError::Usage(format!(
                "rel_tol must lie in (0, 1), got {}",
                s.rel_tol
            )));
        }
        if !s.t_max.is_finite() {
            return Err(CliError::Usage(format!(
                "T_max must be finite, got {}",
                s.t_max
            )));
        }
        Ok(s)
    }

    fn quadrature(&self) -> QuadratureSpec {
        QuadratureSpec::with_rel_tol(self.rel_tol)
    }

    fn classify_options(&self) -> ClassifyOptions {
        ClassifyOptions {
            t_max: self.t_max,
            margin: self.margin,
            quadrature: self.quadrature(),
            ..ClassifyOptions::default()
        }
    }
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    let env = std::env::var(crate::RELTOL_ENV).ok();
    run_with_env(cli, env.as_deref())
}

pub fn run_with_env(cli: &Cli, env_rel_tol: Option<&str>) -> Result<Output, CliError> {
    let start = Instant::now();
    let common = match &cli.command {
        Command::Classify(a) => &a.common,
        Command::Capacity(a) => &a.common,
        Command::Sweep(a) => &a.common,
        Command::Energy(a) => &a.common,
    };
    let spec = spec::load(&common.spec)?;
    let timing = common.timing.then_some(start);
    let mut out = match &cli.command {
        Command::Classify(a) => cmd_classify(a, &spec, env_rel_tol, timing)?,
        Command::Capacity(a) => cmd_capacity(a, &spec, env_rel_tol, timing)?,
        Command::Sweep(a) => cmd_sweep(a, &spec, env_rel_tol, timing)?,
        Command::Energy(a) => cmd_energy(a, &spec, env_rel_tol, timing)?,
    };
    if !common.timing {
        out.stderr
            .push(format!("wall time: {:.3} s", start.elapsed().as_secs_f64()));
    }
    Ok(out)
}

fn base_record(command: &str, common: &CommonArgs, spec: &LoadedSpec) -> ResultRecord {
    let mut r = ResultRecord::new();
    r.set("command", command)
        .set("spec", common.spec.display().to_string())
        .set("kind", spec.manifold.kind().as_str());
    r
}

fn finish_record(r: &mut ResultRecord, timing: Option<Instant>) {
    if let Some(t) = timing {
        r.set("wall_time_s", t.elapsed().as_secs_f64());
    }
}

fn encode(r: &ResultRecord, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => Ok(r.to_json() + "\n"),
        Format::Csv => {
            write_csv(std::slice::from_ref(r)).map_err(|e| CliError::Usage(e.to_string()))
        }
    }
}

fn check_p(p: f64) -> Result<(), CliError> {
    if p.is_finite() && p >= pcap_core::capacity::MIN_P {
        Ok(())
    } else {
        Err(CliError::Usage(format!("p must exceed 1, got {p}")))
    }
}

fn verdict_fields(r: &mut ResultRecord, v: &Verdict) {
    r.set("decision", v.decision.as_str())
        .set("partial_integral", v.partial_integral)
        .set("log_partial_integral", v.log_partial_integral)
        .set("reached_t", v.reached_t)
        .set("tail_exponent", v.tail_exponent)
        .set("tail_exponent_lo", v.tail_exponent_interval.0)
        .set("tail_exponent_hi", v.tail_exponent_interval.1)
        .set("exponential_rate", v.exponential_rate)
        .set("r2_power", v.r2_power)
        .set("r2_exponential", v.r2_exponential)
        .set("log_exponent", v.log_exponent);
}

fn decision_code(d: Decision) -> i32 {
    match d {
        Decision::Parabolic => 0,
        Decision::Hyperbolic => 1,
        Decision::Inconclusive => 2,
    }
}

/// Classifies the spec's manifold; a submersion goes through its base and
/// the bounded-fiber transfer.
fn verdict_for(
    spec: &LoadedSpec,
    p: f64,
    opts: &ClassifyOptions,
) -> Result<(Verdict, Option<Verdict>), CliError> {
    let base = classify(spec.manifold.model(), p, opts)?;
    match &spec.manifold {
        Manifold::Warped(_) => Ok((base, None)),
        Manifold::Submersion(s) => Ok((transfer_verdict(s, &base, p)?, Some(base))),
    }
}

/// `(p, [(t, log g)])` blocks; `p` is absent for a single exponent.
type LogSamples = (Option<f64>, Vec<(f64, f64)>);

fn write_log_data(path: &Path, rows: &[LogSamples]) -> Result<(), CliError> {
    let mut records = Vec::new();
    for (p, samples) in rows {
        for &(t, lg) in samples {
            let mut r = ResultRecord::new();
            if let Some(p) = p {
                r.set("p", *p);
            }
            r.set("t", t).set("log_g", lg);
            records.push(r);
        }
    }
    let text = write_csv(&records).map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn cmd_classify(
    a: &ClassifyArgs,
    spec: &LoadedSpec,
    env: Option<&str>,
    timing: Option<Instant>,
) -> Result<Output, CliError> {
    check_p(a.p)?;
    let s = Settings::resolve(&a.common, Some(&a.criterion), None, spec, env)?;
    let opts = s.classify_options();
    let (v, base) = verdict_for(spec, a.p, &opts)?;

    let mut r = base_record("classify", &a.common, spec);
    r.set("p", a.p)
        .set("t_max", s.t_max)
        .set("margin", s.margin)
        .set("rel_tol", s.rel_tol);
    verdict_fields(&mut r, &v);
    if let (Some(base), Manifold::Submersion(sub)) = (&base, &spec.manifold) {
        let bound = check_uniform_bound(sub, s.t_max)?;
        r.set("base_decision", base.decision.as_str())
            .set("fibers_bounded", bound.bounded)
            .set("fiber_volume_sup", bound.sup_estimate);
    }
    r.set("evidence_notes", v.evidence_notes.join("; "));
    finish_record(&mut r, timing);

    if let Some(path) = &a.criterion.log_data {
        let samples = log_integrand_samples(spec.manifold.model(), a.p, s.t_max, LOG_DATA_SAMPLES)?;
        write_log_data(path, &[(None, samples)])?;
    }
    Ok(Output {
        stdout: encode(&r, a.format)?,
        stderr: Vec::new(),
        code: decision_code(v.decision),
    })
}

fn cmd_capacity(
    a: &CapacityArgs,
    spec: &LoadedSpec,
    env: Option<&str>,
    timing: Option<Instant>,
) -> Result<Output, CliError> {
    let Manifold::Warped(m) = &spec.manifold else {
        return Err(CliError::Usage(format!(
            "capacity expected kind warped_product, got {}",
            Kind::Submersion.as_str()
        )));
    };
    check_p(a.p)?;
    let s = Settings::resolve(&a.common, None, a.grid, spec, env)?;
    let q = s.quadrature();
    let mut r = base_record("capacity", &a.common, spec);
    r.set("p", a.p)
        .set("R", a.r)
        .set("method", format!("{:?}", a.method).to_lowercase());

    match a.method {
        MethodArg::Flux => {
            let f = flux_capacity(m, a.p, a.r, &q)?;
            r.set("value", f.value)
                .set("log_value", f.log_value)
                .set("error_bound", f.error_bound)
                .set("rel_tol", s.rel_tol);
        }
        MethodArg::Variational => {
            let v = variational_solve(m, a.p, a.r, s.grid_size)?;
            r.set("value", v.estimate.value)
                .set("log_value", v.estimate.log_value)
                .set("error_bound", v.estimate.error_bound)
                .set("grid_size", s.grid_size)
                .set("newton_iterations", v.iterations);
        }
        MethodArg::Both => {
            let f = flux_capacity(m, a.p, a.r, &q)?;
            let v = variational_solve(m, a.p, a.r, s.grid_size)?;
            let gap = (v.estimate.value - f.value).abs() / f.value;
            r.set("flux", f.value)
                .set("flux_error_bound", f.error_bound)
                .set("variational", v.estimate.value)
                .set("variational_error_bound", v.estimate.error_bound)
                .set("relative_gap", gap)
                .set("grid_size", s.grid_size)
                .set("newton_iterations", v.iterations)
                .set("rel_tol", s.rel_tol);
        }
    }
    finish_record(&mut r, timing);
    Ok(Output {
        stdout: encode(&r, a.format)?,
        stderr: Vec::new(),
        code: 0,
    })
}

/// Parses `start:stop:step` into an inclusive grid.
pub fn parse_p_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("p grid must be start:stop:step, got {text:?}"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(start.is_finite() && stop.is_finite() && step.is_finite() && step > 0.0) {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor();
    if count < 0.0 {
        return Err(CliError::Usage(format!("p grid {text:?} is empty")));
    }
    if count > 1e5 {
        return Err(CliError::Usage(format!(
            "p grid {text:?} has too many points"
        )));
    }
    Ok((0..=count as usize)
        .map(|k| start + step * k as f64)
        .collect())
}

fn cmd_sweep(
    a: &SweepArgs,
    spec: &LoadedSpec,
    env: Option<&str>,
    timing: Option<Instant>,
) -> Result<Output, CliError> {
    let grid = parse_p_grid(&a.p_grid)?;
    for &p in &grid {
        check_p(p)?;
    }
    let s = Settings::resolve(&a.common, Some(&a.criterion), None, spec, env)?;
    let opts = s.classify_options();
    let model = spec.manifold.model();
    let sweep = sweep_p(model, &grid, &opts)?;

    let mut notes = sweep.notes.clone();
    let rows: Vec<Verdict> = match &spec.manifold {
        Manifold::Warped(_) => sweep.rows,
        Manifold::Submersion(sub) => sweep
            .rows
            .iter()
            .map(|v| transfer_verdict(sub, v, v.p))
            .collect::<Result<_, _>>()?,
    };
    let critical_p = sweep.critical_p;
    if spec.manifold.kind() == Kind::Submersion {
        // the transfer never certifies Hyperbolic, so the switch is the base's
        notes.push("critical_p refers to the base".into());
    }
    match critical_p {
        Some(c) => notes.push(format!("critical_p = {c}")),
        None => notes.push("critical_p absent".into()),
    }

    let records: Vec<ResultRecord> = rows
        .iter()
        .map(|v| {
            let mut r = ResultRecord::new();
            r.set("p", v.p)
                .set("decision", v.decision.as_str())
                .set("tail_exponent", v.tail_exponent)
                .set("tail_exponent_lo", v.tail_exponent_interval.0)
                .set("tail_exponent_hi", v.tail_exponent_interval.1)
                .set("partial_integral", v.partial_integral)
                .set("log_partial_integral", v.log_partial_integral)
                .set("exponential_rate", v.exponential_rate)
                .set("critical_p", critical_p);
            finish_record(&mut r, timing);
            r
        })
        .collect();

    if let Some(path) = &a.criterion.log_data {
        let samples = grid
            .iter()
            .map(|&p| {
                Ok((
                    Some(p),
                    log_integrand_samples(model, p, s.t_max, LOG_DATA_SAMPLES)?,
                ))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        write_log_data(path, &samples)?;
    }
    Ok(Output {
        stdout: write_csv(&records).map_err(|e| CliError::Usage(e.to_string()))?,
        stderr: notes,
        code: 0,
    })
}

pub fn parse_schedule(text: &str) -> Result<Vec<u64>, CliError> {
    let js = text
        .split(',')
        .map(|s| {
            s.trim().parse::<u64>().map_err(|_| {
                CliError::Usage(format!("schedule entries must be integers, got {s:?}"))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if js.len() < 2 {
        return Err(CliError::Usage(
            "schedule needs at least two values of j".into(),
        ));
    }
    Ok(js)
}

fn cmd_energy(
    a: &EnergyArgs,
    spec: &LoadedSpec,
    env: Option<&str>,
    timing: Option<Instant>,
) -> Result<Output, CliError> {
    let Manifold::Submersion(sub) = &spec.manifold else {
        return Err(CliError::Usage(format!(
            "energy expected kind submersion, got {}",
            Kind::WarpedProduct.as_str()
        )));
    };
    check_p(a.p)?;
    let schedule = parse_schedule(&a.schedule)?;
    if !(a.outer_power.is_finite() && a.outer_power > 1.0) {
        return Err(CliError::Usage(format!(
            "outer power must exceed 1, got {}",
            a.outer_power
        )));
    }
    let s = Settings::resolve(&a.common, Some(&a.criterion), None, spec, env)?;
    let family = CutoffFamily {
        shape: match a.shape {
            ShapeArg::Optimal => CutoffShape::CapacityOptimal,
            ShapeArg::Log => CutoffShape::Logarithmic,
        },
        outer_power: a.outer_power,
        quadrature: s.quadrature(),
    };
    let report = verify_decay(sub, a.p, &schedule, &family, &s.classify_options())?;
    let records: Vec<ResultRecord> = report
        .energies
        .iter()
        .map(|e| {
            let mut r = ResultRecord::new();
            r.set("j", e.j)
                .set("R_j", family.outer_radius(e.j))
                .set("energy", e.energy)
                .set("log_energy", e.log_energy)
                .set("decays", report.decays);
            finish_record(&mut r, timing);
            r
        })
        .collect();
    let mut notes = report.notes.clone();
    notes.push(format!("decays = {}", report.decays));
    Ok(Output {
        stdout: write_csv(&records).map_err(|e| CliError::Usage(e.to_string()))?,
        stderr: notes,
        code: if report.decays { 0 } else { 1 },
    })
}

#[cfg(test)]
mod tests {
    use std::path::PathBuf;

    use super::*;

    #[test]
    fn p_grid_parsing() {
        assert_eq!(
            parse_p_grid("1.5:4:0.5").unwrap(),
            vec![1.5, 2.0, 2.5, 3.0, 3.5, 4.0]
        );
        assert_eq!(parse_p_grid("2:2:1").unwrap(), vec![2.0]);
        assert_eq!(parse_p_grid("1.5:6:0.5").unwrap().len(), 10);
        assert_eq!(parse_p_grid("1.1:1.3:0.1").unwrap().len(), 3);
        assert!(parse_p_grid("3:2:0.5").is_err());
        assert!(parse_p_grid("1:2").is_err());
        assert!(parse_p_grid("1:2:0").is_err());
        assert!(parse_p_grid("a:2:1").is_err());
    }

    #[test]
    fn schedule_parsing() {
        assert_eq!(parse_schedule("2, 4,16").unwrap(), vec![2, 4, 16]);
        assert!(parse_schedule("2").is_err());
        assert!(parse_schedule("2,x").is_err());
    }

    #[test]
    fn settings_precedence() {
        let spec = spec::parse(
            r#"{"kind": "warped_product", "base_dim": 2, "sigma": "t",
                "options": {"T_max": 1e5, "rel_tol": 1e-8, "margin": 0.1, "grid_size": 500}}"#,
        )
        .unwrap();
        let mut common = CommonArgs {
            spec: PathBuf::from("x.json"),
            rel_tol: None,
            timing: false,
        };
        let crit = CriterionArgs {
            t_max: None,
            margin: None,
            log_data: None,
        };
        let s = Settings::resolve(&common, Some(&crit), None, &spec, None).unwrap();
        assert_eq!(
            (s.t_max, s.margin, s.rel_tol, s.grid_size),
            (1e5, 0.1, 1e-8, 500)
        );
        let s = Settings::resolve(&common, Some(&crit), Some(64), &spec, Some("1e-9")).unwrap();
        assert_eq!((s.rel_tol, s.grid_size), (1e-9, 64));
        common.rel_tol = Some(1e-7);
        let s = Settings::resolve(&common, Some(&crit), None, &spec, Some("1e-9")).unwrap();
        assert_eq!(s.rel_tol, 1e-7);
        assert!(Settings::resolve(&common, None, None, &spec, Some("tight")).is_ok());
        common.rel_tol = None;
        assert!(Settings::resolve(&common, None, None, &spec, Some("tight")).is_err());

        let plain =
            spec::parse(r#"{"kind": "warped_product", "base_dim": 2, "sigma": "t"}"#).unwrap();
        let s = Settings::resolve(&common, None, None, &plain, None).unwrap();
        assert_eq!(
            (s.t_max, s.margin, s.rel_tol, s.grid_size),
            (
                DEFAULT_T_MAX,
                DEFAULT_MARGIN,
                DEFAULT_REL_TOL,
                DEFAULT_GRID_SIZE
            )
        );
    }
}
