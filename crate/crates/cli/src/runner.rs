//! Command implementations. Each experiment entry is computed fully in
//! memory before any of its files are written, so failed runs leave no
//! partial outputs; sweep entries execute concurrently and write disjoint
//! files.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use aht::dynamics::{integrate, Trajectory};
use aht::metrics::{
    self, fit_rate, write_rate_csv, MetricSeries, RateReport,
};
use aht::problem::{PrimalDualPoint, Problem};
use aht::schedule::EpsilonSchedule;
use aht::viscosity::{viscosity_curve, ViscosityCurve};
use aht::Error as CoreError;

use crate::config::{AnchorSpec, ExperimentConfig, PValue, ScheduleSpec};

/// Process-level failure categories, mapped onto exit codes. Certification
/// failure (exit 4) is not an error: `check-schedule` prints the certificate
/// and reports the missing `t_plus` through its return value.
#[derive(Debug)]
pub enum CliError {
    /// Exit 2: unparseable or invalid configuration.
    Config(String),
    /// Exit 3: integration, solver, or metric failure.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numeric(m) => m,
        }
    }
}

fn numeric(e: CoreError) -> CliError {
    CliError::Numeric(e.to_string())
}

const KNOWN_METRICS: &[&str] = &[
    "gap",
    "velocity_sq",
    "distance_sq",
    "shifted_velocity_sq",
    "operator_residual_sq",
    "distance_sq_to_curve",
    "shifted_velocity_sq_to_curve",
    "operator_residual_sq_to_curve",
    "ewma_velocity",
];

fn validate_metrics(config: &ExperimentConfig, problem: &Problem) -> Result<(), CliError> {
    for name in &config.metrics.list {
        if !KNOWN_METRICS.contains(&name.as_str()) {
            return Err(CliError::Config(format!(
                "unknown metric '{name}' (known: {})",
                KNOWN_METRICS.join(", ")
            )));
        }
    }
    if let AnchorSpec::Explicit { x, lambda } = &config.metrics.anchor {
        if x.len() != problem.primal_dim() || lambda.len() != problem.dual_dim() {
            return Err(CliError::Config(
                "explicit anchor dimensions do not match the problem".into(),
            ));
        }
    }
    if let AnchorSpec::Named(name) = &config.metrics.anchor {
        if name != "least_norm" && name != "viscosity_curve" {
            return Err(CliError::Config(format!(
                "unknown anchor '{name}' (use least_norm, viscosity_curve, or an explicit point)"
            )));
        }
    }
    if !(config.metrics.window_fraction > 0.0 && config.metrics.window_fraction <= 1.0) {
        return Err(CliError::Config("metrics.window_fraction must lie in (0, 1]".into()));
    }
    Ok(())
}

/// Everything one sweep entry produces, computed before writing.
struct EntryOutput {
    suffix: String,
    trajectory: Trajectory,
    curve: Option<ViscosityCurve>,
    series: Vec<MetricSeries>,
    rates: Vec<RateReport>,
    notes: Vec<String>,
}

struct Prepared {
    problem: Problem,
    schedules: Vec<(String, EpsilonSchedule)>,
    config: ExperimentConfig,
}

fn prepare(config: ExperimentConfig) -> Result<Prepared, CliError> {
    let problem = config.build_problem().map_err(CliError::Config)?;
    let schedules = config.build_schedules().map_err(CliError::Config)?;
    let integrator = config.build_integrator().map_err(CliError::Config)?;
    for (_, schedule) in &schedules {
        integrator
            .validate(schedule.t0())
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    config.build_initial(&problem).map_err(CliError::Config)?;
    validate_metrics(&config, &problem)?;
    Ok(Prepared { problem, schedules, config })
}

fn resolve_point_anchor(
    problem: &Problem,
    spec: &AnchorSpec,
) -> Result<Option<PrimalDualPoint>, CliError> {
    match spec {
        AnchorSpec::Named(name) if name == "least_norm" => Ok(Some(
            problem.least_norm_saddle().map_err(numeric)?.point,
        )),
        AnchorSpec::Named(_) => Ok(None), // viscosity_curve
        AnchorSpec::Explicit { x, lambda } => Ok(Some(
            PrimalDualPoint::new(DVector::from_row_slice(x), DVector::from_row_slice(lambda))
                .map_err(numeric)?,
        )),
    }
}

fn compute_entry(
    prepared: &Prepared,
    suffix: &str,
    schedule: &EpsilonSchedule,
    with_curve_outputs: bool,
) -> Result<EntryOutput, CliError> {
    let config = &prepared.config;
    let problem = &prepared.problem;
    let integrator = config.build_integrator().map_err(CliError::Config)?;
    let z0 = config.build_initial(problem).map_err(CliError::Config)?;
    let trajectory = integrate(problem, schedule, &z0, &integrator).map_err(numeric)?;

    let anchor_is_curve =
        matches!(&config.metrics.anchor, AnchorSpec::Named(n) if n == "viscosity_curve");
    let needs_curve = with_curve_outputs
        || anchor_is_curve
        || config.metrics.list.iter().any(|m| m.ends_with("_to_curve"));
    let curve = if needs_curve {
        Some(viscosity_curve(problem, schedule, &trajectory.times).map_err(numeric)?)
    } else {
        None
    };
    let point_anchor = resolve_point_anchor(problem, &config.metrics.anchor)?;

    let mut series = Vec::new();
    let mut notes = Vec::new();
    for name in &config.metrics.list {
        let effective = if anchor_is_curve {
            match name.as_str() {
                "distance_sq" | "shifted_velocity_sq" | "operator_residual_sq" => {
                    format!("{name}_to_curve")
                }
                other => other.to_string(),
            }
        } else {
            name.clone()
        };
        let m = match effective.as_str() {
            "velocity_sq" => metrics::series_velocity_sq(&trajectory),
            "gap" => {
                let anchor = point_anchor.as_ref().ok_or_else(|| {
                    CliError::Config("metric 'gap' needs a point anchor".into())
                })?;
                metrics::series_gap(problem, &trajectory, anchor).map_err(numeric)?
            }
            "distance_sq" => {
                let anchor = point_anchor.as_ref().ok_or_else(|| {
                    CliError::Config("metric 'distance_sq' needs a point anchor".into())
                })?;
                metrics::series_distance_sq(problem, &trajectory, anchor).map_err(numeric)?
            }
            "shifted_velocity_sq" => {
                let anchor = point_anchor.as_ref().ok_or_else(|| {
                    CliError::Config("metric 'shifted_velocity_sq' needs a point anchor".into())
                })?;
                metrics::series_shifted_velocity_sq(problem, &trajectory, schedule, anchor)
                    .map_err(numeric)?
            }
            "operator_residual_sq" => {
                let anchor = point_anchor.as_ref().ok_or_else(|| {
                    CliError::Config("metric 'operator_residual_sq' needs a point anchor".into())
                })?;
                metrics::series_operator_residual_sq(problem, &trajectory, anchor)
                    .map_err(numeric)?
            }
            "distance_sq_to_curve" => metrics::series_distance_sq_to_curve(
                &trajectory,
                curve.as_ref().expect("curve computed"),
            )
            .map_err(numeric)?,
            "shifted_velocity_sq_to_curve" => metrics::series_shifted_velocity_sq_to_curve(
                &trajectory,
                schedule,
                curve.as_ref().expect("curve computed"),
            )
            .map_err(numeric)?,
            "operator_residual_sq_to_curve" => metrics::series_operator_residual_sq_to_curve(
                problem,
                &trajectory,
                curve.as_ref().expect("curve computed"),
            )
            .map_err(numeric)?,
            "ewma_velocity" => {
                let cert = schedule.certify(integrator.t_end).map_err(numeric)?;
                let t_plus = cert.t_plus.ok_or_else(|| {
                    CliError::Numeric(
                        "ewma_velocity needs a certified t_plus; the schedule fails the sign conditions"
                            .into(),
                    )
                })?;
                metrics::ewma_velocity(&trajectory, schedule, t_plus).map_err(numeric)?
            }
            other => unreachable!("validated metric {other}"),
        };
        series.push(m);
    }

    let mut rates = Vec::new();
    for m in &series {
        match fit_rate(m, schedule, config.metrics.window_fraction, None) {
            Ok(r) => rates.push(r),
            Err(CoreError::DegenerateSeries(name)) => {
                notes.push(format!(
                    "{name}: series identically zero on the fit window (exact convergence); no rate fitted"
                ));
            }
            Err(e) => return Err(numeric(e)),
        }
    }
    if let Some(c) = &curve {
        if with_curve_outputs {
            let curve_vel = MetricSeries {
                name: "curve_velocity_sq".into(),
                times: c.times.clone(),
                values: c.velocity_sq(),
                anchor: None,
            };
            match fit_rate(&curve_vel, schedule, config.metrics.window_fraction, None) {
                Ok(r) => rates.push(r),
                Err(CoreError::DegenerateSeries(_)) => {}
                Err(e) => return Err(numeric(e)),
            }
            series.push(curve_vel);
        }
    }

    Ok(EntryOutput {
        suffix: suffix.to_string(),
        trajectory,
        curve,
        series,
        rates,
        notes,
    })
}

fn compute_all(prepared: &Prepared, with_curve_outputs: bool) -> Result<Vec<EntryOutput>, CliError> {
    let results: Vec<Result<EntryOutput, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = prepared
            .schedules
            .iter()
            .map(|(suffix, schedule)| {
                scope.spawn(move || compute_entry(prepared, suffix, schedule, with_curve_outputs))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("entry thread")).collect()
    });
    results.into_iter().collect()
}

fn write_file(
    dir: &Path,
    name: &str,
    write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> Result<PathBuf, CliError> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| CliError::Numeric(format!("serialization failed: {e}")))?;
    let path = dir.join(name);
    fs::write(&path, buf)
        .map_err(|e| CliError::Numeric(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn write_entry(dir: &Path, entry: &EntryOutput) -> Result<(), CliError> {
    let s = &entry.suffix;
    write_file(dir, &format!("trajectory{s}.csv"), |w| entry.trajectory.write_csv(w))?;
    if let Some(curve) = &entry.curve {
        write_file(dir, &format!("curve{s}.csv"), |w| curve.write_csv(w))?;
    }
    for m in &entry.series {
        write_file(dir, &format!("{}{s}.csv", m.name), |w| m.write_csv(w))?;
    }
    write_file(dir, &format!("rates{s}.csv"), |w| write_rate_csv(&entry.rates, w))?;
    for note in &entry.notes {
        eprintln!("note: {note}");
    }
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("output directory {}: {e}", dir.display())))
}

/// `run`: trajectories, metric series, and rate reports, plus a snapshot of
/// the resolved configuration for provenance.
pub fn cmd_run(config: ExperimentConfig) -> Result<(), CliError> {
    let out = config.output.dir.clone();
    let prepared = prepare(config)?;
    let entries = compute_all(&prepared, false)?;
    ensure_dir(&out)?;
    let snapshot = prepared.config.to_toml();
    write_file(&out, "config.toml", |w| {
        use std::io::Write;
        w.write_all(snapshot.as_bytes())
    })?;
    for entry in &entries {
        write_entry(&out, entry)?;
    }
    Ok(())
}

/// `viscosity`: the curve and its squared speed on the sample grid.
pub fn cmd_viscosity(config: ExperimentConfig) -> Result<(), CliError> {
    let out = config.output.dir.clone();
    let prepared = prepare(config)?;
    let integrator = prepared.config.build_integrator().map_err(CliError::Config)?;
    let mut outputs = Vec::new();
    for (suffix, schedule) in &prepared.schedules {
        let times = aht::schedule::log_grid(schedule.t0(), integrator.t_end, integrator.samples);
        let curve = viscosity_curve(&prepared.problem, schedule, &times).map_err(numeric)?;
        let vel = MetricSeries {
            name: "curve_velocity_sq".into(),
            times: curve.times.clone(),
            values: curve.velocity_sq(),
            anchor: None,
        };
        outputs.push((suffix.clone(), curve, vel));
    }
    ensure_dir(&out)?;
    for (suffix, curve, vel) in &outputs {
        write_file(&out, &format!("curve{suffix}.csv"), |w| curve.write_csv(w))?;
        write_file(&out, &format!("curve_velocity_sq{suffix}.csv"), |w| vel.write_csv(w))?;
    }
    Ok(())
}

/// `rates`: metric series plus fitted decay exponents, echoed to stdout.
pub fn cmd_rates(config: ExperimentConfig) -> Result<(), CliError> {
    if config.metrics.list.is_empty() {
        return Err(CliError::Config("rates needs a non-empty metrics list".into()));
    }
    let out = config.output.dir.clone();
    let prepared = prepare(config)?;
    let entries = compute_all(&prepared, false)?;
    ensure_dir(&out)?;
    for entry in &entries {
        write_file(&out, &format!("rates{}.csv", entry.suffix), |w| {
            write_rate_csv(&entry.rates, w)
        })?;
        for r in &entry.rates {
            println!(
                "{}{}: exponent {:.4}, envelope constant {:.4e}, window [{:.4}, {:.4}]",
                r.metric_name, entry.suffix, r.fitted_exponent, r.envelope_constant,
                r.window.0, r.window.1
            );
        }
        for note in &entry.notes {
            println!("{}{}: exact convergence (identically zero tail)", note_name(note), entry.suffix);
        }
    }
    Ok(())
}

fn note_name(note: &str) -> &str {
    note.split(':').next().unwrap_or(note)
}

/// `check-schedule`: print the certificate as key-value lines. Returns
/// `true` when every sweep entry is certified (exit 0), `false` otherwise
/// (exit 4).
pub fn cmd_check_schedule(spec: &ScheduleSpec, horizon: f64) -> Result<bool, CliError> {
    let config = ExperimentConfig {
        problem: crate::config::ProblemSpec {
            builtin: Some(crate::config::BUILTIN_BILINEAR.into()),
            ..Default::default()
        },
        schedule: spec.clone(),
        integrator: Default::default(),
        initial: None,
        metrics: Default::default(),
        output: Default::default(),
    };
    let schedules = config.build_schedules().map_err(CliError::Config)?;
    let mut all_certified = true;
    for (suffix, schedule) in &schedules {
        let cert = schedule.certify(horizon).map_err(|e| CliError::Config(e.to_string()))?;
        let prefix = suffix.trim_start_matches('_');
        let label = |key: &str| {
            if prefix.is_empty() {
                key.to_string()
            } else {
                format!("{prefix}.{key}")
            }
        };
        println!("{}={}", label("family"), spec.family);
        println!("{}={}", label("t0"), schedule.t0());
        println!("{}={}", label("horizon"), horizon);
        match cert.t_plus {
            Some(tp) => println!("{}={tp}", label("t_plus")),
            None => {
                println!("{}=none", label("t_plus"));
                all_certified = false;
            }
        }
        println!("{}={}", label("sigma_identically_zero"), cert.sigma_identically_zero);
        println!("{}={}", label("eps_not_l1"), cert.eps_not_l1);
        println!("{}={}", label("eps_dot_l1"), cert.eps_dot_l1);
        println!("{}={}", label("eps_dot_sq_over_eps_l1"), cert.eps_dot_sq_over_eps_l1);
        println!("{}={}", label("eps_decreasing"), cert.eps_decreasing);
    }
    Ok(all_certified)
}

/// `reproduce fig1|fig2`: canned scalar-saddle data sets. `fig1` is the
/// inverse-time schedule; `fig2` sweeps p over {1/4, 1/2, 3/4}.
pub fn cmd_reproduce(target: &str, out: PathBuf) -> Result<(), CliError> {
    let p = match target {
        "fig1" => PValue::Single(1.0),
        "fig2" => PValue::Sweep(vec![0.25, 0.5, 0.75]),
        other => {
            return Err(CliError::Config(format!(
                "unknown reproduction target '{other}' (expected fig1 or fig2)"
            )))
        }
    };
    let config = ExperimentConfig {
        problem: crate::config::ProblemSpec {
            builtin: Some(crate::config::BUILTIN_BILINEAR.into()),
            ..Default::default()
        },
        schedule: ScheduleSpec {
            family: "power".into(),
            p: Some(p),
            c: None,
            a: None,
            t0: 0.01,
        },
        integrator: Default::default(),
        initial: None,
        metrics: crate::config::MetricsSpec {
            list: vec![
                "shifted_velocity_sq".into(),
                "velocity_sq".into(),
                "distance_sq".into(),
                "distance_sq_to_curve".into(),
            ],
            ..Default::default()
        },
        output: crate::config::OutputSpec { dir: out.clone() },
    };
    let prepared = prepare(config)?;
    let entries = compute_all(&prepared, true)?;
    ensure_dir(&out)?;
    for entry in &entries {
        write_entry(&out, entry)?;
    }
    Ok(())
}
