//! Declarative experiment configuration: a single TOML file with sections
//! for the problem, schedule, integrator, metrics, and output. Array-valued
//! `schedule.p` expands into a sweep of independent runs.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use aht::dynamics::{IntegratorConfig, Method};
use aht::problem::{PrimalDualPoint, Problem};
use aht::schedule::EpsilonSchedule;

/// Name of the built-in scalar saddle problem (`L(x, λ) = λ(x - 1)`).
pub const BUILTIN_BILINEAR: &str = "paper_example_sec5";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub metrics: MetricsSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Either a named builtin or dense row-major arrays for a quadratic program.
/// Oracle objectives are library-only and have no config representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    /// `power`, `power_shifted`, or `exponential`.
    pub family: String,
    /// Exponent for the power family; an array requests a sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<PValue>,
    /// Offset for the shifted family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Decay rate for the exponential family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PValue {
    Single(f64),
    Sweep(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    /// Fixed step for `rk4_fixed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_method() -> String {
    "rk45_adaptive".into()
}
fn default_rel_tol() -> f64 {
    1e-8
}
fn default_abs_tol() -> f64 {
    1e-10
}
fn default_t_end() -> f64 {
    100.0
}
fn default_samples() -> usize {
    400
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            method: default_method(),
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            step: None,
            t_end: default_t_end(),
            samples: default_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    #[serde(default = "default_metric_list")]
    pub list: Vec<String>,
    /// `least_norm`, `viscosity_curve`, or an explicit `{x, lambda}` point.
    #[serde(default = "default_anchor")]
    pub anchor: AnchorSpec,
    #[serde(default = "default_window_fraction")]
    pub window_fraction: f64,
}

fn default_metric_list() -> Vec<String> {
    vec![
        "velocity_sq".into(),
        "distance_sq".into(),
        "shifted_velocity_sq".into(),
        "operator_residual_sq".into(),
        "gap".into(),
    ]
}
fn default_anchor() -> AnchorSpec {
    AnchorSpec::Named("least_norm".into())
}
fn default_window_fraction() -> f64 {
    0.5
}

impl Default for MetricsSpec {
    fn default() -> Self {
        Self {
            list: default_metric_list(),
            anchor: default_anchor(),
            window_fraction: default_window_fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnchorSpec {
    Named(String),
    Explicit { x: Vec<f64>, lambda: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_out_dir() }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("config parse error: {e}"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Materialize the problem description.
    pub fn build_problem(&self) -> Result<Problem, String> {
        let spec = &self.problem;
        if let Some(name) = &spec.builtin {
            if spec.q.is_some() || spec.c.is_some() || spec.a.is_some() || spec.b.is_some() {
                return Err("problem.builtin excludes the dense-array fields".into());
            }
            return match name.as_str() {
                BUILTIN_BILINEAR => Ok(Problem::bilinear_saddle_example()),
                other => Err(format!("unknown builtin problem '{other}'")),
            };
        }
        let q = spec.q.as_ref().ok_or("problem.q is required without a builtin")?;
        let c = spec.c.as_ref().ok_or("problem.c is required without a builtin")?;
        let a = spec.a.as_ref().ok_or("problem.a is required without a builtin")?;
        let b = spec.b.as_ref().ok_or("problem.b is required without a builtin")?;
        let q = dense(q, "problem.q")?;
        let a = dense(a, "problem.a")?;
        Problem::quadratic(
            q,
            DVector::from_row_slice(c),
            a,
            DVector::from_row_slice(b),
        )
        .map_err(|e| e.to_string())
    }

    /// Expand the schedule spec into one schedule per sweep entry, paired
    /// with a filename suffix (empty when there is no sweep).
    pub fn build_schedules(&self) -> Result<Vec<(String, EpsilonSchedule)>, String> {
        let spec = &self.schedule;
        match spec.family.as_str() {
            "power" => {
                let p = spec.p.as_ref().ok_or("schedule.p is required for the power family")?;
                let values = match p {
                    PValue::Single(v) => vec![*v],
                    PValue::Sweep(vs) => {
                        if vs.is_empty() {
                            return Err("schedule.p sweep is empty".into());
                        }
                        vs.clone()
                    }
                };
                let sweep = values.len() > 1;
                values
                    .into_iter()
                    .map(|v| {
                        let suffix = if sweep { format!("_p{v}") } else { String::new() };
                        EpsilonSchedule::power(v, spec.t0)
                            .map(|s| (suffix, s))
                            .map_err(|e| e.to_string())
                    })
                    .collect()
            }
            "power_shifted" => {
                let c = spec.c.ok_or("schedule.c is required for the shifted family")?;
                Ok(vec![(
                    String::new(),
                    EpsilonSchedule::power_shifted(c, spec.t0).map_err(|e| e.to_string())?,
                )])
            }
            "exponential" => {
                let a = spec.a.ok_or("schedule.a is required for the exponential family")?;
                Ok(vec![(
                    String::new(),
                    EpsilonSchedule::exponential(a, spec.t0).map_err(|e| e.to_string())?,
                )])
            }
            other => Err(format!("unknown schedule family '{other}'")),
        }
    }

    pub fn build_integrator(&self) -> Result<IntegratorConfig, String> {
        let spec = &self.integrator;
        let method = match spec.method.as_str() {
            "rk45_adaptive" => Method::Rk45Adaptive { rel_tol: spec.rel_tol, abs_tol: spec.abs_tol },
            "rk4_fixed" => Method::Rk4Fixed {
                step: spec.step.ok_or("integrator.step is required for rk4_fixed")?,
            },
            other => return Err(format!("unknown integrator method '{other}'")),
        };
        Ok(IntegratorConfig { method, t_end: spec.t_end, samples: spec.samples })
    }

    pub fn build_initial(&self, problem: &Problem) -> Result<PrimalDualPoint, String> {
        match &self.initial {
            None => Ok(PrimalDualPoint::zeros(problem.primal_dim(), problem.dual_dim())),
            Some(init) => {
                if init.x.len() != problem.primal_dim() || init.lambda.len() != problem.dual_dim()
                {
                    return Err("initial point dimensions do not match the problem".into());
                }
                PrimalDualPoint::new(
                    DVector::from_row_slice(&init.x),
                    DVector::from_row_slice(&init.lambda),
                )
                .map_err(|e| e.to_string())
            }
        }
    }
}

fn dense(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(format!("{what} rows have inconsistent lengths"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}
