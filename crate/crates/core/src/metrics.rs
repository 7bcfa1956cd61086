//! Decay metrics along trajectories, empirical rate fitting, and envelope
//! checks against `e^(-2ρ(t)) + ε²(t)`.
//!
//! Each series is a plain squared norm or gap sampled on the trajectory
//! grid. Velocities come from [`crate::dynamics::Trajectory::velocities`],
//! which store the exact right-hand side, so the identity
//! `z' + ε(z - z̄) = -(T(z) + ε z̄)` holds to machine precision and the
//! shifted-velocity series can be cross-checked through either expression.
//!
//! Asymptotic claims are operationalized two ways: a tail log-log slope fit,
//! and the least envelope constant over the fit window (stability of that
//! constant under horizon doubling is the second-line check; sharpness gaps
//! show up as decaying ratios rather than failures).

use std::io::{self, Write};

use nalgebra::DVector;

use crate::dynamics::{fmt_full, Trajectory};
use crate::error::{Error, Result};
use crate::problem::{PrimalDualPoint, Problem};
use crate::schedule::{EpsilonSchedule, TriState};
use crate::viscosity::ViscosityCurve;

/// Residual tolerance for accepting an anchor as a saddle point.
pub const ANCHOR_RESIDUAL_TOL: f64 = 1e-8;

/// A named scalar series on a time grid, with the anchor it was measured
/// against when one applies.
#[derive(Debug, Clone)]
pub struct MetricSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub anchor: Option<PrimalDualPoint>,
}

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV export: `t,value`, full double precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{},{}", fmt_full(*t), fmt_full(*v))?;
        }
        Ok(())
    }
}

/// Rate fit outcome: tail slope in log-log coordinates, envelope constant,
/// the fit window, and the verdict against an expected exponent when given.
#[derive(Debug, Clone)]
pub struct RateReport {
    pub metric_name: String,
    pub fitted_exponent: f64,
    /// Least `C` with `value(t) ≤ C (e^(-2ρ(t)) + ε²(t))` on the window.
    pub envelope_constant: f64,
    pub window: (f64, f64),
    pub passed: Option<bool>,
    /// Slope below -20: decay faster than any plotted power law.
    pub super_polynomial: bool,
}

/// Discrete check of the Gronwall-type implication: given
/// `½φ²(t) ≤ ½φ²(t0) + ∫ ϑφ`, conclude `φ(t) ≤ φ(t0) + ∫ ϑ`. Integrals are
/// trapezoid sums on the common grid. With an `ε` series, additionally
/// checks the comparison bound `φ(t) ≤ max(φ(t0), sup ϑ)` that follows from
/// `φ' + εφ ≤ εϑ`.
#[derive(Debug, Clone)]
pub struct GronwallReport {
    pub hypothesis_holds: bool,
    pub conclusion_holds: bool,
    pub max_hypothesis_violation: f64,
    pub max_conclusion_violation: f64,
    pub comparison_bound_holds: Option<bool>,
}

fn check_anchor(problem: &Problem, anchor: &PrimalDualPoint) -> Result<()> {
    let residual = problem.saddle_operator(anchor)?.norm();
    if residual > ANCHOR_RESIDUAL_TOL * (1.0 + anchor.norm()) {
        return Err(Error::InvalidAnchor { residual });
    }
    Ok(())
}

fn check_curve_alignment(traj: &Trajectory, curve: &ViscosityCurve) -> Result<()> {
    if traj.times.len() != curve.times.len()
        || traj.times.iter().zip(&curve.times).any(|(a, b)| a != b)
    {
        return Err(Error::InvalidInput(
            "trajectory and curve are sampled on different grids".into(),
        ));
    }
    Ok(())
}

/// Primal-dual gap `L(x(t), λ̄) - L(x̄, λ(t))` against a saddle anchor.
pub fn series_gap(
    problem: &Problem,
    traj: &Trajectory,
    anchor: &PrimalDualPoint,
) -> Result<MetricSeries> {
    check_anchor(problem, anchor)?;
    let mut values = Vec::with_capacity(traj.len());
    for z in &traj.states {
        let left = problem.lagrangian(&PrimalDualPoint {
            x: z.x.clone(),
            lambda: anchor.lambda.clone(),
        })?;
        let right = problem.lagrangian(&PrimalDualPoint {
            x: anchor.x.clone(),
            lambda: z.lambda.clone(),
        })?;
        values.push(left - right);
    }
    Ok(MetricSeries {
        name: "gap".into(),
        times: traj.times.clone(),
        values,
        anchor: Some(anchor.clone()),
    })
}

/// Squared speed `‖z'(t)‖²`.
pub fn series_velocity_sq(traj: &Trajectory) -> MetricSeries {
    MetricSeries {
        name: "velocity_sq".into(),
        times: traj.times.clone(),
        values: traj.velocities.iter().map(|v| v.norm_squared()).collect(),
        anchor: None,
    }
}

/// `‖z'(t) + ε(t)(z(t) - z̄)‖²` against a saddle anchor.
pub fn series_shifted_velocity_sq(
    problem: &Problem,
    traj: &Trajectory,
    schedule: &EpsilonSchedule,
    anchor: &PrimalDualPoint,
) -> Result<MetricSeries> {
    check_anchor(problem, anchor)?;
    let anchor_vec = anchor.stacked();
    let mut values = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let eps = schedule.eps(traj.times[k])?;
        let shifted = &traj.velocities[k] + (traj.states[k].stacked() - &anchor_vec) * eps;
        values.push(shifted.norm_squared());
    }
    Ok(MetricSeries {
        name: "shifted_velocity_sq".into(),
        times: traj.times.clone(),
        values,
        anchor: Some(anchor.clone()),
    })
}

/// `‖T(z(t)) - T(z̄)‖²` against a saddle anchor.
pub fn series_operator_residual_sq(
    problem: &Problem,
    traj: &Trajectory,
    anchor: &PrimalDualPoint,
) -> Result<MetricSeries> {
    check_anchor(problem, anchor)?;
    let anchor_op = problem.saddle_operator(anchor)?;
    let mut values = Vec::with_capacity(traj.len());
    for z in &traj.states {
        let op = problem.saddle_operator(z)?;
        values.push((op - &anchor_op).norm_squared());
    }
    Ok(MetricSeries {
        name: "operator_residual_sq".into(),
        times: traj.times.clone(),
        values,
        anchor: Some(anchor.clone()),
    })
}

/// `‖z(t) - z̄‖²` against a saddle anchor.
pub fn series_distance_sq(
    problem: &Problem,
    traj: &Trajectory,
    anchor: &PrimalDualPoint,
) -> Result<MetricSeries> {
    check_anchor(problem, anchor)?;
    Ok(MetricSeries {
        name: "distance_sq".into(),
        times: traj.times.clone(),
        values: traj
            .states
            .iter()
            .map(|z| z.distance_to(anchor).powi(2))
            .collect(),
        anchor: Some(anchor.clone()),
    })
}

/// `‖z'(t) + ε(t)(z(t) - z_t)‖²` against the viscosity curve, sampled on
/// the trajectory grid.
pub fn series_shifted_velocity_sq_to_curve(
    traj: &Trajectory,
    schedule: &EpsilonSchedule,
    curve: &ViscosityCurve,
) -> Result<MetricSeries> {
    check_curve_alignment(traj, curve)?;
    let mut values = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let eps = schedule.eps(traj.times[k])?;
        let shifted =
            &traj.velocities[k] + (traj.states[k].stacked() - curve.points[k].stacked()) * eps;
        values.push(shifted.norm_squared());
    }
    Ok(MetricSeries {
        name: "shifted_velocity_sq_to_curve".into(),
        times: traj.times.clone(),
        values,
        anchor: None,
    })
}

/// `‖T(z(t)) - T(z_t)‖²` against the viscosity curve.
pub fn series_operator_residual_sq_to_curve(
    problem: &Problem,
    traj: &Trajectory,
    curve: &ViscosityCurve,
) -> Result<MetricSeries> {
    check_curve_alignment(traj, curve)?;
    let mut values = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let op = problem.saddle_operator(&traj.states[k])?;
        let curve_op = problem.saddle_operator(&curve.points[k])?;
        values.push((op - curve_op).norm_squared());
    }
    Ok(MetricSeries {
        name: "operator_residual_sq_to_curve".into(),
        times: traj.times.clone(),
        values,
        anchor: None,
    })
}

/// `‖z(t) - z_t‖²` against the viscosity curve.
pub fn series_distance_sq_to_curve(
    traj: &Trajectory,
    curve: &ViscosityCurve,
) -> Result<MetricSeries> {
    check_curve_alignment(traj, curve)?;
    Ok(MetricSeries {
        name: "distance_sq_to_curve".into(),
        times: traj.times.clone(),
        values: traj
            .states
            .iter()
            .zip(&curve.points)
            .map(|(z, p)| z.distance_to(p).powi(2))
            .collect(),
        anchor: None,
    })
}

/// Exponentially weighted moving average of the weighted squared velocity:
/// `e^(-ρ(t)) ∫_{t₊}^t e^(ρ(τ)) (1/ε(τ)) ‖z'(τ)‖² dτ` per output time,
/// accumulated by the trapezoid rule on the sample grid. Requires a
/// decreasing schedule and a trajectory sampled from no later than `t₊`.
///
/// The accumulation carries `e^(ρ(τ) - ρ(t))` factors incrementally, so
/// large `ρ` never materializes as an overflowing `e^ρ`.
pub fn ewma_velocity(
    traj: &Trajectory,
    schedule: &EpsilonSchedule,
    t_plus: f64,
) -> Result<MetricSeries> {
    let horizon = *traj.times.last().ok_or_else(|| {
        Error::InvalidInput("empty trajectory".into())
    })?;
    let cert = schedule.certify(horizon.max(schedule.t0() * (1.0 + 1e-9)) + 1e-12)?;
    if cert.eps_decreasing != TriState::Yes {
        return Err(Error::InvalidInput(
            "weighted moving average requires a decreasing schedule".into(),
        ));
    }
    if traj.times[0] > t_plus * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "trajectory starts at {} but must cover t_plus = {t_plus}",
            traj.times[0]
        )));
    }

    let start = traj
        .times
        .iter()
        .position(|&t| t >= t_plus)
        .unwrap_or(traj.times.len() - 1);
    let weight = |k: usize| -> Result<f64> {
        Ok(traj.velocities[k].norm_squared() / schedule.eps(traj.times[k])?)
    };

    let mut values = vec![0.0; traj.len()];
    let mut acc = 0.0;
    for k in start + 1..traj.len() {
        let decay = (schedule.rho(traj.times[k - 1])? - schedule.rho(traj.times[k])?).exp();
        let dt = traj.times[k] - traj.times[k - 1];
        acc = acc * decay + 0.5 * dt * (weight(k - 1)? * decay + weight(k)?);
        values[k] = acc;
    }
    Ok(MetricSeries {
        name: "ewma_velocity".into(),
        times: traj.times.clone(),
        values,
        anchor: None,
    })
}

/// The decay envelope `e^(-2ρ(t)) + ε²(t)`.
pub fn envelope(schedule: &EpsilonSchedule, t: f64) -> Result<f64> {
    let eps = schedule.eps(t)?;
    Ok((-2.0 * schedule.rho(t)?).exp() + eps * eps)
}

/// Fit the tail decay exponent of a series over the last `window_fraction`
/// of its samples: least-squares slope of `log value` against `log t`, plus
/// the least envelope constant on the same window. `expected` is an
/// `(exponent, tolerance)` pair that sets `passed`.
pub fn fit_rate(
    series: &MetricSeries,
    schedule: &EpsilonSchedule,
    window_fraction: f64,
    expected: Option<(f64, f64)>,
) -> Result<RateReport> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "window fraction {window_fraction} must lie in (0, 1]"
        )));
    }
    let len = series.len();
    let start = ((len as f64) * (1.0 - window_fraction)).round() as usize;
    let start = start.min(len.saturating_sub(1));
    if len - start < 20 {
        return Err(Error::InvalidInput(format!(
            "fit window has {} points, need at least 20",
            len - start
        )));
    }

    let pts: Vec<(f64, f64)> = series.times[start..]
        .iter()
        .zip(&series.values[start..])
        .filter(|(_, &v)| v > 1e-300)
        .map(|(&t, &v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateSeries(series.name.clone()));
    }

    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / n, sy / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("fit window spans a single time".into()));
    }
    let slope = sxy / sxx;

    let mut envelope_constant = 0.0f64;
    for (t, v) in series.times[start..].iter().zip(&series.values[start..]) {
        envelope_constant = envelope_constant.max(*v / envelope(schedule, *t)?);
    }

    Ok(RateReport {
        metric_name: series.name.clone(),
        fitted_exponent: slope,
        envelope_constant,
        window: (series.times[start], series.times[len - 1]),
        passed: expected.map(|(e, tol)| (slope - e).abs() <= tol),
        super_polynomial: slope < -20.0,
    })
}

/// Write rate reports as CSV:
/// `metric,exponent,envelope_C,window_lo,window_hi,passed`.
pub fn write_rate_csv<W: Write>(reports: &[RateReport], mut w: W) -> io::Result<()> {
    writeln!(w, "metric,exponent,envelope_C,window_lo,window_hi,passed")?;
    for r in reports {
        let passed = match r.passed {
            Some(true) => "true",
            Some(false) => "false",
            None => "na",
        };
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.metric_name,
            fmt_full(r.fitted_exponent),
            fmt_full(r.envelope_constant),
            fmt_full(r.window.0),
            fmt_full(r.window.1),
            passed
        )?;
    }
    Ok(())
}

/// Check the discrete Gronwall implication on aligned series; see
/// [`GronwallReport`].
pub fn check_gronwall(
    phi: &MetricSeries,
    vartheta: &MetricSeries,
    eps: Option<&MetricSeries>,
) -> Result<GronwallReport> {
    let aligned = phi.times.len() == vartheta.times.len()
        && phi.times.iter().zip(&vartheta.times).all(|(a, b)| a == b)
        && eps.map_or(true, |e| {
            e.times.len() == phi.times.len() && e.times.iter().zip(&phi.times).all(|(a, b)| a == b)
        });
    if !aligned {
        return Err(Error::InvalidInput("series grids are not aligned".into()));
    }
    if phi.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 samples".into()));
    }

    let scale = phi
        .values
        .iter()
        .chain(vartheta.values.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * (1.0 + scale * scale);

    let phi0 = phi.values[0];
    let mut int_tp = 0.0; // ∫ ϑφ
    let mut int_t = 0.0; // ∫ ϑ
    let mut max_hyp = 0.5 * phi0 * phi0 - 0.5 * phi0 * phi0;
    let mut max_con = phi0 - phi0;
    let mut running_theta_max = vartheta.values[0];
    let mut comparison_ok = true;
    for k in 1..phi.len() {
        let dt = phi.times[k] - phi.times[k - 1];
        int_tp += 0.5
            * dt
            * (vartheta.values[k - 1] * phi.values[k - 1] + vartheta.values[k] * phi.values[k]);
        int_t += 0.5 * dt * (vartheta.values[k - 1] + vartheta.values[k]);
        max_hyp = max_hyp.max(0.5 * phi.values[k] * phi.values[k] - (0.5 * phi0 * phi0 + int_tp));
        max_con = max_con.max(phi.values[k] - (phi0 + int_t));
        running_theta_max = running_theta_max.max(vartheta.values[k]);
        if phi.values[k] > phi0.max(running_theta_max) + tol {
            comparison_ok = false;
        }
    }

    Ok(GronwallReport {
        hypothesis_holds: max_hyp <= tol,
        conclusion_holds: max_con <= tol,
        max_hypothesis_violation: max_hyp,
        max_conclusion_violation: max_con,
        comparison_bound_holds: eps.map(|_| comparison_ok),
    })
}

/// Exact-identity cross-check for the shifted velocity: along a trajectory
/// the stored velocity satisfies `z' = -T(z) - ε z`, hence
/// `‖z' + ε(z - z̄)‖ = ‖T(z) + ε z̄‖`. Returns the largest relative
/// discrepancy between the two evaluation routes.
pub fn shifted_velocity_identity_gap(
    problem: &Problem,
    traj: &Trajectory,
    schedule: &EpsilonSchedule,
    anchor: &PrimalDualPoint,
) -> Result<f64> {
    let anchor_vec: DVector<f64> = anchor.stacked();
    let mut worst = 0.0f64;
    for k in 0..traj.len() {
        let eps = schedule.eps(traj.times[k])?;
        let via_velocity =
            (&traj.velocities[k] + (traj.states[k].stacked() - &anchor_vec) * eps).norm_squared();
        let via_operator =
            (problem.saddle_operator(&traj.states[k])? + &anchor_vec * eps).norm_squared();
        let gap = (via_velocity - via_operator).abs() / (1.0 + via_operator);
        worst = worst.max(gap);
    }
    Ok(worst)
}
