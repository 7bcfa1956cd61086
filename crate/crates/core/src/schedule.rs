//! Tikhonov regularization functions `ε(t)` and their certificates.
//!
//! A schedule provides `ε`, its first two derivatives, the accumulated
//! regularization `ρ(t) = ∫_{t0}^t ε`, and the auxiliary quantity
//! `σ(t) = ε²(t) + ε'(t)` together with `σ'(t) = 2 ε ε' + ε''`. The decisive
//! conditions for the fast decay estimates are `σ(t) ≥ 0` and `σ'(t) ≤ 0`
//! from some time `t₊` onward; [`EpsilonSchedule::certify`] locates `t₊`
//! and classifies the integrability of `ε`, `|ε'|`, and `|ε'|²/ε`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Scalar callback used by custom schedules.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Outcome of a property that may be undecidable from samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriState {
    Yes,
    No,
    Unknown,
}

impl fmt::Display for TriState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TriState::Yes => write!(f, "true"),
            TriState::No => write!(f, "false"),
            TriState::Unknown => write!(f, "unknown"),
        }
    }
}

#[derive(Clone)]
enum Family {
    /// `ε(t) = 1/t^p` with `p ∈ (0, 1]`, `t0 > 0`.
    Power { p: f64 },
    /// `ε(t) = 1/(t + c)` with `c > -t0`; solves `ε' + ε² = 0` exactly.
    PowerShifted { c: f64 },
    /// `ε(t) = e^(-a t)` with `a > 0`. Integrable, so the regularization is
    /// asymptotically inactive; kept as a negative control.
    Exponential { a: f64 },
    /// User-supplied `(ε, ε', ε'')`, with an optional closed-form `ρ`.
    Custom {
        eps: ScalarFn,
        eps_dot: ScalarFn,
        eps_ddot: ScalarFn,
        rho: Option<ScalarFn>,
    },
}

/// A positive, vanishing regularization function on `[t0, ∞)`.
#[derive(Clone)]
pub struct EpsilonSchedule {
    family: Family,
    t0: f64,
}

/// Certificate for the decisive conditions and integrability of a schedule.
///
/// `t_plus` is the earliest time from which both `σ(t) ≥ 0` and `σ'(t) ≤ 0`
/// hold through the inspected horizon (`None` when the conditions fail).
/// The integrability fields classify `∫ε = ∞`, `∫|ε'| < ∞`, and
/// `∫|ε'|²/ε < ∞`; they are exact for the built-in families and estimated
/// (or `Unknown`) for custom schedules.
#[derive(Debug, Clone)]
pub struct ScheduleCertificate {
    pub t_plus: Option<f64>,
    pub eps_not_l1: TriState,
    pub eps_dot_l1: TriState,
    pub eps_dot_sq_over_eps_l1: TriState,
    /// Whether `ε` is decreasing on `[t₊, horizon]`; gates the weighted
    /// moving-average estimates.
    pub eps_decreasing: TriState,
    /// True when `σ` and `σ'` vanish identically (`ε' + ε² = 0`).
    pub sigma_identically_zero: bool,
}

const NUMERIC_SCAN_POINTS: usize = 10_000;

impl EpsilonSchedule {
    /// `ε(t) = 1/t^p` with `p ∈ (0, 1]` and `t0 > 0`.
    pub fn power(p: f64, t0: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "power schedule requires p in (0, 1], got {p}"
            )));
        }
        if !(t0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "power schedule requires t0 > 0, got {t0}"
            )));
        }
        Ok(Self { family: Family::Power { p }, t0 })
    }

    /// `ε(t) = 1/(t + c)` with `c > -t0`.
    pub fn power_shifted(c: f64, t0: f64) -> Result<Self> {
        if !(c > -t0) {
            return Err(Error::InvalidInput(format!(
                "shifted schedule requires c > -t0, got c = {c}, t0 = {t0}"
            )));
        }
        Ok(Self { family: Family::PowerShifted { c }, t0 })
    }

    /// `ε(t) = e^(-a t)` with `a > 0`.
    pub fn exponential(a: f64, t0: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidInput(format!(
                "exponential schedule requires a > 0, got {a}"
            )));
        }
        Ok(Self { family: Family::Exponential { a }, t0 })
    }

    /// Schedule defined by user callbacks for `ε`, `ε'`, `ε''`, and
    /// optionally a closed-form `ρ`. Without `rho`, `ρ(t)` falls back to
    /// adaptive Simpson quadrature.
    pub fn custom(
        eps: ScalarFn,
        eps_dot: ScalarFn,
        eps_ddot: ScalarFn,
        t0: f64,
        rho: Option<ScalarFn>,
    ) -> Self {
        Self {
            family: Family::Custom { eps, eps_dot, eps_ddot, rho },
            t0,
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Short provenance tag used by trajectories and exports.
    pub fn id(&self) -> String {
        match &self.family {
            Family::Power { p } => format!("power(p={}, t0={})", p, self.t0),
            Family::PowerShifted { c } => format!("power_shifted(c={}, t0={})", c, self.t0),
            Family::Exponential { a } => format!("exponential(a={}, t0={})", a, self.t0),
            Family::Custom { .. } => format!("custom(t0={})", self.t0),
        }
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        if t < self.t0 || !t.is_finite() {
            return Err(Error::TimeBeforeStart { t, t0: self.t0 });
        }
        Ok(())
    }

    /// `ε(t)`.
    pub fn eps(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(match &self.family {
            Family::Power { p } => t.powf(-p),
            Family::PowerShifted { c } => 1.0 / (t + c),
            Family::Exponential { a } => (-a * t).exp(),
            Family::Custom { eps, .. } => eps(t),
        })
    }

    /// `ε'(t)`.
    pub fn eps_dot(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(match &self.family {
            Family::Power { p } => -p * t.powf(-(p + 1.0)),
            Family::PowerShifted { c } => -1.0 / ((t + c) * (t + c)),
            Family::Exponential { a } => -a * (-a * t).exp(),
            Family::Custom { eps_dot, .. } => eps_dot(t),
        })
    }

    /// `ε''(t)`.
    pub fn eps_ddot(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(match &self.family {
            Family::Power { p } => p * (p + 1.0) * t.powf(-(p + 2.0)),
            Family::PowerShifted { c } => 2.0 / ((t + c) * (t + c) * (t + c)),
            Family::Exponential { a } => a * a * (-a * t).exp(),
            Family::Custom { eps_ddot, .. } => eps_ddot(t),
        })
    }

    /// Accumulated regularization `ρ(t) = ∫_{t0}^t ε(τ) dτ`.
    pub fn rho(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        match &self.family {
            Family::Power { p } => {
                if (*p - 1.0).abs() < 1e-14 {
                    Ok((t / self.t0).ln())
                } else {
                    let q = 1.0 - p;
                    Ok((t.powf(q) - self.t0.powf(q)) / q)
                }
            }
            Family::PowerShifted { c } => Ok(((t + c) / (self.t0 + c)).ln()),
            Family::Exponential { a } => Ok(((-a * self.t0).exp() - (-a * t).exp()) / a),
            Family::Custom { eps, rho, .. } => match rho {
                Some(r) => Ok(r(t)),
                None => adaptive_simpson(eps.as_ref(), self.t0, t, 1e-10),
            },
        }
    }

    /// `σ(t) = ε²(t) + ε'(t)`, evaluated per family so that exact
    /// cancellations (p = 1, shifted) produce exact zeros.
    pub fn sigma(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(match &self.family {
            Family::Power { p } => t.powf(-2.0 * p) - p * t.powf(-(p + 1.0)),
            Family::PowerShifted { .. } => 0.0,
            Family::Exponential { a } => {
                let e = (-a * t).exp();
                e * e - a * e
            }
            Family::Custom { eps, eps_dot, .. } => {
                let e = eps(t);
                e * e + eps_dot(t)
            }
        })
    }

    /// `σ'(t) = 2 ε(t) ε'(t) + ε''(t)`.
    pub fn sigma_dot(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(match &self.family {
            Family::Power { p } => {
                -2.0 * p * t.powf(-(2.0 * p + 1.0)) + p * (p + 1.0) * t.powf(-(p + 2.0))
            }
            Family::PowerShifted { .. } => 0.0,
            Family::Exponential { a } => {
                let e = (-a * t).exp();
                -2.0 * a * e * e + a * a * e
            }
            Family::Custom { eps, eps_dot, eps_ddot, .. } => {
                2.0 * eps(t) * eps_dot(t) + eps_ddot(t)
            }
        })
    }

    /// Certify the decisive conditions up to `horizon` and classify
    /// integrability. Built-in families are certified analytically; custom
    /// schedules fall back to a sign scan on a log grid plus a tail-exponent
    /// heuristic, reporting `Unknown` when inconclusive.
    pub fn certify(&self, horizon: f64) -> Result<ScheduleCertificate> {
        if !(horizon > self.t0) {
            return Err(Error::InvalidInput(format!(
                "certification horizon {horizon} must exceed t0 = {}",
                self.t0
            )));
        }
        match &self.family {
            Family::Power { p } => {
                let p = *p;
                let exact = (p - 1.0).abs() < 1e-14;
                let t_plus = if exact {
                    self.t0
                } else {
                    // σ ≥ 0 from p^(1/(1-p)), σ' ≤ 0 from ((p+1)/2)^(1/(1-p));
                    // the second threshold dominates since (p+1)/2 > p on (0,1).
                    self.t0.max(((p + 1.0) / 2.0).powf(1.0 / (1.0 - p)))
                };
                Ok(ScheduleCertificate {
                    t_plus: Some(t_plus),
                    eps_not_l1: TriState::Yes,
                    eps_dot_l1: TriState::Yes,
                    // |ε'|²/ε = p²/τ^(p+2) is integrable for every p in (0,1].
                    eps_dot_sq_over_eps_l1: TriState::Yes,
                    eps_decreasing: TriState::Yes,
                    sigma_identically_zero: exact,
                })
            }
            Family::PowerShifted { .. } => Ok(ScheduleCertificate {
                t_plus: Some(self.t0),
                eps_not_l1: TriState::Yes,
                eps_dot_l1: TriState::Yes,
                eps_dot_sq_over_eps_l1: TriState::Yes,
                eps_decreasing: TriState::Yes,
                sigma_identically_zero: true,
            }),
            Family::Exponential { a } => {
                // σ(t) = e^(-at)(e^(-at) - a) turns negative past ln(1/a)/a
                // and stays negative, so no valid t₊ exists on any tail.
                let _ = a;
                Ok(ScheduleCertificate {
                    t_plus: None,
                    eps_not_l1: TriState::No,
                    eps_dot_l1: TriState::Yes,
                    eps_dot_sq_over_eps_l1: TriState::Yes,
                    eps_decreasing: TriState::Yes,
                    sigma_identically_zero: false,
                })
            }
            Family::Custom { .. } => {
                let t_plus = self.numeric_t_plus_scan(horizon, NUMERIC_SCAN_POINTS)?;
                let grid = log_grid(self.t0, horizon, 512);
                let eps_vals: Vec<f64> =
                    grid.iter().map(|&t| self.eps(t)).collect::<Result<_>>()?;
                let eps_dot_vals: Vec<f64> =
                    grid.iter().map(|&t| self.eps_dot(t)).collect::<Result<_>>()?;
                let decreasing = if eps_dot_vals.iter().all(|&d| d <= 1e-14) {
                    TriState::Yes
                } else if eps_dot_vals.iter().any(|&d| d > 1e-9) {
                    TriState::No
                } else {
                    TriState::Unknown
                };
                let ratio: Vec<f64> = eps_dot_vals
                    .iter()
                    .zip(&eps_vals)
                    .map(|(&d, &e)| d.abs() * d.abs() / e.max(1e-300))
                    .collect();
                let abs_dot: Vec<f64> = eps_dot_vals.iter().map(|d| d.abs()).collect();
                Ok(ScheduleCertificate {
                    t_plus,
                    eps_not_l1: tail_divergence_class(&grid, &eps_vals),
                    eps_dot_l1: tail_convergence_class(&grid, &abs_dot),
                    eps_dot_sq_over_eps_l1: tail_convergence_class(&grid, &ratio),
                    eps_decreasing: decreasing,
                    sigma_identically_zero: false,
                })
            }
        }
    }

    /// Sign scan for `t₊` on a log grid: the earliest grid time from which
    /// `σ ≥ 0` and `σ' ≤ 0` both hold through the horizon. Exposed so
    /// analytic certificates can be cross-checked against the scan.
    pub fn numeric_t_plus_scan(&self, horizon: f64, points: usize) -> Result<Option<f64>> {
        let grid = log_grid(self.t0, horizon, points.max(16));
        let sigma: Vec<f64> = grid.iter().map(|&t| self.sigma(t)).collect::<Result<_>>()?;
        let sigma_dot: Vec<f64> =
            grid.iter().map(|&t| self.sigma_dot(t)).collect::<Result<_>>()?;
        let scale = sigma
            .iter()
            .chain(sigma_dot.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-12 * (1.0 + scale);
        let mut from = None;
        for i in (0..grid.len()).rev() {
            if sigma[i] >= -tol && sigma_dot[i] <= tol {
                from = Some(i);
            } else {
                break;
            }
        }
        Ok(from.map(|i| grid[i]))
    }
}

impl fmt::Debug for EpsilonSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EpsilonSchedule({})", self.id())
    }
}

/// Log-spaced grid on `[a, b]` with exact endpoints.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && a > 0.0 && b > a);
    let (la, lb) = (a.ln(), b.ln());
    let mut out: Vec<f64> = (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect();
    out[0] = a;
    out[n - 1] = b;
    out
}

/// Tail log-log slope of positive samples; `None` when the fit is poor.
fn tail_slope(times: &[f64], values: &[f64]) -> Option<f64> {
    let start = times.len() / 2;
    let pts: Vec<(f64, f64)> = times[start..]
        .iter()
        .zip(&values[start..])
        .filter(|(_, &v)| v > 1e-300)
        .map(|(&t, &v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < 8 {
        return None;
    }
    let n = pts.len() as f64;
    let (sx, sy): (f64, f64) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / n, sy / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    // Reject strongly non-power-law tails.
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let fit = my + slope * (p.0 - mx);
            (p.1 - fit) * (p.1 - fit)
        })
        .sum();
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if ss_tot > 0.0 && ss_res / ss_tot > 1e-3 {
        return None;
    }
    Some(slope)
}

/// Does `∫ v` diverge, judging by the tail exponent? (`Yes` = not integrable.)
fn tail_divergence_class(times: &[f64], values: &[f64]) -> TriState {
    match tail_slope(times, values) {
        Some(s) if s > -1.0 + 0.05 => TriState::Yes,
        Some(s) if s < -1.0 - 0.05 => TriState::No,
        _ => TriState::Unknown,
    }
}

/// Is `∫ v` finite, judging by the tail exponent? (`Yes` = integrable.)
fn tail_convergence_class(times: &[f64], values: &[f64]) -> TriState {
    if values.iter().all(|&v| v == 0.0) {
        return TriState::Yes;
    }
    match tail_divergence_class(times, values) {
        TriState::Yes => TriState::No,
        TriState::No => TriState::Yes,
        TriState::Unknown => TriState::Unknown,
    }
}

/// Adaptive composite-Simpson quadrature with relative tolerance `rel_tol`.
fn adaptive_simpson(f: &(dyn Fn(f64) -> f64 + Send + Sync), a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if b == a {
        return Ok(0.0);
    }
    fn simpson(f: &(dyn Fn(f64) -> f64 + Send + Sync), a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &(dyn Fn(f64) -> f64 + Send + Sync),
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol || (b - a) < 1e-14 * (1.0 + a.abs()) {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::Numeric(format!(
                "quadrature failed to converge on [{a}, {b}] (estimate {whole:.6e}, correction {delta:.3e})"
            )));
        }
        Ok(recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)?
            + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)?)
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    let tol = rel_tol * whole.abs().max(1e-12);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}
