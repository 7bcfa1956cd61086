//! The viscosity curve: for each `t`, the unique zero `(x_t, λ_t)` of the
//! `ε(t)`-strongly monotone operator `T + ε(t)·id`.
//!
//! Quadratic problems reduce to one linear solve per sample,
//! `[[Q + εI, Aᵀ], [-A, εI]] (x, λ) = (-c, -b)`; oracle problems use damped
//! Newton iterations warm-started along the curve. Curve velocities are
//! central finite differences on the sample grid (the uniform choice that
//! also works for oracle objectives), with the finite-difference error
//! allowance made explicit in the checks that consume them.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{Objective, PrimalDualPoint, Problem};
use crate::schedule::EpsilonSchedule;

const NEWTON_MAX_ITER: usize = 200;

/// Residual stop and invariant scale: solutions satisfy
/// `‖T_t(z)‖ ≤ RESIDUAL_TOL · (1 + ‖z‖)`.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Sampled viscosity curve with finite-difference velocities and per-sample
/// operator residuals.
#[derive(Debug, Clone)]
pub struct ViscosityCurve {
    pub times: Vec<f64>,
    pub points: Vec<PrimalDualPoint>,
    pub velocities: Vec<DVector<f64>>,
    pub residuals: Vec<f64>,
}

/// Pointwise report on the curve inequality
/// `-ε'(t) ⟨z_t, z_t'⟩ ≥ ε(t) ‖z_t'‖²` at interior samples.
#[derive(Debug, Clone)]
pub struct CurveInequalityReport {
    /// Fraction of interior samples where the inequality holds within the
    /// finite-difference allowance.
    pub fraction: f64,
    pub interior_samples: usize,
    /// Most negative observed slack `lhs - rhs` (nonnegative means the
    /// inequality held everywhere with margin).
    pub worst_slack: f64,
}

/// Fitted envelope constants for the curve velocity.
#[derive(Debug, Clone)]
pub struct CurveVelocityBound {
    /// Least `C` with `‖z_t'‖ ≤ C |ε'| / ε` over the tail half of samples.
    pub envelope_constant: f64,
    /// Least `C` with `‖z_t'‖² ≤ C |ε'|² / (α + ε²)²` when a reverse
    /// Lipschitz constant `α` is available.
    pub alpha_envelope_constant: Option<f64>,
}

/// Solve `T(z) + ε(t) z = 0` at a single time.
pub fn viscosity_point(
    problem: &Problem,
    schedule: &EpsilonSchedule,
    t: f64,
) -> Result<PrimalDualPoint> {
    let warm = PrimalDualPoint::zeros(problem.primal_dim(), problem.dual_dim());
    viscosity_point_from(problem, schedule, t, &warm)
}

fn viscosity_point_from(
    problem: &Problem,
    schedule: &EpsilonSchedule,
    t: f64,
    warm: &PrimalDualPoint,
) -> Result<PrimalDualPoint> {
    let eps = schedule.eps(t)?;
    if !(eps > 0.0) {
        return Err(Error::Numeric(format!(
            "regularization vanished (ε({t}) = {eps}); the perturbed operator is not strongly monotone"
        )));
    }
    match problem.objective() {
        Objective::Quadratic { q, c } => {
            let (n, m) = (problem.primal_dim(), problem.dual_dim());
            let mut mat = DMatrix::zeros(n + m, n + m);
            mat.view_mut((0, 0), (n, n)).copy_from(&(q + DMatrix::identity(n, n) * eps));
            mat.view_mut((0, n), (n, m))
                .copy_from(&problem.constraint_matrix().transpose());
            mat.view_mut((n, 0), (m, n)).copy_from(&(-problem.constraint_matrix()));
            mat.view_mut((n, n), (m, m))
                .copy_from(&(DMatrix::identity(m, m) * eps));
            let mut rhs = DVector::zeros(n + m);
            rhs.rows_mut(0, n).copy_from(&(-c));
            rhs.rows_mut(n, m).copy_from(&(-problem.constraint_rhs()));
            let z = mat
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Numeric(format!("singular system at t = {t}")))?;
            PrimalDualPoint::from_stacked(&z, n, m)
        }
        Objective::Oracle(_) => newton_solve(problem, schedule, t, warm),
    }
}

/// Damped Newton on the regularized operator with a finite-difference
/// Hessian of the oracle gradient. Halves the step while the residual grows.
fn newton_solve(
    problem: &Problem,
    schedule: &EpsilonSchedule,
    t: f64,
    guess: &PrimalDualPoint,
) -> Result<PrimalDualPoint> {
    let eps = schedule.eps(t)?;
    let (n, m) = (problem.primal_dim(), problem.dual_dim());
    let a = problem.constraint_matrix();
    let mut z = guess.clone();
    let mut residual = problem.regularized_operator(schedule, t, &z)?;
    let mut res_norm = residual.norm();

    for _ in 0..NEWTON_MAX_ITER {
        if res_norm <= RESIDUAL_TOL * (1.0 + z.norm()) {
            return Ok(z);
        }
        let hess = fd_hessian(problem, &z.x);
        let mut jac = DMatrix::zeros(n + m, n + m);
        jac.view_mut((0, 0), (n, n))
            .copy_from(&(&hess + DMatrix::identity(n, n) * eps));
        jac.view_mut((0, n), (n, m)).copy_from(&a.transpose());
        jac.view_mut((n, 0), (m, n)).copy_from(&(-a));
        jac.view_mut((n, n), (m, m)).copy_from(&(DMatrix::identity(m, m) * eps));
        let step = jac
            .lu()
            .solve(&residual)
            .ok_or_else(|| Error::Numeric(format!("singular Newton system at t = {t}")))?;

        let mut damping = 1.0;
        loop {
            let trial_vec = z.stacked() - &step * damping;
            let trial = PrimalDualPoint::from_stacked(&trial_vec, n, m)?;
            let trial_res = problem.regularized_operator(schedule, t, &trial)?;
            let trial_norm = trial_res.norm();
            if trial_norm < res_norm || damping < 1e-8 {
                z = trial;
                residual = trial_res;
                res_norm = trial_norm;
                break;
            }
            damping *= 0.5;
        }
    }
    Err(Error::Numeric(format!(
        "Newton did not converge in {NEWTON_MAX_ITER} iterations at t = {t}; final residual {res_norm:.3e}"
    )))
}

/// Forward-difference Hessian of the objective gradient, symmetrized.
fn fd_hessian(problem: &Problem, x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let g0 = problem.objective_gradient(x);
    let mut h = DMatrix::zeros(n, n);
    let step0 = f64::EPSILON.sqrt();
    for j in 0..n {
        let hj = step0 * (1.0 + x[j].abs());
        let mut xp = x.clone();
        xp[j] += hj;
        let gj = problem.objective_gradient(&xp);
        for i in 0..n {
            h[(i, j)] = (gj[i] - g0[i]) / hj;
        }
    }
    let ht = h.transpose();
    (h + ht) * 0.5
}

/// Compute the curve on an ascending time grid, warm-starting each solve
/// from the previous sample.
pub fn viscosity_curve(
    problem: &Problem,
    schedule: &EpsilonSchedule,
    times: &[f64],
) -> Result<ViscosityCurve> {
    if times.is_empty() {
        return Err(Error::InvalidInput("empty time grid".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("times must be strictly increasing".into()));
    }
    if times[0] < schedule.t0() {
        return Err(Error::TimeBeforeStart { t: times[0], t0: schedule.t0() });
    }

    let mut points = Vec::with_capacity(times.len());
    let mut residuals = Vec::with_capacity(times.len());
    let mut warm = PrimalDualPoint::zeros(problem.primal_dim(), problem.dual_dim());
    for &t in times {
        let p = viscosity_point_from(problem, schedule, t, &warm)?;
        residuals.push(problem.regularized_operator(schedule, t, &p)?.norm());
        warm = p.clone();
        points.push(p);
    }

    let stacked: Vec<DVector<f64>> = points.iter().map(|p| p.stacked()).collect();
    let velocities = fd_velocities(times, &stacked);
    Ok(ViscosityCurve { times: times.to_vec(), points, velocities, residuals })
}

/// Second-order finite differences on a non-uniform grid; one-sided
/// three-point stencils at the endpoints, a two-point quotient when only two
/// samples exist.
fn fd_velocities(times: &[f64], z: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = times.len();
    if n == 1 {
        return vec![DVector::zeros(z[0].len())];
    }
    if n == 2 {
        let d = (&z[1] - &z[0]) / (times[1] - times[0]);
        return vec![d.clone(), d];
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let v = if i == 0 {
            let h1 = times[1] - times[0];
            let h2 = times[2] - times[1];
            &z[0] * (-(2.0 * h1 + h2) / (h1 * (h1 + h2)))
                + &z[1] * ((h1 + h2) / (h1 * h2))
                + &z[2] * (-h1 / (h2 * (h1 + h2)))
        } else if i == n - 1 {
            let hm = times[n - 2] - times[n - 3];
            let hn = times[n - 1] - times[n - 2];
            &z[n - 3] * (hn / (hm * (hm + hn)))
                + &z[n - 2] * (-(hm + hn) / (hm * hn))
                + &z[n - 1] * ((2.0 * hn + hm) / (hn * (hm + hn)))
        } else {
            let hm = times[i] - times[i - 1];
            let hp = times[i + 1] - times[i];
            &z[i - 1] * (-hp / (hm * (hm + hp)))
                + &z[i] * ((hp - hm) / (hm * hp))
                + &z[i + 1] * (hm / (hp * (hm + hp)))
        };
        out.push(v);
    }
    out
}

/// Evaluate both sides of the curve inequality at interior samples. The
/// allowance `1e-6 · (1 + |rhs|)` absorbs finite-difference error; coarse
/// grids on problems where the inequality is tight need denser sampling to
/// report a fraction near one.
pub fn check_curve_differential_inequality(
    curve: &ViscosityCurve,
    schedule: &EpsilonSchedule,
) -> Result<CurveInequalityReport> {
    if curve.times.len() < 3 {
        return Err(Error::InvalidInput(
            "curve inequality check needs at least 3 samples".into(),
        ));
    }
    let mut held = 0usize;
    let mut worst = f64::INFINITY;
    let interior = curve.times.len() - 2;
    for i in 1..curve.times.len() - 1 {
        let t = curve.times[i];
        let eps_dot = schedule.eps_dot(t)?;
        let eps = schedule.eps(t)?;
        let vel = &curve.velocities[i];
        let lhs = -eps_dot * curve.points[i].stacked().dot(vel);
        let rhs = eps * vel.norm_squared();
        let slack = lhs - rhs;
        let allowance = 1e-6 * (1.0 + rhs.abs());
        if slack >= -allowance {
            held += 1;
        }
        worst = worst.min(slack);
    }
    Ok(CurveInequalityReport {
        fraction: held as f64 / interior as f64,
        interior_samples: interior,
        worst_slack: worst,
    })
}

/// Fit envelope constants for the curve velocity over the tail half of the
/// samples: the plain bound `‖z_t'‖ = O(|ε'|/ε)` and, given `α`, the
/// sharper `‖z_t'‖² = O(|ε'|²/(α + ε²)²)`.
pub fn curve_velocity_bound_check(
    curve: &ViscosityCurve,
    schedule: &EpsilonSchedule,
    alpha: Option<f64>,
) -> Result<CurveVelocityBound> {
    let start = curve.times.len() / 2;
    let mut c_plain = 0.0f64;
    let mut c_alpha = alpha.map(|_| 0.0f64);
    for i in start..curve.times.len() {
        let t = curve.times[i];
        let eps = schedule.eps(t)?;
        let eps_dot_abs = schedule.eps_dot(t)?.abs();
        let speed = curve.velocities[i].norm();
        if eps_dot_abs > 0.0 {
            c_plain = c_plain.max(speed * eps / eps_dot_abs);
            if let (Some(c), Some(a)) = (c_alpha.as_mut(), alpha) {
                let denom = eps_dot_abs * eps_dot_abs / (a + eps * eps).powi(2);
                *c = c.max(speed * speed / denom);
            }
        }
    }
    Ok(CurveVelocityBound { envelope_constant: c_plain, alpha_envelope_constant: c_alpha })
}

impl ViscosityCurve {
    /// CSV export: `t,x_0..,lambda_0..,vel_0..,residual`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.points[0].x.len();
        let m = self.points[0].lambda.len();
        write!(w, "t")?;
        for i in 0..n {
            write!(w, ",x_{i}")?;
        }
        for i in 0..m {
            write!(w, ",lambda_{i}")?;
        }
        for i in 0..n + m {
            write!(w, ",vel_{i}")?;
        }
        writeln!(w, ",residual")?;
        for (k, &t) in self.times.iter().enumerate() {
            write!(w, "{}", crate::dynamics::fmt_full(t))?;
            for v in self.points[k].x.iter().chain(self.points[k].lambda.iter()) {
                write!(w, ",{}", crate::dynamics::fmt_full(*v))?;
            }
            for v in self.velocities[k].iter() {
                write!(w, ",{}", crate::dynamics::fmt_full(*v))?;
            }
            writeln!(w, ",{}", crate::dynamics::fmt_full(self.residuals[k]))?;
        }
        Ok(())
    }

    /// Squared speed `‖z_t'‖²` per sample.
    pub fn velocity_sq(&self) -> Vec<f64> {
        self.velocities.iter().map(|v| v.norm_squared()).collect()
    }
}
