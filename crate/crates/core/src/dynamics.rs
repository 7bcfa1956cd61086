//! Integration of the regularized primal-dual flow `z' = -(T(z) + ε(t) z)`.
//!
//! States are recorded on a log-spaced sample grid (rate fits happen in
//! log-log coordinates). Stored velocities are recomputed exactly as the
//! right-hand side at each sample, never interpolated, so downstream metrics
//! can rely on the algebraic identity `z' = -T(z) - ε(t) z` holding to
//! machine precision.

use std::io::{self, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::problem::{PrimalDualPoint, Problem};
use crate::schedule::{log_grid, EpsilonSchedule};

/// Integration method. The adaptive method is the default; the fixed-step
/// method exists to expose the classical fourth-order convergence behavior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Rk4Fixed { step: f64 },
    Rk45Adaptive { rel_tol: f64, abs_tol: f64 },
}

/// Integration window and output resolution. Everything is deterministic:
/// two runs with an identical config produce identical trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub t_end: f64,
    pub samples: usize,
}

impl IntegratorConfig {
    /// Adaptive integration with the default tolerances (1e-8 relative,
    /// 1e-10 absolute), tight enough that measured decay rates are not
    /// integration artifacts.
    pub fn adaptive(t_end: f64, samples: usize) -> Self {
        Self {
            method: Method::Rk45Adaptive { rel_tol: 1e-8, abs_tol: 1e-10 },
            t_end,
            samples,
        }
    }

    pub fn rk4(step: f64, t_end: f64, samples: usize) -> Self {
        Self { method: Method::Rk4Fixed { step }, t_end, samples }
    }

    pub fn validate(&self, t0: f64) -> Result<()> {
        if !(t0 > 0.0) {
            return Err(Error::InvalidInput(
                "log-spaced sampling requires a positive start time".into(),
            ));
        }
        if !(self.t_end > t0) {
            return Err(Error::InvalidInput(format!(
                "t_end = {} must exceed t0 = {t0}",
                self.t_end
            )));
        }
        if self.samples < 2 {
            return Err(Error::InvalidInput("need at least 2 output samples".into()));
        }
        match self.method {
            Method::Rk4Fixed { step } => {
                if !(step > 0.0) {
                    return Err(Error::InvalidInput(format!("step = {step} must be positive")));
                }
            }
            Method::Rk45Adaptive { rel_tol, abs_tol } => {
                for (name, tol) in [("rel_tol", rel_tol), ("abs_tol", abs_tol)] {
                    if !(tol > 0.0 && tol <= 1e-2) {
                        return Err(Error::InvalidInput(format!(
                            "{name} = {tol} must lie in (0, 1e-2]"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A sampled solution of the flow: strictly increasing times, states, and
/// the exact right-hand side at each sample.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PrimalDualPoint>,
    pub velocities: Vec<DVector<f64>>,
    pub schedule_id: String,
    pub problem_id: String,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &PrimalDualPoint {
        self.states.last().expect("trajectory has at least two samples")
    }

    /// CSV export: `t,x_0..,lambda_0..,xdot_0..,lambdadot_0..`, full double
    /// precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.states[0].x.len();
        let m = self.states[0].lambda.len();
        write!(w, "t")?;
        for i in 0..n {
            write!(w, ",x_{i}")?;
        }
        for i in 0..m {
            write!(w, ",lambda_{i}")?;
        }
        for i in 0..n {
            write!(w, ",xdot_{i}")?;
        }
        for i in 0..m {
            write!(w, ",lambdadot_{i}")?;
        }
        writeln!(w)?;
        for (k, &t) in self.times.iter().enumerate() {
            write!(w, "{}", fmt_full(t))?;
            for v in self.states[k].x.iter().chain(self.states[k].lambda.iter()) {
                write!(w, ",{}", fmt_full(*v))?;
            }
            for v in self.velocities[k].iter() {
                write!(w, ",{}", fmt_full(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub(crate) fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

/// Right-hand side of the flow: `-(T(z) + ε(t) z)`, stacked.
pub fn rhs(
    problem: &Problem,
    schedule: &EpsilonSchedule,
    t: f64,
    z: &PrimalDualPoint,
) -> Result<DVector<f64>> {
    Ok(-problem.regularized_operator(schedule, t, z)?)
}

/// Integrate the flow from `z0` at the schedule start, sampling states and
/// velocities on `cfg.samples` log-spaced times.
pub fn integrate(
    problem: &Problem,
    schedule: &EpsilonSchedule,
    z0: &PrimalDualPoint,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let t0 = schedule.t0();
    cfg.validate(t0)?;
    let (n, m) = (problem.primal_dim(), problem.dual_dim());
    if z0.x.len() != n || z0.lambda.len() != m {
        return Err(Error::InvalidInput("initial point has wrong dimensions".into()));
    }

    let times = log_grid(t0, cfg.t_end, cfg.samples);
    let f = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let z = PrimalDualPoint {
            x: y.rows(0, n).into_owned(),
            lambda: y.rows(n, m).into_owned(),
        };
        rhs(problem, schedule, t, &z)
    };

    let mut states = Vec::with_capacity(times.len());
    let mut velocities = Vec::with_capacity(times.len());
    let mut y = z0.stacked();

    let mut record = |t: f64, y: &DVector<f64>| -> Result<()> {
        let z = PrimalDualPoint::from_stacked(y, n, m).map_err(|_| {
            Error::IntegrationFailure {
                last_good_t: t,
                reason: "state became non-finite".into(),
            }
        })?;
        velocities.push(rhs(problem, schedule, t, &z)?);
        states.push(z);
        Ok(())
    };

    record(times[0], &y)?;
    match cfg.method {
        Method::Rk4Fixed { step } => {
            for k in 0..times.len() - 1 {
                let (ta, tb) = (times[k], times[k + 1]);
                let nsub = (((tb - ta) / step).ceil() as usize).max(1);
                let h = (tb - ta) / nsub as f64;
                for i in 0..nsub {
                    let t = ta + h * i as f64;
                    rk4_step(&f, t, h, &mut y)?;
                }
                record(tb, &y)?;
            }
        }
        Method::Rk45Adaptive { rel_tol, abs_tol } => {
            let mut stepper = Dopri5::new(rel_tol, abs_tol, (1e-4f64).min(t0 / 10.0));
            for k in 0..times.len() - 1 {
                stepper.advance(&f, times[k], times[k + 1], &mut y)?;
                record(times[k + 1], &y)?;
            }
        }
    }

    Ok(Trajectory {
        times,
        states,
        velocities,
        schedule_id: schedule.id(),
        problem_id: problem.id().to_string(),
    })
}

fn rk4_step<F>(f: &F, t: f64, h: f64, y: &mut DVector<f64>) -> Result<()>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &(&*y + &k1 * (0.5 * h)))?;
    let k3 = f(t + 0.5 * h, &(&*y + &k2 * (0.5 * h)))?;
    let k4 = f(t + h, &(&*y + &k3 * h))?;
    *y += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
    Ok(())
}

/// Dormand-Prince 5(4) with a standard step controller. The first stage of
/// the next step reuses the last stage of the accepted one.
struct Dopri5 {
    rel_tol: f64,
    abs_tol: f64,
    h: f64,
    k1: Option<DVector<f64>>,
}

#[rustfmt::skip]
mod dp {
    pub const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    pub const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    pub const B: [f64; 7] =
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    /// b - b̂: weights of the embedded fourth-order error estimate.
    pub const E: [f64; 7] = [
        71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0,
        -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0,
    ];
}

impl Dopri5 {
    fn new(rel_tol: f64, abs_tol: f64, h0: f64) -> Self {
        Self { rel_tol, abs_tol, h: h0, k1: None }
    }

    /// March from `ta` to `tb`, mutating `y` in place. The running step size
    /// carries across calls; steps are clipped to land on `tb` exactly.
    fn advance<F>(&mut self, f: &F, ta: f64, tb: f64, y: &mut DVector<f64>) -> Result<()>
    where
        F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
    {
        let mut t = ta;
        while t < tb {
            if self.h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::IntegrationFailure {
                    last_good_t: t,
                    reason: format!("step size underflow (h = {:.3e})", self.h),
                });
            }
            let at_boundary = self.h >= tb - t;
            let h = if at_boundary { tb - t } else { self.h };

            let k1 = match self.k1.take() {
                Some(k) => k,
                None => f(t, y)?,
            };
            let mut k = vec![k1; 7];
            for s in 1..7 {
                let mut ys = y.clone();
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = dp::A[s - 1][j];
                    if a != 0.0 {
                        ys += kj * (a * h);
                    }
                }
                k[s] = f(t + dp::C[s] * h, &ys)?;
            }

            let mut y_new = y.clone();
            let mut err_vec = DVector::zeros(y.len());
            for (s, ks) in k.iter().enumerate() {
                if dp::B[s] != 0.0 {
                    y_new += ks * (dp::B[s] * h);
                }
                if dp::E[s] != 0.0 {
                    err_vec += ks * (dp::E[s] * h);
                }
            }

            let mut err = 0.0;
            for i in 0..y.len() {
                let sc = self.abs_tol + self.rel_tol * y[i].abs().max(y_new[i].abs());
                let e = err_vec[i] / sc;
                err += e * e;
            }
            err = (err / y.len().max(1) as f64).sqrt();

            if !err.is_finite() {
                return Err(Error::IntegrationFailure {
                    last_good_t: t,
                    reason: "error estimate became non-finite".into(),
                });
            }

            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };

            if err <= 1.0 {
                *y = y_new;
                t = if at_boundary { tb } else { t + h };
                // The last stage sits at (t, y): it is the next first stage.
                self.k1 = Some(k.pop().expect("seven stages"));
                if at_boundary {
                    // Do not let an output boundary shrink the controller step.
                    self.h = self.h.max(h * factor);
                } else {
                    self.h = h * factor;
                }
            } else {
                // Rejected: (t, y) unchanged, so the first stage stays valid.
                self.k1 = Some(k.swap_remove(0));
                self.h = h * factor;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn bilinear() -> Problem {
        Problem::bilinear_saddle_example()
    }

    #[test]
    fn rhs_values() {
        let p = bilinear();
        let s = EpsilonSchedule::power(1.0, 0.01).unwrap();
        let z = PrimalDualPoint::zeros(1, 1);
        // Any time: (-λ - εx, x - 1 - ελ) at the origin is (0, -1).
        for &t in &[0.01, 1.0, 50.0] {
            let v = rhs(&p, &s, t, &z).unwrap();
            assert_eq!(v.as_slice(), &[0.0, -1.0]);
        }
        // ε = 0.5 at the saddle point (1, 0): (-0.5, 0).
        let s = EpsilonSchedule::power(1.0, 1.0).unwrap();
        let z = PrimalDualPoint::new(
            DVector::from_row_slice(&[1.0]),
            DVector::from_row_slice(&[0.0]),
        )
        .unwrap();
        let v = rhs(&p, &s, 2.0, &z).unwrap();
        assert_eq!(v.as_slice(), &[-0.5, 0.0]);
        // The flow is stationary exactly at the zero of the regularized
        // operator: (1/2, -1/2) at ε = 1.
        let z = PrimalDualPoint::new(
            DVector::from_row_slice(&[0.5]),
            DVector::from_row_slice(&[-0.5]),
        )
        .unwrap();
        let v = rhs(&p, &s, 1.0, &z).unwrap();
        assert_abs_diff_eq!(v.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn converges_to_the_saddle_point() {
        let p = bilinear();
        let s = EpsilonSchedule::power(1.0, 0.01).unwrap();
        let traj = integrate(
            &p,
            &s,
            &PrimalDualPoint::zeros(1, 1),
            &IntegratorConfig::adaptive(100.0, 400),
        )
        .unwrap();
        let end = traj.final_state();
        let dist = ((end.x[0] - 1.0).powi(2) + end.lambda[0].powi(2)).sqrt();
        assert!(dist < 5e-2, "final distance {dist}");
    }

    #[test]
    fn stored_velocities_are_exact_rhs_recomputations() {
        let p = bilinear();
        let s = EpsilonSchedule::power(0.5, 0.01).unwrap();
        let traj = integrate(
            &p,
            &s,
            &PrimalDualPoint::zeros(1, 1),
            &IntegratorConfig::adaptive(20.0, 50),
        )
        .unwrap();
        for k in 0..traj.len() {
            let again = rhs(&p, &s, traj.times[k], &traj.states[k]).unwrap();
            // Bitwise identical: same expression, same inputs.
            assert!(again
                .iter()
                .zip(traj.velocities[k].iter())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn identical_configs_give_identical_trajectories() {
        let p = bilinear();
        let s = EpsilonSchedule::power(0.75, 0.01).unwrap();
        let cfg = IntegratorConfig::adaptive(30.0, 80);
        let a = integrate(&p, &s, &PrimalDualPoint::zeros(1, 1), &cfg).unwrap();
        let b = integrate(&p, &s, &PrimalDualPoint::zeros(1, 1), &cfg).unwrap();
        for k in 0..a.len() {
            assert!(a.states[k]
                .stacked()
                .iter()
                .zip(b.states[k].stacked().iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn trajectory_stays_inside_the_energy_envelope() {
        // ½‖z(t) - z̄‖² ≤ e^(-ρ(t)) ½‖z0 - z̄‖² + ½‖z̄‖², with slack for
        // integration error.
        let p = bilinear();
        let s = EpsilonSchedule::power(1.0, 0.01).unwrap();
        let z0 = PrimalDualPoint::new(
            DVector::from_row_slice(&[-2.0]),
            DVector::from_row_slice(&[3.0]),
        )
        .unwrap();
        let traj = integrate(&p, &s, &z0, &IntegratorConfig::adaptive(100.0, 200)).unwrap();
        let z_bar = p.least_norm_saddle().unwrap().point;
        let phi0 = 0.5 * z0.distance_to(&z_bar).powi(2);
        for k in 0..traj.len() {
            let phi = 0.5 * traj.states[k].distance_to(&z_bar).powi(2);
            let bound = (-s.rho(traj.times[k]).unwrap()).exp() * phi0
                + 0.5 * z_bar.norm().powi(2)
                + 1e-6;
            assert!(phi <= bound, "t = {}: {phi} > {bound}", traj.times[k]);
        }
    }

    #[test]
    fn gap_stays_nonnegative_along_the_flow() {
        let quad = Problem::quadratic(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_row_slice(&[1.0]),
        )
        .unwrap();
        let s = EpsilonSchedule::power(1.0, 0.01).unwrap();
        let traj = integrate(
            &quad,
            &s,
            &PrimalDualPoint::zeros(1, 1),
            &IntegratorConfig::adaptive(50.0, 120),
        )
        .unwrap();
        let z_bar = quad.least_norm_saddle().unwrap().point;
        for z in &traj.states {
            let left = quad
                .lagrangian(&PrimalDualPoint { x: z.x.clone(), lambda: z_bar.lambda.clone() })
                .unwrap();
            let right = quad
                .lagrangian(&PrimalDualPoint { x: z_bar.x.clone(), lambda: z.lambda.clone() })
                .unwrap();
            assert!(left - right >= -1e-9);
        }
    }

    #[test]
    fn rk4_tracks_the_adaptive_reference() {
        let p = bilinear();
        let s = EpsilonSchedule::power(1.0, 1.0).unwrap();
        let z0 = PrimalDualPoint::zeros(1, 1);
        let reference = integrate(
            &p,
            &s,
            &z0,
            &IntegratorConfig {
                method: Method::Rk45Adaptive { rel_tol: 1e-12, abs_tol: 1e-14 },
                t_end: 10.0,
                samples: 2,
            },
        )
        .unwrap();
        let coarse = integrate(&p, &s, &z0, &IntegratorConfig::rk4(0.1, 10.0, 2)).unwrap();
        let err = coarse.final_state().distance_to(reference.final_state());
        assert!(err < 1e-5, "rk4 endpoint error {err}");
    }

    #[test]
    fn config_validation() {
        let t0 = 0.01;
        assert!(IntegratorConfig::adaptive(100.0, 400).validate(t0).is_ok());
        assert!(IntegratorConfig::adaptive(0.001, 400).validate(t0).is_err());
        assert!(IntegratorConfig::adaptive(100.0, 1).validate(t0).is_err());
        assert!(IntegratorConfig::rk4(0.0, 100.0, 10).validate(t0).is_err());
        assert!(IntegratorConfig {
            method: Method::Rk45Adaptive { rel_tol: 0.5, abs_tol: 1e-10 },
            t_end: 100.0,
            samples: 10,
        }
        .validate(t0)
        .is_err());
    }

    #[test]
    fn csv_has_expected_header_and_rows() {
        let p = bilinear();
        let s = EpsilonSchedule::power(1.0, 0.5).unwrap();
        let traj = integrate(
            &p,
            &s,
            &PrimalDualPoint::zeros(1, 1),
            &IntegratorConfig::adaptive(5.0, 4),
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x_0,lambda_0,xdot_0,lambdadot_0");
        assert_eq!(lines.count(), 4);
    }
}
