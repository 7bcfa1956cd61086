//! Scratch probe for pinning acceptance expectations. Not part of the API.

use aht::dynamics::{integrate, IntegratorConfig, Method};
use aht::metrics::{
    ewma_velocity, fit_rate, series_distance_sq, series_gap, series_operator_residual_sq,
    series_shifted_velocity_sq, series_velocity_sq, MetricSeries,
};
use aht::problem::{PrimalDualPoint, Problem};
use aht::schedule::EpsilonSchedule;
use aht::viscosity::viscosity_curve;
use nalgebra::{DMatrix, DVector};

fn main() {
    let p = Problem::bilinear_saddle_example();
    let quad = Problem::quadratic(
        DMatrix::identity(1, 1),
        DVector::zeros(1),
        DMatrix::from_row_slice(1, 1, &[1.0]),
        DVector::from_row_slice(&[1.0]),
    )
    .unwrap();

    // --- Criterion 1: fig1 run.
    let s = EpsilonSchedule::power(1.0, 0.01).unwrap();
    let t_start = std::time::Instant::now();
    let traj = integrate(&p, &s, &PrimalDualPoint::zeros(1, 1), &IntegratorConfig::adaptive(100.0, 400)).unwrap();
    let anchor = p.least_norm_saddle().unwrap().point;
    let end = traj.final_state();
    println!("fig1 runtime: {:?}", t_start.elapsed());
    println!("fig1 final distance: {:.6e}", end.distance_to(&anchor));
    let vel = series_velocity_sq(&traj);
    let dist = series_distance_sq(&p, &traj, &anchor).unwrap();
    let rv = fit_rate(&vel, &s, 0.5, None).unwrap();
    let rd = fit_rate(&dist, &s, 0.5, None).unwrap();
    println!("fig1 velocity_sq slope: {:.4}, C: {:.4e}", rv.fitted_exponent, rv.envelope_constant);
    println!("fig1 distance_sq slope: {:.4}, C: {:.4e}", rd.fitted_exponent, rd.envelope_constant);
    let curve = viscosity_curve(&p, &s, &traj.times).unwrap();
    let cv = MetricSeries {
        name: "curve_velocity_sq".into(),
        times: curve.times.clone(),
        values: curve.velocity_sq(),
        anchor: None,
    };
    let rc = fit_rate(&cv, &s, 0.5, None).unwrap();
    println!("fig1 curve velocity_sq slope: {:.4}", rc.fitted_exponent);

    // --- Criterion 2: fig2 sweep distances.
    for &horizon in &[100.0, 1e4] {
        for &pp in &[0.25, 0.5, 0.75] {
            let s = EpsilonSchedule::power(pp, 0.01).unwrap();
            let traj = integrate(&p, &s, &PrimalDualPoint::zeros(1, 1), &IntegratorConfig::adaptive(horizon, 400)).unwrap();
            let d = traj.final_state().distance_to(&anchor);
            println!(
                "fig2 p={pp} horizon={horizon}: dist={:.6e} dist_sq={:.6e}",
                d,
                d * d
            );
        }
    }

    // --- Criterion 3: envelope constants, both problems, p sweep.
    for (label, prob) in [("bilinear", &p), ("quadratic", &quad)] {
        let anchor = prob.least_norm_saddle().unwrap().point;
        for &pp in &[0.25, 0.5, 0.75, 1.0] {
            let s = EpsilonSchedule::power(pp, 0.01).unwrap();
            let t_plus = s.certify(100.0).unwrap().t_plus.unwrap();
            for &horizon in &[100.0, 200.0] {
                let traj = integrate(prob, &s, &PrimalDualPoint::zeros(1, 1), &IntegratorConfig::adaptive(horizon, 400)).unwrap();
                let shifted = series_shifted_velocity_sq(prob, &traj, &s, &anchor).unwrap();
                let gap = series_gap(prob, &traj, &anchor).unwrap();
                let opres = series_operator_residual_sq(prob, &traj, &anchor).unwrap();
                let vel = series_velocity_sq(&traj);
                let mut cs = Vec::new();
                for (name, series, scale_by_eps) in [
                    ("shifted", &shifted, false),
                    ("eps_gap", &gap, true),
                    ("op_res", &opres, false),
                    ("vel", &vel, false),
                ] {
                    let mut c = 0.0f64;
                    for (k, &t) in traj.times.iter().enumerate() {
                        if t < t_plus {
                            continue;
                        }
                        let mut v = series.values[k];
                        if scale_by_eps {
                            v *= s.eps(t).unwrap();
                        }
                        let env = (-2.0 * s.rho(t).unwrap()).exp() + s.eps(t).unwrap().powi(2);
                        c = c.max(v / env);
                    }
                    cs.push(format!("{name}: {c:.4e}"));
                }
                println!("env {label} p={pp} H={horizon}: {}", cs.join(", "));
            }
        }
    }

    // --- Criterion 7: EWMA boundedness for fig1.
    let s = EpsilonSchedule::power(1.0, 0.01).unwrap();
    let traj = integrate(&p, &s, &PrimalDualPoint::zeros(1, 1), &IntegratorConfig::adaptive(100.0, 400)).unwrap();
    let ew = ewma_velocity(&traj, &s, 0.01).unwrap();
    let max = ew.values.iter().cloned().fold(0.0f64, f64::max);
    println!("ewma final: {:.6e}, running max: {:.6e}, ratio {:.4}", ew.values.last().unwrap(), max, ew.values.last().unwrap() / max);

    // --- Criterion 8: RK4 order vs adaptive reference.
    let s = EpsilonSchedule::power(1.0, 1.0).unwrap();
    let z0 = PrimalDualPoint::zeros(1, 1);
    let reference = integrate(&p, &s, &z0, &IntegratorConfig {
        method: Method::Rk45Adaptive { rel_tol: 1e-12, abs_tol: 1e-14 },
        t_end: 10.0,
        samples: 2,
    }).unwrap();
    let refz = reference.final_state();
    let mut prev_err = None;
    for k in 0..5 {
        let step = 0.45 / (1 << k) as f64;
        let traj = integrate(&p, &s, &z0, &IntegratorConfig::rk4(step, 10.0, 2)).unwrap();
        let err = traj.final_state().distance_to(refz);
        let ratio = prev_err.map(|e: f64| e / err).unwrap_or(f64::NAN);
        println!("rk4 step={step:.5}: err={err:.6e} ratio={ratio:.2}");
        prev_err = Some(err);
    }

    // --- Criterion 9: least-norm selection in R^2.
    let p2 = Problem::quadratic(
        DMatrix::zeros(2, 2),
        DVector::zeros(2),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DVector::from_row_slice(&[1.0]),
    )
    .unwrap();
    let s = EpsilonSchedule::power(1.0, 0.01).unwrap();
    let z0 = PrimalDualPoint::new(DVector::from_row_slice(&[0.0, 2.0]), DVector::zeros(1)).unwrap();
    let traj = integrate(&p2, &s, &z0, &IntegratorConfig::adaptive(1e4, 400)).unwrap();
    let lns = p2.least_norm_saddle().unwrap().point;
    println!(
        "least-norm selection: final=({:.6}, {:.6}; {:.6}), dist to proj = {:.3e}",
        traj.final_state().x[0],
        traj.final_state().x[1],
        traj.final_state().lambda[0],
        traj.final_state().distance_to(&lns)
    );

    // --- Curve inequality fraction on the quadratic problem, 400 samples.
    let s = EpsilonSchedule::power(1.0, 0.01).unwrap();
    let curve = viscosity_curve(&quad, &s, &aht::schedule::log_grid(0.01, 100.0, 400)).unwrap();
    let rep = aht::viscosity::check_curve_differential_inequality(&curve, &s).unwrap();
    println!("quad curve inequality fraction (400 samples): {:.4}, worst slack {:.3e}", rep.fraction, rep.worst_slack);
    // And on the bilinear problem (tight equality case) at 400 samples.
    let curve = viscosity_curve(&p, &s, &aht::schedule::log_grid(0.01, 100.0, 400)).unwrap();
    let rep = aht::viscosity::check_curve_differential_inequality(&curve, &s).unwrap();
    println!("bilinear curve inequality fraction (400 samples): {:.4}, worst slack {:.3e}", rep.fraction, rep.worst_slack);
}
