//! End-to-end acceptance suite. Each test covers one numbered criterion and
//! prints a `PASS criterion N` line (run with `-- --nocapture` to see them).

use aht::dynamics::{integrate, IntegratorConfig, Method};
use aht::metrics::{
    envelope, ewma_velocity, fit_rate, series_distance_sq, series_gap,
    series_operator_residual_sq, series_shifted_velocity_sq, series_velocity_sq, MetricSeries,
};
use aht::problem::{PrimalDualPoint, Problem};
use aht::schedule::{log_grid, EpsilonSchedule, TriState};
use aht::viscosity::viscosity_curve;
use nalgebra::{DMatrix, DVector};

fn bilinear() -> Problem {
    Problem::bilinear_saddle_example()
}

/// f(x) = ½x², single constraint x = 1; saddle point (1, -1), so the gap is
/// nondegenerate: L(x, λ̄) - L(x̄, λ) = ½(x-1)².
fn quadratic_problem() -> Problem {
    Problem::quadratic(
        DMatrix::identity(1, 1),
        DVector::zeros(1),
        DMatrix::from_row_slice(1, 1, &[1.0]),
        DVector::from_row_slice(&[1.0]),
    )
    .unwrap()
}

fn run(problem: &Problem, p: f64, t0: f64, horizon: f64, samples: usize) -> aht::dynamics::Trajectory {
    let s = EpsilonSchedule::power(p, t0).unwrap();
    integrate(
        problem,
        &s,
        &PrimalDualPoint::zeros(problem.primal_dim(), problem.dual_dim()),
        &IntegratorConfig::adaptive(horizon, samples),
    )
    .unwrap()
}

#[test]
fn criterion_1_fig1_reproduction() {
    let p = bilinear();
    let s = EpsilonSchedule::power(1.0, 0.01).unwrap();
    let started = std::time::Instant::now();
    let traj = run(&p, 1.0, 0.01, 100.0, 400);
    let curve = viscosity_curve(&p, &s, &traj.times).unwrap();
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "runtime {elapsed:?} exceeds 10 s");

    let anchor = p.least_norm_saddle().unwrap().point;
    let final_dist = traj.final_state().distance_to(&anchor);
    assert!(final_dist <= 5e-2, "(a) final distance {final_dist:.3e}");

    let vel = fit_rate(&series_velocity_sq(&traj), &s, 0.5, Some((-2.0, 0.3))).unwrap();
    assert!(
        (-2.3..=-1.7).contains(&vel.fitted_exponent),
        "(b) velocity_sq exponent {:.3}",
        vel.fitted_exponent
    );

    let dist = fit_rate(
        &series_distance_sq(&p, &traj, &anchor).unwrap(),
        &s,
        0.5,
        Some((-2.0, 0.3)),
    )
    .unwrap();
    assert!(
        (-2.3..=-1.7).contains(&dist.fitted_exponent),
        "(c) distance_sq exponent {:.3}",
        dist.fitted_exponent
    );

    let curve_vel = MetricSeries {
        name: "curve_velocity_sq".into(),
        times: curve.times.clone(),
        values: curve.velocity_sq(),
        anchor: None,
    };
    let cv = fit_rate(&curve_vel, &s, 0.5, Some((-4.0, 0.4))).unwrap();
    assert!(
        (-4.4..=-3.6).contains(&cv.fitted_exponent),
        "(d) curve velocity_sq exponent {:.3}",
        cv.fitted_exponent
    );

    println!(
        "PASS criterion 1: final distance {final_dist:.2e}; exponents velocity {:.2}, distance {:.2}, curve velocity {:.2}; runtime {elapsed:?}",
        vel.fitted_exponent, dist.fitted_exponent, cv.fitted_exponent
    );
}

#[test]
fn criterion_2_fig2_sweep() {
    let p = bilinear();
    let anchor = p.least_norm_saddle().unwrap().point;
    // Thresholds apply to the plotted quantity ‖z - z̄‖², whose closed-form
    // tail for this problem is ε²/(1+ε²): 0.091 at t = 100 for p = 1/4.
    let mut by_horizon = Vec::new();
    for &(horizon, limit) in &[(100.0, 0.15), (1e4, 0.02)] {
        let mut dists = Vec::new();
        for &pp in &[0.25, 0.5, 0.75] {
            let traj = run(&p, pp, 0.01, horizon, 400);
            let d_sq = traj.final_state().distance_to(&anchor).powi(2);
            assert!(
                d_sq <= limit,
                "p = {pp}, horizon = {horizon}: ‖z - z̄‖² = {d_sq:.3e} > {limit}"
            );
            dists.push(d_sq);
        }
        assert!(
            dists[0] > dists[1] && dists[1] > dists[2],
            "distance ordering does not degrade with decreasing p at horizon {horizon}: {dists:?}"
        );
        by_horizon.push(dists);
    }
    println!(
        "PASS criterion 2: squared distances at 100: {:?}, at 1e4: {:?}, ordering monotone in p",
        by_horizon[0], by_horizon[1]
    );
}

#[test]
fn criterion_3_envelope_property() {
    let problems = [bilinear(), quadratic_problem()];
    for problem in &problems {
        let anchor = problem.least_norm_saddle().unwrap().point;
        for &pp in &[0.25, 0.5, 0.75, 1.0] {
            let s = EpsilonSchedule::power(pp, 0.01).unwrap();
            let t_plus = s.certify(100.0).unwrap().t_plus.unwrap();
            let constant = |horizon: f64| -> Vec<f64> {
                let traj = run(problem, pp, 0.01, horizon, 400);
                let series = [
                    series_shifted_velocity_sq(problem, &traj, &s, &anchor).unwrap(),
                    series_gap(problem, &traj, &anchor).unwrap(),
                    series_operator_residual_sq(problem, &traj, &anchor).unwrap(),
                    series_velocity_sq(&traj),
                ];
                series
                    .iter()
                    .map(|m| {
                        let mut c = 0.0f64;
                        for (k, &t) in m.times.iter().enumerate() {
                            if t < t_plus {
                                continue;
                            }
                            let mut v = m.values[k];
                            if m.name == "gap" {
                                v *= s.eps(t).unwrap();
                            }
                            c = c.max(v / envelope(&s, t).unwrap());
                        }
                        c
                    })
                    .collect()
            };
            let c100 = constant(100.0);
            let c200 = constant(200.0);
            for (i, name) in ["shifted_velocity_sq", "eps*gap", "operator_residual_sq", "velocity_sq"]
                .iter()
                .enumerate()
            {
                assert!(
                    c100[i].is_finite() && c100[i] <= 1e3,
                    "{} p={pp} {name}: C(100) = {:.3e}",
                    problem.id(),
                    c100[i]
                );
                // Absolute floor 1e-12: the identically-zero gap on the
                // bilinear problem leaves only rounding noise to compare.
                assert!(
                    c200[i] <= 1.1 * c100[i] + 1e-12,
                    "{} p={pp} {name}: C(200) = {:.3e} vs C(100) = {:.3e}",
                    problem.id(),
                    c200[i],
                    c100[i]
                );
            }
        }
    }
    println!("PASS criterion 3: envelope constants finite (≤ 1e3) and stable under horizon doubling");
}

#[test]
fn criterion_4_viscosity_closed_form() {
    let p = bilinear();
    let s = EpsilonSchedule::power(1.0, 0.01).unwrap();
    let times = log_grid(0.01, 100.0, 200);
    let curve = viscosity_curve(&p, &s, &times).unwrap();
    let mut worst = 0.0f64;
    for (k, &t) in times.iter().enumerate() {
        let eps = 1.0 / t;
        let denom = 1.0 + eps * eps;
        worst = worst.max((curve.points[k].x[0] - 1.0 / denom).abs());
        worst = worst.max((curve.points[k].lambda[0] + eps / denom).abs());
    }
    assert!(worst <= 1e-8, "worst closed-form deviation {worst:.3e}");
    println!("PASS criterion 4: 200 curve points match the closed form (worst deviation {worst:.2e})");
}

#[test]
fn criterion_5_exact_inequality_suites() {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    // Gap nonnegativity at every sample, on the problem with a nonzero gap.
    let quad = quadratic_problem();
    let anchor_q = quad.least_norm_saddle().unwrap().point;
    let traj_q = run(&quad, 1.0, 0.01, 100.0, 400);
    let gap = series_gap(&quad, &traj_q, &anchor_q).unwrap();
    assert!(gap.values.iter().all(|&v| v >= -1e-9), "gap dipped below -1e-9");

    // Monotonicity of the saddle operator on random pairs.
    let bil = bilinear();
    let mut rng = StdRng::seed_from_u64(7);
    for problem in [&bil, &quad] {
        for _ in 0..1000 {
            let dims = (problem.primal_dim(), problem.dual_dim());
            let mut sample = |d: usize| {
                DVector::from_iterator(d, (0..d).map(|_| rng.random_range(-5.0..5.0)))
            };
            let z = PrimalDualPoint::new(sample(dims.0), sample(dims.1)).unwrap();
            let w = PrimalDualPoint::new(sample(dims.0), sample(dims.1)).unwrap();
            let tz = problem.saddle_operator(&z).unwrap();
            let tw = problem.saddle_operator(&w).unwrap();
            let inner = (tz - tw).dot(&(z.stacked() - w.stacked()));
            assert!(inner >= -1e-10, "monotonicity violated: {inner:.3e}");
        }
    }

    // Along the flow: ‖T(z(t)) - T(z_t)‖² ≤ ‖z'(t)‖² pointwise.
    let s = EpsilonSchedule::power(1.0, 0.01).unwrap();
    let traj = run(&bil, 1.0, 0.01, 100.0, 400);
    let curve = viscosity_curve(&bil, &s, &traj.times).unwrap();
    let anchor = bil.least_norm_saddle().unwrap().point;
    let proj_norm = anchor.norm();
    for k in 0..traj.len() {
        let op_gap = (bil.saddle_operator(&traj.states[k]).unwrap()
            - bil.saddle_operator(&curve.points[k]).unwrap())
        .norm_squared();
        let speed_sq = traj.velocities[k].norm_squared();
        assert!(
            op_gap <= speed_sq + 1e-10,
            "operator gap {op_gap:.3e} exceeds squared speed {speed_sq:.3e} at t = {}",
            traj.times[k]
        );
        // Curve never leaves the least-norm ball.
        assert!(curve.points[k].norm() <= proj_norm + 1e-8);
        // Reverse Lipschitz constant α = 1 transfers the operator residual
        // to the distance pointwise.
        let dist_sq = traj.states[k].distance_to(&anchor).powi(2);
        let op_res = (bil.saddle_operator(&traj.states[k]).unwrap()
            - bil.saddle_operator(&anchor).unwrap())
        .norm_squared();
        assert!(dist_sq <= op_res / 1.0 + 1e-9);
    }
    println!("PASS criterion 5: pointwise inequality suites hold at every sample");
}

#[test]
fn criterion_6_schedule_certification() {
    // p = 1: identically-zero σ and t₊ = t0.
    let s = EpsilonSchedule::power(1.0, 0.01).unwrap();
    let cert = s.certify(100.0).unwrap();
    assert_eq!(cert.t_plus, Some(0.01));
    assert!(cert.sigma_identically_zero);
    for &t in log_grid(0.01, 100.0, 64).iter() {
        assert_eq!(s.sigma(t).unwrap(), 0.0);
        assert_eq!(s.sigma_dot(t).unwrap(), 0.0);
    }

    // p = 1/2, t0 = 0.01: analytic threshold ((p+1)/2)^(1/(1-p)) = 0.5625,
    // and the numeric sign scan agrees to one grid cell.
    let s = EpsilonSchedule::power(0.5, 0.01).unwrap();
    let cert = s.certify(100.0).unwrap();
    let analytic = cert.t_plus.unwrap();
    assert!((analytic - 0.5625).abs() < 1e-12);
    let scan_points = 10_000usize;
    let scanned = s.numeric_t_plus_scan(100.0, scan_points).unwrap().unwrap();
    let cell = (100.0f64 / 0.01).powf(1.0 / (scan_points as f64 - 1.0));
    assert!(
        scanned >= analytic / cell && scanned <= analytic * cell,
        "scan found {scanned}, analytic {analytic}, cell ratio {cell}"
    );

    // Integrable regularization is flagged as the negative control.
    let e = EpsilonSchedule::exponential(1.0, 0.01).unwrap();
    let cert = e.certify(100.0).unwrap();
    assert_eq!(cert.eps_not_l1, TriState::No);
    assert_eq!(cert.t_plus, None);
    println!("PASS criterion 6: certificates match analytic values (t_plus 0.01 / 0.5625 / none)");
}

#[test]
fn criterion_7_ewma_boundedness() {
    // Measured run: the weighted moving average stays bounded.
    let p = bilinear();
    let s = EpsilonSchedule::power(1.0, 0.01).unwrap();
    let traj = run(&p, 1.0, 0.01, 100.0, 400);
    let series = ewma_velocity(&traj, &s, 0.01).unwrap();
    let running_max = series.values.iter().cloned().fold(0.0f64, f64::max);
    let last = *series.values.last().unwrap();
    assert!(
        last <= 1.05 * running_max,
        "last value {last:.4e} vs running max {running_max:.4e}"
    );

    // Synthetic oracle: ‖z'‖² = 1/τ², ε = 1/τ, t0 = 1 integrates to (t-1)/t.
    let s = EpsilonSchedule::power(1.0, 1.0).unwrap();
    let times = log_grid(1.0, 100.0, 400);
    let traj = aht::dynamics::Trajectory {
        states: times.iter().map(|_| PrimalDualPoint::zeros(1, 0)).collect(),
        velocities: times.iter().map(|&t| DVector::from_row_slice(&[1.0 / t])).collect(),
        times: times.clone(),
        schedule_id: s.id(),
        problem_id: "synthetic".into(),
    };
    let series = ewma_velocity(&traj, &s, 1.0).unwrap();
    for (k, &t) in times.iter().enumerate() {
        assert!(
            (series.values[k] - (t - 1.0) / t).abs() <= 1e-6,
            "synthetic mismatch at t = {t}"
        );
    }
    println!("PASS criterion 7: weighted moving average bounded (last/max = {:.4}) and synthetic case exact", last / running_max);
}

#[test]
fn criterion_8_integrator_order() {
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
    let refz = reference.final_state();

    let mut errors = Vec::new();
    for k in 0..4 {
        let step = 0.45 / (1u32 << k) as f64;
        let traj = integrate(&p, &s, &z0, &IntegratorConfig::rk4(step, 10.0, 2)).unwrap();
        errors.push(traj.final_state().distance_to(refz));
    }
    let mut ratios = Vec::new();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!(
            (12.0..=20.0).contains(&ratio),
            "halving ratio {ratio:.2} outside [12, 20] (errors {errors:?})"
        );
        ratios.push(ratio);
    }
    println!("PASS criterion 8: halving ratios {ratios:?} within [12, 20]");
}

#[test]
fn criterion_9_least_norm_selection() {
    // Non-unique primal solutions: f ≡ 0, x_1 = 1, x_2 free. The flow must
    // select the projection of the origin, (1, 0; 0), even from an initial
    // point displaced along the free direction.
    let p = Problem::quadratic(
        DMatrix::zeros(2, 2),
        DVector::zeros(2),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DVector::from_row_slice(&[1.0]),
    )
    .unwrap();
    let sol = p.least_norm_saddle().unwrap();

    // Independent oracle: scan the solution line (1, s) for the least norm.
    let mut best = (f64::INFINITY, f64::NAN);
    let mut sv: f64 = -5.0;
    while sv <= 5.0 {
        let norm = (1.0 + sv * sv).sqrt();
        if norm < best.0 {
            best = (norm, sv);
        }
        sv += 1e-3;
    }
    assert!((sol.point.x[1] - best.1).abs() <= 1e-9);

    let s = EpsilonSchedule::power(1.0, 0.01).unwrap();
    let z0 = PrimalDualPoint::new(DVector::from_row_slice(&[0.0, 2.0]), DVector::zeros(1)).unwrap();
    let traj = integrate(&p, &s, &z0, &IntegratorConfig::adaptive(1e4, 400)).unwrap();
    let dist = traj.final_state().distance_to(&sol.point);
    assert!(dist <= 1e-2, "distance to the least-norm saddle: {dist:.3e}");
    println!("PASS criterion 9: converged to the least-norm saddle within {dist:.2e}");
}
