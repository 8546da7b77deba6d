use proptest::prelude::*;
use varpro_newton::diffcalc::{hessian, Infallible};
use varpro_newton::numkit::Vector;
use varpro_newton::optimizer::{minimize, newton_step, OptimizeError, OptimizerSettings};

fn rosenbrock(x: &[f64]) -> f64 {
    (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
}

#[test]
fn rosenbrock_from_classic_start() {
    // The fallback crawls along the valley; convergence takes 375 iterations.
    let f = Infallible(rosenbrock);
    let settings = OptimizerSettings { ns: 1000, ..OptimizerSettings::default() };
    let r = minimize(&f, &Vector::new(vec![-1.2, 1.0]).unwrap(), &settings).unwrap();
    assert!((r.x_min[0] - 1.0).abs() < 1e-3, "{:?}", r.x_min);
    assert!((r.x_min[1] - 1.0).abs() < 1e-3, "{:?}", r.x_min);
    assert_eq!(r.iterations_used, 375);
    assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn rosenbrock_default_budget_matches_reference_transcription() {
    // Endpoint of an independent line-by-line transcription of the loop
    // (numpy, 1-norms, same finite differences) after 20 iterations.
    let f = Infallible(rosenbrock);
    let e = minimize(&f, &Vector::new(vec![-1.2, 1.0]).unwrap(), &OptimizerSettings::default())
        .unwrap_err();
    let OptimizeError::NoConvergence(fail) = e else { panic!("{e:?}") };
    assert_eq!(fail.iteration, 20);
    assert!((fail.x[0] + 1.1495737375628234).abs() < 1e-9, "{:?}", fail.x);
    assert!((fail.x[1] - 1.335109313107982).abs() < 1e-9, "{:?}", fail.x);
    assert!((fail.value - 4.639134799408998).abs() < 1e-9);
}

#[test]
fn returned_hessian_matches_recomputation() {
    let f = Infallible(rosenbrock);
    let settings = OptimizerSettings { ns: 200, ..OptimizerSettings::default() };
    let r = minimize(&f, &Vector::new(vec![0.5, 0.5]).unwrap(), &settings).unwrap();
    let h = hessian(&f, &r.x_min, settings.fd_step).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            assert!((h[(i, j)] - r.hessian_at_min[(i, j)]).abs() <= 1e-12);
        }
    }
}

fn convex_quadratic() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (1usize..=3).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, n), n),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        )
            .prop_map(move |(b, center, start)| {
                let q = (0..n)
                    .map(|r| {
                        (0..n)
                            .map(|c| {
                                (0..n).map(|k| b[k][r] * b[k][c]).sum::<f64>()
                                    + if r == c { 1.0 } else { 0.0 }
                            })
                            .collect()
                    })
                    .collect();
                (q, center, start)
            })
    })
}

fn quad_value(q: &[Vec<f64>], center: &[f64], x: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    let mut v = 0.0;
    for r in 0..d.len() {
        for c in 0..d.len() {
            v += 0.5 * q[r][c] * d[r] * d[c];
        }
    }
    v
}

proptest! {
    #[test]
    fn first_newton_step_lands_on_quadratic_minimum(
        (q, center, offset) in convex_quadratic(),
    ) {
        // Close to the minimum the objective is tiny, so the round-off in
        // the finite-difference Hessian is negligible.
        let start: Vec<f64> = center.iter().zip(&offset).map(|(c, o)| c + 1e-3 * o).collect();
        let f = Infallible(|x: &[f64]| quad_value(&q, &center, x));
        let x0 = Vector::new(start.clone()).unwrap();
        let g = varpro_newton::diffcalc::gradient(&f, &x0, 1e-4).unwrap();
        let h = hessian(&f, &x0, 1e-4).unwrap();
        let step = newton_step(&g, &h).unwrap();
        for i in 0..start.len() {
            prop_assert!((start[i] - step[i] - center[i]).abs() <= 1e-8);
        }
    }

    #[test]
    fn newton_step_error_is_hessian_round_off((q, center, start) in convex_quadratic()) {
        // Far from the minimum the Hessian entries carry about
        // eps·|f|/h² of round-off, and the step inherits it.
        let f = Infallible(|x: &[f64]| quad_value(&q, &center, x));
        let x0 = Vector::new(start.clone()).unwrap();
        let g = varpro_newton::diffcalc::gradient(&f, &x0, 1e-4).unwrap();
        let h = hessian(&f, &x0, 1e-4).unwrap();
        let step = newton_step(&g, &h).unwrap();
        let dist: f64 = start.iter().zip(&center).map(|(s, c)| (s - c).abs()).sum();
        let bound = 1e-8 + 1e-7 * dist * (1.0 + quad_value(&q, &center, &start));
        for i in 0..start.len() {
            prop_assert!((start[i] - step[i] - center[i]).abs() <= bound);
        }
        let r = minimize(&f, &x0, &OptimizerSettings::default()).unwrap();
        for i in 0..start.len() {
            prop_assert!((r.x_min[i] - center[i]).abs() <= 1e-6);
        }
    }

    #[test]
    fn accepted_objective_never_increases(x0 in -3.0f64..3.0, y0 in -3.0f64..3.0) {
        // Non-convex surface that forces steepest-descent fallbacks.
        let f = Infallible(|x: &[f64]| (x[0] * x[0] - 1.0).powi(2) + (x[1] - x[0].sin()).powi(2) + 0.1 * x[0]);
        let settings = OptimizerSettings { ns: 200, ..OptimizerSettings::default() };
        if let Ok(r) = minimize(&f, &Vector::new(vec![x0, y0]).unwrap(), &settings) {
            prop_assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0]), "{:?}", r.objective_trace);
            prop_assert_eq!(r.objective_trace.len(), r.iterations_used + 1);
            prop_assert!(r.value <= r.objective_trace[0]);
        }
    }
}
