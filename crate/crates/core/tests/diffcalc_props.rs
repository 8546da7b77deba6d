use proptest::prelude::*;
use varpro_newton::diffcalc::{gradient, hessian, partial, Fallible, Infallible, ScalarField, DEFAULT_STEP};
use varpro_newton::numkit::Vector;

#[derive(Debug, Clone)]
struct Quadratic {
    q: Vec<Vec<f64>>,
    c: Vec<f64>,
    d: f64,
}

impl Quadratic {
    fn value(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut v = self.d;
        for r in 0..n {
            v += self.c[r] * x[r];
            for k in 0..n {
                v += 0.5 * self.q[r][k] * x[r] * x[k];
            }
        }
        v
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|r| self.c[r] + (0..x.len()).map(|k| self.q[r][k] * x[k]).sum::<f64>())
            .collect()
    }
}

fn quadratic_at() -> impl Strategy<Value = (Quadratic, Vec<f64>)> {
    (1usize..=4).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, n), n),
            prop::collection::vec(-5.0f64..5.0, n),
            -5.0f64..5.0,
            prop::collection::vec(-10.0f64..10.0, n),
        )
            .prop_map(move |(raw, c, d, x)| {
                let q = (0..n)
                    .map(|r| (0..n).map(|k| 0.5 * (raw[r][k] + raw[k][r])).collect())
                    .collect();
                (Quadratic { q, c, d }, x)
            })
    })
}

proptest! {
    #[test]
    fn gradient_exact_on_quadratics((f, x) in quadratic_at()) {
        let field = Infallible(|v: &[f64]| f.value(v));
        let g = gradient(&field, &Vector::new(x.clone()).unwrap(), DEFAULT_STEP).unwrap();
        for (got, want) in g.iter().zip(f.grad(&x)) {
            prop_assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn hessian_exact_and_symmetric_on_quadratics((f, x) in quadratic_at()) {
        let field = Infallible(|v: &[f64]| f.value(v));
        let h = hessian(&field, &Vector::new(x.clone()).unwrap(), DEFAULT_STEP).unwrap();
        for r in 0..x.len() {
            for c in 0..x.len() {
                prop_assert!((h[(r, c)] - f.q[r][c]).abs() <= 1e-4);
                prop_assert!((h[(r, c)] - h[(c, r)]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn hessian_nearly_symmetric_on_smooth_functions(x in prop::collection::vec(-1.0f64..1.0, 3)) {
        let field = Infallible(|v: &[f64]| (v[0] * v[1]).sin() + (v[1] - v[2]).exp() + v[0].powi(3) * v[2]);
        let h = hessian(&field, &Vector::new(x).unwrap(), DEFAULT_STEP).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                prop_assert!((h[(r, c)] - h[(c, r)]).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn input_is_not_mutated(x in prop::collection::vec(-3.0f64..3.0, 1..5)) {
        let v = Vector::new(x.clone()).unwrap();
        let field = Infallible(|p: &[f64]| p.iter().map(|t| t.sin()).sum());
        gradient(&field, &v, DEFAULT_STEP).unwrap();
        hessian(&field, &v, DEFAULT_STEP).unwrap();
        prop_assert_eq!(v.as_slice(), &x[..]);
    }

    #[test]
    fn central_difference_converges_quadratically(x in -2.0f64..2.0) {
        let field = Infallible(|v: &[f64]| v[0].exp());
        let p = Vector::new(vec![x]).unwrap();
        let err = |h: f64| (gradient(&field, &p, h).unwrap()[0] - x.exp()).abs();
        let factor = err(1e-2) / err(5e-3);
        prop_assert!((3.5..=4.5).contains(&factor), "factor {factor}");
    }
}

#[test]
fn partial_matches_gradient_component() {
    let field = Infallible(|v: &[f64]| v[0] * v[1].powi(2));
    let x = [2.0, 3.0];
    let g = gradient(&field, &Vector::new(x.to_vec()).unwrap(), DEFAULT_STEP).unwrap();
    let p1 = partial(&field, 1, DEFAULT_STEP).eval(&x).unwrap();
    assert_eq!(p1, g[1]);
    assert!((p1 - 12.0).abs() < 1e-6);
}

#[test]
fn evaluation_errors_propagate() {
    let field = Fallible(|v: &[f64]| if v[0] > 0.5 { Err("boom") } else { Ok(v[0]) });
    assert!(gradient(&field, &Vector::new(vec![0.5]).unwrap(), DEFAULT_STEP).is_err());
    assert!(gradient(&field, &Vector::new(vec![0.0]).unwrap(), DEFAULT_STEP).is_ok());
}
