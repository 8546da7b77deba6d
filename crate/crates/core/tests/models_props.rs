use proptest::prelude::*;
use varpro_newton::models::grammar::{BinOp, Func, MAX_B};
use varpro_newton::models::{example1, exp_sum, parse_model, parse_term, Expr, ModelBasis, ModelError};

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0.0f64..100.0).prop_map(Expr::Num),
        Just(Expr::X),
        (0usize..4).prop_map(Expr::B),
    ];
    leaf.prop_recursive(5, 32, 2, |inner| {
        let func = prop_oneof![Just(Func::Exp), Just(Func::Log), Just(Func::Sin), Just(Func::Cos)];
        let op = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Pow),
        ];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (func, inner.clone()).prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
            (op, inner.clone(), inner).prop_map(|(o, l, r)| Expr::Bin(o, Box::new(l), Box::new(r))),
        ]
    })
}

/// Direct tree-walking interpreter, independent of the compiled program.
fn interpret(e: &Expr, b: &[f64], x: f64) -> Option<f64> {
    Some(match e {
        Expr::Num(v) => *v,
        Expr::X => x,
        Expr::B(i) => b[*i],
        Expr::Neg(e) => -interpret(e, b, x)?,
        Expr::Call(f, e) => {
            let v = interpret(e, b, x)?;
            match f {
                Func::Exp => v.exp(),
                Func::Log if v <= 0.0 => return None,
                Func::Log => v.ln(),
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
            }
        }
        Expr::Bin(op, l, r) => {
            let (l, r) = (interpret(l, b, x)?, interpret(r, b, x)?);
            match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Div if r == 0.0 => return None,
                BinOp::Div => l / r,
                BinOp::Pow => l.powf(r),
            }
        }
    })
}

fn evaluate(e: &Expr, b: &[f64], x: f64) -> Option<f64> {
    interpret(e, b, x).filter(|v| v.is_finite())
}

proptest! {
    #[test]
    fn parsed_term_matches_tree_interpreter(
        e in arb_expr(),
        b in prop::collection::vec(-3.0f64..3.0, 4),
        x in -5.0f64..5.0,
    ) {
        let src = e.to_string();
        let term = parse_term(&src).unwrap();
        let got = term.eval(&b, x).ok();
        let want = evaluate(&e, &b, x);
        match (got, want) {
            (Some(g), Some(w)) => prop_assert!(
                g == w || (g - w).abs() <= 1e-15 * w.abs(),
                "{src}: {g} vs {w}"
            ),
            (None, None) => {}
            other => prop_assert!(false, "{src}: {other:?}"),
        }
    }

    #[test]
    fn n_b_is_one_past_highest_index(indices in prop::collection::vec(0usize..MAX_B, 1..5)) {
        let src = indices.iter().map(|i| format!("exp(b{i}*x)")).collect::<Vec<_>>().join("; ");
        let m = parse_model(&src).unwrap();
        prop_assert_eq!(m.n_b(), indices.iter().max().unwrap() + 1);
        prop_assert_eq!(m.n_a(), indices.len());
    }

    #[test]
    fn exp_sum_has_grammar_twin(
        k in 1usize..5,
        b in prop::collection::vec(-2.0f64..2.0, 4),
        x in -5.0f64..5.0,
    ) {
        let src = (0..k).map(|j| format!("exp(b{j}*x)")).collect::<Vec<_>>().join("; ");
        assert_pointwise_equal(&exp_sum(k), &parse_model(&src).unwrap(), &b, x)?;
    }

    #[test]
    fn example1_has_grammar_twin(b0 in 0.5f64..20.0, x in 0.0f64..10.0) {
        let parsed = parse_model("x; x^2; 1/(x+b0)").unwrap();
        assert_pointwise_equal(&example1(), &parsed, &[b0], x)?;
    }
}

fn assert_pointwise_equal(a: &ModelBasis, b: &ModelBasis, params: &[f64], x: f64) -> Result<(), TestCaseError> {
    prop_assert_eq!(a.n_a(), b.n_a());
    prop_assert_eq!(a.n_b(), b.n_b());
    for j in 0..a.n_a() {
        let (u, v) = (a.eval_term(j, params, x).unwrap(), b.eval_term(j, params, x).unwrap());
        prop_assert!((u - v).abs() <= 1e-12, "term {}: {} vs {}", j, u, v);
    }
    Ok(())
}

#[test]
fn b10_is_an_arity_error() {
    assert!(matches!(parse_model("exp(b10*x)"), Err(ModelError::Arity { .. })));
}

#[test]
fn parse_error_reports_position() {
    match ModelBasis::resolve("x; 2*(x") {
        Err(ModelError::Parse(e)) => assert_eq!(e.position, 7),
        other => panic!("{other:?}"),
    }
}

#[test]
fn pole_is_reported_not_nan() {
    let m = parse_model("1/(x-b0)").unwrap();
    assert!(m.eval_term(0, &[2.0], 2.0).is_err());
    let m = parse_model("log(x)").unwrap();
    assert!(m.eval_term(0, &[], -1.0).is_err());
}
