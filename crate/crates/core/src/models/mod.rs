//! Separable models `f(x, a, b) = Σⱼ aⱼ·fⱼ(x, b)`.
//!
//! A [`ModelBasis`] is the ordered list of the `fⱼ`. Bases come from the
//! built-in families or from the term grammar in [`grammar`].

pub mod grammar;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use grammar::{parse_model, parse_term, Expr, ParseError, Term};

/// Why a basis function could not produce a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvalFailure {
    #[error("division by zero")]
    Pole,
    #[error("argument outside the function domain")]
    Domain,
    #[error("non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("term {term} references b{index}; only b0..b9 are available")]
    Arity { term: usize, index: usize },
    #[error("unknown model '{0}'")]
    Unknown(String),
}

type BasisFn = dyn Fn(&[f64], f64) -> Result<f64, EvalFailure> + Send + Sync;

/// One basis function `fⱼ(x, b)`.
#[derive(Clone)]
pub struct BasisFunction {
    label: String,
    arity_b: usize,
    f: Arc<BasisFn>,
}

impl BasisFunction {
    /// `arity_b` is the number of leading components of `b` that `f` reads.
    pub fn new<F>(label: impl Into<String>, arity_b: usize, f: F) -> Self
    where
        F: Fn(&[f64], f64) -> Result<f64, EvalFailure> + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            arity_b,
            f: Arc::new(f),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn arity_b(&self) -> usize {
        self.arity_b
    }

    pub fn eval(&self, b: &[f64], x: f64) -> Result<f64, EvalFailure> {
        let v = (self.f)(b, x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalFailure::NonFinite)
        }
    }
}

impl fmt::Debug for BasisFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisFunction")
            .field("label", &self.label)
            .field("arity_b", &self.arity_b)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct ModelBasis {
    name: String,
    functions: Vec<BasisFunction>,
    n_b: usize,
}

impl ModelBasis {
    /// Panics on an empty function list.
    pub fn new(name: impl Into<String>, functions: Vec<BasisFunction>) -> Self {
        assert!(!functions.is_empty(), "a model needs at least one basis function");
        let n_b = functions.iter().map(|f| f.arity_b).max().unwrap_or(0);
        Self {
            name: name.into(),
            functions,
            n_b,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn functions(&self) -> &[BasisFunction] {
        &self.functions
    }

    /// Number of linear coefficients.
    pub fn n_a(&self) -> usize {
        self.functions.len()
    }

    /// Number of nonlinear parameters.
    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn eval_term(&self, j: usize, b: &[f64], x: f64) -> Result<f64, EvalFailure> {
        self.functions[j].eval(b, x)
    }

    /// `Σⱼ aⱼ·fⱼ(x, b)`, summed in term order.
    pub fn evaluate(&self, a: &[f64], b: &[f64], x: f64) -> Result<f64, EvalFailure> {
        assert_eq!(a.len(), self.n_a(), "one linear coefficient per basis function");
        let mut sum = 0.0;
        for (aj, f) in a.iter().zip(&self.functions) {
            sum += aj * f.eval(b, x)?;
        }
        if sum.is_finite() {
            Ok(sum)
        } else {
            Err(EvalFailure::NonFinite)
        }
    }

    /// Resolves `example1`, `expsum:<k>`, or a term-grammar string.
    pub fn resolve(spec: &str) -> Result<ModelBasis, ModelError> {
        let spec = spec.trim();
        if spec == "example1" {
            return Ok(example1());
        }
        if let Some(k) = spec.strip_prefix("expsum:") {
            return match k.trim().parse::<usize>() {
                Ok(k) if k >= 1 => Ok(exp_sum(k)),
                _ => Err(ModelError::Unknown(spec.to_string())),
            };
        }
        parse_model(spec)
    }
}

/// `{x ↦ exp(bⱼ·x)}` for `j < k`. Decaying data has negative `bⱼ`.
pub fn exp_sum(k: usize) -> ModelBasis {
    assert!(k >= 1, "an exponential sum needs at least one term");
    let functions = (0..k)
        .map(|j| BasisFunction::new(format!("exp(b{j}*x)"), j + 1, move |b, x| Ok((b[j] * x).exp())))
        .collect();
    ModelBasis::new(format!("expsum:{k}"), functions)
}

/// `{x, x², 1/(x + b₀)}`.
pub fn example1() -> ModelBasis {
    ModelBasis::new(
        "example1",
        vec![
            BasisFunction::new("x", 0, |_, x| Ok(x)),
            BasisFunction::new("x^2", 0, |_, x| Ok(x * x)),
            BasisFunction::new("1/(x+b0)", 1, |b, x| {
                let d = x + b[0];
                if d == 0.0 {
                    Err(EvalFailure::Pole)
                } else {
                    Ok(1.0 / d)
                }
            }),
        ],
    )
}
