//! Central finite differences: partial derivatives, gradient and Hessian.
//!
//! Steps are absolute (`x ± h·eᵢ`), with `h = 1e-4` by default. The Hessian is
//! built by nesting two first-order central differences, so every entry
//! costs four evaluations of the underlying function.

use crate::numkit::{Matrix, NumError, Vector};

pub const DEFAULT_STEP: f64 = 1e-4;

/// A real-valued function of a real vector that may fail to evaluate.
///
/// Implementations must be deterministic and free of observable side
/// effects; the differencing schemes evaluate them many times.
pub trait ScalarField {
    type Error;

    fn eval(&self, x: &[f64]) -> Result<f64, Self::Error>;
}

/// Wraps a fallible closure as a [`ScalarField`].
pub struct Fallible<F>(pub F);

impl<E, F> ScalarField for Fallible<F>
where
    F: Fn(&[f64]) -> Result<f64, E>,
{
    type Error = E;

    fn eval(&self, x: &[f64]) -> Result<f64, E> {
        (self.0)(x)
    }
}

impl<S: ScalarField + ?Sized> ScalarField for &S {
    type Error = S::Error;

    fn eval(&self, x: &[f64]) -> Result<f64, S::Error> {
        (**self).eval(x)
    }
}

/// Wraps an infallible closure as a [`ScalarField`].
pub struct Infallible<F>(pub F);

impl<F: Fn(&[f64]) -> f64> ScalarField for Infallible<F> {
    type Error = std::convert::Infallible;

    fn eval(&self, x: &[f64]) -> Result<f64, Self::Error> {
        Ok((self.0)(x))
    }
}

/// The central-difference partial derivative of `f` along one coordinate.
#[derive(Debug, Clone, Copy)]
pub struct Partial<F> {
    f: F,
    index: usize,
    step: f64,
}

impl<F: ScalarField> ScalarField for Partial<F> {
    type Error = F::Error;

    fn eval(&self, x: &[f64]) -> Result<f64, F::Error> {
        let mut probe = x.to_vec();
        probe[self.index] = x[self.index] + self.step;
        let up = self.f.eval(&probe)?;
        probe[self.index] = x[self.index] - self.step;
        let down = self.f.eval(&probe)?;
        Ok((up - down) / 2.0 / self.step)
    }
}

/// Returns `x ↦ (f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h`.
///
/// Panics if `step` is not strictly positive. An out-of-range `index`
/// panics on evaluation.
pub fn partial<F: ScalarField>(f: F, index: usize, step: f64) -> Partial<F> {
    assert!(step > 0.0, "finite-difference step must be positive");
    Partial { f, index, step }
}

/// Failure of a finite-difference evaluation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffError<E> {
    #[error("function evaluation failed: {0}")]
    Eval(E),
    #[error("non-finite difference quotient in entry {0}")]
    NonFinite(usize),
}

pub fn gradient<F: ScalarField>(
    f: &F,
    x: &Vector,
    step: f64,
) -> Result<Vector, DiffError<F::Error>> {
    let g = (0..x.len())
        .map(|r| partial(f, r, step).eval(x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(DiffError::Eval)?;
    Vector::new(g).map_err(non_finite)
}

/// Entry `(r, c)` is the difference along `c` of the difference along `r`.
/// The result is not symmetrized.
pub fn hessian<F: ScalarField>(
    f: &F,
    x: &Vector,
    step: f64,
) -> Result<Matrix, DiffError<F::Error>> {
    let n = x.len();
    let mut data = Vec::with_capacity(n * n);
    for r in 0..n {
        let along_r = partial(f, r, step);
        for c in 0..n {
            data.push(partial(&along_r, c, step).eval(x).map_err(DiffError::Eval)?);
        }
    }
    Matrix::new(n, n, data).map_err(non_finite)
}

fn non_finite<E>(e: NumError) -> DiffError<E> {
    match e {
        NumError::NonFinite(i) => DiffError::NonFinite(i),
        other => unreachable!("derivative shape is fixed by the input: {other}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(d: &[f64]) -> Vector {
        Vector::new(d.to_vec()).unwrap()
    }

    #[test]
    fn partial_examples() {
        let sq = Infallible(|x: &[f64]| x[0] * x[0]);
        assert!((partial(&sq, 0, DEFAULT_STEP).eval(&[3.0]).unwrap() - 6.0).abs() < 1e-7);

        let c = Infallible(|_: &[f64]| 7.5);
        assert!(partial(&c, 1, DEFAULT_STEP).eval(&[1.0, -4.0]).unwrap().abs() < 1e-12);

        let bil = Infallible(|x: &[f64]| x[0] * x[1]);
        assert!((partial(&bil, 1, DEFAULT_STEP).eval(&[2.0, 5.0]).unwrap() - 2.0).abs() < 1e-7);
    }

    #[test]
    fn gradient_examples() {
        let f = Infallible(|x: &[f64]| x[0] * x[0] + x[1] * x[1]);
        let g = gradient(&f, &v(&[1.0, 2.0]), DEFAULT_STEP).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6 && (g[1] - 4.0).abs() < 1e-6);

        let bowl = Infallible(|x: &[f64]| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 3.0).powi(2));
        let g = gradient(&bowl, &v(&[1.0, -3.0]), DEFAULT_STEP).unwrap();
        assert!(g.one_norm() < 1e-6);

        let e = Infallible(|x: &[f64]| x[0].exp());
        let g = gradient(&e, &v(&[0.0]), DEFAULT_STEP).unwrap();
        // analytic derivative of exp at 0
        assert!((g[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hessian_examples() {
        let f = Infallible(|x: &[f64]| x[0] * x[0] + 3.0 * x[1] * x[1]);
        let h = hessian(&f, &v(&[0.7, -1.3]), DEFAULT_STEP).unwrap();
        let want = [[2.0, 0.0], [0.0, 6.0]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((h[(r, c)] - want[r][c]).abs() < 1e-4, "{h:?}");
            }
        }

        let f = Infallible(|x: &[f64]| x[0] * x[1]);
        let h = hessian(&f, &v(&[2.0, -1.0]), DEFAULT_STEP).unwrap();
        let want = [[0.0, 1.0], [1.0, 0.0]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((h[(r, c)] - want[r][c]).abs() < 1e-4, "{h:?}");
            }
        }

        let f = Infallible(|x: &[f64]| (x[0] + x[1]).exp());
        let h = hessian(&f, &v(&[0.0, 0.0]), DEFAULT_STEP).unwrap();
        assert!(h.as_slice().iter().all(|e| (e - 1.0).abs() < 1e-3), "{h:?}");
    }

    #[test]
    fn errors_propagate() {
        let f = Fallible(|x: &[f64]| if x[0] > 0.0 { Err("pole") } else { Ok(x[0]) });
        assert_eq!(gradient(&f, &v(&[0.0]), DEFAULT_STEP), Err(DiffError::Eval("pole")));
        assert_eq!(hessian(&f, &v(&[0.0]), DEFAULT_STEP).unwrap_err(), DiffError::Eval("pole"));
    }

    #[test]
    fn input_is_untouched() {
        let x = v(&[0.1, 0.2, 0.3]);
        let before = x.clone();
        let f = Infallible(|x: &[f64]| x.iter().map(|t| t.sin()).product());
        let _ = gradient(&f, &x, DEFAULT_STEP).unwrap();
        let _ = hessian(&f, &x, DEFAULT_STEP).unwrap();
        assert_eq!(x, before);
    }
}
