//! Newton minimizer with a steepest-descent fallback.
//!
//! Each iteration proposes a full Newton step from finite-difference
//! derivatives. If the proposal does not lower the objective, the iterate is
//! reverted and normalized steepest-descent steps of halving length are
//! tried from the same point (with the same gradient) until one does. The
//! accepted objective values therefore never increase.

use serde::Serialize;
use thiserror::Error;

use crate::diffcalc::{self, DiffError, ScalarField};
use crate::numkit::{self, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct OptimizerSettings {
    /// Absolute precision target.
    pub ap: f64,
    /// Relative precision target.
    pub rp: f64,
    /// Maximum number of Newton iterations.
    pub ns: usize,
    /// Initial steepest-descent step length.
    pub h0: f64,
    /// Finite-difference step for gradient and Hessian.
    pub fd_step: f64,
    /// Maximum step halvings per iteration before giving up.
    pub max_backtracks: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            ap: 1e-6,
            rp: 1e-4,
            ns: 20,
            h0: 10.0,
            fd_step: diffcalc::DEFAULT_STEP,
            max_backtracks: 200,
        }
    }
}

impl OptimizerSettings {
    /// Defaults used when minimizing the reduced objective of a fit.
    pub fn for_fit() -> Self {
        Self {
            ns: 200,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("ap", self.ap),
            ("rp", self.rp),
            ("h0", self.h0),
            ("fd_step", self.fd_step),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {value}"));
            }
        }
        if self.ns < 1 {
            return Err("ns must be at least 1".into());
        }
        if self.max_backtracks < 1 {
            return Err("max_backtracks must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OptimumReport {
    pub x_min: Vector,
    pub value: f64,
    pub hessian_at_min: Matrix,
    pub iterations_used: usize,
    /// Iterations in which the Newton proposal was rejected.
    pub descent_reversions: usize,
    /// Objective at the start point followed by the value accepted at the
    /// end of every iteration.
    pub objective_trace: Vec<f64>,
}

/// Where the optimizer was when it gave up.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub x: Vec<f64>,
    pub iteration: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError<E> {
    #[error("unstable solution: Hessian norm below target precision at iteration {}", .0.iteration)]
    UnstableSolution(Failure),
    #[error("singular Hessian at iteration {}", .0.iteration)]
    SingularHessian(Failure),
    #[error("no convergence after {} iterations", .0.iteration)]
    NoConvergence(Failure),
    #[error("steepest descent stalled at iteration {}: no decrease after the maximum number of halvings", .0.iteration)]
    StalledDescent(Failure),
    #[error("objective is not finite at {x:?} (iteration {iteration})")]
    NonFiniteObjective { x: Vec<f64>, iteration: usize },
    #[error("objective evaluation failed at iteration {iteration}: {source}")]
    Evaluation {
        source: E,
        x: Vec<f64>,
        iteration: usize,
    },
    #[error("invalid optimizer settings: {0}")]
    InvalidSettings(String),
}

impl<E> OptimizeError<E> {
    /// Stable machine-readable name of the failure kind.
    pub fn kind(&self) -> &'static str {
        match self {
            OptimizeError::UnstableSolution(_) => "unstable_solution",
            OptimizeError::SingularHessian(_) => "singular_hessian",
            OptimizeError::NoConvergence(_) => "no_convergence",
            OptimizeError::StalledDescent(_) => "stalled_descent",
            OptimizeError::NonFiniteObjective { .. } => "non_finite_objective",
            OptimizeError::Evaluation { .. } => "evaluation_error",
            OptimizeError::InvalidSettings(_) => "invalid_settings",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("Hessian is singular")]
pub struct SingularHessian;

/// Solves `hess · d = grad`; the caller subtracts `d` from the iterate.
pub fn newton_step(grad: &Vector, hess: &Matrix) -> Result<Vector, SingularHessian> {
    numkit::solve(hess, grad).map_err(|_| SingularHessian)
}

struct Run<'a, F: ScalarField> {
    f: &'a F,
    iteration: usize,
}

impl<F: ScalarField> Run<'_, F> {
    fn value(&self, x: &Vector) -> Result<f64, OptimizeError<F::Error>> {
        let v = self.f.eval(x).map_err(|source| OptimizeError::Evaluation {
            source,
            x: x.to_vec(),
            iteration: self.iteration,
        })?;
        if !v.is_finite() {
            return Err(OptimizeError::NonFiniteObjective {
                x: x.to_vec(),
                iteration: self.iteration,
            });
        }
        Ok(v)
    }

    fn diff<T>(&self, x: &Vector, r: Result<T, DiffError<F::Error>>) -> Result<T, OptimizeError<F::Error>> {
        r.map_err(|e| match e {
            DiffError::Eval(source) => OptimizeError::Evaluation {
                source,
                x: x.to_vec(),
                iteration: self.iteration,
            },
            DiffError::NonFinite(_) => OptimizeError::NonFiniteObjective {
                x: x.to_vec(),
                iteration: self.iteration,
            },
        })
    }

    fn failure(&self, x: &Vector, value: f64) -> Failure {
        Failure {
            x: x.to_vec(),
            iteration: self.iteration,
            value,
        }
    }

    /// `x - s·d` as a vector, rejecting non-finite results.
    fn offset(&self, x: &Vector, d: &Vector, s: f64) -> Result<Vector, OptimizeError<F::Error>> {
        let moved: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a - s * b).collect();
        Vector::new(moved.clone()).map_err(|_| OptimizeError::NonFiniteObjective {
            x: moved,
            iteration: self.iteration,
        })
    }
}

pub fn minimize<F: ScalarField>(
    f: &F,
    x0: &Vector,
    settings: &OptimizerSettings,
) -> Result<OptimumReport, OptimizeError<F::Error>> {
    settings.validate().map_err(OptimizeError::InvalidSettings)?;
    let mut run = Run { f, iteration: 0 };
    let mut x = x0.clone();
    let mut fx = run.value(&x)?;
    let mut h = settings.h0;
    let mut reversions = 0;
    let mut trace = vec![fx];

    for k in 0..settings.ns {
        run.iteration = k;
        let grad = run.diff(&x, diffcalc::gradient(f, &x, settings.fd_step))?;
        let hess = run.diff(&x, diffcalc::hessian(f, &x, settings.fd_step))?;
        if numkit::one_norm(&hess) < settings.ap {
            return Err(OptimizeError::UnstableSolution(run.failure(&x, fx)));
        }
        let step = newton_step(&grad, &hess)
            .map_err(|_| OptimizeError::SingularHessian(run.failure(&x, fx)))?;

        let base = x.clone();
        let base_value = fx;
        x = run.offset(&base, &step, 1.0)?;
        fx = run.value(&x)?;

        if fx > base_value {
            reversions += 1;
            let n = grad.one_norm();
            if n == 0.0 {
                return Err(OptimizeError::StalledDescent(run.failure(&base, base_value)));
            }
            let mut halvings = 0;
            while fx > base_value {
                if halvings == settings.max_backtracks {
                    return Err(OptimizeError::StalledDescent(run.failure(&base, base_value)));
                }
                // the trial uses the current length, then the length halves
                x = run.offset(&base, &grad, h / n)?;
                fx = run.value(&x)?;
                h /= 2.0;
                halvings += 1;
            }
        }

        h = numkit::sub(&x, &base).expect("equal lengths").one_norm() * 2.0;
        trace.push(fx);
        if k > 2 && h / 2.0 < settings.ap.max(x.one_norm() * settings.rp) {
            let hess = run.diff(&x, diffcalc::hessian(f, &x, settings.fd_step))?;
            return Ok(OptimumReport {
                x_min: x,
                value: fx,
                hessian_at_min: hess,
                iterations_used: k + 1,
                descent_reversions: reversions,
                objective_trace: trace,
            });
        }
    }
    run.iteration = settings.ns;
    Err(OptimizeError::NoConvergence(run.failure(&x, fx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcalc::Infallible;

    fn v(d: &[f64]) -> Vector {
        Vector::new(d.to_vec()).unwrap()
    }

    #[test]
    fn newton_step_examples() {
        let d = newton_step(&v(&[2.0, 4.0]), &Matrix::diagonal(&[2.0, 2.0])).unwrap();
        assert_eq!(d.as_slice(), &[1.0, 2.0]);
        let h = Matrix::from_rows(&[[3.0, 1.0], [1.0, 2.0]]).unwrap();
        let d = newton_step(&v(&[0.0, 0.0]), &h).unwrap();
        assert_eq!(d.as_slice(), &[0.0, 0.0]);
        let s = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(newton_step(&v(&[1.0, 1.0]), &s), Err(SingularHessian));
    }

    #[test]
    fn shifted_quadratic() {
        let f = Infallible(|x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2));
        let r = minimize(&f, &v(&[0.0, 0.0]), &OptimizerSettings::default()).unwrap();
        assert!((r.x_min[0] - 3.0).abs() < 1e-4 && (r.x_min[1] + 1.0).abs() < 1e-4);
        assert_eq!(r.descent_reversions, 0);
    }

    #[test]
    fn start_at_minimum_still_runs_four_iterations() {
        let f = Infallible(|x: &[f64]| x[0] * x[0] + x[1] * x[1]);
        let s = OptimizerSettings::default();
        let r = minimize(&f, &v(&[0.0, 0.0]), &s).unwrap();
        assert_eq!(r.iterations_used, 4);
        assert!(r.x_min.one_norm() <= s.ap);
    }

    #[test]
    fn flat_objective_is_unstable() {
        let f = Infallible(|x: &[f64]| 1e-9 * x[0] * x[0]);
        let e = minimize(&f, &v(&[1.0]), &OptimizerSettings::default()).unwrap_err();
        assert!(matches!(e, OptimizeError::UnstableSolution(Failure { iteration: 0, .. })));
        assert_eq!(e.kind(), "unstable_solution");
    }

    #[test]
    fn starved_run_reports_no_convergence() {
        let f = Infallible(|x: &[f64]| (x[0] - 1.0).powi(2));
        let s = OptimizerSettings {
            ns: 2,
            ..OptimizerSettings::default()
        };
        let e = minimize(&f, &v(&[0.0]), &s).unwrap_err();
        match e {
            OptimizeError::NoConvergence(fail) => {
                assert_eq!(fail.iteration, 2);
                assert!((fail.x[0] - 1.0).abs() < 1e-6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn concave_objective_falls_back_to_descent() {
        // Newton jumps to the maximum of the concave cap, so every iteration
        // must revert to steepest descent.
        let f = Infallible(|x: &[f64]| -(x[0] * x[0]) + 0.25 * x[0].powi(4));
        let r = minimize(&f, &v(&[0.5]), &OptimizerSettings::default()).unwrap();
        assert!(r.descent_reversions >= 1);
        assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!((r.x_min[0].abs() - 2f64.sqrt()).abs() < 1e-3, "{:?}", r.x_min);
    }

    #[test]
    fn evaluation_failures_carry_the_iterate() {
        let f = crate::diffcalc::Fallible(|x: &[f64]| {
            if x[0] < 0.5 {
                Err("outside domain")
            } else {
                Ok((x[0] - 2.0).powi(2))
            }
        });
        let e = minimize(&f, &v(&[0.4]), &OptimizerSettings::default()).unwrap_err();
        match e {
            OptimizeError::Evaluation { source, x, iteration } => {
                assert_eq!(source, "outside domain");
                assert_eq!(x, vec![0.4]);
                assert_eq!(iteration, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_settings_rejected() {
        let f = Infallible(|x: &[f64]| x[0]);
        let s = OptimizerSettings {
            h0: 0.0,
            ..OptimizerSettings::default()
        };
        assert!(matches!(
            minimize(&f, &v(&[0.0]), &s),
            Err(OptimizeError::InvalidSettings(_))
        ));
    }
}
