//! Variable projection.
//!
//! For fixed nonlinear parameters `b` the model is linear in `a`, so the
//! weighted least-squares problem `min_a |A(b)·a − z|²` is solved exactly,
//! with `A(b)ᵢⱼ = fⱼ(xᵢ, b)/δyᵢ` and `zᵢ = yᵢ/δyᵢ`. What remains is the reduced
//! objective `g(b)`, the minimal χ² at `b` plus an optional Gaussian prior
//! penalty, which is handed to the Newton minimizer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcalc::ScalarField;
use crate::models::{EvalFailure, ModelBasis};
use crate::numkit::{self, Matrix, NumError, Vector};
use crate::optimizer::{self, Failure, OptimizeError, OptimizerSettings, SingularHessian};
use crate::priors::{prior_penalty, GaussianPrior};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub x: f64,
    pub y: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("dataset is empty")]
    Empty,
    #[error("point {index}: uncertainty must be positive and finite, got {dy}")]
    BadUncertainty { index: usize, dy: f64 },
    #[error("point {index}: x and y must be finite")]
    NonFinite { index: usize },
}

impl DataPoint {
    pub fn new(x: f64, y: f64, dy: f64) -> Result<Self, DataError> {
        let p = Self { x, y, dy };
        p.check(0)?;
        Ok(p)
    }

    fn check(&self, index: usize) -> Result<(), DataError> {
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err(DataError::NonFinite { index });
        }
        if !(self.dy > 0.0 && self.dy.is_finite()) {
            return Err(DataError::BadUncertainty { index, dy: self.dy });
        }
        Ok(())
    }
}

/// A non-empty, validated list of `(x, y, δy)` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<DataPoint>,
}

impl Dataset {
    pub fn new(points: Vec<DataPoint>) -> Result<Self, DataError> {
        if points.is_empty() {
            return Err(DataError::Empty);
        }
        for (i, p) in points.iter().enumerate() {
            p.check(i)?;
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest and largest abscissa.
    pub fn x_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.x), hi.max(p.x))
            })
    }
}

/// How the residual vector is turned into a χ².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chi2Norm {
    /// Sum of squared weighted residuals.
    #[default]
    Euclidean,
    /// Square of the sum of absolute weighted residuals. Only useful to
    /// compare trajectories with implementations that compute it this way.
    SquaredOneNorm,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("basis function {term} failed at data point {point} ({failure}) for b = {b:?}")]
    Evaluation {
        point: usize,
        term: usize,
        failure: EvalFailure,
        b: Vec<f64>,
    },
    #[error("normal equations are singular for b = {b:?}: the basis is degenerate there")]
    SingularNormalEquations { b: Vec<f64> },
    #[error("b has {got} components but the model needs {want}")]
    WrongArity { got: usize, want: usize },
}

/// The weighted design matrix `A(b)ᵢⱼ = fⱼ(xᵢ, b)/δyᵢ`, rows in data order.
pub fn design_matrix(basis: &ModelBasis, data: &Dataset, b: &[f64]) -> Result<Matrix, ObjectiveError> {
    if b.len() != basis.n_b() {
        return Err(ObjectiveError::WrongArity {
            got: b.len(),
            want: basis.n_b(),
        });
    }
    let n_a = basis.n_a();
    let mut entries = Vec::with_capacity(data.len() * n_a);
    for (i, p) in data.points().iter().enumerate() {
        for j in 0..n_a {
            let fail = |failure| ObjectiveError::Evaluation {
                point: i,
                term: j,
                failure,
                b: b.to_vec(),
            };
            let v = basis.eval_term(j, b, p.x).map_err(fail)? / p.dy;
            if !v.is_finite() {
                return Err(fail(EvalFailure::NonFinite));
            }
            entries.push(v);
        }
    }
    Ok(Matrix::new(data.len(), n_a, entries).expect("shape and finiteness checked"))
}

/// `zᵢ = yᵢ/δyᵢ`.
pub fn weighted_target(data: &Dataset) -> Vector {
    Vector::new(data.points().iter().map(|p| p.y / p.dy).collect())
        .expect("validated points give finite, non-empty targets")
}

#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub a: Vector,
    pub chi2: f64,
}

/// Exact linear least squares at fixed `b`.
pub fn linear_solve(basis: &ModelBasis, data: &Dataset, b: &[f64]) -> Result<LinearSolution, ObjectiveError> {
    linear_solve_with(basis, data, b, Chi2Norm::Euclidean)
}

pub fn linear_solve_with(
    basis: &ModelBasis,
    data: &Dataset,
    b: &[f64],
    norm: Chi2Norm,
) -> Result<LinearSolution, ObjectiveError> {
    let design = design_matrix(basis, data, b)?;
    let target = weighted_target(data);
    let a = solve_normal_equations(&design, &target)
        .map_err(|_| ObjectiveError::SingularNormalEquations { b: b.to_vec() })?;
    let residual = numkit::sub(&design.mat_vec(&a).expect("conformable"), &target).expect("conformable");
    let chi2 = match norm {
        Chi2Norm::Euclidean => residual.norm_squared(),
        Chi2Norm::SquaredOneNorm => residual.one_norm().powi(2),
    };
    Ok(LinearSolution { a, chi2 })
}

/// Solves `(AᵀA)·a = Aᵀz` after scaling the columns of `A` to unit length,
/// so the singularity test sees collinearity rather than column scale.
pub fn solve_normal_equations(design: &Matrix, target: &Vector) -> Result<Vector, NumError> {
    let (rows, cols) = (design.rows(), design.cols());
    if rows < cols {
        return Err(NumError::SingularMatrix);
    }
    let scales: Vec<f64> = (0..cols)
        .map(|c| (0..rows).map(|r| design[(r, c)].powi(2)).sum::<f64>().sqrt())
        .collect();
    if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(NumError::SingularMatrix);
    }
    let scaled: Vec<f64> = design
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, v)| v / scales[k % cols])
        .collect();
    let scaled = Matrix::new(rows, cols, scaled)?;
    let coef = numkit::solve_spd(&scaled.gram(), &scaled.tr_mat_vec(target)?)?;
    Vector::new(coef.iter().zip(&scales).map(|(c, s)| c / s).collect())
        .map_err(|_| NumError::SingularMatrix)
}

#[derive(Debug, Clone)]
pub struct FitProblem {
    pub data: Dataset,
    pub basis: ModelBasis,
    /// Starting values for the nonlinear parameters.
    pub b0: Vec<f64>,
    pub prior: Option<GaussianPrior>,
    pub settings: OptimizerSettings,
    pub chi2_norm: Chi2Norm,
}

impl FitProblem {
    pub fn new(data: Dataset, basis: ModelBasis, b0: Vec<f64>) -> Self {
        Self {
            data,
            basis,
            b0,
            prior: None,
            settings: OptimizerSettings::for_fit(),
            chi2_norm: Chi2Norm::Euclidean,
        }
    }

    pub fn with_prior(mut self, prior: GaussianPrior) -> Self {
        self.prior = Some(prior);
        self
    }

    pub fn with_settings(mut self, settings: OptimizerSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let n_b = self.basis.n_b();
        if n_b == 0 {
            return Err(FitError::InvalidProblem(
                "model has no nonlinear parameters; use linear_solve directly".into(),
            ));
        }
        if self.b0.len() != n_b {
            return Err(FitError::InvalidProblem(format!(
                "b0 has {} components but the model has {n_b} nonlinear parameters",
                self.b0.len()
            )));
        }
        if self.b0.iter().any(|v| !v.is_finite()) {
            return Err(FitError::InvalidProblem("b0 must be finite".into()));
        }
        if let Some(p) = &self.prior {
            if p.len() != n_b {
                return Err(FitError::InvalidProblem(format!(
                    "prior has {} components but the model has {n_b} nonlinear parameters",
                    p.len()
                )));
            }
        }
        if self.data.len() < self.basis.n_a() {
            return Err(FitError::InvalidProblem(format!(
                "{} data points cannot determine {} linear coefficients",
                self.data.len(),
                self.basis.n_a()
            )));
        }
        self.settings.validate().map_err(FitError::InvalidProblem)
    }

    /// The reduced objective `g(b)`.
    pub fn objective(&self) -> ReducedObjective<'_> {
        ReducedObjective { problem: self }
    }

    fn penalty(&self, b: &[f64]) -> Result<f64, ObjectiveError> {
        match &self.prior {
            None => Ok(0.0),
            Some(p) => prior_penalty(p, b).map_err(|_| ObjectiveError::WrongArity {
                got: b.len(),
                want: p.len(),
            }),
        }
    }
}

/// `g(b) = min_a χ²(a, b) + prior penalty`.
#[derive(Debug, Clone, Copy)]
pub struct ReducedObjective<'a> {
    problem: &'a FitProblem,
}

impl ReducedObjective<'_> {
    /// Linear solution, data χ² and augmented value at `b`.
    pub fn evaluate(&self, b: &[f64]) -> Result<(LinearSolution, f64), ObjectiveError> {
        let p = self.problem;
        let sol = linear_solve_with(&p.basis, &p.data, b, p.chi2_norm)?;
        let total = sol.chi2 + p.penalty(b)?;
        Ok((sol, total))
    }
}

impl ScalarField for ReducedObjective<'_> {
    type Error = ObjectiveError;

    fn eval(&self, b: &[f64]) -> Result<f64, ObjectiveError> {
        self.evaluate(b).map(|(_, g)| g)
    }
}

pub fn reduced_objective(problem: &FitProblem) -> ReducedObjective<'_> {
    problem.objective()
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub a: Vector,
    pub b: Vector,
    /// Data χ² at the optimum, without the prior penalty.
    pub chi2: f64,
    /// `chi2` plus the prior penalty: the minimized quantity.
    pub chi2_augmented: f64,
    /// Finite-difference Hessian of the reduced objective at `b`.
    pub hessian: Matrix,
    pub n_points: usize,
    pub n_params: usize,
    pub iterations: usize,
    pub descent_reversions: usize,
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("basis function {term} failed at data point {point} ({failure}) for b = {b:?} (iteration {iteration})")]
    Evaluation {
        point: usize,
        term: usize,
        failure: EvalFailure,
        b: Vec<f64>,
        iteration: usize,
    },
    #[error("normal equations singular at b = {b:?} (iteration {iteration})")]
    SingularNormalEquations { b: Vec<f64>, iteration: usize },
    #[error("no convergence within {} iterations (b = {:?})", .0.iteration, .0.x)]
    NoConvergence(Failure),
    #[error("unstable solution at iteration {} (b = {:?})", .0.iteration, .0.x)]
    UnstableSolution(Failure),
    #[error("singular Hessian at iteration {} (b = {:?})", .0.iteration, .0.x)]
    SingularHessian(Failure),
    #[error("steepest descent stalled at iteration {} (b = {:?})", .0.iteration, .0.x)]
    StalledDescent(Failure),
    #[error("objective not finite at b = {b:?} (iteration {iteration})")]
    NonFiniteObjective { b: Vec<f64>, iteration: usize },
}

impl FitError {
    /// Stable machine-readable name of the failure kind.
    pub fn kind(&self) -> &'static str {
        match self {
            FitError::InvalidProblem(_) => "invalid_problem",
            FitError::Evaluation { .. } => "evaluation_error",
            FitError::SingularNormalEquations { .. } => "singular_normal_equations",
            FitError::NoConvergence(_) => "no_convergence",
            FitError::UnstableSolution(_) => "unstable_solution",
            FitError::SingularHessian(_) => "singular_hessian",
            FitError::StalledDescent(_) => "stalled_descent",
            FitError::NonFiniteObjective { .. } => "non_finite_objective",
        }
    }

    fn from_objective(e: ObjectiveError, iteration: usize) -> Self {
        match e {
            ObjectiveError::Evaluation { point, term, failure, b } => FitError::Evaluation {
                point,
                term,
                failure,
                b,
                iteration,
            },
            ObjectiveError::SingularNormalEquations { b } => FitError::SingularNormalEquations { b, iteration },
            ObjectiveError::WrongArity { got, want } => {
                FitError::InvalidProblem(format!("b has {got} components, expected {want}"))
            }
        }
    }
}

impl From<OptimizeError<ObjectiveError>> for FitError {
    fn from(e: OptimizeError<ObjectiveError>) -> Self {
        match e {
            OptimizeError::UnstableSolution(f) => FitError::UnstableSolution(f),
            OptimizeError::SingularHessian(f) => FitError::SingularHessian(f),
            OptimizeError::NoConvergence(f) => FitError::NoConvergence(f),
            OptimizeError::StalledDescent(f) => FitError::StalledDescent(f),
            OptimizeError::NonFiniteObjective { x, iteration } => FitError::NonFiniteObjective { b: x, iteration },
            OptimizeError::Evaluation { source, iteration, .. } => FitError::from_objective(source, iteration),
            OptimizeError::InvalidSettings(s) => FitError::InvalidProblem(s),
        }
    }
}

/// Minimizes the reduced objective from `b0`, then re-solves the linear part
/// at the optimum.
pub fn fit(problem: &FitProblem) -> Result<FitResult, FitError> {
    problem.validate()?;
    let g = problem.objective();
    let b0 = Vector::new(problem.b0.clone()).map_err(|e| FitError::InvalidProblem(e.to_string()))?;
    let opt = optimizer::minimize(&g, &b0, &problem.settings)?;
    let iterations = opt.iterations_used;
    let b = opt.x_min;
    let (sol, chi2_augmented) = g
        .evaluate(&b)
        .map_err(|e| FitError::from_objective(e, iterations))?;
    Ok(FitResult {
        a: sol.a,
        chi2: sol.chi2,
        chi2_augmented,
        hessian: opt.hessian_at_min,
        n_points: problem.data.len(),
        n_params: problem.basis.n_a() + problem.basis.n_b(),
        iterations,
        descent_reversions: opt.descent_reversions,
        objective_trace: opt.objective_trace,
        b,
    })
}

/// `sqrt(2·(H⁻¹)ᵢᵢ)` for the Hessian `H` of a χ²-like objective.
pub fn errors_from_hessian(hessian: &Matrix) -> Result<Vector, SingularHessian> {
    let inv = numkit::inverse(hessian).map_err(|_| SingularHessian)?;
    let errs = (0..inv.rows())
        .map(|i| {
            let v = 2.0 * inv[(i, i)];
            if v > 0.0 {
                Ok(v.sqrt())
            } else {
                Err(SingularHessian)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Vector::new(errs).map_err(|_| SingularHessian)
}

/// One-standard-deviation uncertainties on `b` from the returned Hessian.
pub fn parameter_errors(result: &FitResult) -> Result<Vector, SingularHessian> {
    errors_from_hessian(&result.hessian)
}
