//! Batches of simulated experiments: generate, fit, classify, filter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{generate_experiment, DatagenError, GridSpec, NoiseSpec, Truth};
use crate::optimizer::OptimizerSettings;
use crate::priors::{two_sigma_filter, GaussianPrior};
use crate::varpro::{fit, FitError, FitProblem, FitResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("invalid ensemble configuration: {0}")]
    Config(String),
    #[error("no experiment survived the prior filter")]
    EmptySelection,
}

impl From<DatagenError> for EnsembleError {
    fn from(e: DatagenError) -> Self {
        EnsembleError::Config(e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub n_experiments: usize,
    /// Generating model; the same basis is fitted.
    pub truth: Truth,
    pub grid: GridSpec,
    /// Experiment `k` is generated with seed `noise.seed + k`.
    pub noise: NoiseSpec,
    pub dy_override: Option<f64>,
    pub prior: GaussianPrior,
    pub b0: Vec<f64>,
    pub settings: OptimizerSettings,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.n_experiments < 1 {
            return Err(EnsembleError::Config("need at least one experiment".into()));
        }
        self.truth.validate()?;
        self.grid.validate()?;
        self.noise.validate()?;
        let n_b = self.truth.basis.n_b();
        if n_b == 0 {
            return Err(EnsembleError::Config("model has no nonlinear parameters".into()));
        }
        if self.b0.len() != n_b {
            return Err(EnsembleError::Config(format!(
                "b0 has {} components, model has {n_b}",
                self.b0.len()
            )));
        }
        if self.prior.len() != n_b {
            return Err(EnsembleError::Config(format!(
                "prior has {} components, model has {n_b}",
                self.prior.len()
            )));
        }
        if self.grid.count < self.truth.basis.n_a() {
            return Err(EnsembleError::Config(format!(
                "{} points cannot determine {} linear coefficients",
                self.grid.count,
                self.truth.basis.n_a()
            )));
        }
        self.settings.validate().map_err(EnsembleError::Config)
    }

    pub fn seed_for(&self, index: usize) -> u64 {
        self.noise.seed.wrapping_add(index as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    NoConvergence,
    UnstableSolution,
    SingularHessian,
    StalledDescent,
    SingularNormalEquations,
    EvaluationError,
    NonFiniteObjective,
}

impl Status {
    pub const ALL: [Status; 8] = [
        Status::Converged,
        Status::NoConvergence,
        Status::UnstableSolution,
        Status::SingularHessian,
        Status::StalledDescent,
        Status::SingularNormalEquations,
        Status::EvaluationError,
        Status::NonFiniteObjective,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::NoConvergence => "no_convergence",
            Status::UnstableSolution => "unstable_solution",
            Status::SingularHessian => "singular_hessian",
            Status::StalledDescent => "stalled_descent",
            Status::SingularNormalEquations => "singular_normal_equations",
            Status::EvaluationError => "evaluation_error",
            Status::NonFiniteObjective => "non_finite_objective",
        }
    }

    fn of(e: &FitError) -> Status {
        match e {
            FitError::NoConvergence(_) => Status::NoConvergence,
            FitError::UnstableSolution(_) => Status::UnstableSolution,
            FitError::SingularHessian(_) => Status::SingularHessian,
            FitError::StalledDescent(_) => Status::StalledDescent,
            FitError::SingularNormalEquations { .. } => Status::SingularNormalEquations,
            FitError::Evaluation { .. } | FitError::InvalidProblem(_) => Status::EvaluationError,
            FitError::NonFiniteObjective { .. } => Status::NonFiniteObjective,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub index: usize,
    pub seed: u64,
    pub status: Status,
    /// Present iff `status` is `Converged`.
    pub result: Option<FitResult>,
    /// Two-sigma prior filter verdict; only defined for converged fits.
    pub retained: Option<bool>,
    pub error: Option<FitError>,
}

#[derive(Debug, Clone)]
pub struct EnsembleReport {
    pub outcomes: Vec<ExperimentOutcome>,
    pub failure_rate: f64,
    /// `(experiment index, b)` for every converged and retained experiment.
    pub retained_b_table: Vec<(usize, Vec<f64>)>,
}

impl EnsembleReport {
    pub fn count(&self, status: Status) -> usize {
        self.outcomes.iter().filter(|o| o.status == status).count()
    }

    pub fn converged(&self) -> usize {
        self.count(Status::Converged)
    }

    pub fn failed(&self) -> usize {
        self.outcomes.len() - self.converged()
    }

    pub fn retained(&self) -> usize {
        self.retained_b_table.len()
    }

    /// Per-component median of the retained `b`, or `None` when nothing
    /// was retained.
    pub fn retained_medians(&self) -> Option<Vec<f64>> {
        let first = self.retained_b_table.first()?;
        let medians = (0..first.1.len())
            .map(|j| median(self.retained_b_table.iter().map(|(_, b)| b[j]).collect()))
            .collect();
        Some(medians)
    }
}

pub fn median(mut values: Vec<f64>) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn run_one(config: &EnsembleConfig, index: usize) -> Result<ExperimentOutcome, EnsembleError> {
    let seed = config.seed_for(index);
    let noise = NoiseSpec {
        seed,
        ..config.noise
    };
    let data = generate_experiment(&config.truth, &config.grid, &noise, config.dy_override)?;
    let problem = FitProblem::new(data, config.truth.basis.clone(), config.b0.clone())
        .with_prior(config.prior.clone())
        .with_settings(config.settings);
    Ok(match fit(&problem) {
        Ok(result) => {
            let keep = two_sigma_filter(&config.prior, &result.b)
                .expect("prior length validated against the model");
            ExperimentOutcome {
                index,
                seed,
                status: Status::Converged,
                result: Some(result),
                retained: Some(keep),
                error: None,
            }
        }
        Err(e) => ExperimentOutcome {
            index,
            seed,
            status: Status::of(&e),
            result: None,
            retained: None,
            error: Some(e),
        },
    })
}

/// Runs the experiments in parallel; outcomes come back in index order.
pub fn run_ensemble(config: &EnsembleConfig) -> Result<EnsembleReport, EnsembleError> {
    config.validate()?;
    let outcomes = (0..config.n_experiments)
        .into_par_iter()
        .map(|k| run_one(config, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(outcomes))
}

/// Builds a report from outcomes already in the desired order.
pub fn summarize(outcomes: Vec<ExperimentOutcome>) -> EnsembleReport {
    let n = outcomes.len();
    let failed = outcomes.iter().filter(|o| o.status != Status::Converged).count();
    let retained_b_table = outcomes
        .iter()
        .filter(|o| o.retained == Some(true))
        .filter_map(|o| o.result.as_ref().map(|r| (o.index, r.b.to_vec())))
        .collect();
    EnsembleReport {
        failure_rate: if n == 0 { 0.0 } else { failed as f64 / n as f64 },
        outcomes,
        retained_b_table,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParallelCoordinatesRow {
    pub experiment: usize,
    pub b: Vec<f64>,
}

/// One row per retained experiment: its index and fitted `b`.
pub fn parallel_coordinates_export(
    report: &EnsembleReport,
) -> Result<Vec<ParallelCoordinatesRow>, EnsembleError> {
    if report.retained_b_table.is_empty() {
        return Err(EnsembleError::EmptySelection);
    }
    Ok(report
        .retained_b_table
        .iter()
        .map(|(experiment, b)| ParallelCoordinatesRow {
            experiment: *experiment,
            b: b.clone(),
        })
        .collect())
}
