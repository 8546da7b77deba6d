//! Fit and ensemble reports (JSON and plain text).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::ensemble::{EnsembleReport, Status};
use crate::varpro::FitResult;

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub status: &'static str,
    pub model: String,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub chi2: f64,
    pub chi2_augmented: f64,
    /// `null` when the Hessian at the optimum cannot be inverted.
    pub errors_b: Option<Vec<f64>>,
    pub iterations: usize,
    pub descent_reversions: usize,
    pub n_points: usize,
    pub n_params: usize,
}

impl FitReport {
    pub fn new(model: &str, result: &FitResult, errors_b: Option<Vec<f64>>) -> Self {
        Self {
            status: "converged",
            model: model.to_string(),
            a: result.a.to_vec(),
            b: result.b.to_vec(),
            chi2: result.chi2,
            chi2_augmented: result.chi2_augmented,
            errors_b,
            iterations: result.iterations,
            descent_reversions: result.descent_reversions,
            n_points: result.n_points,
            n_params: result.n_params,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model: {}", self.model);
        let _ = writeln!(s, "status: {}", self.status);
        let _ = writeln!(s, "points: {}, parameters: {}", self.n_points, self.n_params);
        let _ = writeln!(s, "chi2: {}", self.chi2);
        let _ = writeln!(s, "chi2_augmented: {}", self.chi2_augmented);
        if self.n_points > self.n_params {
            let dof = (self.n_points - self.n_params) as f64;
            let _ = writeln!(s, "chi2/dof: {}", self.chi2 / dof);
        }
        let _ = writeln!(
            s,
            "iterations: {} (descent reversions: {})",
            self.iterations, self.descent_reversions
        );
        for (j, a) in self.a.iter().enumerate() {
            let _ = writeln!(s, "a{j} = {a}");
        }
        for (j, b) in self.b.iter().enumerate() {
            match &self.errors_b {
                Some(e) => {
                    let _ = writeln!(s, "b{j} = {b} +/- {}", e[j]);
                }
                None => {
                    let _ = writeln!(s, "b{j} = {b}");
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRecord {
    pub index: usize,
    pub seed: u64,
    pub status: &'static str,
    pub retained: Option<bool>,
    pub b: Option<Vec<f64>>,
    pub chi2: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary {
    pub n_experiments: usize,
    pub failure_rate: f64,
    pub converged: usize,
    pub retained: usize,
    pub status_counts: BTreeMap<&'static str, usize>,
    pub retained_medians: Option<Vec<f64>>,
    /// File name of the parallel-coordinates table, `null` when nothing
    /// was retained.
    pub parallel_coordinates: Option<String>,
    pub experiments: Vec<ExperimentRecord>,
}

impl EnsembleSummary {
    pub fn new(report: &EnsembleReport, table_file: Option<String>) -> Self {
        Self {
            n_experiments: report.outcomes.len(),
            failure_rate: report.failure_rate,
            converged: report.converged(),
            retained: report.retained(),
            status_counts: Status::ALL
                .iter()
                .map(|s| (s.as_str(), report.count(*s)))
                .collect(),
            retained_medians: report.retained_medians(),
            parallel_coordinates: table_file,
            experiments: report
                .outcomes
                .iter()
                .map(|o| ExperimentRecord {
                    index: o.index,
                    seed: o.seed,
                    status: o.status.as_str(),
                    retained: o.retained,
                    b: o.result.as_ref().map(|r| r.b.to_vec()),
                    chi2: o.result.as_ref().map(|r| r.chi2),
                    error: o.error.as_ref().map(|e| e.to_string()),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary is serializable");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiments: {}", self.n_experiments);
        let _ = writeln!(s, "converged: {}", self.converged);
        let _ = writeln!(s, "failure_rate: {}", self.failure_rate);
        for (status, n) in &self.status_counts {
            if *n > 0 {
                let _ = writeln!(s, "  {status}: {n}");
            }
        }
        let _ = writeln!(s, "retained (2 sigma): {}", self.retained);
        match &self.retained_medians {
            Some(m) => {
                let _ = writeln!(s, "retained medians: {m:?}");
            }
            None => {
                let _ = writeln!(s, "retained medians: none (empty selection)");
            }
        }
        s
    }
}
