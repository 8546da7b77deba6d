//! Synthetic datasets with multiplicative Gaussian noise.
//!
//! Randomness comes from ChaCha8 seeded with a `u64` (`ChaCha8Rng::seed_from_u64`),
//! which produces the same stream on every platform. Normal deviates are
//! drawn with the ziggurat sampler of `rand_distr::StandardNormal` and scaled
//! by the relative noise level. One deviate is consumed per point, in grid
//! order, even when the noise level is zero.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{EvalFailure, ModelBasis};
use crate::varpro::{DataPoint, Dataset};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatagenError {
    #[error("point at x = {x}: zero uncertainty; give a positive noise level or an explicit dy")]
    ZeroUncertainty { x: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),
    #[error("truth model needs {want} {what} values, got {got}")]
    TruthMismatch { what: &'static str, want: usize, got: usize },
    #[error("truth model failed at x = {x}: {failure}")]
    Evaluation { x: f64, failure: EvalFailure },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation of the noise as a fraction of the true value.
    pub relative_sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if !(self.relative_sigma >= 0.0 && self.relative_sigma.is_finite()) {
            return Err(DatagenError::InvalidNoise(format!(
                "relative sigma must be non-negative and finite, got {}",
                self.relative_sigma
            )));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// `count` abscissae `start + i·step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.count < 1 {
            return Err(DatagenError::InvalidGrid("count must be at least 1".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite() && self.start.is_finite()) {
            return Err(DatagenError::InvalidGrid(format!(
                "need a finite start and a positive finite step, got start {} step {}",
                self.start, self.step
            )));
        }
        Ok(())
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.start + i as f64 * self.step)
    }
}

/// A model together with the parameters that generate data from it.
#[derive(Debug, Clone)]
pub struct Truth {
    pub basis: ModelBasis,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Truth {
    pub fn validate(&self) -> Result<(), DatagenError> {
        if self.a.len() != self.basis.n_a() {
            return Err(DatagenError::TruthMismatch {
                what: "a",
                want: self.basis.n_a(),
                got: self.a.len(),
            });
        }
        if self.b.len() != self.basis.n_b() {
            return Err(DatagenError::TruthMismatch {
                what: "b",
                want: self.basis.n_b(),
                got: self.b.len(),
            });
        }
        Ok(())
    }

    pub fn value(&self, x: f64) -> Result<f64, DatagenError> {
        self.basis
            .evaluate(&self.a, &self.b, x)
            .map_err(|failure| DatagenError::Evaluation { x, failure })
    }
}

/// `(x, y·(1 + g), |y|·σ)` with `g ~ N(0, σ)`. `dy_override` replaces the
/// proportional uncertainty.
pub fn make_point<R: Rng + ?Sized>(
    x: f64,
    true_y: f64,
    relative_sigma: f64,
    rng: &mut R,
    dy_override: Option<f64>,
) -> Result<DataPoint, DatagenError> {
    let z: f64 = rng.sample(StandardNormal);
    let y = true_y * (1.0 + relative_sigma * z);
    let dy = dy_override.unwrap_or(true_y.abs() * relative_sigma);
    // negated so that NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(dy > 0.0) {
        return Err(DatagenError::ZeroUncertainty { x });
    }
    DataPoint::new(x, y, dy).map_err(|e| DatagenError::InvalidNoise(e.to_string()))
}

pub fn generate_experiment(
    truth: &Truth,
    grid: &GridSpec,
    noise: &NoiseSpec,
    dy_override: Option<f64>,
) -> Result<Dataset, DatagenError> {
    truth.validate()?;
    grid.validate()?;
    noise.validate()?;
    let mut rng = noise.rng();
    let points = grid
        .xs()
        .map(|x| make_point(x, truth.value(x)?, noise.relative_sigma, &mut rng, dy_override))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(points).expect("grid is non-empty and points are validated"))
}
