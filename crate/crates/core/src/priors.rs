//! Gaussian priors on the nonlinear parameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PriorError {
    #[error("prior has {prior} components but b has {b}")]
    LengthMismatch { prior: usize, b: usize },
    #[error("prior width {index} must be positive and finite")]
    BadWidth { index: usize },
    #[error("prior center {index} must be finite")]
    BadCenter { index: usize },
    #[error("prior needs at least one component")]
    Empty,
}

/// Independent Gaussian priors `bᵢ ≈ centerᵢ ± widthᵢ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrior", into = "RawPrior")]
pub struct GaussianPrior {
    center: Vec<f64>,
    width: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPrior {
    center: Vec<f64>,
    width: Vec<f64>,
}

impl TryFrom<RawPrior> for GaussianPrior {
    type Error = PriorError;

    fn try_from(raw: RawPrior) -> Result<Self, PriorError> {
        GaussianPrior::new(raw.center, raw.width)
    }
}

impl From<GaussianPrior> for RawPrior {
    fn from(p: GaussianPrior) -> Self {
        RawPrior {
            center: p.center,
            width: p.width,
        }
    }
}

impl GaussianPrior {
    pub fn new(center: Vec<f64>, width: Vec<f64>) -> Result<Self, PriorError> {
        if center.is_empty() {
            return Err(PriorError::Empty);
        }
        if center.len() != width.len() {
            return Err(PriorError::LengthMismatch {
                prior: center.len(),
                b: width.len(),
            });
        }
        if let Some(index) = center.iter().position(|c| !c.is_finite()) {
            return Err(PriorError::BadCenter { index });
        }
        if let Some(index) = width.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(PriorError::BadWidth { index });
        }
        Ok(Self { center, width })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn width(&self) -> &[f64] {
        &self.width
    }

    pub fn len(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center.is_empty()
    }

    fn check(&self, b: &[f64]) -> Result<(), PriorError> {
        if b.len() != self.len() {
            return Err(PriorError::LengthMismatch {
                prior: self.len(),
                b: b.len(),
            });
        }
        Ok(())
    }

    /// Standardized displacements `(bᵢ − centerᵢ)/widthᵢ`.
    pub fn pulls(&self, b: &[f64]) -> Result<Vec<f64>, PriorError> {
        self.check(b)?;
        Ok(b.iter()
            .zip(&self.center)
            .zip(&self.width)
            .map(|((bi, c), w)| (bi - c) / w)
            .collect())
    }
}

/// `Σᵢ ((bᵢ − centerᵢ)/widthᵢ)²`.
pub fn prior_penalty(prior: &GaussianPrior, b: &[f64]) -> Result<f64, PriorError> {
    Ok(prior.pulls(b)?.iter().map(|p| p * p).sum())
}

/// Keeps `b` when every component lies within two widths of its center,
/// boundary included.
pub fn two_sigma_filter(prior: &GaussianPrior, b: &[f64]) -> Result<bool, PriorError> {
    prior.check(b)?;
    Ok(b.iter()
        .zip(&prior.center)
        .zip(&prior.width)
        .all(|((bi, c), w)| (bi - c).abs() <= 2.0 * w))
}
