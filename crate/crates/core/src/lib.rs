//! Separable nonlinear least squares by variable projection.
//!
//! Models of the form `f(x, a, b) = Σⱼ aⱼ·fⱼ(x, b)` are fitted to
//! `(x, y, δy)` data by solving for the linear coefficients `a` exactly at
//! every trial `b` and minimizing the remaining χ²(b) with a Newton method
//! that falls back to steepest descent when a Newton step goes uphill.
//! Optional Gaussian priors on `b` are added to the χ².
//!
//! ```
//! use varpro_newton::{models, varpro};
//!
//! let basis = models::exp_sum(1);
//! let points = (0..30)
//!     .map(|i| {
//!         let x = 0.2 * i as f64;
//!         varpro::DataPoint::new(x, 5.0 * (-0.7 * x).exp(), 0.01).unwrap()
//!     })
//!     .collect();
//! let data = varpro::Dataset::new(points).unwrap();
//! let problem = varpro::FitProblem::new(data, basis, vec![-0.5]);
//! let result = varpro::fit(&problem).unwrap();
//! assert!((result.b[0] + 0.7).abs() < 1e-6);
//! assert!((result.a[0] - 5.0).abs() < 1e-6);
//! ```

pub mod cli;
pub mod datagen;
pub mod diffcalc;
pub mod ensemble;
pub mod models;
pub mod numkit;
pub mod optimizer;
pub mod priors;
pub mod varpro;

pub use models::ModelBasis;
pub use numkit::{Matrix, Vector};
pub use optimizer::OptimizerSettings;
pub use priors::GaussianPrior;
pub use varpro::{fit, DataPoint, Dataset, FitProblem, FitResult};
