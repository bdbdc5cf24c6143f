//! Higher-order likelihood inference for a scalar interest parameter in
//! exponential-family and location-scale regression.
//!
//! The pipeline is: [`estimator`] fits the full and constrained likelihoods,
//! [`profile`] differentiates the profile log-likelihood numerically,
//! [`inference`] forms r and r*, [`expansion`] evaluates the asymptotic
//! coefficients and [`simlab`] runs Monte Carlo checks of their error rates.

pub mod data;
pub mod error;
pub mod estimator;
pub mod expansion;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod profile;
pub mod simlab;
pub mod stencil;

pub use data::Dataset;
pub use error::{Error, Result};
pub use estimator::{constrained_slope, fit_constrained, fit_mle, ConstrainedFit, FitOptions, FitResult};
pub use expansion::{lemma1_coeffs, linear_repr, predicted_adjustments, theorem3_diagnostic, LemmaCoeffs, LinearRepr};
pub use inference::{InferenceEngine, InferenceReport, RootStatistic};
pub use model::{ErrorDensity, Family, ModelSpec, ParameterVector, Problem};
pub use profile::{profile_curve, profile_derivs, profile_grid, ProfileCurve, ProfileOptions};
pub use simlab::{run_study, SimConfig, SimResult};
