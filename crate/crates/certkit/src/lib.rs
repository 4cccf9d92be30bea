//! Certification toolkit for randomized classifiers.
//!
//! A randomized classifier maps each input to a probability distribution
//! over labels. When the map is Lipschitz from an l_p metric on inputs to a
//! probability divergence on outputs, clean-data risk estimates and mode
//! predictions transfer to adversarially perturbed inputs with quantified
//! degradation. This crate provides the pieces of that argument:
//!
//! - [`distributions`]: divergences on finite categorical distributions and
//!   the inequalities relating them;
//! - [`smoothing`]: closed-form robustness certificates for Gaussian
//!   noise-injection preprocessing, and conversions between certificate
//!   divergences;
//! - [`classifiers`]: deterministic bases, noise-randomized wrappers, and
//!   exact or Monte-Carlo output-distribution evaluation;
//! - [`bounds`]: adversarial-risk-gap and mode-preservation bounds;
//! - [`generalization`]: covering numbers and Rademacher-style
//!   generalization bounds for randomized classifiers;
//! - [`harness`]: synthetic-data benchmark, derivative-free attack, and
//!   guaranteed-accuracy curves for validating the bounds empirically.

pub mod bounds;
pub mod classifiers;
pub mod distributions;
pub mod error;
pub mod generalization;
pub mod harness;
pub mod norm;
pub mod smoothing;

pub use error::{CertError, Result};
