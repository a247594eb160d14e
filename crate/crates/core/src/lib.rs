//! Uncertainty-aware estimators of conditional average treatment effects.
//!
//! The crate bundles a small reverse-mode differentiation engine ([`autodiff`],
//! [`nn`], [`optim`]), MC-dropout CATE estimators ([`models`]), the
//! epistemic/aleatoric uncertainty decomposition ([`uncertainty`]),
//! recommendation-withholding policies ([`policies`]), benchmark data
//! ([`datasets`]) and the evaluation harness ([`evaluation`]).

pub mod autodiff;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod loss;
pub mod models;
pub mod nn;
pub mod optim;
pub mod policies;
pub mod rng;
pub mod tensor;
pub mod uncertainty;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Tensor;
