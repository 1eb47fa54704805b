//! Counterfactual sentiment debiasing for review-based rating prediction.
//!
//! The model factors a predicted rating into a user/item interaction term,
//! two review-only terms and a sentiment gate. At inference the
//! sentiment-mediated part is removed by subtracting `beta * sigma(s)`,
//! leaving the natural direct effect of the user and item.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin the double-precision types used by the tooling.

pub mod autodiff;
pub mod data;
pub mod debias;
pub mod error;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod sentiment;
pub mod stats;
pub mod synth;
pub mod train;

pub use autodiff::{grad_check, GradCheckReport, Graph, ParamId, ParamSet, Tensor, Var};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = Tensor<f64>;
pub type ParamSet64 = ParamSet<f64>;
pub type Checkpoint64 = autodiff::Checkpoint<f64>;
pub type Model64 = model::Model<f64>;
