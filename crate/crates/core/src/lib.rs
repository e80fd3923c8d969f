//! Desk-scale half-brain stroke-lesion study on synthetic phantom volumes:
//! a from-scratch CNN engine, volume preprocessing, phantom generation, the
//! two-stage multi-task model, counterfactual saliency, and agreement metrics.

pub mod error;
pub mod explain;
pub mod formats;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod phantom;
pub mod pipeline;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
