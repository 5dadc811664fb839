//! Stable SHAP feature importance for gradient-boosted trees under
//! multicollinearity.
//!
//! The crate bundles everything needed to train populations of boosted
//! trees, explain them with exact interventional TreeSHAP, aggregate the
//! explanations of independently trained models into a consensus, audit
//! the result with stability diagnostics, and benchmark the whole pipeline
//! against single-model baselines on synthetic correlated-group data.

pub mod baselines;
pub mod bench;
pub mod container;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod gbdt;
pub mod hexfloat;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod treeshap;

pub use error::{Error, Result};
pub use matrix::Matrix;
