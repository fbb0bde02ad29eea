//! Alpha-factor mining engine: neural factors trained with a differentiable
//! rank-IC objective, a genetic-programming baseline, diversity analytics,
//! and a long-short backtester.
//!
//! Core math is generic over the scalar type via [`num::Real`]; the crate
//! root exports concrete `f64` aliases that the pipeline and CLI use.

pub mod analysis;
pub mod backtest;
pub mod boost;
pub mod discovery;
pub mod error;
pub mod factor;
pub mod gp;
pub mod ic;
pub mod indicators;
pub mod market;
pub mod mlp;
pub mod num;
pub mod optim;
pub mod rng;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
pub use num::Real;

/// Scalar type used by the shipped pipeline.
pub type Scalar = f64;

pub type Panel = market::Panel<Scalar>;
pub type Bar = market::Bar<Scalar>;
pub type DayBatch = market::DayBatch<Scalar>;
pub type Tensor = tensor::Tensor<Scalar>;
