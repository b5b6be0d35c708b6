//! Exact event-driven simulation of branching Brownian motion with drift
//! toward an absorbing origin, together with closed-form and quadrature
//! moment oracles and a statistical harness for its long-time behaviour.
//!
//! The analytic and simulation layers are generic over [`Scalar`] (`f32` or
//! `f64`); the aliases at the crate root fix the scalar to `f64`, which is
//! what the experiments and the command-line tool use.

pub mod engine;
pub mod error;
pub mod experiments;
pub mod kernel;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod scalar;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type OffspringLawF64 = model::OffspringLaw<f64>;
pub type OffspringLawF32 = model::OffspringLaw<f32>;
pub type ModelParamsF64 = model::ModelParams<f64>;
pub type ModelParamsF32 = model::ModelParams<f32>;
pub type IntervalSetF64 = model::IntervalSet<f64>;
pub type IntervalSetF32 = model::IntervalSet<f32>;
