//! Conflict-resolved federated aggregation.
//!
//! The server combines client updates by projecting the previous round's
//! normalized global update onto the set of directions that have a fixed
//! positive inner product with every active client's normalized update,
//! layer by layer. Around that operator the crate provides baseline
//! aggregators, a small MLP with exact gradients, Dirichlet non-IID
//! partitioning and a deterministic round simulator.
//!
//! All numerics are generic over [`Scalar`] (`f32`/`f64`); the aliases below
//! fix the double-precision instantiation that the tolerances in the tests
//! are stated for.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregators;
pub mod data;
pub mod error;
pub mod layout;
pub mod models;
pub mod projection;
pub mod scalar;
pub mod simulation;

pub use error::{Error, IdxError, Result};
pub use layout::{LayerLayout, Span};
pub use scalar::Scalar;

pub type ParamVector = models::ParamVector<f64>;
pub type AlignmentMatrix = projection::AlignmentMatrix<f64>;
pub type AlignmentTarget = projection::AlignmentTarget<f64>;
pub type ProjectionResult = projection::ProjectionResult<f64>;
pub type ClientUpdate = aggregators::ClientUpdate<f64>;
pub type AggregatorState = aggregators::AggregatorState<f64>;
pub type Aggregator = aggregators::Aggregator<f64>;
pub type Dataset = data::Dataset<f64>;
pub type Simulation = simulation::Simulation<f64>;

pub type ParamVector32 = models::ParamVector<f32>;
pub type Simulation32 = simulation::Simulation<f32>;
