//! Timing games for two-proposer block production.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases at the crate
//! root fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod delay_model;
pub mod error;
pub mod game;
pub mod payoff;
pub mod runner;
pub mod scalar;
pub mod slot_sim;

pub use error::{Error, FieldError, Result};
pub use scalar::Scalar;

pub type DelayDistribution = delay_model::DelayDistribution<f64>;
pub type ProtocolParams = delay_model::ProtocolParams<f64>;
pub type QuadratureConfig = delay_model::QuadratureConfig<f64>;
pub type ValuationModel = payoff::ValuationModel<f64>;
pub type ScenarioSpec = payoff::ScenarioSpec<f64>;
pub type StrategyGrid = game::StrategyGrid<f64>;
pub type PayoffMatrix = game::PayoffMatrix<f64>;
pub type PureEquilibrium = game::PureEquilibrium<f64>;
pub type SlotInputs = slot_sim::SlotInputs<f64>;
pub type MonteCarloEstimate = slot_sim::MonteCarloEstimate<f64>;
