//! Discrete-time simulation of a multi-line bus corridor with multi-berth
//! stops and a holding control point at the corridor entrance.
//!
//! The crate is organised bottom-up: [`scenario`] describes an experiment,
//! [`stochastic`] draws every random quantity, [`control_point`] decides
//! holding, [`stop_engine`] runs the berths, [`simulator`] sequences them and
//! controls replications, [`metrics`] turns event logs into delays and
//! headway statistics, and [`analytics`] holds the closed-form predictions.

// `!(x >= 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod control_point;
pub mod error;
pub mod metrics;
pub mod normal;
pub mod scenario;
pub mod simulator;
pub mod stochastic;
pub mod stop_engine;

pub use control_point::{HoldingStrategy, PredictionMode, StrategyRegistry};
pub use error::{Error, Result};
pub use scenario::{load_scenario, Scenario, StrategySpec};
