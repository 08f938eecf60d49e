//! Time-stepped corridor driver and replication control.
//!
//! Each step at clock `t` runs, in order:
//!
//! 1. the control point: arrivals join their holding lane, lane heads whose
//!    release time has come go to the first stop;
//! 2. the stops, upstream first: finished buses leave (downstream berth
//!    first), then at most one queued bus enters;
//! 3. boarding and alighting: new patrons are assigned, every dwelling bus is
//!    served for one step;
//! 4. the links: buses that left a stop start their link, and buses due at a
//!    stop by the next tick join its entry queue.
//!
//! All event times lie on the `Δt` grid, so the stop identity
//! `d = a + q + S + b` holds exactly.

pub mod log;
pub mod replication;
pub mod world;

pub use log::{BusEvent, BusEventLog, Phase};
pub use replication::{
    paired_experiment, run_experiment, run_experiment_with, stopping_index, ExperimentResult,
    ReplicationSettings,
};
pub use world::World;

use crate::control_point::{HoldingStrategy, StrategyRegistry};
use crate::error::Result;
use crate::metrics::{LineFilter, MetricsRecord};
use crate::scenario::Scenario;

/// Outcome of one replication.
#[derive(Debug, Clone)]
pub struct ReplicationOutput {
    pub log: BusEventLog,
    pub metrics: MetricsRecord,
    /// `false` if the run-out bound stopped the run with buses still out.
    pub complete: bool,
}

/// Runs replication `replication` of the scenario with its own strategy.
pub fn run_replication(scenario: &Scenario, replication: u64) -> Result<ReplicationOutput> {
    let strategy = StrategyRegistry::builtin().build(&scenario.strategy)?;
    run_replication_with(scenario, strategy.as_ref(), replication, LineFilter::All)
}

pub fn run_replication_with(
    scenario: &Scenario,
    strategy: &dyn HoldingStrategy,
    replication: u64,
    filter: LineFilter,
) -> Result<ReplicationOutput> {
    let (log, complete) = World::new(scenario, strategy, replication)?.run()?;
    let metrics = MetricsRecord::compute(scenario, &log, filter);
    Ok(ReplicationOutput { log, metrics, complete })
}
