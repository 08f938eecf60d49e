//! Replications until the estimated variance of every mean stop delay drops
//! below a threshold.
//!
//! Replication `i` always uses stream key `(seed, i)`, so strategies run on
//! the same seed see identical demand and travel-time draws. Replications are
//! run in parallel batches, but the stopping rule is evaluated in index order
//! and surplus replications are discarded, so the result does not depend on
//! the number of threads.

use rayon::prelude::*;

use crate::control_point::{HoldingStrategy, StrategyRegistry};
use crate::error::{Error, Result};
use crate::metrics::{paired_savings, AggregateMetrics, Estimate, LineFilter, MetricsRecord};
use crate::scenario::Scenario;
use crate::simulator::run_replication_with;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationSettings {
    pub min_reps: usize,
    pub max_reps: usize,
    /// Bound on the variance of each mean stop delay, min².
    pub variance_threshold: f64,
    pub filter: LineFilter,
}

impl Default for ReplicationSettings {
    fn default() -> Self {
        ReplicationSettings {
            min_reps: 10,
            max_reps: 10_000,
            variance_threshold: 5e-4,
            filter: LineFilter::All,
        }
    }
}

impl ReplicationSettings {
    pub fn validate(&self) -> Result<()> {
        if self.min_reps < 2 || self.max_reps < self.min_reps {
            return Err(Error::config(format!(
                "need 2 <= min_reps <= max_reps, got {} and {}",
                self.min_reps, self.max_reps
            )));
        }
        if !(self.variance_threshold > 0.0) {
            return Err(Error::config("variance threshold must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<MetricsRecord>,
    pub aggregate: AggregateMetrics,
    /// The stopping rule was met before `max_reps`.
    pub converged: bool,
    /// Every replication ran all its buses to the end of the corridor.
    pub complete: bool,
}

impl ExperimentResult {
    pub fn replications(&self) -> usize {
        self.records.len()
    }
}

/// Smallest `n ≥ min_reps` at which the first `n` records meet the rule.
pub fn stopping_index(records: &[MetricsRecord], settings: &ReplicationSettings) -> Option<usize> {
    (settings.min_reps..=records.len()).find(|&n| {
        AggregateMetrics::from_records(&records[..n]).max_stop_delay_variance()
            <= settings.variance_threshold
    })
}

pub fn run_experiment(scenario: &Scenario, settings: &ReplicationSettings) -> Result<ExperimentResult> {
    let strategy = StrategyRegistry::builtin().build(&scenario.strategy)?;
    run_experiment_with(scenario, strategy.as_ref(), settings)
}

pub fn run_experiment_with(
    scenario: &Scenario,
    strategy: &dyn HoldingStrategy,
    settings: &ReplicationSettings,
) -> Result<ExperimentResult> {
    settings.validate()?;
    let batch = rayon::current_num_threads().max(1);
    let mut records: Vec<MetricsRecord> = Vec::new();
    let mut complete = true;
    let mut stop_at = None;
    while records.len() < settings.max_reps {
        let start = records.len();
        let want = if start < settings.min_reps { settings.min_reps } else { start + batch };
        let end = want.min(settings.max_reps);
        let outs: Vec<_> = (start..end)
            .into_par_iter()
            .map(|i| run_replication_with(scenario, strategy, i as u64, settings.filter))
            .collect::<Result<_>>()?;
        for o in outs {
            complete &= o.complete;
            records.push(o.metrics);
        }
        // only indices added in this batch can be new stopping points
        let from = start.max(settings.min_reps);
        stop_at = (from..=records.len()).find(|&n| {
            AggregateMetrics::from_records(&records[..n]).max_stop_delay_variance()
                <= settings.variance_threshold
        });
        if stop_at.is_some() {
            break;
        }
    }
    let converged = stop_at.is_some();
    records.truncate(stop_at.unwrap_or(records.len()));
    let aggregate = AggregateMetrics::from_records(&records);
    Ok(ExperimentResult {
        records,
        aggregate,
        converged,
        complete,
    })
}

/// Runs a strategy and the do-nothing baseline on common random numbers and
/// returns both results with the per-stop savings `W^s(none) − W^s(strategy)`.
pub fn paired_experiment(
    scenario: &Scenario,
    settings: &ReplicationSettings,
) -> Result<(ExperimentResult, ExperimentResult, Vec<Estimate>)> {
    let mut base = scenario.clone();
    base.strategy = crate::scenario::StrategySpec::named("none");
    let baseline = run_experiment(&base, settings)?;
    let result = run_experiment(scenario, settings)?;
    let savings = paired_savings(&baseline.records, &result.records);
    Ok((baseline, result, savings))
}
