//! Holding at the corridor entrance (or at the first stop for strategies whose
//! rules consume first-stop departures).
//!
//! The functions here are pure: they turn a [`HoldContext`] into a
//! [`ReleaseDecision`]. Lane bookkeeping (FIFO order, release history) lives in
//! the simulator; strategies are looked up by name in [`registry`].

pub mod registry;
pub mod strategies;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastic::ArrivalSchedule;

pub use registry::StrategyRegistry;
pub use strategies::{Anchor, HoldingStrategy, LaneKind};

/// How future control-point arrivals are forecast.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionMode {
    /// Future arrivals are known exactly.
    Perfect,
    /// Future buses are assumed to arrive on schedule.
    #[default]
    Schedule,
}

impl std::str::FromStr for PredictionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(PredictionMode::Perfect),
            "schedule" => Ok(PredictionMode::Schedule),
            other => Err(Error::config(format!("unknown prediction mode {other}"))),
        }
    }
}

/// Departure history at the first stop, for strategies anchored there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstStopHistory {
    /// Time bus j is ready to leave the first stop, `d_j`.
    pub departure: f64,
    /// Release of the previous bus of the line from the first stop, `d_{j-1}`.
    pub prev_departure: Option<f64>,
    /// Scheduled departure `d̄_j`.
    pub scheduled_departure: f64,
    /// Forecast departure of the next bus, `d̂_{j+1}`.
    pub predicted_next_departure: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct HoldContext<'a> {
    pub line: usize,
    pub group: Option<usize>,
    /// Bus index j, 1-based.
    pub bus: usize,
    pub headway: f64,
    /// Actual control-point arrival `a_j`.
    pub arrival: f64,
    /// Scheduled control-point arrival `ā_j = j·H`.
    pub scheduled_arrival: f64,
    /// Previous release from the same lane (line, or group under group holding).
    pub prev_release: Option<f64>,
    /// Control-point arrival of the previous bus of the line, `a_{j-1}`.
    pub prev_arrival: Option<f64>,
    /// Joint headway of the bus's group.
    pub group_headway: Option<f64>,
    pub first_stop: Option<FirstStopHistory>,
    /// Estimated patron arrival rate times boarding time at the first stop.
    pub demand_product: f64,
    pub alpha: f64,
    /// Forecast arrivals `â_{j+1}, …, â_{j+M}`.
    pub predicted_arrivals: &'a [f64],
}

impl<'a> HoldContext<'a> {
    /// Minimal context for a bus arriving at the entrance.
    pub fn at_entrance(line: usize, bus: usize, headway: f64, arrival: f64) -> Self {
        HoldContext {
            line,
            group: None,
            bus,
            headway,
            arrival,
            scheduled_arrival: bus as f64 * headway,
            prev_release: None,
            prev_arrival: None,
            group_headway: None,
            first_stop: None,
            demand_product: 0.0,
            alpha: 0.0,
            predicted_arrivals: &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReleaseDecision {
    pub release: f64,
    pub hold: f64,
}

impl ReleaseDecision {
    /// Release `hold` seconds after `reference`; negative holds are not applied.
    pub fn after(reference: f64, hold: f64) -> Self {
        let hold = if hold > 0.0 { hold } else { 0.0 };
        ReleaseDecision {
            release: reference + hold,
            hold,
        }
    }

    pub fn immediate(reference: f64) -> Self {
        ReleaseDecision {
            release: reference,
            hold: 0.0,
        }
    }
}

/// Holds until at least `η·H` has elapsed since the line's previous release.
pub fn hold_min_headway(ctx: &HoldContext<'_>, eta: f64) -> ReleaseDecision {
    match ctx.prev_release {
        None => ReleaseDecision::immediate(ctx.arrival),
        Some(prev) => {
            let release = ctx.arrival.max(prev + eta * ctx.headway);
            ReleaseDecision {
                release,
                hold: release - ctx.arrival,
            }
        }
    }
}

/// Holds until the group's joint headway has elapsed since the group's
/// previous release, regardless of line.
pub fn hold_min_headway_group(ctx: &HoldContext<'_>) -> Result<ReleaseDecision> {
    let (Some(_), Some(joint)) = (ctx.group, ctx.group_headway) else {
        return Err(Error::config(format!(
            "line {} has no group but was routed to group holding",
            ctx.line
        )));
    };
    Ok(match ctx.prev_release {
        None => ReleaseDecision::immediate(ctx.arrival),
        Some(prev) => {
            let release = ctx.arrival.max(prev + joint);
            ReleaseDecision {
                release,
                hold: release - ctx.arrival,
            }
        }
    })
}

/// Holding rules from the literature that the proposed strategy is compared
/// against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComparisonRule {
    ScheduleBased,
    Daganzo09,
    Xuan11Simple,
    Daganzo11,
    Bartholdi12,
    Berrebi15,
}

impl ComparisonRule {
    pub const ALL: [ComparisonRule; 6] = [
        ComparisonRule::ScheduleBased,
        ComparisonRule::Daganzo09,
        ComparisonRule::Xuan11Simple,
        ComparisonRule::Daganzo11,
        ComparisonRule::Bartholdi12,
        ComparisonRule::Berrebi15,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ComparisonRule::ScheduleBased => "schedule_based",
            ComparisonRule::Daganzo09 => "daganzo09",
            ComparisonRule::Xuan11Simple => "xuan11_simple",
            ComparisonRule::Daganzo11 => "daganzo11",
            ComparisonRule::Bartholdi12 => "bartholdi12",
            ComparisonRule::Berrebi15 => "berrebi15",
        }
    }

    /// These rules use first-stop departures and are applied at that stop.
    pub fn anchored_at_first_stop(self) -> bool {
        matches!(
            self,
            ComparisonRule::Daganzo09 | ComparisonRule::Xuan11Simple | ComparisonRule::Daganzo11
        )
    }

    pub fn uses_predictions(self) -> bool {
        matches!(
            self,
            ComparisonRule::Daganzo11 | ComparisonRule::Bartholdi12 | ComparisonRule::Berrebi15
        )
    }
}

/// Applies one of the comparison rules. Non-positive values mean no holding.
pub fn hold_comparison(ctx: &HoldContext<'_>, rule: ComparisonRule) -> Result<ReleaseDecision> {
    let h = ctx.headway;
    let alpha = ctx.alpha;
    let beta = ctx.demand_product;

    if rule.anchored_at_first_stop() {
        let fs = ctx.first_stop.ok_or_else(|| {
            Error::config(format!("{} needs first-stop departure history", rule.name()))
        })?;
        let d = fs.departure;
        let Some(prev) = fs.prev_departure else {
            return Ok(ReleaseDecision::immediate(d));
        };
        let deviation = h - (d - prev);
        let hold = match rule {
            ComparisonRule::Daganzo09 => (alpha + beta) * deviation,
            ComparisonRule::Xuan11Simple => beta * deviation + alpha * (fs.scheduled_departure - d),
            ComparisonRule::Daganzo11 => {
                let next = fs.predicted_next_departure.ok_or_else(|| {
                    Error::config("daganzo11 needs a predicted next departure")
                })?;
                (alpha + beta) * deviation - alpha * (h - (next - d))
            }
            _ => unreachable!(),
        };
        return Ok(ReleaseDecision::after(d, hold));
    }

    let a = ctx.arrival;
    let hold = match rule {
        ComparisonRule::ScheduleBased => ctx.scheduled_arrival - a,
        ComparisonRule::Bartholdi12 => {
            let next = *ctx
                .predicted_arrivals
                .first()
                .ok_or_else(|| Error::config("bartholdi12 needs predicted arrivals"))?;
            let forward = alpha * (next - a);
            match ctx.prev_arrival {
                Some(prev) => (h - (a - prev)).max(forward),
                None => forward,
            }
        }
        ComparisonRule::Berrebi15 => {
            if ctx.predicted_arrivals.is_empty() {
                return Err(Error::config("berrebi15 needs predicted arrivals"));
            }
            let Some(prev) = ctx.prev_arrival else {
                return Ok(ReleaseDecision::immediate(a));
            };
            // First maximiser wins ties.
            let (best_r, best) = ctx
                .predicted_arrivals
                .iter()
                .enumerate()
                .map(|(i, &p)| (i + 1, (p - a) / (i + 1) as f64))
                .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            (best - (a - prev)) / (1.0 + 1.0 / best_r as f64)
        }
        _ => unreachable!(),
    };
    Ok(ReleaseDecision::after(a, hold))
}

/// Forecasts the arrivals of buses `j+1 ..= j+r_max` of a line.
///
/// Perfect mode reads the generated schedule; buses beyond it fall back to
/// their scheduled times.
pub fn predict_arrivals(
    mode: PredictionMode,
    schedule: &ArrivalSchedule,
    headway: f64,
    j: usize,
    r_max: usize,
) -> Vec<f64> {
    (1..=r_max)
        .map(|r| {
            let scheduled = (j + r) as f64 * headway;
            match mode {
                PredictionMode::Schedule => scheduled,
                PredictionMode::Perfect => schedule.get(j + r).unwrap_or(scheduled),
            }
        })
        .collect()
}
