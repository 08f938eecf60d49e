use std::fmt;

use super::{
    hold_min_headway, hold_min_headway_group, hold_comparison, HoldContext, ReleaseDecision,
    ComparisonRule,
};
use crate::error::Result;
use crate::scenario::StrategySpec;

/// Where a strategy's holding happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    /// Upstream of the first stop.
    Entrance,
    /// After the bus leaves the first stop's berth, before the first link.
    FirstStop,
}

/// How held buses are queued: one FIFO lane per line or per line group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneKind {
    Line,
    Group,
}

pub trait HoldingStrategy: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn anchor(&self) -> Anchor {
        Anchor::Entrance
    }

    fn lane(&self) -> LaneKind {
        LaneKind::Line
    }

    fn uses_predictions(&self) -> bool {
        false
    }

    /// `false` only for the do-nothing baseline.
    fn holds(&self) -> bool {
        true
    }

    fn decide(&self, ctx: &HoldContext<'_>) -> Result<ReleaseDecision>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DoNothing;

impl HoldingStrategy for DoNothing {
    fn name(&self) -> &'static str {
        "none"
    }

    fn holds(&self) -> bool {
        false
    }

    fn decide(&self, ctx: &HoldContext<'_>) -> Result<ReleaseDecision> {
        Ok(ReleaseDecision::immediate(ctx.arrival))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MinHeadway {
    pub eta: f64,
}

impl MinHeadway {
    pub fn from_spec(spec: &StrategySpec) -> Self {
        MinHeadway { eta: spec.eta }
    }
}

impl HoldingStrategy for MinHeadway {
    fn name(&self) -> &'static str {
        "min_headway"
    }

    fn decide(&self, ctx: &HoldContext<'_>) -> Result<ReleaseDecision> {
        Ok(hold_min_headway(ctx, self.eta))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GroupHeadway;

impl HoldingStrategy for GroupHeadway {
    fn name(&self) -> &'static str {
        "min_headway_group"
    }

    fn lane(&self) -> LaneKind {
        LaneKind::Group
    }

    fn decide(&self, ctx: &HoldContext<'_>) -> Result<ReleaseDecision> {
        hold_min_headway_group(ctx)
    }
}

/// One of the six comparison rules. `alpha` and the prediction settings come
/// in through the context.
#[derive(Debug, Clone, Copy)]
pub struct Comparison {
    pub rule: ComparisonRule,
}

impl HoldingStrategy for Comparison {
    fn name(&self) -> &'static str {
        self.rule.name()
    }

    fn anchor(&self) -> Anchor {
        if self.rule.anchored_at_first_stop() {
            Anchor::FirstStop
        } else {
            Anchor::Entrance
        }
    }

    fn uses_predictions(&self) -> bool {
        self.rule.uses_predictions()
    }

    fn decide(&self, ctx: &HoldContext<'_>) -> Result<ReleaseDecision> {
        hold_comparison(ctx, self.rule)
    }
}
