//! Name-to-strategy lookup.

use std::collections::BTreeMap;
use std::fmt;

use super::strategies::{DoNothing, GroupHeadway, HoldingStrategy, MinHeadway, Comparison};
use super::ComparisonRule;
use crate::error::{Error, Result};
use crate::scenario::StrategySpec;

pub type StrategyFactory = fn(&StrategySpec) -> Box<dyn HoldingStrategy>;

pub struct StrategyRegistry {
    factories: BTreeMap<&'static str, StrategyFactory>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        StrategyRegistry {
            factories: BTreeMap::new(),
        }
    }

    /// Registry holding the do-nothing baseline, line and group headway
    /// holding, and the six comparison rules.
    pub fn builtin() -> Self {
        let mut reg = StrategyRegistry::empty();
        reg.register("none", |_| Box::new(DoNothing));
        reg.register("min_headway", |s| Box::new(MinHeadway::from_spec(s)));
        reg.register("min_headway_group", |_| Box::new(GroupHeadway));
        reg.register("schedule_based", |_| Box::new(Comparison { rule: ComparisonRule::ScheduleBased }));
        reg.register("daganzo09", |_| Box::new(Comparison { rule: ComparisonRule::Daganzo09 }));
        reg.register("xuan11_simple", |_| Box::new(Comparison { rule: ComparisonRule::Xuan11Simple }));
        reg.register("daganzo11", |_| Box::new(Comparison { rule: ComparisonRule::Daganzo11 }));
        reg.register("bartholdi12", |_| Box::new(Comparison { rule: ComparisonRule::Bartholdi12 }));
        reg.register("berrebi15", |_| Box::new(Comparison { rule: ComparisonRule::Berrebi15 }));
        reg
    }

    /// Adds or replaces a strategy.
    pub fn register(&mut self, name: &'static str, factory: StrategyFactory) {
        self.factories.insert(name, factory);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, spec: &StrategySpec) -> Result<Box<dyn HoldingStrategy>> {
        let factory = self.factories.get(spec.name.as_str()).ok_or_else(|| {
            Error::config(format!(
                "unknown strategy {} (known: {})",
                spec.name,
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        Ok(factory(spec))
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        StrategyRegistry::builtin()
    }
}

impl fmt::Debug for StrategyRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}
