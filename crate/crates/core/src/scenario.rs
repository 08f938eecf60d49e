//! Experiment description: lines, line groups, stops, links, strategy and
//! phase schedule.
//!
//! Scenarios are stored as TOML. The validated [`Scenario`] is immutable for
//! the rest of a run and is shared read-only across replications.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control_point::{registry, PredictionMode};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance on the common-line share check.
pub const GAMMA_TOLERANCE: f64 = 1e-9;

const GBRT_TOML: &str = include_str!("../../../scenarios/gbrt.scenario");
const HOMOGENEOUS_TOML: &str = include_str!("../../../scenarios/homogeneous.scenario");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub id: String,
    pub headway_s: f64,
    /// Standard deviation of control-point arrival times, in units of the
    /// headway.
    pub arrival_cv: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default = "default_true")]
    pub held: bool,
    pub first_stop: usize,
    pub last_stop: usize,
}

impl Line {
    pub fn frequency(&self) -> f64 {
        1.0 / self.headway_s
    }

    pub fn serves(&self, stop: usize) -> bool {
        (self.first_stop..=self.last_stop).contains(&stop)
    }

    /// Buses of a line enter the corridor through the control point only if
    /// the line starts at the first stop.
    pub fn passes_control_point(&self) -> bool {
        self.first_stop == 1
    }
}

/// Lines whose patrons may ride any member bus. Derived from the `group`
/// field of each line when the scenario is validated.
#[derive(Debug, Clone, PartialEq)]
pub struct LineGroup {
    pub id: String,
    pub members: Vec<usize>,
    pub joint_headway_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stop {
    pub index: usize,
    pub berths: usize,
    /// Non-common-line boarding rate per line, patrons/s.
    #[serde(default)]
    pub boarding: BTreeMap<String, f64>,
    /// Common-line boarding rate per group, patrons/s.
    #[serde(default)]
    pub common: BTreeMap<String, f64>,
    /// Alighting rate per line, patrons/s.
    #[serde(default)]
    pub alighting: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lost_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub board_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alight_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub from: usize,
    pub mean_s: f64,
    pub std_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub name: String,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Number of following buses whose arrivals are predicted.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub prediction: PredictionMode,
}

impl StrategySpec {
    pub fn named(name: impl Into<String>) -> Self {
        StrategySpec {
            name: name.into(),
            eta: default_eta(),
            alpha: default_alpha(),
            horizon: default_horizon(),
            prediction: PredictionMode::default(),
        }
    }

    /// The parameters the named strategy actually reads, e.g. `eta=0.9`.
    pub fn label(&self) -> String {
        let prediction = match self.prediction {
            PredictionMode::Perfect => "perfect",
            PredictionMode::Schedule => "schedule",
        };
        match self.name.as_str() {
            "min_headway" => format!("eta={}", self.eta),
            "daganzo09" | "xuan11_simple" => format!("alpha={}", self.alpha),
            "daganzo11" | "bartholdi12" => format!("alpha={};prediction={prediction}", self.alpha),
            "berrebi15" => format!("M={};prediction={prediction}", self.horizon),
            _ => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phases {
    pub warmup_s: f64,
    pub warmup_demand_factor: f64,
    pub rush_s: f64,
    /// Upper bound on the run-out period that lets in-system buses finish.
    #[serde(default = "default_runout")]
    pub runout_max_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DwellDefaults {
    pub lost_time_s: f64,
    pub board_time_s: f64,
    pub alight_time_s: f64,
}

impl Default for DwellDefaults {
    fn default() -> Self {
        DwellDefaults {
            lost_time_s: 5.0,
            board_time_s: 3.0,
            alight_time_s: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    /// Share of a group's demand made of common-line patrons.
    pub gamma: f64,
    #[serde(default = "default_time_step")]
    pub time_step_s: f64,
    #[serde(default = "default_one")]
    pub demand_factor: f64,
    #[serde(default)]
    pub seed: u64,
    pub phases: Phases,
    pub strategy: StrategySpec,
    #[serde(default)]
    pub dwell: DwellDefaults,
    pub lines: Vec<Line>,
    pub stops: Vec<Stop>,
    pub links: Vec<Link>,
    #[serde(skip)]
    pub groups: Vec<LineGroup>,
}

fn default_true() -> bool {
    true
}
fn default_eta() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    0.5
}
fn default_horizon() -> usize {
    5
}
fn default_runout() -> f64 {
    24.0 * 3600.0
}
fn default_time_step() -> f64 {
    1.0
}
fn default_one() -> f64 {
    1.0
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Scenario::from_toml_str(&text)
}

/// Splits a group's total boarding rate at one stop into the common-line rate
/// and per-line rates proportional to line frequency.
pub fn split_common_rates(total_rate: f64, gamma: f64, frequencies: &[f64]) -> (f64, Vec<f64>) {
    assert!(total_rate >= 0.0, "total rate must be non-negative");
    assert!((0.0..=1.0).contains(&gamma), "gamma must lie in [0, 1]");
    assert!(!frequencies.is_empty(), "a group needs at least one line");

    let common = gamma * total_rate;
    let rest = total_rate - common;
    let f_sum: f64 = frequencies.iter().sum();
    let lines = frequencies.iter().map(|f| rest * f / f_sum).collect();
    (common, lines)
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Scenario> {
        let mut scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// The shipped Guangzhou BRT scenario.
    pub fn gbrt() -> Scenario {
        Scenario::from_toml_str(GBRT_TOML).expect("shipped GBRT scenario is valid")
    }

    /// The shipped homogeneous ten-stop corridor.
    pub fn homogeneous() -> Scenario {
        Scenario::from_toml_str(HOMOGENEOUS_TOML).expect("shipped homogeneous scenario is valid")
    }

    pub fn stop_count(&self) -> usize {
        self.stops.len()
    }

    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    pub fn group_index(&self, id: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.id == id)
    }

    /// Group index of a line, if it belongs to one.
    pub fn group_of(&self, line: usize) -> Option<usize> {
        self.lines[line]
            .group
            .as_deref()
            .and_then(|g| self.group_index(g))
    }

    pub fn stop(&self, index: usize) -> &Stop {
        &self.stops[index - 1]
    }

    pub fn lost_time(&self, stop: usize) -> f64 {
        self.stop(stop).lost_time_s.unwrap_or(self.dwell.lost_time_s)
    }

    pub fn board_time(&self, stop: usize) -> f64 {
        self.stop(stop).board_time_s.unwrap_or(self.dwell.board_time_s)
    }

    pub fn alight_time(&self, stop: usize) -> f64 {
        self.stop(stop).alight_time_s.unwrap_or(self.dwell.alight_time_s)
    }

    /// Non-common boarding rate of `line` at `stop` as written in the file.
    pub fn boarding_rate(&self, stop: usize, line: usize) -> f64 {
        rate(&self.stop(stop).boarding, &self.lines[line].id)
    }

    pub fn common_rate(&self, stop: usize, group: usize) -> f64 {
        rate(&self.stop(stop).common, &self.groups[group].id)
    }

    pub fn alighting_rate(&self, stop: usize, line: usize) -> f64 {
        rate(&self.stop(stop).alighting, &self.lines[line].id)
    }

    /// Boarding rate a bus of `line` can expect at `stop`: its own patrons plus
    /// its frequency share of the group's common-line patrons.
    pub fn effective_boarding_rate(&self, stop: usize, line: usize) -> f64 {
        let own = self.boarding_rate(stop, line);
        let Some(group) = self.group_of(line) else {
            return own;
        };
        let f_sum: f64 = self.groups[group]
            .members
            .iter()
            .filter(|&&m| self.lines[m].serves(stop))
            .map(|&m| self.lines[m].frequency())
            .sum();
        if f_sum == 0.0 {
            return own;
        }
        own + self.common_rate(stop, group) * self.lines[line].frequency() / f_sum
    }

    /// Multiplies every boarding, common-line and alighting rate by `factor`.
    pub fn scale_demand(&self, factor: f64) -> Result<Scenario> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(Error::invalid(format!(
                "demand factor must be a finite value >= 0, got {factor}"
            )));
        }
        let mut out = self.clone();
        for stop in &mut out.stops {
            for r in stop
                .boarding
                .values_mut()
                .chain(stop.common.values_mut())
                .chain(stop.alighting.values_mut())
            {
                *r *= factor;
            }
        }
        Ok(out)
    }

    /// Re-splits each group's demand so that a share `gamma` of it is
    /// common-line. Group totals per stop are preserved.
    pub fn with_gamma(&self, gamma: f64) -> Result<Scenario> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        let mut out = self.clone();
        out.gamma = gamma;
        for group in &self.groups {
            for stop in &mut out.stops {
                let members: Vec<&Line> = group
                    .members
                    .iter()
                    .map(|&m| &self.lines[m])
                    .filter(|l| l.serves(stop.index))
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let total = rate(&stop.common, &group.id)
                    + members
                        .iter()
                        .map(|l| rate(&stop.boarding, &l.id))
                        .sum::<f64>();
                let freqs: Vec<f64> = members.iter().map(|l| l.frequency()).collect();
                let (common, per_line) = split_common_rates(total, gamma, &freqs);
                if common > 0.0 || stop.common.contains_key(&group.id) {
                    stop.common.insert(group.id.clone(), common);
                }
                for (line, r) in members.iter().zip(per_line) {
                    stop.boarding.insert(line.id.clone(), r);
                }
            }
        }
        out.validate()?;
        Ok(out)
    }

    /// Checks every invariant and fills in the derived line groups.
    pub fn validate(&mut self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.time_step_s > 0.0) {
            return Err(Error::invalid("time step must be > 0"));
        }
        if !(self.demand_factor >= 0.0) || !self.demand_factor.is_finite() {
            return Err(Error::invalid("demand factor must be a finite value >= 0"));
        }
        self.validate_phases()?;
        self.validate_dwell()?;
        self.validate_lines()?;
        self.groups = self.derive_groups()?;
        self.validate_stops()?;
        self.validate_links()?;
        self.validate_gamma_consistency()?;
        self.validate_strategy()?;
        Ok(())
    }

    fn validate_phases(&self) -> Result<()> {
        let p = &self.phases;
        if !(p.warmup_s > 0.0) || !(p.rush_s > 0.0) {
            return Err(Error::invalid("phase durations must be > 0"));
        }
        if !(p.runout_max_s >= 0.0) {
            return Err(Error::invalid("run-out bound must be >= 0"));
        }
        if !(p.warmup_demand_factor >= 0.0) {
            return Err(Error::invalid("warm-up demand factor must be >= 0"));
        }
        Ok(())
    }

    fn validate_dwell(&self) -> Result<()> {
        let d = &self.dwell;
        for (what, v) in [
            ("lost time", d.lost_time_s),
            ("boarding time", d.board_time_s),
            ("alighting time", d.alight_time_s),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("default {what} must be >= 0")));
            }
        }
        Ok(())
    }

    fn validate_lines(&self) -> Result<()> {
        if self.lines.is_empty() {
            return Err(Error::invalid("scenario has no lines"));
        }
        let n = self.stops.len();
        let mut seen = BTreeSet::new();
        for line in &self.lines {
            if !seen.insert(line.id.as_str()) {
                return Err(Error::invalid(format!("duplicate line id {}", line.id)));
            }
            if !(line.headway_s > 0.0) || !line.headway_s.is_finite() {
                return Err(Error::invalid(format!("line {}: headway must be > 0", line.id)));
            }
            if !(line.arrival_cv >= 0.0) || !line.arrival_cv.is_finite() {
                return Err(Error::invalid(format!("line {}: arrival cv must be >= 0", line.id)));
            }
            if line.first_stop < 1 || line.first_stop > line.last_stop || line.last_stop > n {
                return Err(Error::invalid(format!(
                    "line {}: served stops {}..={} are not a range within 1..={n}",
                    line.id, line.first_stop, line.last_stop
                )));
            }
            if line.held && !line.passes_control_point() {
                return Err(Error::invalid(format!(
                    "line {}: held lines must start at stop 1",
                    line.id
                )));
            }
            if line.group.is_some() && !line.held {
                return Err(Error::invalid(format!(
                    "line {}: unheld lines cannot belong to a group",
                    line.id
                )));
            }
        }
        Ok(())
    }

    fn derive_groups(&self) -> Result<Vec<LineGroup>> {
        let mut groups: Vec<LineGroup> = Vec::new();
        for (i, line) in self.lines.iter().enumerate() {
            let Some(gid) = &line.group else { continue };
            match groups.iter_mut().find(|g| &g.id == gid) {
                Some(g) => g.members.push(i),
                None => groups.push(LineGroup {
                    id: gid.clone(),
                    members: vec![i],
                    joint_headway_s: 0.0,
                }),
            }
        }
        for g in &mut groups {
            let f: f64 = g.members.iter().map(|&m| self.lines[m].frequency()).sum();
            g.joint_headway_s = 1.0 / f;
        }
        Ok(groups)
    }

    fn validate_stops(&self) -> Result<()> {
        if self.stops.is_empty() {
            return Err(Error::invalid("scenario has no stops"));
        }
        for (i, stop) in self.stops.iter().enumerate() {
            if stop.index != i + 1 {
                return Err(Error::invalid(format!(
                    "stops must be listed in order 1..=N; found index {} at position {}",
                    stop.index,
                    i + 1
                )));
            }
            if stop.berths < 1 {
                return Err(Error::invalid(format!(
                    "stop {}: berth count must be ≥ 1",
                    stop.index
                )));
            }
            for (what, v) in [
                ("lost time", stop.lost_time_s),
                ("boarding time", stop.board_time_s),
                ("alighting time", stop.alight_time_s),
            ] {
                if let Some(v) = v {
                    if !(v >= 0.0) || !v.is_finite() {
                        return Err(Error::invalid(format!(
                            "stop {}: {what} must be >= 0",
                            stop.index
                        )));
                    }
                }
            }
            for (kind, rates) in [("boarding", &stop.boarding), ("alighting", &stop.alighting)] {
                for (id, &r) in rates {
                    check_rate(stop.index, kind, id, r)?;
                    let Some(line) = self.lines.iter().find(|l| &l.id == id) else {
                        return Err(Error::invalid(format!(
                            "stop {}: {kind} rate for unknown line {id}",
                            stop.index
                        )));
                    };
                    if r > 0.0 && !line.serves(stop.index) {
                        return Err(Error::invalid(format!(
                            "stop {}: {kind} rate for line {id}, which does not serve it",
                            stop.index
                        )));
                    }
                }
            }
            for (id, &r) in &stop.common {
                check_rate(stop.index, "common", id, r)?;
                if !self.groups.iter().any(|g| &g.id == id) {
                    return Err(Error::invalid(format!(
                        "stop {}: common rate for unknown group {id}",
                        stop.index
                    )));
                }
            }
        }
        Ok(())
    }

    fn validate_links(&self) -> Result<()> {
        let n = self.stops.len();
        if self.links.len() != n - 1 {
            return Err(Error::invalid(format!(
                "expected {} links for {n} stops, found {}",
                n - 1,
                self.links.len()
            )));
        }
        for (i, link) in self.links.iter().enumerate() {
            if link.from != i + 1 {
                return Err(Error::invalid(format!(
                    "links must be listed in order; found from={} at position {}",
                    link.from,
                    i + 1
                )));
            }
            if !(link.mean_s > 0.0) || !link.mean_s.is_finite() {
                return Err(Error::invalid(format!("link {}: mean must be > 0", link.from)));
            }
            if !(link.std_s >= 0.0) || !link.std_s.is_finite() {
                return Err(Error::invalid(format!("link {}: std must be >= 0", link.from)));
            }
        }
        Ok(())
    }

    fn validate_gamma_consistency(&self) -> Result<()> {
        for group in &self.groups {
            for stop in &self.stops {
                let common = rate(&stop.common, &group.id);
                let total = common
                    + group
                        .members
                        .iter()
                        .map(|&m| rate(&stop.boarding, &self.lines[m].id))
                        .sum::<f64>();
                if total == 0.0 {
                    continue;
                }
                let share = common / total;
                if (share - self.gamma).abs() > GAMMA_TOLERANCE {
                    return Err(Error::invalid(format!(
                        "gamma-consistency: group {} at stop {} has common share {share} but gamma is {}",
                        group.id, stop.index, self.gamma
                    )));
                }
            }
        }
        Ok(())
    }

    fn validate_strategy(&self) -> Result<()> {
        let s = &self.strategy;
        if !registry::StrategyRegistry::builtin().contains(&s.name) {
            return Err(Error::invalid(format!("unknown strategy {}", s.name)));
        }
        if !(0.0..=1.0).contains(&s.eta) {
            return Err(Error::invalid(format!("eta must lie in [0, 1], got {}", s.eta)));
        }
        if !(s.alpha >= 0.0) || !s.alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be >= 0, got {}", s.alpha)));
        }
        if s.horizon < 1 {
            return Err(Error::invalid("prediction horizon M must be >= 1"));
        }
        Ok(())
    }
}

fn rate(map: &BTreeMap<String, f64>, id: &str) -> f64 {
    map.get(id).copied().unwrap_or(0.0)
}

fn check_rate(stop: usize, kind: &str, id: &str, r: f64) -> Result<()> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::invalid(format!(
            "stop {stop}: {kind} rate for {id} must be >= 0, got {r}"
        )));
    }
    Ok(())
}
