//! Delay and regularity measures computed from a [`BusEventLog`].
//!
//! Everything is a pure function of the log and the scenario's line table.
//! Times in the log are seconds; delays are reported in minutes.

use std::io;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::simulator::log::{BusEvent, BusEventLog};

/// 97.5% standard normal quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Which lines enter the delay averages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LineFilter {
    #[default]
    All,
    HeldOnly,
}

impl LineFilter {
    fn admits(self, scenario: &Scenario, line: usize) -> bool {
        match self {
            LineFilter::All => true,
            LineFilter::HeldOnly => scenario.lines[line].held,
        }
    }
}

fn rush_events<'a>(
    log: &'a BusEventLog,
    scenario: &'a Scenario,
    filter: LineFilter,
) -> impl Iterator<Item = &'a BusEvent> + 'a {
    log.rush().filter(move |e| filter.admits(scenario, e.line))
}

/// Mean of `q + b` over rush buses at stop `s`, in minutes. `None` if no rush
/// bus visited the stop.
pub fn stop_delay(log: &BusEventLog, scenario: &Scenario, s: usize, filter: LineFilter) -> Option<f64> {
    let (sum, n) = rush_events(log, scenario, filter)
        .filter(|e| e.stop == s)
        .fold((0.0, 0usize), |(sum, n), e| (sum + e.q + e.b, n + 1));
    (n > 0).then(|| sum / n as f64 / 60.0)
}

/// Mean holding delay per rush bus in minutes, one value per bus.
pub fn hold_delay(log: &BusEventLog, scenario: &Scenario, filter: LineFilter) -> Option<f64> {
    let (sum, n) = rush_events(log, scenario, filter)
        .filter(|e| e.stop == scenario.lines[e.line].first_stop)
        .fold((0.0, 0usize), |(sum, n), e| (sum + e.hold, n + 1));
    (n > 0).then(|| sum / n as f64 / 60.0)
}

/// `W^s`: mean holding delay plus the stop delays up to and including `s`.
/// Stops without a value contribute nothing.
pub fn cumulative_delay(record: &MetricsRecord, s: usize) -> f64 {
    record.mean_hold + record.stop_delay[..s].iter().flatten().sum::<f64>()
}

/// Population coefficient of variation of the gaps between sorted times.
pub fn cv_of_headways(times: &[f64]) -> Option<f64> {
    if times.len() < 2 {
        return None;
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let gaps: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).collect();
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return None;
    }
    let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n;
    Some(var.sqrt() / mean)
}

/// CV of departure headways of `line`'s rush buses at `stop`.
pub fn headway_cv(log: &BusEventLog, line: usize, stop: usize) -> Option<f64> {
    let d: Vec<f64> = log
        .rush()
        .filter(|e| e.line == line && e.stop == stop)
        .map(|e| e.d)
        .collect();
    cv_of_headways(&d)
}

fn arrival_cv(log: &BusEventLog, line: usize, stop: usize) -> Option<f64> {
    let a: Vec<f64> = log
        .rush()
        .filter(|e| e.line == line && e.stop == stop)
        .map(|e| e.a)
        .collect();
    cv_of_headways(&a)
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Metrics of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    /// `w^s` for s = 1..=N, minutes.
    pub stop_delay: Vec<Option<f64>>,
    /// `W^s` for s = 0..=N, minutes.
    pub cumulative: Vec<f64>,
    /// Mean holding delay over the buses admitted by the filter, minutes.
    pub mean_hold: f64,
    /// Mean holding delay over held lines only, minutes.
    pub mean_hold_held: f64,
    /// Departure-headway CV, `[line][stop - 1]`.
    pub departure_cv: Vec<Vec<Option<f64>>>,
    /// Unweighted mean of `departure_cv` over defined pairs.
    pub grand_cv: f64,
    /// Arrival-headway CV per stop, averaged over lines.
    pub arrival_cv: Vec<Option<f64>>,
    pub rush_buses: usize,
}

impl MetricsRecord {
    pub fn compute(scenario: &Scenario, log: &BusEventLog, filter: LineFilter) -> MetricsRecord {
        let n = scenario.stop_count();
        let stop_delay: Vec<Option<f64>> = (1..=n).map(|s| stop_delay(log, scenario, s, filter)).collect();
        let mean_hold = hold_delay(log, scenario, filter).unwrap_or(0.0);
        let mean_hold_held = hold_delay(log, scenario, LineFilter::HeldOnly).unwrap_or(0.0);

        let mut cumulative = Vec::with_capacity(n + 1);
        let mut acc = mean_hold;
        cumulative.push(acc);
        for w in &stop_delay {
            acc += w.unwrap_or(0.0);
            cumulative.push(acc);
        }

        let departure_cv: Vec<Vec<Option<f64>>> = (0..scenario.lines.len())
            .map(|l| (1..=n).map(|s| headway_cv(log, l, s)).collect())
            .collect();
        let grand_cv = mean_of(departure_cv.iter().flatten().flatten().copied()).unwrap_or(0.0);
        let arrival_cv = (1..=n)
            .map(|s| mean_of((0..scenario.lines.len()).filter_map(|l| arrival_cv(log, l, s))))
            .collect();
        let rush_buses = log
            .rush()
            .filter(|e| e.stop == scenario.lines[e.line].first_stop)
            .count();

        MetricsRecord {
            stop_delay,
            cumulative,
            mean_hold,
            mean_hold_held,
            departure_cv,
            grand_cv,
            arrival_cv,
            rush_buses,
        }
    }
}

/// Mean and sample variance of a quantity across replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// Sample variance (n − 1 denominator); zero for fewer than two samples.
    pub var: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, var: f64::NAN, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n < 2 {
            0.0
        } else {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        };
        Estimate { mean, var, n }
    }

    /// Estimated variance of the mean.
    pub fn var_of_mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.var / self.n as f64
        }
    }

    pub fn half_width(&self) -> f64 {
        Z95 * self.var_of_mean().sqrt()
    }
}

/// Across-replication summary.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateMetrics {
    pub replications: usize,
    pub stop_delay: Vec<Estimate>,
    pub cumulative: Vec<Estimate>,
    pub mean_hold: Estimate,
    pub mean_hold_held: Estimate,
    pub grand_cv: Estimate,
    pub arrival_cv: Vec<Estimate>,
}

impl AggregateMetrics {
    pub fn from_records(records: &[MetricsRecord]) -> AggregateMetrics {
        let n_stops = records.first().map_or(0, |r| r.stop_delay.len());
        let by = |f: &dyn Fn(&MetricsRecord) -> Option<f64>| {
            let xs: Vec<f64> = records.iter().filter_map(f).collect();
            Estimate::from_samples(&xs)
        };
        AggregateMetrics {
            replications: records.len(),
            stop_delay: (0..n_stops).map(|s| by(&|r| r.stop_delay[s])).collect(),
            cumulative: (0..=n_stops).map(|s| by(&|r| Some(r.cumulative[s]))).collect(),
            mean_hold: by(&|r| Some(r.mean_hold)),
            mean_hold_held: by(&|r| Some(r.mean_hold_held)),
            grand_cv: by(&|r| Some(r.grand_cv)),
            arrival_cv: (0..n_stops).map(|s| by(&|r| r.arrival_cv[s])).collect(),
        }
    }

    /// Largest estimated variance of the mean stop delay, min².
    pub fn max_stop_delay_variance(&self) -> f64 {
        self.stop_delay
            .iter()
            .filter(|e| e.n > 0)
            .map(Estimate::var_of_mean)
            .fold(0.0, f64::max)
    }

    /// `W^N`.
    pub fn mean_cumulative_delay(&self) -> f64 {
        self.cumulative.last().map_or(0.0, |e| e.mean)
    }
}

/// Per-stop savings `W^s(baseline) − W^s(strategy)` over replications paired
/// by index, s = 0..=N.
pub fn paired_savings(baseline: &[MetricsRecord], strategy: &[MetricsRecord]) -> Vec<Estimate> {
    let n = baseline.len().min(strategy.len());
    let stops = baseline.first().map_or(0, |r| r.cumulative.len());
    (0..stops)
        .map(|s| {
            let d: Vec<f64> = (0..n)
                .map(|i| baseline[i].cumulative[s] - strategy[i].cumulative[s])
                .collect();
            Estimate::from_samples(&d)
        })
        .collect()
}

pub const STOP_HEADER: [&str; 4] = ["stop", "w", "W", "ci_halfwidth"];
pub const COMPARISON_HEADER: [&str; 7] = [
    "strategy",
    "params",
    "grand_cv",
    "mean_cumulative_delay",
    "hold_delay",
    "replications",
    "converged",
];
pub const SAVINGS_HEADER: [&str; 3] = ["stop", "savings", "ci_halfwidth"];

/// Writes `stop,w,W,ci_halfwidth`. Row 0 is the control point, where `w` and
/// `W` are the mean holding delay. The half-width is that of `w`.
pub fn write_stop_csv<W: io::Write>(agg: &AggregateMetrics, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(STOP_HEADER)?;
    out.serialize((0, agg.mean_hold.mean, agg.cumulative[0].mean, agg.mean_hold.half_width()))?;
    for (i, e) in agg.stop_delay.iter().enumerate() {
        out.serialize((i + 1, e.mean, agg.cumulative[i + 1].mean, e.half_width()))?;
    }
    out.flush().map_err(|e| Error::Log(e.to_string()))?;
    Ok(())
}

/// One row of the strategy comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub params: String,
    pub grand_cv: f64,
    pub mean_cumulative_delay: f64,
    pub hold_delay: f64,
    pub replications: usize,
    pub converged: bool,
}

pub fn write_comparison_csv<W: io::Write>(rows: &[ComparisonRow], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(COMPARISON_HEADER)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::Log(e.to_string()))?;
    Ok(())
}

pub fn write_savings_csv<W: io::Write>(savings: &[Estimate], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SAVINGS_HEADER)?;
    for (s, e) in savings.iter().enumerate() {
        out.serialize((s, e.mean, e.half_width()))?;
    }
    out.flush().map_err(|e| Error::Log(e.to_string()))?;
    Ok(())
}
