use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Period in which a bus first reached the corridor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warmup,
    Rush,
    Runout,
}

/// One bus's visit to one stop, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusEvent {
    pub line: usize,
    pub bus: usize,
    pub stop: usize,
    pub a: f64,
    pub q: f64,
    pub s: f64,
    pub b: f64,
    pub d: f64,
    /// Holding delay of this bus, repeated on each of its records.
    pub hold: f64,
    pub phase: Phase,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    line: String,
    bus: usize,
    stop: usize,
    a: f64,
    q: f64,
    #[serde(rename = "S")]
    s: f64,
    b: f64,
    d: f64,
    hold: f64,
    phase: Phase,
}

pub const LOG_HEADER: [&str; 10] = ["line", "bus", "stop", "a", "q", "S", "b", "d", "hold", "phase"];

/// Append-only record of every stop visit in a replication.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BusEventLog {
    pub events: Vec<BusEvent>,
}

impl BusEventLog {
    pub fn push(&mut self, e: BusEvent) {
        self.events.push(e);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BusEvent> {
        self.events.iter()
    }

    pub fn rush(&self) -> impl Iterator<Item = &BusEvent> {
        self.events.iter().filter(|e| e.phase == Phase::Rush)
    }

    pub fn write_csv<W: io::Write>(&self, scenario: &Scenario, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for e in &self.events {
            out.serialize(Row {
                line: scenario.lines[e.line].id.clone(),
                bus: e.bus,
                stop: e.stop,
                a: e.a,
                q: e.q,
                s: e.s,
                b: e.b,
                d: e.d,
                hold: e.hold,
                phase: e.phase,
            })?;
        }
        out.flush().map_err(|e| Error::Log(e.to_string()))?;
        Ok(())
    }

    pub fn save_csv(&self, scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(scenario, io::BufWriter::new(file))
    }

    /// Reads a dumped log back. Line ids are resolved against `scenario`.
    pub fn read_csv<R: io::Read>(scenario: &Scenario, r: R) -> Result<BusEventLog> {
        let mut input = csv::Reader::from_reader(r);
        let header = input.headers()?.clone();
        if header.iter().ne(LOG_HEADER) {
            return Err(Error::Log(format!(
                "unexpected header {:?}",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let mut log = BusEventLog::default();
        for row in input.deserialize() {
            let row: Row = row?;
            let line = scenario
                .line_index(&row.line)
                .ok_or_else(|| Error::Log(format!("unknown line {}", row.line)))?;
            log.push(BusEvent {
                line,
                bus: row.bus,
                stop: row.stop,
                a: row.a,
                q: row.q,
                s: row.s,
                b: row.b,
                d: row.d,
                hold: row.hold,
                phase: row.phase,
            });
        }
        Ok(log)
    }

    pub fn load_csv(scenario: &Scenario, path: impl AsRef<Path>) -> Result<BusEventLog> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        BusEventLog::read_csv(scenario, io::BufReader::new(file))
    }
}
