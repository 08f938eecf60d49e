#![allow(dead_code)]

use std::collections::BTreeMap;

use bushold_core::scenario::{DwellDefaults, Line, Link, Phases, Stop};
use bushold_core::{Scenario, StrategySpec};

pub fn line(id: &str, headway: f64, cv: f64, first: usize, last: usize) -> Line {
    Line {
        id: id.into(),
        headway_s: headway,
        arrival_cv: cv,
        group: None,
        held: true,
        first_stop: first,
        last_stop: last,
    }
}

pub fn stop(index: usize, berths: usize) -> Stop {
    Stop {
        index,
        berths,
        boarding: BTreeMap::new(),
        common: BTreeMap::new(),
        alighting: BTreeMap::new(),
        lost_time_s: None,
        board_time_s: None,
        alight_time_s: None,
    }
}

/// Corridor with no demand and the given link times.
pub fn corridor(lines: Vec<Line>, berths: &[usize], links: &[(f64, f64)], warmup: f64, rush: f64) -> Scenario {
    let mut s = Scenario {
        schema_version: 1,
        name: "test".into(),
        gamma: 0.0,
        time_step_s: 1.0,
        demand_factor: 1.0,
        seed: 11,
        phases: Phases {
            warmup_s: warmup,
            warmup_demand_factor: 0.3,
            rush_s: rush,
            runout_max_s: 14_400.0,
        },
        strategy: StrategySpec::named("none"),
        dwell: DwellDefaults::default(),
        lines,
        stops: berths.iter().enumerate().map(|(i, &c)| stop(i + 1, c)).collect(),
        links: links
            .iter()
            .enumerate()
            .map(|(i, &(mean_s, std_s))| Link { from: i + 1, mean_s, std_s })
            .collect(),
        groups: vec![],
    };
    s.validate().expect("test corridor is valid");
    s
}

/// Small stochastic corridor with demand on every stop.
pub fn busy(seed: u64, berths: usize, cv: f64) -> Scenario {
    let mut s = corridor(
        vec![line("A", 180.0, cv, 1, 4), line("B", 240.0, cv, 1, 4), line("C", 300.0, cv, 1, 3)],
        &[berths; 4],
        &[(40.0, 10.0), (55.0, 20.0), (30.0, 5.0)],
        900.0,
        3_600.0,
    );
    s.seed = seed;
    s.lines[0].group = Some("g".into());
    s.lines[1].group = Some("g".into());
    s.gamma = 0.5;
    for st in &mut s.stops {
        let i = st.index as f64;
        st.boarding.insert("A".into(), 0.01 + 0.002 * i);
        st.boarding.insert("B".into(), 0.01 + 0.002 * i);
        st.common.insert("g".into(), 0.02 + 0.004 * i);
        if st.index <= 3 {
            st.boarding.insert("C".into(), 0.015);
        }
        st.alighting.insert("A".into(), 0.01);
        st.alighting.insert("B".into(), 0.008);
    }
    s.validate().expect("busy corridor is valid");
    s
}
