//! Acceptance criteria A1 to A9. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fail. Pass criterion names (`A3 A5`) to run a subset.

mod common;

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use bushold_core::analytics::{coefficient, mc_max_mean};
use bushold_core::metrics::{AggregateMetrics, Estimate, LineFilter};
use bushold_core::simulator::{
    run_experiment, run_replication, stopping_index, BusEvent, ExperimentResult,
    ReplicationSettings, World,
};
use bushold_core::{Scenario, StrategyRegistry, StrategySpec};
use common::{corridor, line};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const THRESHOLD: f64 = 5e-4;
/// The homogeneous high-load corridor needs well over 10⁴ replications.
const MAX_REPS: usize = 50_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn settings(filter: LineFilter) -> ReplicationSettings {
    ReplicationSettings { variance_threshold: THRESHOLD, max_reps: MAX_REPS, filter, ..Default::default() }
}

/// Experiments keyed by a label so that criteria share runs.
#[derive(Default)]
struct Runs {
    cache: HashMap<String, ExperimentResult>,
}

impl Runs {
    fn get(&mut self, key: &str, scenario: &Scenario, filter: LineFilter) -> &ExperimentResult {
        self.cache.entry(key.to_string()).or_insert_with(|| {
            let t = Instant::now();
            let r = run_experiment(scenario, &settings(filter)).expect("experiment runs");
            eprintln!(
                "  [{key}] {} reps, converged={}, complete={}, {:.1}s",
                r.replications(),
                r.converged,
                r.complete,
                t.elapsed().as_secs_f64()
            );
            r
        })
    }
}

fn gbrt(demand: f64, strategy: StrategySpec) -> Scenario {
    let mut s = Scenario::gbrt().scale_demand(demand).unwrap();
    s.strategy = strategy;
    s
}

fn min_headway(eta: f64) -> StrategySpec {
    let mut s = StrategySpec::named("min_headway");
    s.eta = eta;
    s
}

fn trustworthy(r: &ExperimentResult) -> bool {
    r.converged && r.complete
}

fn a1(_: &mut Runs) -> Outcome {
    let c2 = coefficient(2).unwrap();
    let c300 = coefficient(300).unwrap();
    outcome(
        (c2 - 0.60).abs() <= 0.005 && (c300 - 2.87).abs() <= 0.005,
        format!("coefficient(2) = {c2:.4}, coefficient(300) = {c300:.4}"),
    )
}

fn a2(_: &mut Runs) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_220_901);
    let mut pass = true;
    let mut parts = Vec::new();
    for j in [2, 10, 100] {
        let mc = mc_max_mean(j, 1_000_000, &mut rng);
        let err = (coefficient(j).unwrap() - mc).abs() / mc;
        pass &= err <= 0.01;
        parts.push(format!("j={j} rel.err {:.2}%", 100.0 * err));
        if j == 2 {
            let exact = 1.0 / std::f64::consts::PI.sqrt();
            let e = (mc - exact).abs() / exact;
            pass &= e <= 0.01;
            parts.push(format!("j=2 MC vs 1/sqrt(pi) {:.2}%", 100.0 * e));
        }
    }
    outcome(pass, parts.join(", "))
}

fn a3(runs: &mut Runs) -> Outcome {
    let h09 = runs.get("held eta=0.9", &gbrt(1.0, min_headway(0.9)), LineFilter::HeldOnly);
    let (hold09, ok09) = (h09.aggregate.mean_hold.mean, trustworthy(h09));
    let h10 = runs.get("held eta=1.0", &gbrt(1.0, min_headway(1.0)), LineFilter::HeldOnly);
    let (hold10, ok10) = (h10.aggregate.mean_hold.mean, trustworthy(h10));
    let reduction = 100.0 * (1.0 - hold09 / hold10);
    outcome(
        ok09 && ok10 && (hold09 / 2.2 - 1.0).abs() <= 0.20 && (reduction - 58.0).abs() <= 10.0,
        format!("hold at eta=0.9 {hold09:.2} min/bus, at eta=1.0 {hold10:.2}, reduction {reduction:.1}%"),
    )
}

/// Positions where the sequence drops; a drop is tolerated when it lies within
/// the two half-widths.
fn inversions(xs: &[Estimate]) -> (usize, bool) {
    let mut count = 0;
    let mut within = true;
    for w in xs.windows(2) {
        if w[1].mean < w[0].mean {
            count += 1;
            within &= w[0].mean - w[1].mean <= w[0].half_width() + w[1].half_width();
        }
    }
    (count, within)
}

fn a4(runs: &mut Runs) -> Outcome {
    let r = runs.get("homogeneous none", &Scenario::homogeneous(), LineFilter::All);
    let agg: &AggregateMetrics = &r.aggregate;
    let (wi, wok) = inversions(&agg.stop_delay);
    let (ci, cok) = inversions(&agg.arrival_cv);
    let w: Vec<String> = agg.stop_delay.iter().map(|e| format!("{:.2}", e.mean)).collect();
    let c: Vec<String> = agg.arrival_cv.iter().map(|e| format!("{:.2}", e.mean)).collect();
    outcome(
        trustworthy(r) && wi <= 1 && wok && ci <= 1 && cok,
        format!("w = [{}], arrival cv = [{}], inversions {wi}/{ci}", w.join(" "), c.join(" ")),
    )
}

fn a5(runs: &mut Runs) -> Outcome {
    let none = runs.get("df1.5 none", &gbrt(1.5, StrategySpec::named("none")), LineFilter::All);
    let (w0, cv0, ok0) = (
        none.aggregate.stop_delay.iter().map(|e| e.mean).collect::<Vec<_>>(),
        none.aggregate.grand_cv.mean,
        trustworthy(none),
    );
    let held = runs.get("df1.5 min_headway eta=0.9", &gbrt(1.5, min_headway(0.9)), LineFilter::All);
    let w1: Vec<f64> = held.aggregate.stop_delay.iter().map(|e| e.mean).collect();
    let cv1 = held.aggregate.grand_cv.mean;
    let lower = w0.iter().zip(&w1).filter(|(a, b)| b < a).count();
    outcome(
        ok0 && trustworthy(held) && lower == w0.len() && cv1 < cv0,
        format!("w lower at {lower}/{} stops, grand cv {cv1:.3} vs {cv0:.3}", w0.len()),
    )
}

fn a6(runs: &mut Runs) -> Outcome {
    let none = runs.get("df1.5 none", &gbrt(1.5, StrategySpec::named("none")), LineFilter::All);
    let (cv_none, mut ok) = (none.aggregate.grand_cv.mean, trustworthy(none));
    let mut cvs = Vec::new();
    let mh = runs.get("df1.5 min_headway eta=0.9", &gbrt(1.5, min_headway(0.9)), LineFilter::All);
    ok &= trustworthy(mh);
    cvs.push(("min_headway".to_string(), mh.aggregate.grand_cv.mean));
    for name in ["schedule_based", "daganzo09", "xuan11_simple", "daganzo11", "bartholdi12", "berrebi15"] {
        let r = runs.get(&format!("df1.5 {name}"), &gbrt(1.5, StrategySpec::named(name)), LineFilter::All);
        ok &= trustworthy(r);
        cvs.push((name.to_string(), r.aggregate.grand_cv.mean));
    }
    let all_below = cvs.iter().all(|(_, cv)| *cv < cv_none);
    let best = cvs.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let list: Vec<String> = cvs.iter().map(|(n, cv)| format!("{n} {cv:.3}")).collect();
    outcome(
        ok && all_below && best.0 == "min_headway",
        format!("none {cv_none:.3}; {}", list.join(", ")),
    )
}

fn a7(runs: &mut Runs) -> Outcome {
    let mut out = HashMap::new();
    for gamma in [0.9, 0.0] {
        for (label, name) in [("line", "min_headway"), ("group", "min_headway_group")] {
            let mut s = Scenario::gbrt().with_gamma(gamma).unwrap();
            s.strategy = min_headway(1.0);
            s.strategy.name = name.into();
            let r = runs.get(&format!("gamma={gamma} {label}"), &s, LineFilter::All);
            out.insert(
                (gamma.to_bits(), label),
                (r.aggregate.mean_hold_held.mean, r.aggregate.mean_cumulative_delay(), trustworthy(r)),
            );
        }
    }
    let k = |g: f64, l: &'static str| out[&(g.to_bits(), l)];
    let (hl, _, ok1) = k(0.9, "line");
    let (hg, _, ok2) = k(0.9, "group");
    let (_, wl, ok3) = k(0.0, "line");
    let (_, wg, ok4) = k(0.0, "group");
    outcome(
        ok1 && ok2 && ok3 && ok4 && hg < hl && wg > wl,
        format!("gamma=0.9 hold group {hg:.2} vs line {hl:.2}; gamma=0 W group {wg:.2} vs line {wl:.2}"),
    )
}

fn a8(_: &mut Runs) -> Outcome {
    let mut fails = Vec::new();
    let sc = gbrt(1.5, min_headway(0.9));
    let strategy = StrategyRegistry::builtin().build(&sc.strategy).unwrap();
    let mut world = World::new(&sc, strategy.as_ref(), 0).unwrap();
    while !world.is_done() {
        world.step().unwrap();
    }
    let log = world.log();
    if !log.iter().all(|e| e.d == e.a + e.q + e.s + e.b) {
        fails.push("d = a + q + S + b");
    }
    for stop in 1..=sc.stop_count() {
        let mut ev: Vec<&BusEvent> = log.iter().filter(|e| e.stop == stop).collect();
        ev.sort_by(|x, y| x.d.total_cmp(&y.d));
        if !ev.windows(2).all(|w| w[0].a + w[0].q <= w[1].a + w[1].q && w[0].a <= w[1].a) {
            fails.push("fifo departures");
            break;
        }
    }
    let conserved = world.unfinished() == 0
        && world.stops().iter().all(|st| {
            let c = st.counters;
            c.buses_arrived == c.buses_departed
                && c.patrons_generated == c.patrons_boarded + st.patrons_present()
        });
    if !conserved {
        fails.push("conservation");
    }
    let mut gen = corridor(vec![line("A", 120.0, 0.1, 1, 1)], &[4], &[], 600.0, 200_000.0);
    gen.dwell.lost_time_s = 1.0;
    let cv = run_replication(&gen, 0).unwrap().metrics.arrival_cv[0].unwrap();
    if (cv / (std::f64::consts::SQRT_2 * 0.1) - 1.0).abs() > 0.05 {
        fails.push("arrival headway cv");
    }
    if run_replication(&sc, 3).unwrap().log != run_replication(&sc, 3).unwrap().log {
        fails.push("replay");
    }
    let mut one = corridor(vec![line("A", 100.0, 0.0, 1, 1)], &[1], &[], 50.0, 200.0);
    one.dwell.lost_time_s = 150.0;
    let trace: Vec<[f64; 5]> = run_replication(&one, 0)
        .unwrap()
        .log
        .iter()
        .map(|e| [e.a, e.q, e.s, e.b, e.d])
        .collect();
    if trace != [[100.0, 0.0, 150.0, 0.0, 250.0], [200.0, 50.0, 150.0, 0.0, 400.0]] {
        fails.push("1-berth trace");
    }
    let detail = if fails.is_empty() {
        format!("{} events, arrival headway cv {cv:.4}", log.len())
    } else {
        format!("failed: {}", fails.join(", "))
    };
    outcome(fails.is_empty(), detail)
}

fn a9(runs: &mut Runs) -> Outcome {
    let r = runs.get("df1 none", &gbrt(1.0, StrategySpec::named("none")), LineFilter::All);
    let var = r.aggregate.max_stop_delay_variance();
    let n = r.replications();
    let base = settings(LineFilter::All);
    let mut last = 0;
    let mut monotone = true;
    for th in [4e-3, 2e-3, 1e-3, 5e-4] {
        let k = stopping_index(&r.records, &ReplicationSettings { variance_threshold: th, ..base })
            .unwrap_or(usize::MAX);
        monotone &= k >= last;
        last = k;
    }
    monotone &= last == n;
    outcome(
        r.converged && var <= THRESHOLD && monotone,
        format!("stopped at {n} reps with max var {var:.2e} min^2, monotone={monotone}"),
    )
}

type Criterion = fn(&mut Runs) -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 9] = [
        ("A1", a1),
        ("A2", a2),
        ("A3", a3),
        ("A4", a4),
        ("A5", a5),
        ("A6", a6),
        ("A7", a7),
        ("A8", a8),
        ("A9", a9),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut runs = Runs::default();
    let mut failed = 0;
    for (name, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == name) {
            continue;
        }
        let t = Instant::now();
        let o = check(&mut runs);
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{name}: {verdict} ({:.1}s) {}", t.elapsed().as_secs_f64(), o.detail);
        failed += usize::from(!o.pass);
    }
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
