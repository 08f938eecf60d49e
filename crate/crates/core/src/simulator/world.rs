use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::control_point::{
    predict_arrivals, Anchor, FirstStopHistory, HoldContext, HoldingStrategy, LaneKind,
};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::simulator::log::{BusEvent, BusEventLog, Phase};
use crate::stochastic::{
    gen_arrival_times, stochastic_round, ArrivalSchedule, LinkSampler, PatronClock, Purpose,
    RngStream,
};
use crate::stop_engine::{BusRef, StopParams, StopState};

/// Time `x` rounded up to the simulation grid, as a tick count.
fn ceil_tick(x: f64, dt: f64) -> i64 {
    // tolerate representation error just above a grid point
    (x / dt - 1e-9).ceil() as i64
}

#[derive(Debug)]
struct LineRt {
    schedule: ArrivalSchedule,
    /// Link travel time of bus j over link s→s+1, `[j - 1][s - 1]`.
    link_times: Vec<Vec<f64>>,
    /// Uniform variates for alighting rounding, `[j - 1][s - 1]`.
    alight_u: Vec<Vec<f64>>,
    /// Estimated boarding rate times boarding time at stop 1.
    demand_product: f64,
    /// Planned dwell at stop 1.
    planned_dwell: f64,
    /// Whether this line's buses go through the holding logic.
    controlled: bool,
}

#[derive(Debug, Clone)]
struct BusRt {
    bus: BusRef,
    first_arrival: f64,
    phase: Phase,
    hold: f64,
    finished: bool,
}

#[derive(Debug, Default)]
struct Lane {
    queue: VecDeque<usize>,
    last_release: Option<f64>,
    head_release: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Source {
    Line(usize),
    Group(usize),
}

#[derive(Debug)]
struct PatronSource {
    source: Source,
    rush_rate: f64,
    clock: PatronClock,
}

type PendingKey = (i64, usize, usize, usize);
type TransitKey = (i64, usize, usize, usize, usize);

/// State of one replication.
pub struct World<'a> {
    sc: &'a Scenario,
    strategy: &'a dyn HoldingStrategy,
    dt: f64,
    tick: i64,
    warm_end: f64,
    rush_end: f64,
    runout_end: f64,
    demand_switched: bool,
    lines: Vec<LineRt>,
    buses: Vec<BusRt>,
    stops: Vec<StopState>,
    sources: Vec<Vec<PatronSource>>,
    patron_rngs: Vec<ChaCha8Rng>,
    /// First arrivals not yet materialised: (tick, line, j, bus id).
    pending: BinaryHeap<Reverse<PendingKey>>,
    lanes: Vec<Lane>,
    /// Buses on links: (arrival tick, line, j, bus id, next stop).
    transit: BinaryHeap<Reverse<TransitKey>>,
    /// Buses that left a stop this step: (bus id, stop, link start time).
    leaving: Vec<(usize, usize, f64)>,
    /// Arrival time of the line's previous bus at each stop.
    last_arrival: Vec<Vec<Option<f64>>>,
    /// Previous release from stop 1 per line, for stop-1-anchored rules.
    first_stop_release: Vec<Option<f64>>,
    log: BusEventLog,
    unfinished: usize,
}

impl<'a> World<'a> {
    pub fn new(sc: &'a Scenario, strategy: &'a dyn HoldingStrategy, replication: u64) -> Result<Self> {
        let dt = sc.time_step_s;
        let n = sc.stop_count();
        let warm_end = sc.phases.warmup_s;
        let rush_end = warm_end + sc.phases.rush_s;
        let stream = |p| RngStream::new(sc.seed, replication, p).rng();

        if strategy.holds() && strategy.lane() == LaneKind::Group {
            if let Some(l) = sc.lines.iter().find(|l| l.held && l.group.is_none()) {
                return Err(Error::config(format!(
                    "held line {} belongs to no group but the strategy holds by group",
                    l.id
                )));
            }
        }

        let samplers: Vec<LinkSampler> = sc.links.iter().map(LinkSampler::new).collect();
        let mut lines = Vec::with_capacity(sc.lines.len());
        let mut buses = Vec::new();
        let mut pending = BinaryHeap::new();
        for (l, line) in sc.lines.iter().enumerate() {
            let raw = gen_arrival_times(line, rush_end, &mut stream(Purpose::Arrivals(l)));
            let schedule = ArrivalSchedule {
                times: raw.times.iter().map(|&x| ceil_tick(x, dt) as f64 * dt).collect(),
            };
            let mut rng = stream(Purpose::LinkTimes(l));
            let link_times = (0..schedule.len())
                .map(|_| samplers.iter().map(|s| s.sample(&mut rng)).collect())
                .collect();
            let mut rng = stream(Purpose::Alighting(l));
            let alight_u = (0..schedule.len())
                .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
                .collect();

            let (demand_product, planned_dwell) = if line.serves(1) {
                let h = line.headway_s;
                let lambda = sc.effective_boarding_rate(1, l) * sc.demand_factor;
                let alight = sc.alighting_rate(1, l) * sc.demand_factor;
                (
                    lambda * sc.board_time(1),
                    sc.lost_time(1) + sc.board_time(1) * lambda * h + sc.alight_time(1) * alight * h,
                )
            } else {
                (0.0, 0.0)
            };

            let group = sc.group_of(l);
            for (i, &a) in schedule.times.iter().enumerate() {
                let id = buses.len();
                let phase = if a < warm_end {
                    Phase::Warmup
                } else if a < rush_end {
                    Phase::Rush
                } else {
                    Phase::Runout
                };
                buses.push(BusRt {
                    bus: BusRef { id, line: l, group, j: i + 1 },
                    first_arrival: a,
                    phase,
                    hold: 0.0,
                    finished: false,
                });
                pending.push(Reverse(((a / dt).round() as i64, l, i + 1, id)));
            }
            lines.push(LineRt {
                schedule,
                link_times,
                alight_u,
                demand_product,
                planned_dwell,
                controlled: line.held && strategy.holds(),
            });
        }

        let stops: Vec<StopState> = (1..=n)
            .map(|s| {
                let params = StopParams {
                    lost_time: sc.lost_time(s),
                    board_time: sc.board_time(s),
                    alight_time: sc.alight_time(s),
                };
                StopState::new(s, sc.stop(s).berths, params, sc.lines.len(), sc.groups.len())
            })
            .collect();

        let warm = sc.demand_factor * sc.phases.warmup_demand_factor;
        let rush = sc.demand_factor;
        let mut patron_rngs = Vec::with_capacity(n);
        let mut sources = Vec::with_capacity(n);
        for s in 1..=n {
            let mut rng = stream(Purpose::Patrons(s));
            let mut list = Vec::new();
            let base = (0..sc.lines.len())
                .map(|l| (Source::Line(l), sc.boarding_rate(s, l)))
                .chain((0..sc.groups.len()).map(|g| (Source::Group(g), sc.common_rate(s, g))));
            for (source, r) in base {
                if r > 0.0 {
                    list.push(PatronSource {
                        source,
                        rush_rate: r * rush,
                        clock: PatronClock::new(r * warm, 0.0, &mut rng),
                    });
                }
            }
            sources.push(list);
            patron_rngs.push(rng);
        }

        let lane_count = match strategy.lane() {
            LaneKind::Line => sc.lines.len(),
            LaneKind::Group => sc.groups.len(),
        };
        let unfinished = buses.len();
        Ok(World {
            sc,
            strategy,
            dt,
            tick: 0,
            warm_end,
            rush_end,
            runout_end: rush_end + sc.phases.runout_max_s,
            demand_switched: false,
            lines,
            buses,
            stops,
            sources,
            patron_rngs,
            pending,
            lanes: (0..lane_count).map(|_| Lane::default()).collect(),
            transit: BinaryHeap::new(),
            leaving: Vec::new(),
            last_arrival: vec![vec![None; n]; sc.lines.len()],
            first_stop_release: vec![None; sc.lines.len()],
            log: BusEventLog::default(),
            unfinished,
        })
    }

    pub fn clock(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn log(&self) -> &BusEventLog {
        &self.log
    }

    pub fn stops(&self) -> &[StopState] {
        &self.stops
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    /// Buses that have not yet left their last stop.
    pub fn unfinished(&self) -> usize {
        self.unfinished
    }

    /// Buses at the control point or in a holding lane.
    pub fn buses_waiting_to_enter(&self) -> usize {
        self.pending.len() + self.lanes.iter().map(|l| l.queue.len()).sum::<usize>()
    }

    pub fn buses_in_transit(&self) -> usize {
        self.transit.len()
    }

    /// All buses finished, or the run-out bound was reached.
    pub fn is_done(&self) -> bool {
        let t = self.clock();
        (self.unfinished == 0 && t >= self.rush_end) || t >= self.runout_end
    }

    /// Runs to completion and hands back the log. The flag is `false` if the
    /// run-out bound cut off buses still in the system.
    pub fn run(mut self) -> Result<(BusEventLog, bool)> {
        while !self.is_done() {
            self.step()?;
        }
        let complete = self.unfinished == 0;
        Ok((self.log, complete))
    }

    /// Advances one time step: control point, stops, boarding and alighting,
    /// links.
    pub fn step(&mut self) -> Result<()> {
        let t = self.clock();
        self.control_point(t)?;
        self.serve_stops(t)?;
        self.patrons(t);
        self.links();
        self.tick += 1;
        Ok(())
    }

    fn lane_of(&self, id: usize) -> usize {
        let bus = &self.buses[id].bus;
        match self.strategy.lane() {
            LaneKind::Line => bus.line,
            LaneKind::Group => bus.group.expect("checked when the world was built"),
        }
    }

    fn through_lane(&self, id: usize) -> bool {
        let line = self.buses[id].bus.line;
        self.lines[line].controlled && self.strategy.anchor() == Anchor::Entrance
    }

    fn control_point(&mut self, t: f64) -> Result<()> {
        let mut direct = Vec::new();
        while let Some(&Reverse((tick, _, _, id))) = self.pending.peek() {
            if tick > self.tick {
                break;
            }
            self.pending.pop();
            if self.through_lane(id) {
                let lane = self.lane_of(id);
                self.lanes[lane].queue.push_back(id);
            } else {
                direct.push(id);
            }
        }
        for id in direct {
            let b = self.buses[id].bus;
            let first = self.sc.lines[b.line].first_stop;
            self.stops[first - 1].arrive(b, t);
        }

        let mut released = Vec::new();
        for lane in 0..self.lanes.len() {
            while let Some(&id) = self.lanes[lane].queue.front() {
                let release = match self.lanes[lane].head_release {
                    Some(r) => r,
                    None => {
                        let r = self.entrance_release(lane, id)?;
                        self.lanes[lane].head_release = Some(r);
                        r
                    }
                };
                if release > t {
                    break;
                }
                let l = &mut self.lanes[lane];
                l.queue.pop_front();
                l.head_release = None;
                l.last_release = Some(release);
                self.buses[id].hold = release - self.buses[id].first_arrival;
                released.push(id);
            }
        }
        released.sort_by_key(|&id| (self.buses[id].bus.line, self.buses[id].bus.j));
        for id in released {
            self.stops[0].arrive(self.buses[id].bus, t);
        }
        Ok(())
    }

    fn entrance_release(&self, lane: usize, id: usize) -> Result<f64> {
        let bus = &self.buses[id];
        let b = bus.bus;
        let prev = self.lanes[lane].last_release;
        let floor = prev.map_or(bus.first_arrival, |p| p.max(bus.first_arrival));
        if bus.phase == Phase::Warmup {
            return Ok(floor);
        }
        let line = &self.sc.lines[b.line];
        let rt = &self.lines[b.line];
        let spec = &self.sc.strategy;
        let predicted = if self.strategy.uses_predictions() {
            predict_arrivals(spec.prediction, &rt.schedule, line.headway_s, b.j, spec.horizon)
        } else {
            Vec::new()
        };
        let ctx = HoldContext {
            line: b.line,
            group: b.group,
            bus: b.j,
            headway: line.headway_s,
            arrival: bus.first_arrival,
            scheduled_arrival: b.j as f64 * line.headway_s,
            prev_release: prev,
            prev_arrival: rt.schedule.get(b.j - 1),
            group_headway: b.group.map(|g| self.sc.groups[g].joint_headway_s),
            first_stop: None,
            demand_product: rt.demand_product,
            alpha: spec.alpha,
            predicted_arrivals: &predicted,
        };
        let decision = self.strategy.decide(&ctx)?;
        Ok(ceil_tick(decision.release.max(floor), self.dt) as f64 * self.dt)
    }

    /// Release time from the holding area after stop 1 for stop-1-anchored
    /// rules.
    fn first_stop_release(&self, id: usize, d: f64) -> Result<f64> {
        let bus = &self.buses[id];
        let b = bus.bus;
        let prev = self.first_stop_release[b.line];
        let floor = prev.map_or(d, |p| p.max(d));
        if bus.phase == Phase::Warmup {
            return Ok(floor);
        }
        let line = &self.sc.lines[b.line];
        let rt = &self.lines[b.line];
        let spec = &self.sc.strategy;
        let next = predict_arrivals(spec.prediction, &rt.schedule, line.headway_s, b.j, 1)[0];
        let ctx = HoldContext {
            line: b.line,
            group: b.group,
            bus: b.j,
            headway: line.headway_s,
            arrival: bus.first_arrival,
            scheduled_arrival: b.j as f64 * line.headway_s,
            prev_release: prev,
            prev_arrival: rt.schedule.get(b.j - 1),
            group_headway: b.group.map(|g| self.sc.groups[g].joint_headway_s),
            first_stop: Some(FirstStopHistory {
                departure: d,
                prev_departure: prev,
                scheduled_departure: b.j as f64 * line.headway_s + rt.planned_dwell,
                predicted_next_departure: Some(next + rt.planned_dwell),
            }),
            demand_product: rt.demand_product,
            alpha: spec.alpha,
            predicted_arrivals: &[],
        };
        let decision = self.strategy.decide(&ctx)?;
        Ok(ceil_tick(decision.release.max(floor), self.dt) as f64 * self.dt)
    }

    fn demand_scale(&self, t: f64) -> f64 {
        if t < self.warm_end {
            self.sc.demand_factor * self.sc.phases.warmup_demand_factor
        } else {
            self.sc.demand_factor
        }
    }

    fn serve_stops(&mut self, t: f64) -> Result<()> {
        let first_stop_holding = self.strategy.holds() && self.strategy.anchor() == Anchor::FirstStop;
        for si in 0..self.stops.len() {
            let s = si + 1;
            for r in self.stops[si].try_exit(t) {
                let id = r.bus.id;
                let line = r.bus.line;
                let mut start = r.d;
                if s == 1 && first_stop_holding && self.lines[line].controlled {
                    start = self.first_stop_release(id, r.d)?;
                    self.first_stop_release[line] = Some(start);
                    self.buses[id].hold = start - r.d;
                }
                let bus = &self.buses[id];
                self.log.push(BusEvent {
                    line,
                    bus: r.bus.j,
                    stop: s,
                    a: r.a,
                    q: r.q,
                    s: r.s,
                    b: r.b,
                    d: r.d,
                    hold: bus.hold,
                    phase: bus.phase,
                });
                if s == self.sc.lines[line].last_stop {
                    self.buses[id].finished = true;
                    self.unfinished -= 1;
                } else {
                    self.leaving.push((id, s, start));
                }
            }

            if let Some(berth) = self.stops[si].try_enter(t) {
                let occ = self.stops[si].berth(berth).expect("just entered");
                let (b, a) = (occ.bus, occ.arrival);
                let line = &self.sc.lines[b.line];
                let headway = self.last_arrival[b.line][si].map_or(line.headway_s, |prev| a - prev);
                self.last_arrival[b.line][si] = Some(a);
                let mean = self.sc.alighting_rate(s, b.line) * self.demand_scale(t) * headway;
                let h = stochastic_round(mean.max(0.0), self.lines[b.line].alight_u[b.j - 1][si]);
                self.stops[si].begin_dwell(berth, h);
            }
        }
        Ok(())
    }

    fn patrons(&mut self, t: f64) {
        let switch = !self.demand_switched && t >= self.warm_end;
        for si in 0..self.stops.len() {
            let rng = &mut self.patron_rngs[si];
            let stop = &mut self.stops[si];
            for src in &mut self.sources[si] {
                let mut n = 0;
                if switch {
                    n += src.clock.count_until(self.warm_end, rng);
                    src.clock.set_rate(src.rush_rate, self.warm_end, rng);
                }
                n += src.clock.count_until(t, rng);
                for _ in 0..n {
                    match src.source {
                        Source::Line(l) => stop.add_line_patron(l),
                        Source::Group(g) => stop.assign_boarder(g),
                    };
                }
            }
            stop.progress(t, self.dt);
        }
        if switch {
            self.demand_switched = true;
        }
    }

    fn links(&mut self) {
        for (id, s, start) in self.leaving.drain(..) {
            let b = self.buses[id].bus;
            let travel = self.lines[b.line].link_times[b.j - 1][s - 1];
            let tick = ceil_tick(start + travel, self.dt);
            self.transit.push(Reverse((tick, b.line, b.j, id, s + 1)));
        }
        let horizon = self.tick + 1;
        while let Some(&Reverse((tick, _, _, id, stop))) = self.transit.peek() {
            if tick > horizon {
                break;
            }
            self.transit.pop();
            self.stops[stop - 1].arrive(self.buses[id].bus, tick as f64 * self.dt);
        }
    }
}
