//! Random-variate generation.
//!
//! Every random quantity in a replication comes from an [`RngStream`] keyed by
//! `(seed, replication, purpose)`. The key is turned into a ChaCha8 generator
//! as follows:
//!
//! * the 64-bit ChaCha seed is `splitmix64(seed ^ splitmix64(replication))`;
//! * the ChaCha stream number is `(purpose kind << 32) | purpose index`.
//!
//! ChaCha output is platform independent, so a given key reproduces the same
//! variates on every machine. Because each purpose owns a stream, runs that
//! differ only in control strategy consume identical arrival, link and patron
//! variates (common random numbers).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};

use crate::scenario::{Line, Link};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Control-point (or first-stop) arrival schedule of a line.
    Arrivals(usize),
    /// Link travel times of a line's buses.
    LinkTimes(usize),
    /// Stochastic rounding of a line's alighting counts.
    Alighting(usize),
    /// Patron arrivals at a stop.
    Patrons(usize),
    /// Monte Carlo checks that do not belong to a replication.
    Oracle(usize),
}

impl Purpose {
    fn stream_id(self) -> u64 {
        let (kind, index) = match self {
            Purpose::Arrivals(i) => (1u64, i),
            Purpose::LinkTimes(i) => (2, i),
            Purpose::Alighting(i) => (3, i),
            Purpose::Patrons(i) => (4, i),
            Purpose::Oracle(i) => (5, i),
        };
        (kind << 32) | (index as u64 & 0xffff_ffff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub replication: u64,
    pub purpose: Purpose,
}

impl RngStream {
    pub fn new(seed: u64, replication: u64, purpose: Purpose) -> Self {
        RngStream {
            seed,
            replication,
            purpose,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(self.replication)));
        rng.set_stream(self.purpose.stream_id());
        rng
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Arrival times of one line's buses, ascending, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSchedule {
    pub times: Vec<f64>,
}

impl ArrivalSchedule {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Arrival of bus `j` (1-based).
    pub fn get(&self, j: usize) -> Option<f64> {
        j.checked_sub(1).and_then(|i| self.times.get(i)).copied()
    }
}

/// Draws bus `j`'s arrival from `Normal(j·H, (C·H)²)` for `j = 1..=⌊horizon/H⌋`
/// and sorts the result, so that buses that overtook each other swap indices.
/// Negative draws are clamped to zero.
pub fn gen_arrival_times<R: Rng + ?Sized>(line: &Line, horizon: f64, rng: &mut R) -> ArrivalSchedule {
    let h = line.headway_s;
    let count = (horizon / h + 1e-9).floor() as usize;
    let sd = line.arrival_cv * h;
    let mut times: Vec<f64> = (1..=count)
        .map(|j| {
            let mean = j as f64 * h;
            if sd == 0.0 {
                mean
            } else {
                let z: f64 = rng.sample(StandardNormal);
                (mean + sd * z).max(0.0)
            }
        })
        .collect();
    times.sort_by(f64::total_cmp);
    ArrivalSchedule { times }
}

/// Log-space parameters of a lognormal with the given mean and standard
/// deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LognormalParams {
    pub mu_ln: f64,
    pub sigma_ln: f64,
}

impl LognormalParams {
    pub fn from_moments(mean: f64, std: f64) -> Self {
        let var_ln = (1.0 + (std / mean).powi(2)).ln();
        LognormalParams {
            mu_ln: mean.ln() - var_ln / 2.0,
            sigma_ln: var_ln.sqrt(),
        }
    }

    pub fn mean(&self) -> f64 {
        (self.mu_ln + self.sigma_ln * self.sigma_ln / 2.0).exp()
    }

    pub fn std(&self) -> f64 {
        let s2 = self.sigma_ln * self.sigma_ln;
        ((s2.exp() - 1.0) * (2.0 * self.mu_ln + s2).exp()).sqrt()
    }
}

/// Link travel-time sampler. A zero standard deviation yields the mean exactly.
#[derive(Debug, Clone, Copy)]
pub struct LinkSampler {
    mean: f64,
    params: Option<LognormalParams>,
}

impl LinkSampler {
    pub fn new(link: &Link) -> Self {
        let params = (link.std_s > 0.0).then(|| LognormalParams::from_moments(link.mean_s, link.std_s));
        LinkSampler {
            mean: link.mean_s,
            params,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.params {
            None => self.mean,
            Some(p) => {
                let z: f64 = rng.sample(StandardNormal);
                (p.mu_ln + p.sigma_ln * z).exp()
            }
        }
    }
}

pub fn sample_link_time<R: Rng + ?Sized>(link: &Link, rng: &mut R) -> f64 {
    LinkSampler::new(link).sample(rng)
}

/// Number of patrons arriving in `window` seconds at `rate` patrons/s.
pub fn gen_patron_count<R: Rng + ?Sized>(rate: f64, window: f64, rng: &mut R) -> u64 {
    let mean = rate * window;
    if mean <= 0.0 {
        return 0;
    }
    let n: f64 = Poisson::new(mean).expect("positive finite mean").sample(rng);
    n as u64
}

/// Poisson arrival process with a piecewise-constant rate, read out as counts
/// per time step.
///
/// Drawing exponential gaps costs one variate per patron instead of one per
/// step, and the counts over any window are Poisson with mean `rate·window`.
#[derive(Debug, Clone)]
pub struct PatronClock {
    rate: f64,
    next: f64,
}

impl PatronClock {
    pub fn new<R: Rng + ?Sized>(rate: f64, start: f64, rng: &mut R) -> Self {
        let mut clock = PatronClock {
            rate: 0.0,
            next: f64::INFINITY,
        };
        clock.set_rate(rate, start, rng);
        clock
    }

    /// Changes the rate from time `at` onward. Memorylessness makes restarting
    /// the gap at `at` exact.
    pub fn set_rate<R: Rng + ?Sized>(&mut self, rate: f64, at: f64, rng: &mut R) {
        self.rate = rate;
        self.next = if rate > 0.0 {
            at + Exp::new(rate).expect("positive rate").sample(rng)
        } else {
            f64::INFINITY
        };
    }

    /// Arrivals in `(.., until]` not yet counted.
    pub fn count_until<R: Rng + ?Sized>(&mut self, until: f64, rng: &mut R) -> u32 {
        let mut n = 0;
        if self.next > until {
            return 0;
        }
        let exp = Exp::new(self.rate).expect("positive rate");
        while self.next <= until {
            n += 1;
            self.next += exp.sample(rng);
        }
        n
    }
}

/// Rounds `x` down or up at random so that the expectation is `x`.
pub fn stochastic_round(x: f64, u: f64) -> u32 {
    let base = x.floor();
    let frac = x - base;
    base as u32 + u32::from(u < frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(h: f64, c: f64) -> Line {
        Line {
            id: "L".into(),
            headway_s: h,
            arrival_cv: c,
            group: None,
            held: true,
            first_stop: 1,
            last_stop: 1,
        }
    }

    fn rng(i: u64) -> ChaCha8Rng {
        RngStream::new(7, i, Purpose::Oracle(0)).rng()
    }

    #[test]
    fn zero_variance_schedule_is_the_grid() {
        let s = gen_arrival_times(&line(200.0, 0.0), 1000.0, &mut rng(0));
        assert_eq!(s.times, vec![200.0, 400.0, 600.0, 800.0, 1000.0]);
    }

    #[test]
    fn five_hour_b2_schedule_has_90_buses() {
        let s = gen_arrival_times(&line(200.0, 1.10), 5.0 * 3600.0, &mut rng(1));
        assert_eq!(s.len(), 90);
        assert!(s.times.windows(2).all(|w| w[0] <= w[1]));
        assert!(s.times.iter().all(|&t| t >= 0.0));
    }

    #[test]
    fn mean_offset_vanishes_over_replications() {
        // The sorted schedule keeps the overall mean of the draws, so the
        // average of a_j - jH over all j and many replications tends to zero.
        // Only clamping at zero can bias it, and only for the earliest buses.
        let l = line(200.0, 1.10);
        let reps = 2000;
        let mut acc = 0.0;
        let mut n = 0.0;
        for r in 0..reps {
            let s = gen_arrival_times(&l, 18000.0, &mut rng(r));
            for (j, t) in s.times.iter().enumerate().skip(3) {
                acc += t - (j + 1) as f64 * 200.0;
                n += 1.0;
            }
        }
        assert!((acc / n).abs() < 2.0, "mean offset {}", acc / n);
    }

    #[test]
    fn headway_cv_is_sqrt2_times_c() {
        let s = gen_arrival_times(&line(100.0, 0.1), 100_000.0 * 100.0, &mut rng(3));
        let hw: Vec<f64> = s.times.windows(2).map(|w| w[1] - w[0]).collect();
        let m = hw.iter().sum::<f64>() / hw.len() as f64;
        let sd = (hw.iter().map(|h| (h - m).powi(2)).sum::<f64>() / hw.len() as f64).sqrt();
        let cv = sd / m;
        let target = 2f64.sqrt() * 0.1;
        assert!((cv - target).abs() / target < 0.05, "cv {cv}");
    }

    #[test]
    fn lognormal_moment_matching() {
        // Reference values from 30-digit arithmetic.
        let p = LognormalParams::from_moments(53.1, 11.3);
        assert!((p.sigma_ln * p.sigma_ln - 0.044_290_919_499_889_54).abs() < 1e-14);
        assert!((p.mu_ln - 3.950_031_468_497_948_4).abs() < 1e-13);
        assert!((p.mean() - 53.1).abs() < 1e-10);
        assert!((p.std() - 11.3).abs() < 1e-10);
    }

    #[test]
    fn link_samples_match_moments() {
        let link = Link {
            from: 1,
            mean_s: 53.1,
            std_s: 11.3,
        };
        let sampler = LinkSampler::new(&link);
        let mut r = rng(4);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| sampler.sample(&mut r)).collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        let m = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((m - 53.1).abs() / 53.1 < 0.01, "mean {m}");
        assert!((sd - 11.3).abs() / 11.3 < 0.02, "sd {sd}");
    }

    #[test]
    fn degenerate_link_returns_mean() {
        let link = Link {
            from: 1,
            mean_s: 50.0,
            std_s: 0.0,
        };
        let mut r = rng(5);
        assert!((0..100).all(|_| sample_link_time(&link, &mut r) == 50.0));
    }

    #[test]
    fn patron_counts() {
        let mut r = rng(6);
        assert!((0..100).all(|_| gen_patron_count(0.0, 10.0, &mut r) == 0));

        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| gen_patron_count(0.1, 10.0, &mut r) as f64).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        assert!((m - 1.0).abs() < 0.01, "mean {m}");

        let xs: Vec<f64> = (0..n).map(|_| gen_patron_count(0.05, 200.0, &mut r) as f64).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((m - 10.0).abs() < 0.05, "mean {m}");
        assert!((v - 10.0).abs() < 0.2, "var {v}");
    }

    #[test]
    fn patron_clock_counts_are_poisson() {
        let mut r = rng(7);
        let mut clock = PatronClock::new(0.05, 0.0, &mut r);
        let windows = 100_000;
        let counts: Vec<f64> = (1..=windows)
            .map(|k| clock.count_until(k as f64 * 200.0, &mut r) as f64)
            .collect();
        let m = counts.iter().sum::<f64>() / windows as f64;
        let v = counts.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (windows - 1) as f64;
        assert!((m - 10.0).abs() < 0.05, "mean {m}");
        assert!((v - 10.0).abs() < 0.2, "var {v}");
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |p| {
            let mut r = RngStream::new(1, 2, p).rng();
            (0..4).map(|_| r.random::<u64>()).collect::<Vec<_>>()
        };
        let (a, b, c) = (draw(Purpose::Patrons(3)), draw(Purpose::Patrons(3)), draw(Purpose::Patrons(4)));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn stochastic_rounding_preserves_mean() {
        let mut r = rng(8);
        let n = 100_000;
        let s: u64 = (0..n).map(|_| stochastic_round(2.3, r.random()) as u64).sum();
        assert!((s as f64 / n as f64 - 2.3).abs() < 0.01);
        assert_eq!(stochastic_round(4.0, 0.999), 4);
    }
}
