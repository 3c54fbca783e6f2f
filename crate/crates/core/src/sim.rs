//! Exact event-driven simulation of the untruncated occupancy process.
//!
//! Events are sampled at the state level: the holding time is exponential
//! with the total rate of T1–T6 and the event is picked in proportion to its
//! rate. A DC flow is one customer served at its aggregate rate `E_j`. Each
//! area keeps two service clocks, the cumulative per-user rate on carrier 1
//! and on carrier 2, so the volume a flow received is read off the clocks at
//! departure; by the processor-sharing symmetry the departing flow is picked
//! uniformly within its class.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ctmc::{jfq_route_agg, jsq_route_agg, Policy, RouteDecision};
use crate::model::{bernoulli_probabilities, Aggregates, CellConfig, Slot, TrafficMix};
use crate::stats::{batch_ratio_ci, linear_trend, ConfidenceInterval, LinearTrend};
use crate::{Error, Result};

/// Routing of SC flows; DC flows are always volume balanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimPolicy {
    pub routing: Policy,
}

impl From<Policy> for SimPolicy {
    fn from(routing: Policy) -> Self {
        Self { routing }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowClass {
    Sc,
    Dc,
}

/// A completed flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRecord {
    pub class: FlowClass,
    pub area: usize,
    /// Mbit received on carrier 1 and carrier 2.
    pub carrier_volumes: (f64, f64),
    pub arrival: f64,
    pub completion: f64,
}

impl FlowRecord {
    pub fn volume(&self) -> f64 {
        self.carrier_volumes.0 + self.carrier_volumes.1
    }

    pub fn sojourn(&self) -> f64 {
        self.completion - self.arrival
    }
}

/// `Σ volume / Σ sojourn` over `records`.
pub fn flow_throughput_estimate<'a>(
    records: impl IntoIterator<Item = &'a FlowRecord>,
) -> Result<f64> {
    let (mut v, mut t, mut n) = (0.0, 0.0, 0usize);
    for r in records {
        v += r.volume();
        t += r.sojourn();
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoData("no completed flows in the group".into()));
    }
    Ok(v / t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Simulated seconds.
    Horizon(f64),
    /// Completed flows, warmup included.
    Completions(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Warmup {
    /// The later of 20% of the run and 10⁴ completions, but at most half of
    /// the run.
    Default,
    None,
    Time(f64),
    Completions(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub stop: StopRule,
    pub warmup: Warmup,
    pub seed: u64,
    pub stream: u64,
    pub batches: usize,
    pub level: f64,
    /// Completions a group needs before it gets an estimate.
    pub min_completions: u64,
    /// Events kept in the trace; 0 disables it.
    pub trace_limit: usize,
    /// Completed flows kept verbatim; 0 disables it.
    pub record_limit: usize,
}

impl SimOptions {
    pub fn new(stop: StopRule, seed: u64) -> Self {
        Self {
            stop,
            warmup: Warmup::Default,
            seed,
            stream: 0,
            batches: 30,
            level: 0.95,
            min_completions: 500,
            trace_limit: 0,
            record_limit: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimate {
    /// The class has no arrivals.
    Absent,
    Insufficient {
        completed: u64,
    },
    Value {
        ci: ConfidenceInterval,
        completed: u64,
    },
}

impl Estimate {
    pub fn value(&self) -> Option<f64> {
        self.ci().map(|c| c.mean)
    }

    pub fn ci(&self) -> Option<&ConfidenceInterval> {
        match self {
            Estimate::Value { ci, .. } => Some(ci),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaEstimates {
    pub sc: Estimate,
    pub dc: Estimate,
    /// `φ·γ̂_SC + (1 − φ)·γ̂_DC`; half-width combined as if independent.
    pub mean: Estimate,
    pub mean_sc_occupancy: f64,
    pub mean_dc_occupancy: f64,
}

/// Transition kinds T1–T6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transition {
    ScArrivalCarrier1 = 1,
    ScArrivalCarrier2 = 2,
    DcArrival = 3,
    ScDepartureCarrier1 = 4,
    ScDepartureCarrier2 = 5,
    DcDeparture = 6,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    pub transition: Transition,
    pub area: usize,
    pub state_after: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub areas: Vec<AreaEstimates>,
    /// Least-squares trend of the total population over the whole run.
    pub trend: Option<LinearTrend>,
    /// `trend` has a positive slope with t-statistic above 3.
    pub unstable: bool,
    pub seed: u64,
    pub stream: u64,
    pub level: f64,
    pub simulated_time: f64,
    pub warmup_end: f64,
    pub events: u64,
    pub completions: u64,
    pub trace: Vec<TraceEvent>,
    pub records: Vec<FlowRecord>,
}

impl SimReport {
    pub fn area(&self, j: usize) -> &AreaEstimates {
        &self.areas[j]
    }
}

const DEFAULT_WARMUP_COMPLETIONS: u64 = 10_000;
const TREND_POINTS: usize = 100;
const TREND_T_STAT: f64 = 3.0;

/// Population samples on a grid that doubles its spacing whenever the buffer
/// fills, so any run ends with between 100 and 200 evenly spaced points.
struct PopulationSampler {
    next: f64,
    spacing: f64,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl PopulationSampler {
    fn new(start: f64, spacing: f64) -> Self {
        Self {
            next: start,
            spacing,
            times: Vec::with_capacity(2 * TREND_POINTS),
            values: Vec::with_capacity(2 * TREND_POINTS),
        }
    }

    /// Population was `value` on `[from, to)`.
    fn record(&mut self, to: f64, value: f64) {
        while self.next < to {
            self.times.push(self.next);
            self.values.push(value);
            if self.times.len() == 2 * TREND_POINTS {
                let keep = |v: &mut Vec<f64>| {
                    let mut k = 0;
                    v.retain(|_| {
                        k += 1;
                        k % 2 == 1
                    })
                };
                keep(&mut self.times);
                keep(&mut self.values);
                self.spacing *= 2.0;
                self.next = self.times[self.times.len() - 1];
            }
            self.next += self.spacing;
        }
    }
}

#[derive(Clone, Copy)]
struct Flow {
    arrival: f64,
    clocks: (f64, f64),
}

/// Groups in component order: `3j` SC on carrier 1, `3j + 1` SC on carrier 2,
/// `3j + 2` DC.
struct Cell<'a> {
    cfg: &'a CellConfig,
    sigma: f64,
    counts: Vec<u32>,
    flows: Vec<Vec<Flow>>,
    clocks: Vec<(f64, f64)>,
}

impl Cell<'_> {
    fn aggregates(&self) -> Aggregates {
        Aggregates::from_counts(&self.counts)
    }

    /// Per-user rates `(D_{1,j}, D_{2,j})` for every area.
    fn user_rates(&self, agg: Aggregates, out: &mut [(f64, f64)]) {
        let (on1, on2) = (agg.on_carrier1(), agg.on_carrier2());
        for (r, a) in out.iter_mut().zip(self.cfg.areas()) {
            let d1 = if on1 > 0 {
                a.c1.value() / f64::from(on1)
            } else {
                0.0
            };
            let d2 = if on2 > 0 {
                a.c2.value() / f64::from(on2)
            } else {
                0.0
            };
            *r = (d1, d2);
        }
    }

    fn arrive(&mut self, group: usize, now: f64) {
        self.counts[group] += 1;
        let clocks = self.clocks[group / 3];
        self.flows[group].push(Flow {
            arrival: now,
            clocks,
        });
    }

    fn depart(&mut self, group: usize, now: f64, rng: &mut ChaCha8Rng) -> FlowRecord {
        self.counts[group] -= 1;
        let list = &mut self.flows[group];
        let k = rng.random_range(0..list.len());
        let flow = list.swap_remove(k);
        let area = group / 3;
        let (k1, k2) = self.clocks[area];
        let got = (k1 - flow.clocks.0, k2 - flow.clocks.1);
        let (class, carrier_volumes) = match group % 3 {
            0 => (FlowClass::Sc, (got.0, 0.0)),
            1 => (FlowClass::Sc, (0.0, got.1)),
            _ => (FlowClass::Dc, got),
        };
        FlowRecord {
            class,
            area,
            carrier_volumes,
            arrival: flow.arrival,
            completion: now,
        }
    }
}

fn exponential(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -libm::log1p(-u) / rate
}

struct WarmupPlan {
    time: Option<f64>,
    completions: Option<u64>,
    /// Time at which warmup ends regardless of completions.
    latest: f64,
}

fn plan_warmup(opts: &SimOptions) -> Result<WarmupPlan> {
    let plan = match (opts.warmup, opts.stop) {
        (Warmup::None, _) => WarmupPlan {
            time: Some(0.0),
            completions: None,
            latest: 0.0,
        },
        (Warmup::Time(w), StopRule::Horizon(h)) if w >= h => {
            return Err(Error::InvalidArgument(format!(
                "warmup {w} s is not below the horizon {h} s"
            )))
        }
        (Warmup::Completions(c), StopRule::Completions(k)) if c >= k => {
            return Err(Error::InvalidArgument(format!(
                "warmup of {c} completions is not below the stop at {k}"
            )))
        }
        (Warmup::Time(w), _) => WarmupPlan {
            time: Some(w),
            completions: None,
            latest: w,
        },
        (Warmup::Completions(c), _) => WarmupPlan {
            time: None,
            completions: Some(c),
            latest: f64::INFINITY,
        },
        (Warmup::Default, StopRule::Horizon(h)) => WarmupPlan {
            time: Some(0.2 * h),
            completions: Some(DEFAULT_WARMUP_COMPLETIONS),
            latest: 0.5 * h,
        },
        (Warmup::Default, StopRule::Completions(k)) => {
            let c = (k / 5).max(DEFAULT_WARMUP_COMPLETIONS).min(k / 2);
            WarmupPlan {
                time: None,
                completions: Some(c),
                latest: f64::INFINITY,
            }
        }
    };
    Ok(plan)
}

fn check_inputs(cfg: &CellConfig, traffic: &TrafficMix, opts: &SimOptions) -> Result<()> {
    match opts.stop {
        StopRule::Horizon(h) if !(h > 0.0 && h.is_finite()) => {
            return Err(Error::InvalidArgument(format!(
                "horizon {h} must be positive and finite"
            )))
        }
        StopRule::Completions(0) => {
            return Err(Error::InvalidArgument("stop after 0 completions".into()))
        }
        _ => {}
    }
    if opts.batches < 2 || !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 batches and a level in (0, 1) (got {}, {})",
            opts.batches, opts.level
        )));
    }
    for (j, a) in cfg.areas().iter().enumerate() {
        if traffic.sc_rate(cfg, j) + traffic.dc_rate(cfg, j) > 0.0 && a.total() <= 0.0 {
            return Err(Error::EmptyCarrier {
                area: j,
                carrier: 1,
            });
        }
    }
    Ok(())
}

/// Per-group series of post-warmup completions.
#[derive(Default, Clone)]
struct Completed {
    volumes: Vec<f64>,
    sojourns: Vec<f64>,
}

/// Simulates the cell from empty until `opts.stop`.
pub fn simulate(
    cfg: &CellConfig,
    traffic: &TrafficMix,
    policy: SimPolicy,
    opts: &SimOptions,
) -> Result<SimReport> {
    check_inputs(cfg, traffic, opts)?;
    let plan = plan_warmup(opts)?;
    let areas = cfg.num_areas();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(opts.stream);

    let sc: Vec<f64> = (0..areas).map(|j| traffic.sc_rate(cfg, j)).collect();
    let dc: Vec<f64> = (0..areas).map(|j| traffic.dc_rate(cfg, j)).collect();
    let bern: Vec<f64> = (0..areas)
        .map(|j| bernoulli_probabilities(cfg, j).0)
        .collect();
    let arrivals: f64 = sc.iter().chain(&dc).sum();

    let mut cell = Cell {
        cfg,
        sigma: traffic.sigma(),
        counts: vec![0; 3 * areas],
        flows: vec![Vec::new(); 3 * areas],
        clocks: vec![(0.0, 0.0); areas],
    };
    let mut now = 0.0;
    let mut events = 0u64;
    let mut completions = 0u64;
    let mut warm_at: Option<f64> = None;
    let mut occupancy = vec![0.0; 3 * areas];
    let mut sampler = PopulationSampler::new(
        0.0,
        match opts.stop {
            StopRule::Horizon(h) => h / TREND_POINTS as f64,
            // run length unknown: start fine, the sampler coarsens itself
            StopRule::Completions(_) => 1.0 / arrivals.max(f64::MIN_POSITIVE),
        },
    );
    // per area: SC completions (either carrier), then DC completions
    let mut series = vec![Completed::default(); 2 * areas];
    let mut trace = Vec::new();
    let mut records = Vec::new();
    let mut dep = vec![0.0; 3 * areas];
    let mut rates = vec![(0.0, 0.0); areas];

    loop {
        let agg = cell.aggregates();
        cell.user_rates(agg, &mut rates);
        let mut departures = 0.0;
        for j in 0..areas {
            let (d1, d2) = rates[j];
            dep[3 * j] = f64::from(cell.counts[3 * j]) * d1 / cell.sigma;
            dep[3 * j + 1] = f64::from(cell.counts[3 * j + 1]) * d2 / cell.sigma;
            dep[3 * j + 2] = f64::from(cell.counts[3 * j + 2]) * (d1 + d2) / cell.sigma;
            departures += dep[3 * j] + dep[3 * j + 1] + dep[3 * j + 2];
        }
        let total = arrivals + departures;
        if total <= 0.0 {
            break;
        }
        let dt = exponential(&mut rng, total);
        let end = match opts.stop {
            StopRule::Horizon(h) if now + dt >= h => h,
            _ => now + dt,
        };

        // warmup ending on the clock inside this holding interval
        if warm_at.is_none() {
            let trigger = match (plan.time, plan.completions) {
                (Some(t), None) => Some(t),
                (Some(t), Some(c)) if completions >= c => Some(t),
                _ => None,
            }
            .map_or(plan.latest, |t| t.min(plan.latest));
            if trigger < end {
                warm_at = Some(trigger.max(now));
            }
        }
        if let Some(w) = warm_at {
            let from = now.max(w);
            for (o, &c) in occupancy.iter_mut().zip(&cell.counts) {
                *o += f64::from(c) * (end - from);
            }
        }
        sampler.record(end, f64::from(cell.counts.iter().sum::<u32>()));
        for (clock, &(d1, d2)) in cell.clocks.iter_mut().zip(&rates) {
            clock.0 += d1 * (end - now);
            clock.1 += d2 * (end - now);
        }
        now = end;
        if matches!(opts.stop, StopRule::Horizon(h) if now >= h) {
            break;
        }

        // pick the event
        events += 1;
        let mut u = rng.random::<f64>() * total;
        let mut chosen = None;
        for j in 0..areas {
            if u < sc[j] {
                chosen = Some((j, None));
                break;
            }
            u -= sc[j];
            if u < dc[j] {
                chosen = Some((j, Some(Slot::Dc)));
                break;
            }
            u -= dc[j];
        }
        let (transition, area) = match chosen {
            Some((j, Some(_))) => {
                cell.arrive(3 * j + 2, now);
                (Transition::DcArrival, j)
            }
            Some((j, None)) => {
                let to1 = match policy.routing {
                    Policy::Bernoulli => rng.random::<f64>() < bern[j],
                    Policy::Jfq | Policy::Jsq => {
                        let d = if policy.routing == Policy::Jfq {
                            jfq_route_agg(agg, j, cfg)
                        } else {
                            jsq_route_agg(agg)
                        };
                        match d {
                            RouteDecision::Carrier1 => true,
                            RouteDecision::Carrier2 => false,
                            RouteDecision::Tie => rng.random::<bool>(),
                        }
                    }
                };
                if to1 {
                    cell.arrive(3 * j, now);
                    (Transition::ScArrivalCarrier1, j)
                } else {
                    cell.arrive(3 * j + 1, now);
                    (Transition::ScArrivalCarrier2, j)
                }
            }
            None => {
                // a departure; the last positive rate absorbs rounding
                let mut group = dep.iter().rposition(|&r| r > 0.0).unwrap_or(0);
                for (g, &r) in dep.iter().enumerate() {
                    if u < r {
                        group = g;
                        break;
                    }
                    u -= r;
                }
                let record = cell.depart(group, now, &mut rng);
                completions += 1;
                if warm_at.is_some() {
                    let k = 2 * (group / 3) + usize::from(group % 3 == 2);
                    series[k].volumes.push(record.volume());
                    series[k].sojourns.push(record.sojourn());
                    if records.len() < opts.record_limit {
                        records.push(record);
                    }
                }
                let kind = [
                    Transition::ScDepartureCarrier1,
                    Transition::ScDepartureCarrier2,
                    Transition::DcDeparture,
                ][group % 3];
                (kind, group / 3)
            }
        };
        if trace.len() < opts.trace_limit {
            trace.push(TraceEvent {
                time: now,
                transition,
                area,
                state_after: cell.counts.clone(),
            });
        }
        // warmup ending on a completion count
        if warm_at.is_none() {
            if let Some(c) = plan.completions {
                let clock_ok = plan.time.is_none_or(|t| now >= t);
                if completions >= c && clock_ok {
                    warm_at = Some(now);
                }
            }
        }
        if matches!(opts.stop, StopRule::Completions(k) if completions >= k) {
            break;
        }
    }

    let warmup_end = warm_at.unwrap_or(now);
    let window = now - warmup_end;
    let trend = linear_trend(&sampler.times, &sampler.values).ok();
    let unstable = trend.is_some_and(|t| t.slope > 0.0 && t.t_stat > TREND_T_STAT);

    let needed = opts.min_completions.max(2 * opts.batches as u64);
    let estimate = |c: &Completed, rate: f64| -> Estimate {
        let n = c.volumes.len() as u64;
        if rate <= 0.0 {
            Estimate::Absent
        } else if n < needed {
            Estimate::Insufficient { completed: n }
        } else {
            match batch_ratio_ci(&c.volumes, &c.sojourns, opts.batches, opts.level) {
                Ok(ci) => Estimate::Value { ci, completed: n },
                Err(_) => Estimate::Insufficient { completed: n },
            }
        }
    };
    let phi = traffic.phi();
    let mut out = Vec::with_capacity(areas);
    for j in 0..areas {
        let sc_est = estimate(&series[2 * j], sc[j]);
        let dc_est = estimate(&series[2 * j + 1], dc[j]);
        let occ = |g: usize| {
            if window > 0.0 {
                occupancy[g] / window
            } else {
                0.0
            }
        };
        out.push(AreaEstimates {
            sc: sc_est,
            dc: dc_est,
            mean: combine(sc_est, dc_est, phi),
            mean_sc_occupancy: occ(3 * j) + occ(3 * j + 1),
            mean_dc_occupancy: occ(3 * j + 2),
        });
    }

    Ok(SimReport {
        areas: out,
        trend,
        unstable,
        seed: opts.seed,
        stream: opts.stream,
        level: opts.level,
        simulated_time: now,
        warmup_end,
        events,
        completions,
        trace,
        records,
    })
}

fn combine(sc: Estimate, dc: Estimate, phi: f64) -> Estimate {
    match (sc, dc) {
        (
            Estimate::Value {
                ci: a,
                completed: na,
            },
            Estimate::Value {
                ci: b,
                completed: nb,
            },
        ) => {
            let (x, y) = (phi * a.half_width, (1.0 - phi) * b.half_width);
            let hw = libm::sqrt(x * x + y * y);
            Estimate::Value {
                ci: ConfidenceInterval {
                    mean: phi * a.mean + (1.0 - phi) * b.mean,
                    half_width: hw,
                    level: a.level,
                    batches: a.batches,
                },
                completed: na + nb,
            }
        }
        (Estimate::Absent, other) | (other, Estimate::Absent) => other,
        (Estimate::Insufficient { completed: a }, Estimate::Insufficient { completed: b })
        | (Estimate::Insufficient { completed: a }, Estimate::Value { completed: b, .. })
        | (Estimate::Value { completed: a, .. }, Estimate::Insufficient { completed: b }) => {
            Estimate::Insufficient { completed: a + b }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::{build_generator, Truncation};
    use crate::model::PeakRate;
    use alloc::collections::BTreeMap;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn single(c1: &str, c2: &str) -> CellConfig {
        CellConfig::single(PeakRate::parse(c1).unwrap(), PeakRate::parse(c2).unwrap())
    }

    fn rec(v: f64, t: f64) -> FlowRecord {
        FlowRecord {
            class: FlowClass::Sc,
            area: 0,
            carrier_volumes: (v, 0.0),
            arrival: 0.0,
            completion: t,
        }
    }

    #[test]
    fn throughput_estimate_is_a_ratio_of_means() {
        assert_eq!(
            flow_throughput_estimate(&[rec(1.0, 0.5), rec(3.0, 1.5)]).unwrap(),
            2.0
        );
        assert_eq!(flow_throughput_estimate(&[rec(2.0, 1.0)]).unwrap(), 2.0);
        assert_eq!(
            flow_throughput_estimate(&[rec(1.0, 1.0), rec(1.0, 3.0)]).unwrap(),
            0.5
        );
        assert!(matches!(
            flow_throughput_estimate(&[]),
            Err(Error::NoData(_))
        ));
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = single("1", "2");
        let t = TrafficMix::at_load(&cfg, 0.6, 0.5, 1.0).unwrap();
        let mut opts = SimOptions::new(StopRule::Completions(20_000), 7);
        opts.trace_limit = 100;
        let a = simulate(&cfg, &t, Policy::Jfq.into(), &opts).unwrap();
        let b = simulate(&cfg, &t, Policy::Jfq.into(), &opts).unwrap();
        assert_eq!(a, b);
        opts.stream = 1;
        let c = simulate(&cfg, &t, Policy::Jfq.into(), &opts).unwrap();
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn dc_only_half_load_brackets_closed_form() {
        let cfg = single("1", "1");
        let t = TrafficMix::at_load(&cfg, 0.5, 0.0, 1.0).unwrap();
        let r = simulate(
            &cfg,
            &t,
            Policy::Jfq.into(),
            &SimOptions::new(StopRule::Completions(1_000_000), 1),
        )
        .unwrap();
        let ci = r.area(0).dc.ci().copied().unwrap();
        assert!(ci.contains(1.0), "{ci:?}");
        assert_eq!(r.area(0).sc, Estimate::Absent);
        assert!(!r.unstable);
    }

    #[test]
    fn light_load_sc_gets_the_full_carrier() {
        let cfg = single("1", "1");
        let t = TrafficMix::at_load(&cfg, 0.01, 1.0, 1.0).unwrap();
        let r = simulate(
            &cfg,
            &t,
            Policy::Jfq.into(),
            &SimOptions::new(StopRule::Completions(200_000), 3),
        )
        .unwrap();
        let g = r.area(0).sc.value().unwrap();
        assert!((g - 1.0).abs() < 0.02, "{g}");
    }

    #[test]
    fn overload_is_flagged() {
        let cfg = single("1", "1");
        for (rho, horizon) in [(1.2, 2_000.0), (1.1, 60.0)] {
            let t = TrafficMix::at_load(&cfg, rho, 0.5, 1.0).unwrap();
            let r = simulate(
                &cfg,
                &t,
                Policy::Jfq.into(),
                &SimOptions::new(StopRule::Horizon(horizon), 11),
            )
            .unwrap();
            assert!(r.unstable, "rho {rho}: {:?}", r.trend);
        }
        let t = TrafficMix::at_load(&cfg, 0.5, 0.5, 1.0).unwrap();
        let r = simulate(
            &cfg,
            &t,
            Policy::Jfq.into(),
            &SimOptions::new(StopRule::Horizon(2_000.0), 11),
        )
        .unwrap();
        assert!(!r.unstable, "{:?}", r.trend);
    }

    #[test]
    fn volumes_are_conserved() {
        let cfg = single("1", "1.3");
        let t = TrafficMix::at_load(&cfg, 0.7, 0.5, 2.0).unwrap();
        let mut opts = SimOptions::new(StopRule::Completions(50_000), 5);
        opts.record_limit = usize::MAX;
        let r = simulate(&cfg, &t, Policy::Jfq.into(), &opts).unwrap();
        assert!(!r.records.is_empty());
        let mut total = 0.0;
        for f in &r.records {
            assert!(f.sojourn() > 0.0 && f.volume() > 0.0);
            match f.class {
                FlowClass::Sc => assert!(f.carrier_volumes.0 == 0.0 || f.carrier_volumes.1 == 0.0),
                FlowClass::Dc => assert!(f.carrier_volumes.0 > 0.0 && f.carrier_volumes.1 > 0.0),
            }
            // no carrier serves faster than its peak rate (up to clock rounding)
            assert!(f.carrier_volumes.0 <= 1.0 * f.sojourn() + 1e-9);
            assert!(f.carrier_volumes.1 <= 1.3 * f.sojourn() + 1e-9);
            total += f.volume();
        }
        // attained volumes are exponential with mean sigma
        let mean = total / r.records.len() as f64;
        assert!((mean / 2.0 - 1.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn jfq_and_jsq_share_trajectories_at_equal_capacity() {
        let cfg = single("2", "2");
        let t = TrafficMix::at_load(&cfg, 0.8, 0.6, 1.0).unwrap();
        let mut opts = SimOptions::new(StopRule::Completions(30_000), 9);
        opts.trace_limit = usize::MAX;
        let a = simulate(&cfg, &t, Policy::Jfq.into(), &opts).unwrap();
        let b = simulate(&cfg, &t, Policy::Jsq.into(), &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn idle_cell_stops_cleanly() {
        let cfg = single("1", "1");
        let t = TrafficMix::new(0.0, 0.5, 1.0).unwrap();
        let r = simulate(
            &cfg,
            &t,
            Policy::Jfq.into(),
            &SimOptions::new(StopRule::Horizon(10.0), 0),
        )
        .unwrap();
        assert_eq!(r.events, 0);
        assert_eq!(r.area(0).sc, Estimate::Absent);
    }

    #[test]
    fn warmup_must_precede_stop() {
        let cfg = single("1", "1");
        let t = TrafficMix::at_load(&cfg, 0.5, 0.5, 1.0).unwrap();
        let mut opts = SimOptions::new(StopRule::Horizon(10.0), 0);
        opts.warmup = Warmup::Time(10.0);
        assert!(simulate(&cfg, &t, Policy::Jfq.into(), &opts).is_err());
        let mut opts = SimOptions::new(StopRule::Completions(100), 0);
        opts.warmup = Warmup::Completions(100);
        assert!(simulate(&cfg, &t, Policy::Jfq.into(), &opts).is_err());
    }

    #[test]
    fn short_runs_are_insufficient() {
        let cfg = single("1", "1");
        let t = TrafficMix::at_load(&cfg, 0.5, 0.5, 1.0).unwrap();
        let r = simulate(
            &cfg,
            &t,
            Policy::Jfq.into(),
            &SimOptions::new(StopRule::Completions(400), 0),
        )
        .unwrap();
        assert!(matches!(r.area(0).sc, Estimate::Insufficient { .. }));
        assert!(matches!(r.area(0).mean, Estimate::Insufficient { .. }));
    }

    #[test]
    fn event_frequencies_match_generator_rates() {
        let cfg = single("1", "2");
        for policy in [Policy::Jfq, Policy::Jsq, Policy::Bernoulli] {
            let t = TrafficMix::at_load(&cfg, 0.5, 0.5, 1.0).unwrap();
            let mut opts = SimOptions::new(StopRule::Completions(150_000), 21);
            opts.trace_limit = usize::MAX;
            let r = simulate(&cfg, &t, policy.into(), &opts).unwrap();
            let mut moves: BTreeMap<(Vec<u32>, Vec<u32>), u64> = BTreeMap::new();
            let mut prev = vec![0u32; 3];
            for e in &r.trace {
                *moves
                    .entry((prev.clone(), e.state_after.clone()))
                    .or_default() += 1;
                prev = e.state_after.clone();
            }
            let mut visits: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
            for ((from, _), n) in &moves {
                *visits.entry(from.clone()).or_default() += n;
            }
            // a busy state with SC customers so every transition kind is live
            let (from, n) = visits
                .iter()
                .filter(|(s, _)| s[0] > 0 && s[1] > 0 && s[2] > 0)
                .max_by_key(|(_, n)| **n)
                .map(|(s, n)| (s.clone(), *n))
                .unwrap();
            let gen = build_generator(&cfg, &t, &Truncation::new(60).unwrap(), policy).unwrap();
            let i = gen.space().index_of_counts(&from).unwrap();
            let out = -gen.diagonal(i);
            let mut chi2 = 0.0;
            let mut cells = 0;
            for (c, rate) in gen.row(i) {
                let to: Vec<u32> = gen
                    .space()
                    .counts(c)
                    .iter()
                    .map(|&v| u32::from(v))
                    .collect();
                let observed = moves.get(&(from.clone(), to)).copied().unwrap_or(0) as f64;
                let expected = n as f64 * rate / out;
                chi2 += (observed - expected) * (observed - expected) / expected;
                cells += 1;
            }
            let critical = ChiSquared::new(f64::from(cells - 1))
                .unwrap()
                .inverse_cdf(0.999);
            assert!(
                chi2 < critical,
                "{policy:?} at {from:?}: chi2 {chi2} over {critical} ({n} visits)"
            );
        }
    }
}
