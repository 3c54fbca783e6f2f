use alloc::vec;
use alloc::vec::Vec;

use super::{
    solve_stationary_from, Generator, Policy, StateSpace, StationaryDistribution, Truncation,
    DEFAULT_MAX_ITERS, DEFAULT_STATE_BUDGET, DEFAULT_TOLERANCE,
};
use crate::model::{mixed_mean_throughput, offered_load, CellConfig, TrafficMix};
use crate::{Error, Result};

/// Fraction of each class's arrivals dropped at the truncation boundary.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlockingMass {
    pub sc: f64,
    pub dc: f64,
}

impl BlockingMass {
    pub fn max(&self) -> f64 {
        self.sc.max(self.dc)
    }
}

pub(crate) fn blocking_of(gen: &Generator, probs: &[f64]) -> BlockingMass {
    let (sc_in, dc_in) = gen.arrival_rates();
    let (mut sc, mut dc) = (0.0, 0.0);
    for (i, &p) in probs.iter().enumerate() {
        let (a, b) = gen.blocked_rates(i);
        sc += p * a;
        dc += p * b;
    }
    BlockingMass {
        sc: if sc_in > 0.0 { sc / sc_in } else { 0.0 },
        dc: if dc_in > 0.0 { dc / dc_in } else { 0.0 },
    }
}

/// Blocking probability of each class under a stationary distribution.
pub fn blocking_mass(gen: &Generator, dist: &StationaryDistribution) -> BlockingMass {
    blocking_of(gen, &dist.probs)
}

/// Per-area Little's-law throughputs. Classes without arrivals are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaThroughput {
    pub sc: Option<f64>,
    pub dc: Option<f64>,
    /// `E[n_{1,j} + n_{2,j}]`
    pub mean_sc_occupancy: f64,
    /// `E[m_j]`
    pub mean_dc_occupancy: f64,
    /// `φ·γ_SC,j + (1 − φ)·γ_DC,j` over the classes present.
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputReport {
    pub areas: Vec<AreaThroughput>,
    pub blocking: BlockingMass,
    pub truncation: Truncation,
    pub states: usize,
    /// Blocking stayed under the configured threshold.
    pub reliable: bool,
}

impl ThroughputReport {
    pub fn area(&self, j: usize) -> &AreaThroughput {
        &self.areas[j]
    }
}

/// Throughputs `γ_SC,j = α_j σ / E[n_{1,j} + n_{2,j}]` and
/// `γ_DC,j = β_j σ / E[m_j]` from a stationary distribution.
///
/// Nominal arrival rates are used; `reliable` is set against the default
/// blocking threshold of [`SolveOptions`].
pub fn throughputs_from_distribution(
    gen: &Generator,
    dist: &StationaryDistribution,
    cfg: &CellConfig,
    traffic: &TrafficMix,
) -> Result<ThroughputReport> {
    report(
        gen,
        dist,
        cfg,
        traffic,
        SolveOptions::default().blocking_threshold,
    )
}

fn report(
    gen: &Generator,
    dist: &StationaryDistribution,
    cfg: &CellConfig,
    traffic: &TrafficMix,
    threshold: f64,
) -> Result<ThroughputReport> {
    let space = gen.space();
    let areas = cfg.num_areas();
    if space.num_areas() != areas || dist.probs.len() != space.len() {
        return Err(Error::InvalidArgument(
            "distribution, generator and configuration disagree in size".into(),
        ));
    }
    let mut sc_occ = vec![0.0; areas];
    let mut dc_occ = vec![0.0; areas];
    for (i, &p) in dist.probs.iter().enumerate() {
        let c = space.counts(i);
        for j in 0..areas {
            sc_occ[j] += p * f64::from(c[3 * j] + c[3 * j + 1]);
            dc_occ[j] += p * f64::from(c[3 * j + 2]);
        }
    }
    let sigma = traffic.sigma();
    let little = |rate: f64, occ: f64, class: &str, j: usize| -> Result<Option<f64>> {
        if rate <= 0.0 {
            return Ok(None);
        }
        if occ <= 0.0 {
            return Err(Error::Degenerate(alloc::format!(
                "area {}: {class} arrivals present but mean occupancy is zero",
                j + 1
            )));
        }
        Ok(Some(rate * sigma / occ))
    };
    let mut out = Vec::with_capacity(areas);
    for j in 0..areas {
        let sc = little(traffic.sc_rate(cfg, j), sc_occ[j], "SC", j)?;
        let dc = little(traffic.dc_rate(cfg, j), dc_occ[j], "DC", j)?;
        let mean = match (sc, dc) {
            (Some(s), Some(d)) => Some(mixed_mean_throughput(s, d, traffic.phi())),
            (s, d) => s.or(d),
        };
        out.push(AreaThroughput {
            sc,
            dc,
            mean_sc_occupancy: sc_occ[j],
            mean_dc_occupancy: dc_occ[j],
            mean,
        });
    }
    let blocking = dist.blocking;
    Ok(ThroughputReport {
        areas: out,
        blocking,
        truncation: space.truncation().clone(),
        states: space.len(),
        reliable: blocking.max() <= threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Fixed truncation; `None` picks one from the load.
    pub truncation: Option<Truncation>,
    /// Enlarge the truncation while blocking exceeds the threshold.
    pub auto_grow: bool,
    pub blocking_threshold: f64,
    pub state_budget: usize,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            truncation: None,
            auto_grow: true,
            blocking_threshold: 1e-6,
            state_budget: DEFAULT_STATE_BUDGET,
            tol: DEFAULT_TOLERANCE,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub generator: Generator,
    pub distribution: StationaryDistribution,
    pub report: ThroughputReport,
}

fn geometric_level(eps: f64, ratio: f64) -> f64 {
    if ratio <= 0.0 {
        1.0
    } else if ratio >= 1.0 {
        f64::INFINITY
    } else {
        libm::ceil(libm::log(eps) / libm::log(ratio))
    }
}

/// Starting truncation for a stable load: the level where a geometric tail
/// with ratio `ρ` falls below `eps`, and per area the same with
/// `ρ_j / (1 − ρ + ρ_j)`, the tail ratio of the area's share of a DC-only
/// population.
pub fn auto_truncation(cfg: &CellConfig, traffic: &TrafficMix, eps: f64) -> Truncation {
    let load = offered_load(cfg, traffic);
    let cap_default = Truncation::default_for(cfg).max_total;
    let n = geometric_level(eps, load.rho).clamp(4.0, f64::from(cap_default)) as u32;
    if cfg.num_areas() == 1 {
        return Truncation {
            max_total: n,
            area_caps: None,
        };
    }
    let caps: Vec<u32> = load
        .rho_per_area
        .iter()
        .map(|&r| {
            let tail = r / (1.0 - load.rho + r);
            geometric_level(eps, tail).clamp(2.0, f64::from(n)) as u32
        })
        .collect();
    Truncation {
        max_total: n,
        area_caps: if caps.iter().all(|&c| c == n) {
            None
        } else {
            Some(caps)
        },
    }
}

/// Next truncation when `dist` blocks too much: doubles the total cap when
/// arrivals are lost because the cell is full and each area cap that loses
/// arrivals on its own.
fn grow(
    cfg: &CellConfig,
    traffic: &TrafficMix,
    gen: &Generator,
    probs: &[f64],
    threshold: f64,
) -> Truncation {
    let space = gen.space();
    let trunc = space.truncation();
    let areas = cfg.num_areas();
    let rates: Vec<f64> = (0..areas)
        .map(|j| traffic.sc_rate(cfg, j) + traffic.dc_rate(cfg, j))
        .collect();
    let arrivals: f64 = rates.iter().sum();
    let mut at_total = 0.0;
    let mut at_area = vec![0.0; areas];
    for (i, &p) in probs.iter().enumerate() {
        let total = space.total(i);
        if total >= trunc.max_total {
            at_total += p;
            continue;
        }
        let c = space.counts(i);
        for j in 0..areas {
            let area_total: u32 = c[3 * j..3 * j + 3].iter().map(|&v| u32::from(v)).sum();
            if area_total >= trunc.area_cap(j) {
                at_area[j] += p * rates[j] / arrivals;
            }
        }
    }
    let share = threshold / (2.0 * areas as f64);
    let grow_total = at_total > threshold / 2.0;
    let grow_area: Vec<bool> = at_area.iter().map(|&m| m > share).collect();
    if !grow_total && !grow_area.iter().any(|&g| g) {
        return trunc.doubled();
    }
    let max_total = if grow_total {
        (trunc.max_total * 2).min(u32::from(u16::MAX))
    } else {
        trunc.max_total
    };
    let area_caps = trunc.area_caps.as_ref().map(|caps| {
        caps.iter()
            .zip(&grow_area)
            .map(|(&c, &g)| if g { (c * 2).min(max_total) } else { c })
            .collect()
    });
    Truncation {
        max_total,
        area_caps,
    }
}

/// Carries probabilities over to a larger space; new states start at zero.
fn transfer(from: &Generator, probs: &[f64], to: &StateSpace) -> Vec<f64> {
    let old = from.space();
    let mut counts = vec![0u32; to.dims()];
    (0..to.len())
        .map(|i| {
            for (d, &c) in counts.iter_mut().zip(to.counts(i)) {
                *d = u32::from(c);
            }
            old.index_of_counts(&counts).map_or(0.0, |k| probs[k])
        })
        .collect()
}

/// Builds, solves and reports, growing the truncation until blocking falls
/// under `opts.blocking_threshold` or the state budget is reached. The last
/// solve that fitted the budget is returned with `reliable` unset.
pub fn solve(
    cfg: &CellConfig,
    traffic: &TrafficMix,
    policy: Policy,
    opts: &SolveOptions,
) -> Result<Solution> {
    let mut trunc = match &opts.truncation {
        Some(t) => t.clone(),
        None => {
            let rho = offered_load(cfg, traffic).rho;
            if rho >= 1.0 {
                return Err(Error::Unstable { rho });
            }
            auto_truncation(cfg, traffic, opts.blocking_threshold)
        }
    };
    let mut previous: Option<Solution> = None;
    loop {
        let space = match StateSpace::for_traffic(cfg, traffic, &trunc, opts.state_budget) {
            Ok(s) => s,
            Err(Error::TooLarge {
                suggested_max_total,
                ..
            }) if previous.is_none()
                && opts.truncation.is_none()
                && suggested_max_total < trunc.max_total =>
            {
                // the load-based guess overshot the budget: start from what fits
                trunc = Truncation {
                    max_total: suggested_max_total,
                    area_caps: trunc
                        .area_caps
                        .map(|c| c.iter().map(|&v| v.min(suggested_max_total)).collect()),
                };
                continue;
            }
            Err(e @ Error::TooLarge { .. }) => return previous.ok_or(e),
            Err(e) => return Err(e),
        };
        let init = previous
            .as_ref()
            .map(|p| transfer(&p.generator, &p.distribution.probs, &space));
        let generator = Generator::build(cfg, traffic, space, policy);
        let distribution = solve_stationary_from(&generator, init, opts.tol, opts.max_iters)?;
        let report = report(
            &generator,
            &distribution,
            cfg,
            traffic,
            opts.blocking_threshold,
        )?;
        let done = report.reliable || !opts.auto_grow;
        let next = grow(
            cfg,
            traffic,
            &generator,
            &distribution.probs,
            opts.blocking_threshold,
        );
        let solution = Solution {
            generator,
            distribution,
            report,
        };
        if done || next == trunc {
            return Ok(solution);
        }
        trunc = next;
        previous = Some(solution);
    }
}
