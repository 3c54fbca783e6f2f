//! Truncated continuous-time Markov chain of the cell occupancy.
//!
//! [`StateSpace`] enumerates occupancy vectors under a [`Truncation`],
//! [`Generator`] assembles the transition rates for a routing [`Policy`],
//! [`solve_stationary`] finds the stationary distribution and
//! [`throughputs_from_distribution`] turns it into per-area flow throughputs.
//! [`solve`] chains all of it and grows the truncation until the probability
//! of dropping an arrival is negligible.

mod generator;
mod report;
mod solver;
mod space;

pub use generator::{build_generator, Generator};
pub use report::{
    auto_truncation, blocking_mass, solve, throughputs_from_distribution, AreaThroughput,
    BlockingMass, Solution, SolveOptions, ThroughputReport,
};
pub use solver::{
    solve_stationary, solve_stationary_from, StationaryDistribution, DEFAULT_MAX_ITERS,
    DEFAULT_TOLERANCE,
};
pub use space::{enumerate_states, StateSpace, DEFAULT_STATE_BUDGET};

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::model::{Aggregates, CellConfig, Slot, SystemState};
use crate::{Error, Result};

/// How an arriving SC flow picks its carrier. DC flows always use both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Join the fastest queue: largest post-arrival per-user rate.
    Jfq,
    /// Join the shortest queue: fewest users `n_k + m` on the carrier.
    Jsq,
    /// State-blind split proportional to the carriers' peak rates.
    Bernoulli,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Jfq => "jfq",
            Policy::Jsq => "jsq",
            Policy::Bernoulli => "bernoulli",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jfq" => Ok(Policy::Jfq),
            "jsq" => Ok(Policy::Jsq),
            "bernoulli" => Ok(Policy::Bernoulli),
            other => Err(Error::InvalidConfig(format!(
                "unknown policy `{other}` (valid: jfq, jsq, bernoulli)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RouteDecision {
    Carrier1,
    Carrier2,
    /// Both carriers are equally attractive; the flow flips a fair coin.
    Tie,
}

fn decision(ord: Ordering) -> RouteDecision {
    match ord {
        Ordering::Greater => RouteDecision::Carrier1,
        Ordering::Less => RouteDecision::Carrier2,
        Ordering::Equal => RouteDecision::Tie,
    }
}

/// JFQ choice from carrier aggregates, compared exactly as
/// `C1·(n2 + m + 1)` against `C2·(n1 + m + 1)`.
pub(crate) fn jfq_route_agg(agg: Aggregates, j: usize, cfg: &CellConfig) -> RouteDecision {
    let area = cfg.area(j);
    let lhs = u64::from(agg.on_carrier2()) + 1;
    let rhs = u64::from(agg.on_carrier1()) + 1;
    decision(area.c1.cmp_weighted(lhs, &area.c2, rhs))
}

pub(crate) fn jsq_route_agg(agg: Aggregates) -> RouteDecision {
    decision(agg.on_carrier2().cmp(&agg.on_carrier1()))
}

/// Carrier an SC flow arriving in area `j` joins under JFQ.
pub fn jfq_route(state: &SystemState, j: usize, cfg: &CellConfig) -> RouteDecision {
    jfq_route_agg(Aggregates::of(state), j, cfg)
}

/// Carrier an SC flow joins under JSQ; independent of the area.
pub fn jsq_route(state: &SystemState) -> RouteDecision {
    jsq_route_agg(Aggregates::of(state))
}

/// Cap on the total population and optionally on each area's population.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truncation {
    pub max_total: u32,
    pub area_caps: Option<Vec<u32>>,
}

impl Truncation {
    pub fn new(max_total: u32) -> Result<Self> {
        Self::with_area_caps(max_total, None)
    }

    pub fn with_area_caps(max_total: u32, area_caps: Option<Vec<u32>>) -> Result<Self> {
        if max_total < 1 || max_total > u32::from(u16::MAX) {
            return Err(Error::InvalidArgument(format!(
                "max_total = {max_total} outside [1, {}]",
                u16::MAX
            )));
        }
        if let Some(caps) = &area_caps {
            if let Some(c) = caps.iter().find(|&&c| c > max_total) {
                return Err(Error::InvalidArgument(format!(
                    "area cap {c} exceeds max_total {max_total}"
                )));
            }
        }
        Ok(Self {
            max_total,
            area_caps,
        })
    }

    /// Default cap: 200 for one area, 60 for two or more.
    pub fn default_for(cfg: &CellConfig) -> Self {
        Self {
            max_total: if cfg.num_areas() == 1 { 200 } else { 60 },
            area_caps: None,
        }
    }

    pub fn area_cap(&self, j: usize) -> u32 {
        self.area_caps
            .as_ref()
            .and_then(|c| c.get(j).copied())
            .unwrap_or(self.max_total)
    }

    /// Whether `state + e_{slot,j}` stays inside the truncation.
    pub(crate) fn admits_arrival(&self, total: u32, area_total: u32, j: usize) -> bool {
        total < self.max_total && area_total < self.area_cap(j)
    }

    /// Same truncation with every cap doubled, capped by the new total.
    pub fn doubled(&self) -> Self {
        let max_total = (self.max_total * 2).min(u32::from(u16::MAX));
        Self {
            max_total,
            area_caps: self
                .area_caps
                .as_ref()
                .map(|c| c.iter().map(|&v| (v * 2).min(max_total)).collect()),
        }
    }
}

/// Slot that receives an arrival for a routing decision.
pub(crate) fn slot_for(d: RouteDecision) -> Option<Slot> {
    match d {
        RouteDecision::Carrier1 => Some(Slot::Sc1),
        RouteDecision::Carrier2 => Some(Slot::Sc2),
        RouteDecision::Tie => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PeakRate;
    use proptest::prelude::*;

    fn cfg(c1: &str, c2: &str) -> CellConfig {
        CellConfig::single(PeakRate::parse(c1).unwrap(), PeakRate::parse(c2).unwrap())
    }

    #[test]
    fn jfq_examples() {
        let s = SystemState::single;
        assert_eq!(
            jfq_route(&s(2, 1, 0), 0, &cfg("1", "1")),
            RouteDecision::Carrier2
        );
        assert_eq!(
            jfq_route(&s(0, 1, 0), 0, &cfg("1", "2")),
            RouteDecision::Tie
        );
        assert_eq!(
            jfq_route(&s(0, 0, 1), 0, &cfg("1", "2")),
            RouteDecision::Carrier2
        );
        assert_eq!(
            jfq_route(&s(0, 1, 0), 0, &cfg("1", "1")),
            RouteDecision::Carrier1
        );
        // 1/(n1+m+1) = 1.3/(n2+m+1) needs n1+m+1 = 10 and n2+m+1 = 13
        assert_eq!(
            jfq_route(&s(9, 12, 0), 0, &cfg("1", "1.3")),
            RouteDecision::Tie
        );
        assert_eq!(
            jfq_route(&s(9, 11, 0), 0, &cfg("1", "1.3")),
            RouteDecision::Carrier2
        );
    }

    #[test]
    fn jsq_ignores_capacities() {
        assert_eq!(
            jsq_route(&SystemState::single(3, 1, 5)),
            RouteDecision::Carrier2
        );
        assert_eq!(jsq_route(&SystemState::single(1, 1, 0)), RouteDecision::Tie);
    }

    #[test]
    fn truncation_validation() {
        assert!(Truncation::new(0).is_err());
        assert!(Truncation::with_area_caps(5, Some(alloc::vec![6])).is_err());
        let t = Truncation::with_area_caps(5, Some(alloc::vec![2, 5])).unwrap();
        assert_eq!(t.area_cap(0), 2);
        assert_eq!(t.doubled().area_caps, Some(alloc::vec![4, 10]));
    }

    proptest! {
        #[test]
        fn jfq_is_scale_invariant(n1 in 0u32..40, n2 in 0u32..40, m in 0u32..40,
                                  a in 1u64..200, b in 1u64..200, c in 1u64..200, d in 1u64..50,
                                  k in 1u64..1000, l in 1u64..1000) {
            let base = CellConfig::single(PeakRate::from_ratio(a, d).unwrap(), PeakRate::from_ratio(b, c).unwrap());
            let area = base.area(0);
            let scaled = CellConfig::single(area.c1.scaled(k, l).unwrap(), area.c2.scaled(k, l).unwrap());
            let s = SystemState::single(n1, n2, m);
            prop_assert_eq!(jfq_route(&s, 0, &base), jfq_route(&s, 0, &scaled));
        }

        #[test]
        fn jfq_equals_jsq_at_equal_capacity(n1 in 0u32..40, n2 in 0u32..40, m in 0u32..40, c in 1u64..1000) {
            let r = PeakRate::from_int(c).unwrap();
            let s = SystemState::single(n1, n2, m);
            prop_assert_eq!(jfq_route(&s, 0, &CellConfig::single(r, r)), jsq_route(&s));
        }
    }
}
