use alloc::vec;
use alloc::vec::Vec;

use super::Truncation;
use crate::model::{CellConfig, SystemState, TrafficMix};
use crate::{Error, Result};

/// Default ceiling on the number of enumerated states.
pub const DEFAULT_STATE_BUDGET: usize = 3_000_000;

/// Occupancy vectors inside a truncation, in lexicographic order of the
/// component sequence `(n_{1,1}, n_{2,1}, m_1, …, n_{1,J}, n_{2,J}, m_J)`.
///
/// Components can be pinned to zero (classes without arrivals never become
/// occupied), which keeps the space to the states the chain can reach from
/// the empty cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    dims: usize,
    bits: u32,
    trunc: Truncation,
    active: Vec<bool>,
    counts: Vec<u16>,
    keys: Vec<u128>,
    totals: Vec<u32>,
}

/// Every state with all counts `>= 0` inside `trunc`.
pub fn enumerate_states(cfg: &CellConfig, trunc: &Truncation) -> Result<StateSpace> {
    StateSpace::enumerate(cfg.num_areas(), trunc, DEFAULT_STATE_BUDGET)
}

fn binomial(n: u64, k: u64) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

impl StateSpace {
    pub fn enumerate(areas: usize, trunc: &Truncation, budget: usize) -> Result<Self> {
        Self::enumerate_masked(areas, trunc, vec![true; 3 * areas], budget)
    }

    /// States reachable from the empty cell: components whose class has no
    /// arrivals stay at zero.
    pub fn for_traffic(
        cfg: &CellConfig,
        traffic: &TrafficMix,
        trunc: &Truncation,
        budget: usize,
    ) -> Result<Self> {
        let mut active = Vec::with_capacity(3 * cfg.num_areas());
        for j in 0..cfg.num_areas() {
            let sc = traffic.sc_rate(cfg, j) > 0.0;
            active.extend([sc, sc, traffic.dc_rate(cfg, j) > 0.0]);
        }
        Self::enumerate_masked(cfg.num_areas(), trunc, active, budget)
    }

    /// Number of states a masked enumeration would produce, in floating point.
    pub fn count(trunc: &Truncation, active: &[bool]) -> f64 {
        let n = trunc.max_total as usize;
        let mut total = vec![0.0f64; n + 1];
        total[0] = 1.0;
        for (j, area) in active.chunks(3).enumerate() {
            let k = area.iter().filter(|&&a| a).count() as u64;
            let cap = trunc.area_cap(j) as usize;
            let ways: Vec<f64> = (0..=n)
                .map(|s| match (k, s) {
                    (_, 0) => 1.0,
                    (0, _) => 0.0,
                    _ if s > cap => 0.0,
                    _ => binomial(s as u64 + k - 1, k - 1),
                })
                .collect();
            let mut next = vec![0.0f64; n + 1];
            for (a, &ta) in total.iter().enumerate() {
                if ta == 0.0 {
                    continue;
                }
                for (b, &wb) in ways.iter().enumerate().take(n + 1 - a) {
                    next[a + b] += ta * wb;
                }
            }
            total = next;
        }
        total.iter().sum()
    }

    fn enumerate_masked(
        areas: usize,
        trunc: &Truncation,
        active: Vec<bool>,
        budget: usize,
    ) -> Result<Self> {
        let dims = 3 * areas;
        let bits = 32 - trunc.max_total.leading_zeros();
        if dims as u32 * bits > 128 {
            return Err(Error::InvalidArgument(alloc::format!(
                "{areas} areas with max_total {} do not fit a packed state key",
                trunc.max_total
            )));
        }
        let estimate = Self::count(trunc, &active);
        if estimate > budget as f64 {
            let mut lo = 1u32;
            let mut hi = trunc.max_total;
            while lo < hi {
                let mid = (lo + hi).div_ceil(2);
                let t = Truncation {
                    max_total: mid,
                    area_caps: trunc
                        .area_caps
                        .as_ref()
                        .map(|c| c.iter().map(|&v| v.min(mid)).collect()),
                };
                if Self::count(&t, &active) <= budget as f64 {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            return Err(Error::TooLarge {
                states: estimate as u128,
                budget,
                suggested_max_total: lo,
            });
        }
        let capacity = estimate as usize;
        let mut space = Self {
            dims,
            bits,
            trunc: trunc.clone(),
            active,
            counts: Vec::with_capacity(capacity * dims),
            keys: Vec::with_capacity(capacity),
            totals: Vec::with_capacity(capacity),
        };
        let mut cur = vec![0u16; dims];
        space.fill(&mut cur, 0, 0, 0);
        Ok(space)
    }

    fn fill(&mut self, cur: &mut [u16], comp: usize, used_total: u32, used_area: u32) {
        if comp == self.dims {
            self.counts.extend_from_slice(cur);
            self.keys.push(self.pack(cur.iter().map(|&c| u32::from(c))));
            self.totals.push(used_total);
            return;
        }
        let area = comp / 3;
        let used_area = if comp.is_multiple_of(3) { 0 } else { used_area };
        let max_v = if self.active[comp] {
            (self.trunc.max_total - used_total).min(self.trunc.area_cap(area) - used_area)
        } else {
            0
        };
        for v in 0..=max_v {
            cur[comp] = v as u16;
            self.fill(cur, comp + 1, used_total + v, used_area + v);
        }
        cur[comp] = 0;
    }

    fn pack(&self, counts: impl Iterator<Item = u32>) -> u128 {
        counts.fold(0u128, |k, c| (k << self.bits) | u128::from(c))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Components per state (`3J`).
    #[inline]
    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn num_areas(&self) -> usize {
        self.dims / 3
    }

    pub fn truncation(&self) -> &Truncation {
        &self.trunc
    }

    pub fn is_active(&self, component: usize) -> bool {
        self.active[component]
    }

    #[inline]
    pub fn counts(&self, index: usize) -> &[u16] {
        &self.counts[index * self.dims..(index + 1) * self.dims]
    }

    /// Total population of the state at `index`.
    #[inline]
    pub fn total(&self, index: usize) -> u32 {
        self.totals[index]
    }

    pub fn state(&self, index: usize) -> SystemState {
        SystemState::from_counts(self.counts(index).iter().map(|&c| u32::from(c)).collect())
            .expect("state has 3 counts per area")
    }

    pub fn index_of_counts(&self, counts: &[u32]) -> Option<usize> {
        if counts.len() != self.dims {
            return None;
        }
        let limit = 1u32 << self.bits;
        if counts.iter().any(|&c| c >= limit) {
            return None;
        }
        self.keys
            .binary_search(&self.pack(counts.iter().copied()))
            .ok()
    }

    pub fn index_of(&self, state: &SystemState) -> Option<usize> {
        self.index_of_counts(state.counts())
    }

    /// Index of `counts` with one component shifted by `delta` (±1).
    pub(crate) fn neighbour(&self, counts: &[u16], component: usize, up: bool) -> Option<usize> {
        let c = u32::from(counts[component]);
        if (up && c + 1 >= 1u32 << self.bits) || (!up && c == 0) {
            return None;
        }
        let shift = self.bits * (self.dims - 1 - component) as u32;
        let base = self.pack(counts.iter().map(|&c| u32::from(c)));
        let key = if up {
            base + (1u128 << shift)
        } else {
            base - (1u128 << shift)
        };
        self.keys.binary_search(&key).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PeakRate;

    fn space(areas: usize, n: u32) -> StateSpace {
        StateSpace::enumerate(areas, &Truncation::new(n).unwrap(), DEFAULT_STATE_BUDGET).unwrap()
    }

    #[test]
    fn small_spaces() {
        let s = space(1, 1);
        let states: Vec<&[u16]> = (0..s.len()).map(|i| s.counts(i)).collect();
        assert_eq!(
            states,
            vec![&[0, 0, 0][..], &[0, 0, 1], &[0, 1, 0], &[1, 0, 0]]
        );
        assert_eq!(space(1, 2).len(), 10);
        assert_eq!(space(2, 1).len(), 7);
    }

    #[test]
    fn lattice_point_counts() {
        // C(n + d, d) points with d components summing to at most n
        fn choose(n: u64, k: u64) -> u64 {
            (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
        }
        for n in 1..=12u32 {
            assert_eq!(space(1, n).len() as u64, choose(u64::from(n) + 3, 3));
            assert_eq!(space(2, n).len() as u64, choose(u64::from(n) + 6, 6));
            let t = Truncation::new(n).unwrap();
            assert_eq!(
                StateSpace::count(&t, &[true; 6]) as u64,
                choose(u64::from(n) + 6, 6)
            );
        }
    }

    #[test]
    fn index_is_a_bijection() {
        let s = space(2, 6);
        for i in 0..s.len() {
            assert_eq!(s.index_of(&s.state(i)), Some(i));
            if i > 0 {
                assert!(s.counts(i - 1) < s.counts(i), "lexicographic order");
            }
        }
        assert_eq!(s.index_of_counts(&[7, 0, 0, 0, 0, 0]), None);
        assert_eq!(s.index_of_counts(&[0, 0, 0]), None);
    }

    #[test]
    fn area_caps_and_masks() {
        let t = Truncation::with_area_caps(4, Some(vec![1, 4])).unwrap();
        let s = StateSpace::enumerate(2, &t, DEFAULT_STATE_BUDGET).unwrap();
        for i in 0..s.len() {
            let c = s.counts(i);
            assert!(c[0] + c[1] + c[2] <= 1);
            assert!(s.total(i) <= 4);
        }
        assert_eq!(s.len() as f64, StateSpace::count(&t, &[true; 6]));

        let cfg = CellConfig::single(
            PeakRate::from_int(1).unwrap(),
            PeakRate::from_int(1).unwrap(),
        );
        let dc_only = TrafficMix::new(1.0, 0.0, 1.0).unwrap();
        let s =
            StateSpace::for_traffic(&cfg, &dc_only, &Truncation::new(50).unwrap(), 100).unwrap();
        assert_eq!(s.len(), 51);
        assert!(!s.is_active(0) && s.is_active(2));
    }

    #[test]
    fn budget_is_enforced_with_suggestion() {
        let t = Truncation::new(60).unwrap();
        match StateSpace::enumerate(2, &t, 10_000) {
            Err(Error::TooLarge {
                suggested_max_total,
                budget,
                ..
            }) => {
                assert_eq!(budget, 10_000);
                let ok = Truncation::new(suggested_max_total).unwrap();
                assert!(StateSpace::count(&ok, &[true; 6]) <= 10_000.0);
                let over = Truncation::new(suggested_max_total + 1).unwrap();
                assert!(StateSpace::count(&over, &[true; 6]) > 10_000.0);
            }
            other => panic!("expected TooLarge, got {other:?}"),
        }
    }

    #[test]
    fn neighbours_follow_unit_vectors() {
        let s = space(1, 3);
        let i = s.index_of_counts(&[1, 0, 1]).unwrap();
        let up = s.neighbour(s.counts(i), 1, true).unwrap();
        assert_eq!(s.counts(up), &[1, 1, 1]);
        let down = s.neighbour(s.counts(i), 0, false).unwrap();
        assert_eq!(s.counts(down), &[0, 0, 1]);
        let full = s.index_of_counts(&[1, 1, 1]).unwrap();
        assert_eq!(s.neighbour(s.counts(full), 2, true), None);
        // no borrow into the next component
        let e = s.index_of_counts(&[1, 0, 0]).unwrap();
        assert_eq!(s.neighbour(s.counts(e), 1, false), None);
        let top = s.index_of_counts(&[0, 0, 3]).unwrap();
        assert_eq!(s.neighbour(s.counts(top), 2, true), None);
    }
}
