use alloc::vec::Vec;

use super::{
    jfq_route_agg, jsq_route_agg, slot_for, Policy, RouteDecision, StateSpace, Truncation,
};
use crate::model::{bernoulli_probabilities, Aggregates, CellConfig, Slot, TrafficMix};
use crate::Result;

/// Sparse infinitesimal generator over a [`StateSpace`].
///
/// Off-diagonal rates are stored row-wise (CSR, columns ascending) and the
/// diagonal separately. Arrivals that would leave the truncation are dropped
/// and their rates kept per state so the blocking probability can be read off
/// a stationary distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    space: StateSpace,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    rates: Vec<f64>,
    diag: Vec<f64>,
    blocked_sc: Vec<f64>,
    blocked_dc: Vec<f64>,
    sc_arrivals: f64,
    dc_arrivals: f64,
}

/// Generator on the states reachable from the empty cell inside `trunc`.
pub fn build_generator(
    cfg: &CellConfig,
    traffic: &TrafficMix,
    trunc: &Truncation,
    policy: Policy,
) -> Result<Generator> {
    let space = StateSpace::for_traffic(cfg, traffic, trunc, super::DEFAULT_STATE_BUDGET)?;
    Ok(Generator::build(cfg, traffic, space, policy))
}

impl Generator {
    /// Transitions T1–T6 on an explicit state space.
    pub fn build(
        cfg: &CellConfig,
        traffic: &TrafficMix,
        space: StateSpace,
        policy: Policy,
    ) -> Self {
        let n = space.len();
        let areas = cfg.num_areas();
        let sigma = traffic.sigma();
        let trunc = space.truncation().clone();
        let sc: Vec<f64> = (0..areas).map(|j| traffic.sc_rate(cfg, j)).collect();
        let dc: Vec<f64> = (0..areas).map(|j| traffic.dc_rate(cfg, j)).collect();
        let bern: Vec<(f64, f64)> = (0..areas)
            .map(|j| bernoulli_probabilities(cfg, j))
            .collect();

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(n * (3 * areas + 1));
        let mut rates = Vec::with_capacity(n * (3 * areas + 1));
        let mut diag = Vec::with_capacity(n);
        let mut blocked_sc = Vec::with_capacity(n);
        let mut blocked_dc = Vec::with_capacity(n);
        let mut row: Vec<(u32, f64)> = Vec::with_capacity(6 * areas);
        row_ptr.push(0);

        for i in 0..n {
            let counts = space.counts(i);
            let agg = Aggregates::from_counts(counts);
            let total = space.total(i);
            let (mut lost_sc, mut lost_dc) = (0.0, 0.0);
            row.clear();

            let push = |row: &mut Vec<(u32, f64)>, target: Option<usize>, rate: f64| -> bool {
                match target {
                    Some(t) if rate > 0.0 => {
                        row.push((t as u32, rate));
                        true
                    }
                    Some(_) => true,
                    None => false,
                }
            };

            for j in 0..areas {
                let area_total: u32 = counts[3 * j..3 * j + 3].iter().map(|&c| u32::from(c)).sum();
                let room = trunc.admits_arrival(total, area_total, j);
                let up = |slot: Slot| {
                    if room {
                        space.neighbour(counts, 3 * j + slot as usize, true)
                    } else {
                        None
                    }
                };

                // T1, T2: SC arrival routed by the policy
                if sc[j] > 0.0 {
                    let (to1, to2) = match policy {
                        Policy::Bernoulli => (sc[j] * bern[j].0, sc[j] * bern[j].1),
                        Policy::Jfq | Policy::Jsq => {
                            let d = if policy == Policy::Jfq {
                                jfq_route_agg(agg, j, cfg)
                            } else {
                                jsq_route_agg(agg)
                            };
                            match slot_for(d) {
                                Some(Slot::Sc1) => (sc[j], 0.0),
                                Some(_) => (0.0, sc[j]),
                                None => {
                                    debug_assert_eq!(d, RouteDecision::Tie);
                                    (0.5 * sc[j], 0.5 * sc[j])
                                }
                            }
                        }
                    };
                    for (slot, rate) in [(Slot::Sc1, to1), (Slot::Sc2, to2)] {
                        if rate > 0.0 && !push(&mut row, up(slot), rate) {
                            lost_sc += rate;
                        }
                    }
                }
                // T3: DC arrival
                if dc[j] > 0.0 && !push(&mut row, up(Slot::Dc), dc[j]) {
                    lost_dc += dc[j];
                }

                // T4–T6: departures at per-user rates D_{1,j}, D_{2,j}, E_j
                let area = cfg.area(j);
                let (c1, c2) = (area.c1.value(), area.c2.value());
                let [n1j, n2j, mj] = [0, 1, 2].map(|k| f64::from(counts[3 * j + k]));
                let d1 = || c1 / f64::from(agg.on_carrier1());
                let d2 = || c2 / f64::from(agg.on_carrier2());
                if n1j > 0.0 {
                    push(
                        &mut row,
                        space.neighbour(counts, 3 * j, false),
                        n1j * d1() / sigma,
                    );
                }
                if n2j > 0.0 {
                    push(
                        &mut row,
                        space.neighbour(counts, 3 * j + 1, false),
                        n2j * d2() / sigma,
                    );
                }
                if mj > 0.0 {
                    push(
                        &mut row,
                        space.neighbour(counts, 3 * j + 2, false),
                        mj * (d1() + d2()) / sigma,
                    );
                }
            }

            row.sort_unstable_by_key(|&(c, _)| c);
            let mut out = 0.0;
            for &(c, r) in &row {
                cols.push(c);
                rates.push(r);
                out += r;
            }
            row_ptr.push(cols.len());
            diag.push(-out);
            blocked_sc.push(lost_sc);
            blocked_dc.push(lost_dc);
        }

        Self {
            space,
            row_ptr,
            cols,
            rates,
            diag,
            blocked_sc,
            blocked_dc,
            sc_arrivals: sc.iter().sum(),
            dc_arrivals: dc.iter().sum(),
        }
    }

    /// Assembles a generator from raw parts without any validation.
    ///
    /// Meant for diagnostics and for feeding deliberately broken matrices to
    /// the structural checks.
    pub fn from_raw_parts(
        space: StateSpace,
        row_ptr: Vec<usize>,
        cols: Vec<u32>,
        rates: Vec<f64>,
        diag: Vec<f64>,
    ) -> Self {
        let n = diag.len();
        Self {
            space,
            row_ptr,
            cols,
            rates,
            diag,
            blocked_sc: alloc::vec![0.0; n],
            blocked_dc: alloc::vec![0.0; n],
            sc_arrivals: 0.0,
            dc_arrivals: 0.0,
        }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Off-diagonal entries of row `i` as `(column, rate)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .zip(&self.rates[range])
            .map(|(&c, &r)| (c as usize, r))
    }

    #[inline]
    pub fn diagonal(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// Entry `Q[i][j]`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, r)| r)
    }

    pub fn nonzeros(&self) -> usize {
        self.cols.len() + self.diag.len()
    }

    /// Uniformization constant: the largest total outflow rate.
    pub fn uniformization_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, &d| m.max(-d))
    }

    pub(crate) fn blocked_rates(&self, i: usize) -> (f64, f64) {
        (self.blocked_sc[i], self.blocked_dc[i])
    }

    pub(crate) fn arrival_rates(&self) -> (f64, f64) {
        (self.sc_arrivals, self.dc_arrivals)
    }

    /// Largest `|Σ_j Q[i][j]|` relative to the row's outflow, over all rows.
    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let off: f64 = self.row(i).map(|(_, r)| r).sum();
                let scale = off.abs().max(self.diag[i].abs()).max(1.0);
                (off + self.diag[i]).abs() / scale
            })
            .fold(0.0, f64::max)
    }

    /// Rows holding a negative off-diagonal or an entry that does not move
    /// exactly one component by one unit.
    pub fn structural_violations(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let from = self.space.counts(i);
                self.row(i).any(|(c, r)| {
                    if r < 0.0 || c >= self.len() {
                        return true;
                    }
                    let to = self.space.counts(c);
                    let mut diff = from.iter().zip(to).filter(|(a, b)| a != b);
                    match (diff.next(), diff.next()) {
                        (Some((&a, &b)), None) => a.abs_diff(b) != 1,
                        _ => true,
                    }
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AreaSpec, PeakRate};
    use alloc::vec;

    fn single(c1: &str, c2: &str) -> CellConfig {
        CellConfig::single(PeakRate::parse(c1).unwrap(), PeakRate::parse(c2).unwrap())
    }

    fn full_gen(cfg: &CellConfig, t: &TrafficMix, n: u32, p: Policy) -> Generator {
        let space =
            StateSpace::enumerate(cfg.num_areas(), &Truncation::new(n).unwrap(), 1 << 20).unwrap();
        Generator::build(cfg, t, space, p)
    }

    fn idx(g: &Generator, c: &[u32]) -> usize {
        g.space().index_of_counts(c).unwrap()
    }

    #[test]
    fn dc_only_empty_state_has_single_outflow() {
        let cfg = single("1", "1");
        let t = TrafficMix::new(0.7, 0.0, 1.0).unwrap();
        let g = full_gen(&cfg, &t, 3, Policy::Jfq);
        let e = idx(&g, &[0, 0, 0]);
        let row: Vec<_> = g.row(e).collect();
        assert_eq!(row, vec![(idx(&g, &[0, 0, 1]), 0.7)]);
        assert_eq!(g.diagonal(e), -0.7);
    }

    #[test]
    fn dc_departure_uses_aggregate_rate() {
        let cfg = single("1", "2");
        let t = TrafficMix::new(0.5, 0.0, 1.0).unwrap();
        let g = full_gen(&cfg, &t, 3, Policy::Jfq);
        assert_eq!(g.entry(idx(&g, &[0, 0, 1]), idx(&g, &[0, 0, 0])), 3.0);
    }

    #[test]
    fn jfq_routes_to_idle_carrier() {
        let cfg = single("1", "1");
        let t = TrafficMix::new(0.8, 1.0, 1.0).unwrap();
        let g = full_gen(&cfg, &t, 3, Policy::Jfq);
        let s = idx(&g, &[0, 1, 0]);
        assert_eq!(g.entry(s, idx(&g, &[1, 1, 0])), 0.8);
        assert_eq!(g.entry(s, idx(&g, &[0, 2, 0])), 0.0);
        // tie splits the SC rate in half
        let e = idx(&g, &[0, 0, 0]);
        assert_eq!(g.entry(e, idx(&g, &[1, 0, 0])), 0.4);
        assert_eq!(g.entry(e, idx(&g, &[0, 1, 0])), 0.4);
    }

    #[test]
    fn sc_departures_follow_processor_sharing() {
        let cfg = single("10", "14");
        let t = TrafficMix::new(1.0, 0.5, 2.0).unwrap();
        let g = full_gen(&cfg, &t, 6, Policy::Jfq);
        let s = idx(&g, &[2, 3, 1]);
        assert!((g.entry(s, idx(&g, &[1, 3, 1])) - 2.0 * (10.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((g.entry(s, idx(&g, &[2, 2, 1])) - 3.0 * 3.5 / 2.0).abs() < 1e-12);
        assert!((g.entry(s, idx(&g, &[2, 3, 0])) - (10.0 / 3.0 + 3.5) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_arrivals_are_blocked() {
        let cfg = single("1", "1");
        let t = TrafficMix::new(1.0, 0.5, 1.0).unwrap();
        let g = full_gen(&cfg, &t, 2, Policy::Jfq);
        let s = idx(&g, &[1, 0, 1]);
        assert_eq!(g.blocked_rates(s), (0.5, 0.5));
        assert_eq!(g.blocked_rates(idx(&g, &[0, 0, 1])), (0.0, 0.0));
    }

    #[test]
    fn rows_sum_to_zero_and_are_unit_moves() {
        let cfg = CellConfig::new(vec![
            AreaSpec::new(
                PeakRate::parse("10").unwrap(),
                PeakRate::parse("14").unwrap(),
                0.5,
            ),
            AreaSpec::new(
                PeakRate::parse("1").unwrap(),
                PeakRate::parse("1.4").unwrap(),
                0.5,
            ),
        ])
        .unwrap();
        let t = TrafficMix::new(2.0, 0.5, 1.0).unwrap();
        for p in [Policy::Jfq, Policy::Jsq, Policy::Bernoulli] {
            let g = full_gen(&cfg, &t, 6, p);
            assert!(g.max_row_sum_error() <= 1e-12);
            assert!(g.structural_violations().is_empty());
        }
    }

    #[test]
    fn jfq_and_jsq_coincide_at_equal_capacity() {
        let cfg = CellConfig::new(vec![
            AreaSpec::new(
                PeakRate::parse("3").unwrap(),
                PeakRate::parse("3").unwrap(),
                0.25,
            ),
            AreaSpec::new(
                PeakRate::parse("1.5").unwrap(),
                PeakRate::parse("1.5").unwrap(),
                0.75,
            ),
        ])
        .unwrap();
        let t = TrafficMix::new(1.3, 0.6, 1.0).unwrap();
        assert_eq!(
            full_gen(&cfg, &t, 7, Policy::Jfq),
            full_gen(&cfg, &t, 7, Policy::Jsq)
        );
        let uneq = single("1", "2");
        assert_ne!(
            full_gen(&uneq, &t, 7, Policy::Jfq),
            full_gen(&uneq, &t, 7, Policy::Jsq)
        );
    }

    #[test]
    fn corrupted_parts_are_detected() {
        let cfg = single("1", "1");
        let t = TrafficMix::new(1.0, 0.5, 1.0).unwrap();
        let g = full_gen(&cfg, &t, 2, Policy::Jfq);
        let mut diag: Vec<f64> = (0..g.len()).map(|i| g.diagonal(i)).collect();
        diag[3] += 0.25;
        let bad = Generator::from_raw_parts(
            g.space.clone(),
            g.row_ptr.clone(),
            g.cols.clone(),
            g.rates.clone(),
            diag,
        );
        assert!(bad.max_row_sum_error() > 0.1);
        let mut cols = g.cols.clone();
        cols[0] = (g.len() - 1) as u32;
        let jump = Generator::from_raw_parts(
            g.space.clone(),
            g.row_ptr.clone(),
            cols,
            g.rates.clone(),
            g.diag.clone(),
        );
        assert!(!jump.structural_violations().is_empty());
    }
}
