//! Maximum sustainable traffic intensity for a throughput target.
//!
//! The mean throughput `γ̄_J` of the target area decreases with the traffic
//! intensity `Θ = Λσ`, so the largest `Θ` meeting a target is found by
//! bisection on `[0, 0.999·C̄]`.

use alloc::format;
use alloc::vec::Vec;

use crate::ctmc::{solve, Policy, SolveOptions};
use crate::model::{harmonic_capacity, AreaSpec, CellConfig, PeakRate, TrafficMix};
use crate::sim::{simulate, Estimate, SimOptions, StopRule};
use crate::{Error, Result};

/// Largest searched load; `ρ = 1` itself is never probed.
pub const MAX_SEARCH_LOAD: f64 = 0.999;
pub const DEFAULT_TOLERANCE: f64 = 0.01;
/// Traffic mixes of the published capacity table, in column order.
pub const TABLE_PHIS: [f64; 4] = [1.0, 0.8, 0.5, 0.2];
pub const PRESET_NAMES: [&str; 3] = ["dc-hsdpa", "db-hsdpa", "lte"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Evaluator {
    Ctmc,
    Sim,
    /// `γ̄_J ≈ (1 − ρ)·(φ·C_max,J + (1 − φ)·(C_{1,J} + C_{2,J}))`.
    Approx,
}

impl Evaluator {
    pub fn name(&self) -> &'static str {
        match self {
            Evaluator::Ctmc => "ctmc",
            Evaluator::Sim => "sim",
            Evaluator::Approx => "approx",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ctmc" => Ok(Evaluator::Ctmc),
            "sim" => Ok(Evaluator::Sim),
            "approx" => Ok(Evaluator::Approx),
            other => Err(Error::InvalidConfig(format!(
                "unknown evaluator `{other}` (valid: ctmc, sim, approx)"
            ))),
        }
    }
}

/// Settings of the simulation probes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimProbe {
    pub seed: u64,
    pub initial_completions: u64,
    pub max_completions: u64,
}

impl Default for SimProbe {
    fn default() -> Self {
        Self {
            seed: 1,
            initial_completions: 100_000,
            max_completions: 12_800_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityQuery {
    pub cfg: CellConfig,
    pub phi: f64,
    /// Target area; `None` is the cell edge.
    pub area: Option<usize>,
    /// Target `γ̄` in Mbit/s.
    pub target: f64,
    pub evaluator: Evaluator,
    /// Relative width of the final bracket.
    pub tolerance: f64,
    pub policy: Policy,
    pub solve: SolveOptions,
    pub sim: SimProbe,
    /// Use the simulator for probes whose CTMC does not fit the state budget.
    pub sim_fallback: bool,
}

impl CapacityQuery {
    pub fn new(cfg: CellConfig, phi: f64, target: f64, evaluator: Evaluator) -> Self {
        Self {
            cfg,
            phi,
            area: None,
            target,
            evaluator,
            tolerance: DEFAULT_TOLERANCE,
            policy: Policy::Jfq,
            solve: SolveOptions {
                blocking_threshold: 1e-5,
                ..SolveOptions::default()
            },
            sim: SimProbe::default(),
            sim_fallback: true,
        }
    }

    fn target_area(&self) -> usize {
        self.area.unwrap_or(self.cfg.edge())
    }
}

/// One evaluation of `γ̄_J` during the search.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub theta: f64,
    pub gamma: f64,
    /// Confidence half-width for simulated probes.
    pub half_width: Option<f64>,
    pub evaluator: Evaluator,
    /// CTMC states, when the chain was solved.
    pub states: Option<usize>,
    pub blocking: Option<f64>,
    /// Simulated completions, when simulated.
    pub completions: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PublishedComparison {
    pub expected: Option<f64>,
    /// `(Θ* − expected) / expected`
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    pub theta_star: f64,
    /// `γ̄_J` evaluated at `theta_star`.
    pub achieved: f64,
    pub zero_load_throughput: f64,
    /// Final bracket: `γ̄_J(lo) ≥ target > γ̄_J(hi)`.
    pub bracket: (f64, f64),
    pub history: Vec<(f64, f64)>,
    pub probes: Vec<Probe>,
    pub comparison: Option<PublishedComparison>,
}

/// `φ·C_max,J + (1 − φ)·(C_{1,J} + C_{2,J})`, the throughput of an empty cell.
pub fn zero_load_throughput(area: &AreaSpec, phi: f64) -> f64 {
    phi * area.c_max() + (1.0 - phi) * area.total()
}

fn evaluate(q: &CapacityQuery, theta: f64, c_bar: f64) -> Result<Probe> {
    let j = q.target_area();
    let area = q.cfg.area(j);
    let rho = theta / c_bar;
    match q.evaluator {
        Evaluator::Approx => Ok(Probe {
            theta,
            gamma: (1.0 - rho) * zero_load_throughput(area, q.phi),
            half_width: None,
            evaluator: Evaluator::Approx,
            states: None,
            blocking: None,
            completions: None,
        }),
        Evaluator::Ctmc => {
            let traffic = TrafficMix::new(theta, q.phi, 1.0)?;
            match solve(&q.cfg, &traffic, q.policy, &q.solve) {
                Ok(s) if s.report.reliable || !q.sim_fallback => {
                    Ok(Probe {
                        theta,
                        gamma: s.report.area(j).mean.ok_or_else(|| {
                            Error::Degenerate("no traffic in the target area".into())
                        })?,
                        half_width: None,
                        evaluator: Evaluator::Ctmc,
                        states: Some(s.report.states),
                        blocking: Some(s.report.blocking.max()),
                        completions: None,
                    })
                }
                Ok(_) => simulate_probe(q, theta, j),
                Err(Error::TooLarge { .. }) if q.sim_fallback => simulate_probe(q, theta, j),
                Err(e) => Err(e),
            }
        }
        Evaluator::Sim => simulate_probe(q, theta, j),
    }
}

/// Simulates until the interval for `γ̄_J` excludes the target or is narrower
/// than half the tolerance.
fn simulate_probe(q: &CapacityQuery, theta: f64, j: usize) -> Result<Probe> {
    let traffic = TrafficMix::new(theta, q.phi, 1.0)?;
    let mut completions = q.sim.initial_completions;
    loop {
        let opts = SimOptions::new(StopRule::Completions(completions), q.sim.seed);
        let report = simulate(&q.cfg, &traffic, q.policy.into(), &opts)?;
        let est = report.area(j).mean;
        if let Estimate::Value { ci, .. } = est {
            let settled = !ci.contains(q.target) || ci.half_width <= 0.5 * q.tolerance * q.target;
            if settled || completions >= q.sim.max_completions {
                return Ok(Probe {
                    theta,
                    gamma: ci.mean,
                    half_width: Some(ci.half_width),
                    evaluator: Evaluator::Sim,
                    states: None,
                    blocking: None,
                    completions: Some(completions),
                });
            }
        } else if completions >= q.sim.max_completions {
            return Err(Error::NoData(format!(
                "target area got too few completions at theta = {theta}"
            )));
        }
        completions = (completions * 2).min(q.sim.max_completions);
    }
}

/// Largest `Θ` whose `γ̄_J` still meets `query.target`.
pub fn max_sustainable_intensity(query: &CapacityQuery) -> Result<CapacityResult> {
    let q = query;
    if !(q.target > 0.0 && q.target.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "target {} must be positive",
            q.target
        )));
    }
    if !(q.tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance {} must be positive",
            q.tolerance
        )));
    }
    if !(0.0..=1.0).contains(&q.phi) {
        return Err(Error::InvalidArgument(format!(
            "phi = {} outside [0, 1]",
            q.phi
        )));
    }
    let j = q.target_area();
    if j >= q.cfg.num_areas() {
        return Err(Error::InvalidArgument(format!(
            "area {} does not exist",
            j + 1
        )));
    }
    let zero_load = zero_load_throughput(q.cfg.area(j), q.phi);
    if q.target > zero_load {
        return Err(Error::InfeasibleTarget {
            target: q.target,
            max: zero_load,
        });
    }
    let c_bar = harmonic_capacity(&q.cfg);
    if q.target == zero_load {
        return Ok(CapacityResult {
            theta_star: 0.0,
            achieved: zero_load,
            zero_load_throughput: zero_load,
            bracket: (0.0, 0.0),
            history: Vec::new(),
            probes: Vec::new(),
            comparison: None,
        });
    }

    let (mut lo, mut hi) = (0.0, MAX_SEARCH_LOAD * c_bar);
    let mut history = alloc::vec![(lo, hi)];
    let mut probes = Vec::new();
    // absolute floor so a target near the zero-load value still terminates
    let floor = 1e-6 * c_bar;
    while hi - lo > (q.tolerance * hi).max(floor) {
        let mid = 0.5 * (lo + hi);
        let probe = evaluate(q, mid, c_bar).map_err(|e| Error::Probe {
            theta: mid,
            lo,
            hi,
            source: alloc::boxed::Box::new(e),
        })?;
        if probe.gamma >= q.target {
            lo = mid;
        } else {
            hi = mid;
        }
        probes.push(probe);
        history.push((lo, hi));
    }
    let theta_star = 0.5 * (lo + hi);
    let last = evaluate(q, theta_star, c_bar).map_err(|e| Error::Probe {
        theta: theta_star,
        lo,
        hi,
        source: alloc::boxed::Box::new(e),
    })?;
    let achieved = last.gamma;
    probes.push(last);
    Ok(CapacityResult {
        theta_star,
        achieved,
        zero_load_throughput: zero_load,
        bracket: (lo, hi),
        history,
        probes,
        comparison: None,
    })
}

/// A published scenario: two areas of equal probability, the edge at one
/// tenth of the centre peak rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub cfg: CellConfig,
    /// Edge-area throughput target in Mbit/s.
    pub target: f64,
    /// Published `Θ*` for each of [`TABLE_PHIS`].
    pub published: [Option<f64>; 4],
}

impl Preset {
    pub fn published_value(&self, phi: f64) -> Option<f64> {
        TABLE_PHIS
            .iter()
            .position(|&p| (p - phi).abs() < 1e-12)
            .and_then(|k| self.published[k])
    }

    /// Query for the preset's edge target at mix `phi`.
    pub fn query(&self, phi: f64, evaluator: Evaluator) -> CapacityQuery {
        CapacityQuery::new(self.cfg.clone(), phi, self.target, evaluator)
    }

    pub fn compare(&self, phi: f64, theta_star: f64) -> PublishedComparison {
        let expected = self.published_value(phi);
        PublishedComparison {
            expected,
            deviation: expected.map(|e| (theta_star - e) / e),
        }
    }
}

fn preset_cell(center: (&str, &str), edge: (&str, &str)) -> CellConfig {
    let rate = |s: &str| PeakRate::parse(s).expect("preset rates are valid");
    CellConfig::new(alloc::vec![
        AreaSpec::new(rate(center.0), rate(center.1), 0.5),
        AreaSpec::new(rate(edge.0), rate(edge.1), 0.5),
    ])
    .expect("preset geometry is valid")
}

pub fn scenario_presets(name: &str) -> Result<Preset> {
    let preset = match name.trim().to_ascii_lowercase().as_str() {
        "dc-hsdpa" => Preset {
            name: "dc-hsdpa",
            cfg: preset_cell(("10", "10"), ("1", "1")),
            target: 1.0,
            published: [None, Some(1.08), Some(1.48), Some(1.73)],
        },
        "db-hsdpa" => Preset {
            name: "db-hsdpa",
            cfg: preset_cell(("10", "14"), ("1", "1.4")),
            target: 1.0,
            published: [Some(1.75), Some(2.11), Some(2.38), Some(2.65)],
        },
        "lte" => Preset {
            name: "lte",
            cfg: preset_cell(("150", "70"), ("15", "7")),
            target: 10.0,
            published: [Some(12.8), Some(16.0), Some(19.6), Some(24.8)],
        },
        other => {
            return Err(Error::UnknownPreset(format!(
                "`{other}` (valid: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(preset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(c1: &str, c2: &str) -> CellConfig {
        CellConfig::single(PeakRate::parse(c1).unwrap(), PeakRate::parse(c2).unwrap())
    }

    #[test]
    fn dc_only_inversion() {
        for ev in [Evaluator::Approx, Evaluator::Ctmc] {
            let r = max_sustainable_intensity(&CapacityQuery::new(single("1", "1"), 0.0, 0.4, ev))
                .unwrap();
            assert_relative_eq!(r.theta_star, 1.6, max_relative = 0.01);
            assert_relative_eq!(r.achieved, 0.4, max_relative = 0.02);
            let (lo, hi) = r.bracket;
            assert!(lo <= r.theta_star && r.theta_star <= hi && hi - lo <= 0.01 * hi);
        }
    }

    #[test]
    fn target_at_zero_load_gives_zero() {
        let r = max_sustainable_intensity(&CapacityQuery::new(
            single("1", "2"),
            0.0,
            3.0,
            Evaluator::Ctmc,
        ))
        .unwrap();
        assert_eq!(r.theta_star, 0.0);
        assert!(r.probes.is_empty());
    }

    #[test]
    fn bad_queries_are_rejected() {
        let q = |target, phi| CapacityQuery::new(single("1", "2"), phi, target, Evaluator::Approx);
        assert!(matches!(
            max_sustainable_intensity(&q(3.5, 0.0)),
            Err(Error::InfeasibleTarget { .. })
        ));
        assert!(matches!(
            max_sustainable_intensity(&q(2.5, 1.0)),
            Err(Error::InfeasibleTarget { .. })
        ));
        assert!(max_sustainable_intensity(&q(0.0, 0.5)).is_err());
        assert!(max_sustainable_intensity(&q(1.0, 1.5)).is_err());
    }

    #[test]
    fn brackets_straddle_the_target() {
        let q = CapacityQuery::new(single("1", "1.3"), 0.5, 0.9, Evaluator::Ctmc);
        let r = max_sustainable_intensity(&q).unwrap();
        for p in &r.probes[..r.probes.len() - 1] {
            let (lo, hi) = r.history.last().copied().unwrap();
            if p.gamma >= q.target {
                assert!(p.theta <= lo);
            } else {
                assert!(p.theta >= hi);
            }
        }
        for w in r.history.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn approx_agrees_with_ctmc_for_dc_only() {
        for (c1, c2, target) in [("1", "1", 1.0), ("1", "2", 0.5), ("2", "3", 4.0)] {
            let cfg = single(c1, c2);
            let a = max_sustainable_intensity(&CapacityQuery::new(
                cfg.clone(),
                0.0,
                target,
                Evaluator::Approx,
            ))
            .unwrap();
            let c =
                max_sustainable_intensity(&CapacityQuery::new(cfg, 0.0, target, Evaluator::Ctmc))
                    .unwrap();
            assert_relative_eq!(a.theta_star, c.theta_star, max_relative = 0.02);
        }
    }

    #[test]
    fn presets() {
        let db = scenario_presets("db-hsdpa").unwrap();
        assert_eq!(db.cfg.area(0).c2, PeakRate::from_int(14).unwrap());
        assert_eq!(db.cfg.area(1).c2, PeakRate::parse("1.4").unwrap());
        assert_eq!(db.published_value(1.0), Some(1.75));
        let lte = scenario_presets("LTE").unwrap();
        assert_eq!(lte.cfg.area(0).c1, PeakRate::from_int(150).unwrap());
        assert_eq!(lte.target, 10.0);
        let dc = scenario_presets("dc-hsdpa").unwrap();
        assert_eq!(dc.cfg.area(1).c1, PeakRate::from_int(1).unwrap());
        assert_eq!(dc.published_value(1.0), None);
        match scenario_presets("wimax") {
            Err(Error::UnknownPreset(m)) => assert!(m.contains("db-hsdpa")),
            other => panic!("{other:?}"),
        }
        let cmp = db.compare(1.0, 1.925);
        assert_relative_eq!(cmp.deviation.unwrap(), 0.1, max_relative = 1e-9);
    }

    #[test]
    fn dc_hsdpa_sc_only_target_is_zero_load() {
        let dc = scenario_presets("dc-hsdpa").unwrap();
        let r = max_sustainable_intensity(&dc.query(1.0, Evaluator::Ctmc)).unwrap();
        assert_eq!(r.theta_star, 0.0);
    }
}
