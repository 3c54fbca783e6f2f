use approx::assert_relative_eq;
use flowcap_core::capacity::{max_sustainable_intensity, CapacityQuery, Evaluator};
use flowcap_core::ctmc::{
    build_generator, solve, solve_stationary, Policy, SolveOptions, Truncation, DEFAULT_MAX_ITERS,
    DEFAULT_TOLERANCE,
};
use flowcap_core::model::{AreaSpec, CellConfig, PeakRate, TrafficMix};
use flowcap_core::sim::{simulate, SimOptions, StopRule};
use proptest::prelude::*;

fn rate(tenths: u64) -> PeakRate {
    PeakRate::from_ratio(tenths, 10).unwrap()
}

fn single(c1: &str, c2: &str) -> CellConfig {
    CellConfig::single(PeakRate::parse(c1).unwrap(), PeakRate::parse(c2).unwrap())
}

fn arb_policy() -> impl Strategy<Value = Policy> {
    prop_oneof![
        Just(Policy::Jfq),
        Just(Policy::Jsq),
        Just(Policy::Bernoulli)
    ]
}

fn arb_cell() -> impl Strategy<Value = CellConfig> {
    prop::collection::vec((1u64..40, 1u64..40, 1u32..10), 1..3).prop_map(|areas| {
        let w: u32 = areas.iter().map(|a| a.2).sum();
        let mut q: Vec<f64> = areas
            .iter()
            .map(|a| f64::from(a.2) / f64::from(w))
            .collect();
        let rest: f64 = q[..q.len() - 1].iter().sum();
        *q.last_mut().unwrap() = 1.0 - rest;
        CellConfig::new(
            areas
                .iter()
                .zip(q)
                .map(|(a, q)| AreaSpec::new(rate(a.0), rate(a.1), q))
                .collect(),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generator_rows_sum_to_zero(cell in arb_cell(), rho in 0.05f64..1.5, phi in 0.0f64..=1.0,
                                  policy in arb_policy()) {
        let t = TrafficMix::at_load(&cell, rho, phi, 1.0).unwrap();
        let n = if cell.num_areas() == 1 { 12 } else { 5 };
        let g = build_generator(&cell, &t, &Truncation::new(n).unwrap(), policy).unwrap();
        prop_assert!(g.max_row_sum_error() <= 1e-12);
        prop_assert!(g.structural_violations().is_empty());
    }

    #[test]
    fn stationary_vector_is_a_distribution(cell in arb_cell(), rho in 0.05f64..0.95, phi in 0.0f64..=1.0,
                                           policy in arb_policy()) {
        let t = TrafficMix::at_load(&cell, rho, phi, 1.0).unwrap();
        let n = if cell.num_areas() == 1 { 15 } else { 5 };
        let g = build_generator(&cell, &t, &Truncation::new(n).unwrap(), policy).unwrap();
        let d = solve_stationary(&g, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS).unwrap();
        prop_assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(d.probs.iter().all(|&p| p >= 0.0));
        prop_assert!(d.residual <= DEFAULT_TOLERANCE * g.uniformization_rate());
    }

    #[test]
    fn simulation_is_reproducible(seed in any::<u64>(), stream in 0u64..4, phi in 0.0f64..=1.0) {
        let cell = single("1", "1.3");
        let t = TrafficMix::at_load(&cell, 0.6, phi, 1.0).unwrap();
        let mut o = SimOptions::new(StopRule::Completions(3_000), seed);
        o.stream = stream;
        let a = simulate(&cell, &t, Policy::Jfq.into(), &o).unwrap();
        let b = simulate(&cell, &t, Policy::Jfq.into(), &o).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn approx_capacity_shrinks_as_target_grows(t1 in 0.05f64..1.9, t2 in 0.05f64..1.9, phi in 0.0f64..=1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let cell = single("1", "1");
        let q = |target| CapacityQuery::new(cell.clone(), phi, target, Evaluator::Approx);
        let a = max_sustainable_intensity(&q(lo));
        let b = max_sustainable_intensity(&q(hi));
        if let (Ok(a), Ok(b)) = (a, b) {
            // non-increasing up to the bracket widths
            prop_assert!(b.bracket.0 <= a.bracket.1 + 1e-12);
        }
    }
}

/// With Bernoulli routing and only SC traffic each carrier is an
/// independent M/M/1-PS queue at load ρ, so `γ_SC = (C1 + C2)(1 − ρ)/2`.
#[test]
fn bernoulli_sc_matches_independent_queues() {
    let cell = single("1", "2");
    for rho in [0.2, 0.5, 0.8] {
        let t = TrafficMix::at_load(&cell, rho, 1.0, 1.0).unwrap();
        let sol = solve(&cell, &t, Policy::Bernoulli, &SolveOptions::default()).unwrap();
        let want = 3.0 * (1.0 - rho) / 2.0;
        assert_relative_eq!(sol.report.area(0).sc.unwrap(), want, max_relative = 1e-4);
    }
}

#[test]
fn bernoulli_simulation_matches_independent_queues() {
    let cell = single("1", "2");
    let t = TrafficMix::at_load(&cell, 0.5, 1.0, 1.0).unwrap();
    let r = simulate(
        &cell,
        &t,
        Policy::Bernoulli.into(),
        &SimOptions::new(StopRule::Completions(400_000), 9),
    )
    .unwrap();
    let ci = r.area(0).sc.ci().copied().unwrap();
    assert!(
        (ci.mean - 0.75).abs() <= ci.half_width.max(0.0075),
        "{ci:?}"
    );
}

#[test]
fn jfq_beats_state_blind_routing() {
    let cell = single("1", "2");
    for rho in [0.3, 0.6, 0.85] {
        let t = TrafficMix::at_load(&cell, rho, 1.0, 1.0).unwrap();
        let g = |p| {
            solve(&cell, &t, p, &SolveOptions::default())
                .unwrap()
                .report
                .area(0)
                .sc
                .unwrap()
        };
        assert!(g(Policy::Jfq) > g(Policy::Bernoulli), "rho={rho}");
    }
}

#[test]
fn multi_area_dc_only_is_ideally_balanced() {
    let cell = CellConfig::new(vec![
        AreaSpec::new(rate(100), rate(140), 0.5),
        AreaSpec::new(rate(10), rate(14), 0.5),
    ])
    .unwrap();
    for rho in [0.2, 0.5, 0.8] {
        let t = TrafficMix::at_load(&cell, rho, 0.0, 1.0).unwrap();
        let sol = solve(&cell, &t, Policy::Jfq, &SolveOptions::default()).unwrap();
        for j in 0..2 {
            let want = cell.area(j).total() * (1.0 - rho);
            assert_relative_eq!(sol.report.area(j).dc.unwrap(), want, max_relative = 1e-4);
        }
    }
}
