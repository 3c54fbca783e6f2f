use flowcap::config::{emit, parse_config, parse_config_str, Load, RunSpec, SimLength, SweepGrid};
use flowcap::{CliError, ExitCode};
use flowcap_core::capacity::Evaluator;
use flowcap_core::ctmc::Policy;
use flowcap_core::model::{AreaSpec, CellConfig, PeakRate};
use proptest::prelude::*;

const MINIMAL: &str = "areas.1.c1 = 1\nareas.1.c2 = 1\ntraffic.phi = 0.5\n";

fn err(text: &str) -> (Option<usize>, String) {
    match parse_config_str(text, "t.cfg") {
        Err(CliError::Config { at, message }) => (at.line, message),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn minimal_single_area() {
    let s = parse_config_str(MINIMAL, "t.cfg").unwrap();
    assert_eq!(s.cell.num_areas(), 1);
    assert_eq!(s.cell.area(0).q, 1.0);
    assert_eq!(s.phi, 0.5);
    assert_eq!(s.sigma, 1.0);
    assert_eq!(s.policy, Policy::Jfq);
    assert_eq!(s.evaluator, Evaluator::Ctmc);
    assert_eq!(s.load, None);
}

#[test]
fn probabilities_must_sum_to_one() {
    let text = "areas.1.c1=1\nareas.1.c2=2\nareas.2.c1=1\nareas.2.c2=1\nareas.1.q=0.4\nareas.2.q=0.5\ntraffic.phi=0.5\n";
    let (line, msg) = err(text);
    assert_eq!(line, Some(5));
    assert!(msg.contains("sum to 1"), "{msg}");
    let e = parse_config_str(text, "t.cfg").unwrap_err();
    assert_eq!(e.exit_code(), ExitCode::Validation);
    assert!(e.to_string().starts_with("t.cfg:5:"));
}

#[test]
fn phi_range() {
    let (line, msg) = err("areas.1.c1=1\nareas.1.c2=1\ntraffic.phi = 1.5\n");
    assert_eq!(line, Some(3));
    assert!(
        msg.contains("traffic.phi") && msg.contains("[0, 1]"),
        "{msg}"
    );
}

#[test]
fn unknown_duplicate_and_missing_keys() {
    let (line, msg) = err("areas.1.c1=1\nareas.1.c2=1\ntraffic.phi=0\ntraffic.mu=3\n");
    assert_eq!(line, Some(4));
    assert!(msg.contains("unknown key `traffic.mu`"));

    let (line, msg) = err("areas.1.c1=1\nareas.1.c2=1\ntraffic.phi=0\n\ntraffic.phi=0.2\n");
    assert_eq!(line, Some(5));
    assert!(msg.contains("duplicate") && msg.contains("line 3"), "{msg}");

    let (_, msg) = err("areas.1.c1=1\ntraffic.phi=0\n");
    assert!(msg.contains("areas.1.c2"), "{msg}");
    let (_, msg) = err("areas.1.c1=1\nareas.1.c2=1\n");
    assert!(msg.contains("traffic.phi"), "{msg}");
    let (line, msg) =
        err("areas.1.c1=1\nareas.1.c2=1\nareas.3.c1=1\nareas.3.c2=1\ntraffic.phi=0\n");
    assert_eq!(line, Some(3));
    assert!(msg.contains("without gaps"), "{msg}");
}

#[test]
fn malformed_lines() {
    assert_eq!(err("areas.1.c1 1\n").0, Some(1));
    assert_eq!(err("areas.1.c1 =\n").0, Some(1));
    let (line, msg) = err("areas.1.c1=-1\nareas.1.c2=1\ntraffic.phi=0\n");
    assert_eq!(line, Some(1));
    assert!(msg.contains("areas.1.c1"));
    assert_eq!(
        err("areas.1.c1=1\nareas.1.c2=1\ntraffic.phi=0\nseed=-3\n").0,
        Some(4)
    );
    assert_eq!(
        err("areas.1.c1=1\nareas.1.c2=1\ntraffic.phi=0\ntraffic.rho=nan\n").0,
        Some(4)
    );
    assert_eq!(
        err("areas.1.c1=1\nareas.1.c2=1\ntraffic.phi=0\npolicy=lifo\n").0,
        Some(4)
    );
}

#[test]
fn exclusive_keys() {
    let (line, msg) =
        err("areas.1.c1=1\nareas.1.c2=1\ntraffic.phi=0\ntraffic.rho=0.5\ntraffic.lambda=1\n");
    assert_eq!(line, Some(5));
    assert!(msg.contains("mutually exclusive"));
}

#[test]
fn radii_give_area_probabilities() {
    let s = parse_config_str(
        "areas.1.c1=10\nareas.1.c2=14\nareas.2.c1=1\nareas.2.c2=1.4\ngeometry.radii = 1, 2\ntraffic.phi=0.5\n",
        "t",
    )
    .unwrap();
    assert_eq!(s.cell.area(0).q, 0.25);
    assert_eq!(s.cell.area(1).q, 0.75);
    let (line, _) = err(
        "areas.1.c1=10\nareas.1.c2=14\nareas.2.c1=1\nareas.2.c2=1.4\ngeometry.radii = 1, 2\nareas.1.q=0.5\nareas.2.q=0.5\ntraffic.phi=0.5\n",
    );
    assert_eq!(line, Some(5));
}

#[test]
fn sweep_grid_validation() {
    let base = "areas.1.c1=1\nareas.1.c2=1\ntraffic.phi=0\n";
    assert_eq!(err(&format!("{base}sweep.rho = 0.5, 1.2\n")).0, Some(4));
    let s = parse_config_str(
        &format!("{base}evaluator = sim\nsweep.rho = 0.5, 1.2\n"),
        "t",
    )
    .unwrap();
    assert_eq!(s.sweep.rho, Some(vec![0.5, 1.2]));
}

#[test]
fn sweep_points_are_phi_major() {
    let g = SweepGrid {
        rho: Some(vec![0.1, 0.2]),
        phi: Some(vec![0.0, 1.0]),
    };
    assert_eq!(
        g.points(0.5),
        vec![(0.0, 0.1), (0.0, 0.2), (1.0, 0.1), (1.0, 0.2)]
    );
    let d = SweepGrid::default().points(0.3);
    assert_eq!(d.len(), 9);
    assert!(d.iter().all(|p| p.0 == 0.3));
}

#[test]
fn reads_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, MINIMAL).unwrap();
    assert_eq!(
        parse_config(&path).unwrap(),
        parse_config_str(MINIMAL, "x").unwrap()
    );
    let e = parse_config(&dir.path().join("missing.cfg")).unwrap_err();
    assert_eq!(e.exit_code(), ExitCode::Validation);
}

fn arb_rate() -> impl Strategy<Value = PeakRate> {
    prop_oneof![
        (1u64..100_000, 0u32..4).prop_map(|(n, k)| PeakRate::from_ratio(n, 10u64.pow(k)).unwrap()),
        (1u64..1000, 1u64..1000).prop_map(|(n, d)| PeakRate::from_ratio(n, d).unwrap()),
    ]
}

fn arb_cell() -> impl Strategy<Value = CellConfig> {
    prop_oneof![
        (arb_rate(), arb_rate()).prop_map(|(a, b)| CellConfig::single(a, b)),
        (
            prop::collection::vec((arb_rate(), arb_rate()), 2..4),
            prop::bool::ANY
        )
            .prop_map(|(peaks, rings)| {
                let k = peaks.len();
                if rings {
                    let radii = (1..=k).map(|r| r as f64 * 1.5).collect();
                    CellConfig::from_radii(&peaks, radii).unwrap()
                } else {
                    let mut q = vec![1.0 / k as f64; k];
                    let rest: f64 = q[..k - 1].iter().sum();
                    q[k - 1] = 1.0 - rest;
                    CellConfig::new(
                        peaks
                            .iter()
                            .zip(q)
                            .map(|(&(a, b), q)| AreaSpec::new(a, b, q))
                            .collect(),
                    )
                    .unwrap()
                }
            }),
    ]
}

fn arb_spec() -> impl Strategy<Value = RunSpec> {
    (
        arb_cell(),
        0.0f64..=1.0,
        prop::option::of(prop_oneof![
            (0.0f64..5.0).prop_map(Load::Lambda),
            (0.0f64..0.99).prop_map(Load::Rho)
        ]),
        0.01f64..10.0,
        prop::option::of(1u32..500),
        prop::option::of(1e-12f64..0.1),
        prop_oneof![
            Just(Policy::Jfq),
            Just(Policy::Jsq),
            Just(Policy::Bernoulli)
        ],
        prop_oneof![
            Just(Evaluator::Ctmc),
            Just(Evaluator::Sim),
            Just(Evaluator::Approx)
        ],
        any::<u64>(),
        prop::option::of(prop_oneof![
            (1u64..10_000_000).prop_map(SimLength::Completions),
            (0.1f64..1e5).prop_map(SimLength::Horizon)
        ]),
        (
            prop::option::of(prop::collection::vec(0.001f64..0.999, 1..6)),
            prop::option::of(prop::collection::vec(0.0f64..=1.0, 1..4)),
            prop::option::of(0.01f64..100.0),
            prop::option::of(1e-4f64..0.5),
            prop::bool::ANY,
        ),
    )
        .prop_map(
            |(cell, phi, load, sigma, max_total, blocking, policy, evaluator, seed, sim, extra)| {
                let (rho, phis, target, tol, edge) = extra;
                let areas = cell.num_areas();
                let mut s = RunSpec::new(cell, phi);
                s.load = load;
                s.sigma = sigma;
                s.max_total = max_total;
                s.blocking_threshold = blocking;
                s.policy = policy;
                s.evaluator = evaluator;
                s.seed = seed;
                s.sim = sim;
                s.sweep = SweepGrid { rho, phi: phis };
                s.capacity.target = target;
                s.capacity.tolerance = tol;
                s.capacity.area = edge.then_some(areas - 1);
                s
            },
        )
}

proptest! {
    #[test]
    fn emit_round_trips(spec in arb_spec()) {
        let text = emit(&spec);
        let back = parse_config_str(&text, "emitted").unwrap();
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(emit(&back), text);
    }
}
