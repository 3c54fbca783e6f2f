//! Desk-scale self-check of the structural invariants.

use std::time::Instant;

use flowcap_core::capacity::scenario_presets;
use flowcap_core::ctmc::{
    build_generator, jfq_route, solve, solve_stationary, Generator, Policy, SolveOptions,
    Truncation, DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE,
};
use flowcap_core::model::{
    dc_aggregate_rate, dc_only_throughput, fluid_total_drift, per_user_rates, vb_split, AreaSpec,
    CellConfig, PeakRate, SystemState, TrafficMix,
};
use flowcap_core::sim::{simulate, FlowClass, SimOptions, StopRule};

use crate::config::{RunSpec, SimLength};
use crate::run::{run_simulate, run_solve, run_sweep, PointSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
    pub seconds: f64,
}

/// Deliberate defects for exercising the suite itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Perturbs one off-diagonal rate of every generator the row-sum check sees.
    RowSum,
}

impl Fault {
    pub fn parse(s: &str) -> Option<Self> {
        (s == "row-sum").then_some(Fault::RowSum)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    /// Completions per simulation check; `None` skips those checks.
    pub sim_budget: Option<u64>,
    pub fault: Option<Fault>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            sim_budget: Some(200_000),
            fault: None,
        }
    }
}

type Outcome = Result<String, String>;

fn rate(s: &str) -> PeakRate {
    PeakRate::parse(s).expect("check rates are valid")
}

fn single(c1: &str, c2: &str) -> CellConfig {
    CellConfig::single(rate(c1), rate(c2))
}

fn traffic(cfg: &CellConfig, rho: f64, phi: f64) -> TrafficMix {
    TrafficMix::at_load(cfg, rho, phi, 1.0).expect("check loads are valid")
}

fn gen(cfg: &CellConfig, rho: f64, phi: f64, n: u32, policy: Policy) -> Result<Generator, String> {
    let t = Truncation::new(n).map_err(|e| e.to_string())?;
    build_generator(cfg, &traffic(cfg, rho, phi), &t, policy).map_err(|e| e.to_string())
}

/// Small generators covering one, two and three areas and all policies.
fn sample_generators() -> Result<Vec<(String, Generator)>, String> {
    let mut out = Vec::new();
    for (c1, c2) in [("1", "1"), ("1", "2"), ("1", "1.3")] {
        for policy in [Policy::Jfq, Policy::Jsq, Policy::Bernoulli] {
            let g = gen(&single(c1, c2), 0.7, 0.5, 30, policy)?;
            out.push((format!("C=({c1},{c2}) {}", policy.name()), g));
        }
    }
    let db = scenario_presets("db-hsdpa").map_err(|e| e.to_string())?.cfg;
    out.push(("db-hsdpa jfq".into(), gen(&db, 0.6, 0.5, 10, Policy::Jfq)?));
    let rings = CellConfig::from_radii(
        &[
            (rate("10"), rate("14")),
            (rate("4"), rate("5.6")),
            (rate("1"), rate("1.4")),
        ],
        vec![1.0, 2.0, 3.0],
    )
    .map_err(|e| e.to_string())?;
    out.push((
        "three rings jsq".into(),
        gen(&rings, 0.5, 0.4, 5, Policy::Jsq)?,
    ));
    Ok(out)
}

/// Rebuilds `g` with the first off-diagonal rate raised by a quarter.
pub fn corrupt_row_sums(g: &Generator) -> Generator {
    let n = g.len();
    let mut row_ptr = vec![0];
    let mut cols = Vec::new();
    let mut rates = Vec::new();
    for i in 0..n {
        for (c, r) in g.row(i) {
            cols.push(c as u32);
            rates.push(r);
        }
        row_ptr.push(cols.len());
    }
    if let Some(r) = rates.first_mut() {
        *r += 0.25;
    }
    let diag = (0..n).map(|i| g.diagonal(i)).collect();
    Generator::from_raw_parts(g.space().clone(), row_ptr, cols, rates, diag)
}

fn row_sums(fault: Option<Fault>) -> Outcome {
    let gens = sample_generators()?;
    let mut worst: f64 = 0.0;
    for (name, g) in &gens {
        let g = match fault {
            Some(Fault::RowSum) => corrupt_row_sums(g),
            None => g.clone(),
        };
        let err = g.max_row_sum_error();
        worst = worst.max(err);
        if err > 1e-12 {
            return Err(format!("{name}: row sum error {err:e}"));
        }
        let bad = g.structural_violations();
        if !bad.is_empty() {
            return Err(format!(
                "{name}: {} rows with invalid transitions",
                bad.len()
            ));
        }
        if (0..g.len()).any(|i| g.diagonal(i) > 0.0) {
            return Err(format!("{name}: positive diagonal"));
        }
    }
    Ok(format!(
        "{} generators, worst relative row sum {worst:.1e}",
        gens.len()
    ))
}

fn residual(g: &Generator, p: &[f64]) -> f64 {
    let mut y: Vec<f64> = (0..g.len()).map(|i| p[i] * g.diagonal(i)).collect();
    for (i, &pi) in p.iter().enumerate() {
        for (c, r) in g.row(i) {
            y[c] += pi * r;
        }
    }
    y.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn stationary() -> Outcome {
    let gens = sample_generators()?;
    for (name, g) in &gens {
        let d = solve_stationary(g, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS)
            .map_err(|e| format!("{name}: {e}"))?;
        let sum: f64 = d.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(format!("{name}: probabilities sum to {sum}"));
        }
        if d.probs.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(format!("{name}: negative probability"));
        }
        let r = residual(g, &d.probs);
        let bound = DEFAULT_TOLERANCE * g.uniformization_rate();
        if r > bound {
            return Err(format!("{name}: residual {r:e} above {bound:e}"));
        }
    }
    Ok(format!(
        "{} solves normalized with residual <= 1e-10 q",
        gens.len()
    ))
}

fn jfq_jsq_identity() -> Outcome {
    let db_like = CellConfig::new(vec![
        AreaSpec::new(rate("10"), rate("10"), 0.5),
        AreaSpec::new(rate("1"), rate("1"), 0.5),
    ])
    .map_err(|e| e.to_string())?;
    let cases = [
        (single("1.3", "1.3"), 0.8, 0.6, 40),
        (db_like, 0.6, 0.5, 10),
    ];
    for (k, (cfg, rho, phi, n)) in cases.iter().enumerate() {
        let a = gen(cfg, *rho, *phi, *n, Policy::Jfq)?;
        let b = gen(cfg, *rho, *phi, *n, Policy::Jsq)?;
        if a != b {
            return Err(format!(
                "case {}: JFQ and JSQ generators differ at equal capacities",
                k + 1
            ));
        }
    }
    // control: unequal capacities must give different matrices
    let a = gen(&single("1", "2"), 0.8, 0.6, 20, Policy::Jfq)?;
    let b = gen(&single("1", "2"), 0.8, 0.6, 20, Policy::Jsq)?;
    if a == b {
        return Err("JFQ and JSQ coincide at C=(1,2)".into());
    }
    Ok("identical at equal capacities (1 and 2 areas), distinct at C=(1,2)".into())
}

/// Same JFQ decision in every state with all counts `<= max`.
fn same_routes(a: &CellConfig, b: &CellConfig, max: u32) -> bool {
    (0..=max).all(|n1| {
        (0..=max).all(|n2| {
            (0..=max).all(|m| {
                let s = SystemState::single(n1, n2, m);
                jfq_route(&s, 0, a) == jfq_route(&s, 0, b)
            })
        })
    })
}

fn scale_invariance() -> Outcome {
    let bases = [
        ("1", "2"),
        ("1", "1.3"),
        ("10", "14"),
        ("150", "70"),
        ("1/3", "2/7"),
    ];
    let factors = [(2, 1), (10, 1), (7, 3), (1, 1000)];
    let mut checked = 0;
    for (c1, c2) in bases {
        let base = single(c1, c2);
        for (num, den) in factors {
            let scaled = CellConfig::single(
                rate(c1).scaled(num, den).map_err(|e| e.to_string())?,
                rate(c2).scaled(num, den).map_err(|e| e.to_string())?,
            );
            if !same_routes(&base, &scaled, 12) {
                return Err(format!(
                    "C=({c1},{c2}) scaled by {num}/{den} changes a JFQ decision"
                ));
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} scalings, all states with n1, n2, m <= 12"
    ))
}

fn vb_conservation() -> Outcome {
    let cfg = single("1", "1.3");
    let mut checked = 0;
    for n1 in 0..6 {
        for n2 in 0..6 {
            for m in 1..6 {
                let s = SystemState::single(n1, n2, m);
                for dt in [1e-3, 0.5, 7.0] {
                    let v = vb_split(&s, 0, &cfg, dt).map_err(|e| e.to_string())?;
                    let e = dc_aggregate_rate(&s, 0, &cfg).map_err(|e| e.to_string())?;
                    let (d1, d2) = per_user_rates(&s, 0, &cfg).map_err(|e| e.to_string())?;
                    let total_ok = (v.total() - e * dt).abs() <= 1e-12 * e * dt;
                    // equal drain times on both carriers
                    let sync_ok = (v.carrier1 / d1 - v.carrier2 / d2).abs() <= 1e-12 * dt;
                    if !(total_ok && sync_ok) {
                        return Err(format!("state ({n1},{n2},{m}), dt={dt}: split {v:?}"));
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok(format!(
        "{checked} splits conserve volume and drain simultaneously"
    ))
}

fn dc_closed_form() -> Outcome {
    let cfg = single("1", "1");
    let opts = SolveOptions {
        blocking_threshold: 1e-9,
        ..SolveOptions::default()
    };
    let mut worst: f64 = 0.0;
    for k in 1..=9 {
        let rho = f64::from(k) / 10.0;
        let t = traffic(&cfg, rho, 0.0);
        let sol = solve(&cfg, &t, Policy::Jfq, &opts).map_err(|e| e.to_string())?;
        let got = sol.report.area(0).dc.ok_or("no DC throughput")?;
        let want = dc_only_throughput(&cfg, &t, 0).map_err(|e| e.to_string())?;
        let rel = (got - want).abs() / want;
        worst = worst.max(rel);
        if rel >= 0.01 || sol.report.blocking.max() >= 1e-8 {
            return Err(format!(
                "rho={rho}: {got} vs {want}, blocking {:e}",
                sol.report.blocking.max()
            ));
        }
    }
    Ok(format!("rho 0.1..0.9, worst relative error {worst:.1e}"))
}

fn drift_sign() -> Outcome {
    let cfg = single("1", "2");
    for rho in [0.5, 0.9, 0.99, 0.999, 1.001, 1.01, 1.1, 1.5] {
        let d = fluid_total_drift(&cfg, &traffic(&cfg, rho, 0.5)).map_err(|e| e.to_string())?;
        if d.signum() != (rho - 1.0f64).signum() {
            return Err(format!("rho={rho}: drift {d}"));
        }
    }
    Ok("sign matches rho - 1 on 8 loads around 1".into())
}

fn small_spec(phi: f64) -> RunSpec {
    let mut spec = RunSpec::new(single("1", "2"), phi);
    spec.load = Some(crate::config::Load::Rho(0.6));
    spec.sweep.rho = Some(vec![0.2, 0.5, 0.7]);
    spec
}

fn csv_determinism_ctmc() -> Outcome {
    let spec = small_spec(0.5);
    let s = PointSettings::from_spec(&spec);
    let a = run_solve(&spec, &s).map_err(|e| e.to_string())?.render();
    let b = run_solve(&spec, &s).map_err(|e| e.to_string())?.render();
    let c = run_sweep(&spec, &s).map_err(|e| e.to_string())?.render();
    let d = run_sweep(&spec, &s).map_err(|e| e.to_string())?.render();
    if a != b || c != d {
        return Err("repeated ctmc runs differ".into());
    }
    Ok(format!(
        "solve and sweep byte-identical ({} + {} bytes)",
        a.len(),
        c.len()
    ))
}

fn csv_determinism_sim(budget: u64) -> Outcome {
    let mut spec = small_spec(0.5);
    spec.sim = Some(SimLength::Completions(budget.min(50_000)));
    spec.seed = 7;
    let s = PointSettings::from_spec(&spec);
    let a = run_simulate(&spec, &s).map_err(|e| e.to_string())?.render();
    let b = run_simulate(&spec, &s).map_err(|e| e.to_string())?.render();
    if a != b {
        return Err("repeated simulations differ".into());
    }
    Ok("simulate byte-identical for a fixed seed".into())
}

fn sim_agreement(budget: u64) -> Outcome {
    let cfg = single("1", "2");
    let t = traffic(&cfg, 0.5, 0.5);
    let exact =
        solve(&cfg, &t, Policy::Jfq, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let mut opts = SimOptions::new(StopRule::Completions(budget), 3);
    opts.level = 0.99;
    let rep = simulate(&cfg, &t, Policy::Jfq.into(), &opts).map_err(|e| e.to_string())?;
    let a = exact.report.area(0);
    let e = rep.area(0);
    for (class, want, est) in [("SC", a.sc, &e.sc), ("DC", a.dc, &e.dc)] {
        let want = want.ok_or("missing exact value")?;
        let ci = est.ci().ok_or(format!("{class}: no simulation estimate"))?;
        if !ci.contains(want) {
            return Err(format!(
                "{class}: exact {want:.5} outside [{:.5}, {:.5}]",
                ci.lower(),
                ci.upper()
            ));
        }
    }
    Ok(format!(
        "99% CIs from {budget} completions contain the exact SC and DC values"
    ))
}

fn sim_volumes(budget: u64) -> Outcome {
    let cfg = single("1", "1.3");
    let t = traffic(&cfg, 0.6, 0.5);
    let mut opts = SimOptions::new(StopRule::Completions(budget.min(100_000)), 5);
    opts.record_limit = 20_000;
    let rep = simulate(&cfg, &t, Policy::Jfq.into(), &opts).map_err(|e| e.to_string())?;
    if rep.records.is_empty() {
        return Err("no flow records".into());
    }
    for r in &rep.records {
        let (v1, v2) = r.carrier_volumes;
        let single_carrier = v1 == 0.0 || v2 == 0.0;
        if v1 < 0.0 || v2 < 0.0 || (r.class == FlowClass::Sc && !single_carrier) {
            return Err(format!("record {r:?}"));
        }
    }
    let mean = rep.records.iter().map(|r| r.volume()).sum::<f64>() / rep.records.len() as f64;
    if (mean - 1.0).abs() > 0.05 {
        return Err(format!("mean transferred volume {mean} for sigma = 1"));
    }
    Ok(format!(
        "{} flows, mean volume {mean:.4}",
        rep.records.len()
    ))
}

fn instability() -> Outcome {
    let cfg = single("1", "1");
    let t = traffic(&cfg, 1.1, 0.5);
    let seeds = 1..=5u64;
    let flagged = seeds
        .clone()
        .map(|seed| {
            simulate(
                &cfg,
                &t,
                Policy::Jfq.into(),
                &SimOptions::new(StopRule::Horizon(60.0), seed),
            )
            .map(|r| r.unstable)
            .map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|&u| u)
        .count();
    if flagged * 2 <= seeds.count() {
        return Err(format!(
            "only {flagged}/5 runs flagged at rho=1.1 within 60 s"
        ));
    }
    Ok(format!("{flagged}/5 runs at rho=1.1 flagged within 60 s"))
}

fn timed(name: &'static str, f: impl FnOnce() -> Outcome) -> CheckResult {
    let start = Instant::now();
    let (status, detail) = match f() {
        Ok(d) => (Status::Pass, d),
        Err(d) => (Status::Fail, d),
    };
    CheckResult {
        name,
        status,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn skipped(name: &'static str) -> CheckResult {
    CheckResult {
        name,
        status: Status::Skip,
        detail: "no simulation budget".into(),
        seconds: 0.0,
    }
}

pub fn run_validate(opts: &ValidateOptions) -> Vec<CheckResult> {
    let mut out = vec![
        timed("generator-row-sums", || row_sums(opts.fault)),
        timed("stationary-normalization", stationary),
        timed("jfq-jsq-identity", jfq_jsq_identity),
        timed("routing-scale-invariance", scale_invariance),
        timed("vb-conservation", vb_conservation),
        timed("dc-only-closed-form", dc_closed_form),
        timed("fluid-drift-sign", drift_sign),
        timed("csv-determinism-ctmc", csv_determinism_ctmc),
    ];
    match opts.sim_budget.filter(|&b| b > 0) {
        Some(b) => {
            out.push(timed("csv-determinism-sim", || csv_determinism_sim(b)));
            out.push(timed("sim-ctmc-agreement", || sim_agreement(b)));
            out.push(timed("sim-volume-conservation", || sim_volumes(b)));
            out.push(timed("sim-instability-flag", instability));
        }
        None => {
            for name in [
                "csv-determinism-sim",
                "sim-ctmc-agreement",
                "sim-volume-conservation",
                "sim-instability-flag",
            ] {
                out.push(skipped(name));
            }
        }
    }
    out
}

pub fn render(results: &[CheckResult]) -> String {
    let mut s = String::new();
    for r in results {
        s.push_str(&format!(
            "{}  {:<26} {:>7.2}s  {}\n",
            r.status.label(),
            r.name,
            r.seconds,
            r.detail
        ));
    }
    let count = |st| results.iter().filter(|r| r.status == st).count();
    s.push_str(&format!(
        "{} passed, {} failed, {} skipped\n",
        count(Status::Pass),
        count(Status::Fail),
        count(Status::Skip)
    ));
    s
}
