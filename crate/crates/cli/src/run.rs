use flowcap_core::capacity::{
    max_sustainable_intensity, scenario_presets, CapacityQuery, CapacityResult, Evaluator, Preset,
    DEFAULT_TOLERANCE as CAPACITY_TOLERANCE, TABLE_PHIS,
};
use flowcap_core::ctmc::{self, Policy, SolveOptions, Truncation, DEFAULT_TOLERANCE};
use flowcap_core::model::{mixed_mean_throughput, offered_load, CellConfig, TrafficMix};
use flowcap_core::sim::{simulate, Estimate, SimOptions, StopRule};
use flowcap_core::Error as ModelError;
use rayon::prelude::*;

use crate::config::{emit_inline, RunSpec, SimLength};
use crate::csv::{fmt_num, opt_int, opt_num, Table};
use crate::error::{CliError, Result};

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "FLOWCAP_WORKERS";

/// Runs `f` over `items` on the configured worker pool; results keep the
/// input order.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
            CliError::Invalid(format!("{WORKERS_ENV}=`{v}` must be a positive integer"))
        })?;
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()))
}

/// How one `(cell, traffic)` point is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSettings {
    pub policy: Policy,
    pub evaluator: Evaluator,
    /// Fixed truncation; `None` sizes it from the load and grows it.
    pub max_total: Option<u32>,
    pub blocking_threshold: f64,
    /// Stationary residual tolerance.
    pub tol: f64,
    pub sim: SimLength,
    pub seed: u64,
    /// Simulate when the chain cannot meet the blocking threshold.
    pub sim_fallback: bool,
}

impl PointSettings {
    pub fn from_spec(spec: &RunSpec) -> Self {
        Self {
            policy: spec.policy,
            evaluator: spec.evaluator,
            max_total: spec.max_total,
            blocking_threshold: spec.blocking_threshold(),
            tol: DEFAULT_TOLERANCE,
            sim: spec.sim_length(),
            seed: spec.seed,
            sim_fallback: true,
        }
    }

    pub fn truncation_note(&self) -> String {
        match (self.evaluator, self.max_total) {
            (Evaluator::Ctmc, Some(n)) => format!("fixed max_total={n}"),
            (Evaluator::Ctmc, None) => format!(
                "auto (sized from the load, grown until blocking mass <= {}){}",
                fmt_num(self.blocking_threshold),
                if self.sim_fallback {
                    "; simulator fallback when the state budget is reached first"
                } else {
                    ""
                }
            ),
            (Evaluator::Sim, _) => "none (simulation of the unbounded process)".into(),
            (Evaluator::Approx, _) => "none (closed-form approximation)".into(),
        }
    }

    pub fn sim_note(&self) -> String {
        match self.sim {
            SimLength::Completions(n) => {
                format!("{n} completions, batch means with 30 batches, 95% CI")
            }
            SimLength::Horizon(h) => format!(
                "horizon {} s, batch means with 30 batches, 95% CI",
                fmt_num(h)
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AreaValues {
    pub sc: Option<f64>,
    pub sc_hw: Option<f64>,
    pub dc: Option<f64>,
    pub dc_hw: Option<f64>,
    pub mean: Option<f64>,
    pub mean_hw: Option<f64>,
    pub sc_occupancy: Option<f64>,
    pub dc_occupancy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub rho: f64,
    pub phi: f64,
    pub lambda: f64,
    pub areas: Vec<AreaValues>,
    pub evaluator: &'static str,
    pub states: Option<usize>,
    pub max_total: Option<u32>,
    pub blocking: Option<f64>,
    pub reliable: Option<bool>,
    pub completions: Option<u64>,
    pub simulated_time: Option<f64>,
    pub unstable: Option<bool>,
}

impl PointResult {
    fn blank(traffic: &TrafficMix, rho: f64, evaluator: &'static str) -> Self {
        Self {
            rho,
            phi: traffic.phi(),
            lambda: traffic.lambda(),
            areas: Vec::new(),
            evaluator,
            states: None,
            max_total: None,
            blocking: None,
            reliable: None,
            completions: None,
            simulated_time: None,
            unstable: None,
        }
    }
}

fn split(e: &Estimate) -> (Option<f64>, Option<f64>) {
    (e.value(), e.ci().map(|c| c.half_width))
}

fn sim_point(
    cell: &CellConfig,
    traffic: &TrafficMix,
    s: &PointSettings,
    stream: u64,
    rho: f64,
    label: &'static str,
) -> flowcap_core::Result<PointResult> {
    let stop = match s.sim {
        SimLength::Completions(n) => StopRule::Completions(n),
        SimLength::Horizon(h) => StopRule::Horizon(h),
    };
    let mut opts = SimOptions::new(stop, s.seed);
    opts.stream = stream;
    let rep = simulate(cell, traffic, s.policy.into(), &opts)?;
    let mut out = PointResult::blank(traffic, rho, label);
    out.areas = rep
        .areas
        .iter()
        .map(|a| {
            let (sc, sc_hw) = split(&a.sc);
            let (dc, dc_hw) = split(&a.dc);
            let (mean, mean_hw) = split(&a.mean);
            AreaValues {
                sc,
                sc_hw,
                dc,
                dc_hw,
                mean,
                mean_hw,
                sc_occupancy: Some(a.mean_sc_occupancy),
                dc_occupancy: Some(a.mean_dc_occupancy),
            }
        })
        .collect();
    out.completions = Some(rep.completions);
    out.simulated_time = Some(rep.simulated_time);
    out.unstable = Some(rep.unstable);
    Ok(out)
}

/// Evaluates one point; `stream` separates simulator streams of a grid.
pub fn evaluate_point(
    cell: &CellConfig,
    traffic: &TrafficMix,
    s: &PointSettings,
    stream: u64,
) -> flowcap_core::Result<PointResult> {
    let rho = offered_load(cell, traffic).rho;
    match s.evaluator {
        Evaluator::Sim => sim_point(cell, traffic, s, stream, rho, "sim"),
        Evaluator::Approx => {
            if rho >= 1.0 {
                return Err(ModelError::Unstable { rho });
            }
            let phi = traffic.phi();
            let mut out = PointResult::blank(traffic, rho, "approx");
            out.areas = cell
                .areas()
                .iter()
                .map(|a| {
                    let sc = (phi > 0.0).then(|| a.c_max() * (1.0 - rho));
                    let dc = (phi < 1.0).then(|| a.total() * (1.0 - rho));
                    AreaValues {
                        sc,
                        dc,
                        mean: Some(mixed_mean_throughput(
                            sc.unwrap_or(0.0),
                            dc.unwrap_or(0.0),
                            phi,
                        )),
                        ..AreaValues::default()
                    }
                })
                .collect();
            Ok(out)
        }
        Evaluator::Ctmc => {
            let opts = SolveOptions {
                truncation: s.max_total.map(Truncation::new).transpose()?,
                auto_grow: s.max_total.is_none(),
                blocking_threshold: s.blocking_threshold,
                tol: s.tol,
                ..SolveOptions::default()
            };
            let fallback = s.sim_fallback && s.max_total.is_none();
            let sol = match ctmc::solve(cell, traffic, s.policy, &opts) {
                Ok(sol) if sol.report.reliable || !fallback => sol,
                Ok(_) => return sim_point(cell, traffic, s, stream, rho, "sim (ctmc fallback)"),
                Err(ModelError::TooLarge { .. }) if fallback => {
                    return sim_point(cell, traffic, s, stream, rho, "sim (ctmc fallback)")
                }
                Err(e) => return Err(e),
            };
            let r = &sol.report;
            let mut out = PointResult::blank(traffic, rho, "ctmc");
            out.areas = r
                .areas
                .iter()
                .map(|a| AreaValues {
                    sc: a.sc,
                    dc: a.dc,
                    mean: a.mean,
                    sc_occupancy: Some(a.mean_sc_occupancy),
                    dc_occupancy: Some(a.mean_dc_occupancy),
                    ..AreaValues::default()
                })
                .collect();
            out.states = Some(r.states);
            out.max_total = Some(r.truncation.max_total);
            out.blocking = Some(r.blocking.max());
            out.reliable = Some(r.reliable);
            Ok(out)
        }
    }
}

pub const POINT_COLUMNS: &[&str] = &[
    "rho",
    "phi",
    "lambda",
    "area",
    "gamma_sc",
    "gamma_sc_hw",
    "gamma_dc",
    "gamma_dc_hw",
    "gamma_mean",
    "gamma_mean_hw",
    "mean_sc_occupancy",
    "mean_dc_occupancy",
    "evaluator",
    "states",
    "max_total",
    "blocking",
    "reliable",
    "completions",
    "simulated_time",
    "unstable",
];

fn push_point(table: &mut Table, p: &PointResult) {
    for (j, a) in p.areas.iter().enumerate() {
        table.push(vec![
            fmt_num(p.rho),
            fmt_num(p.phi),
            fmt_num(p.lambda),
            (j + 1).to_string(),
            opt_num(a.sc),
            opt_num(a.sc_hw),
            opt_num(a.dc),
            opt_num(a.dc_hw),
            opt_num(a.mean),
            opt_num(a.mean_hw),
            opt_num(a.sc_occupancy),
            opt_num(a.dc_occupancy),
            p.evaluator.to_string(),
            opt_int(p.states),
            opt_int(p.max_total),
            opt_num(p.blocking),
            opt_int(p.reliable),
            opt_int(p.completions),
            opt_num(p.simulated_time),
            opt_int(p.unstable),
        ]);
    }
}

/// Standard provenance header.
pub fn describe(table: &mut Table, command: &str, config: &str, policy: &str, s: &PointSettings) {
    table.comment("flowcap", command);
    table.comment("config", config);
    table.comment("policy", policy);
    let evaluator = match s.evaluator {
        Evaluator::Ctmc if s.sim_fallback && s.max_total.is_none() => {
            format!("ctmc (simulator fallback: {})", s.sim_note())
        }
        Evaluator::Sim => format!("sim ({})", s.sim_note()),
        e => e.name().to_string(),
    };
    table.comment("evaluator", evaluator);
    table.comment("truncation", s.truncation_note());
    table.comment("seed", s.seed.to_string());
}

fn point_table(name: &str, spec: &RunSpec, s: &PointSettings) -> Table {
    let mut t = Table::new(name, POINT_COLUMNS);
    describe(&mut t, name, &emit_inline(spec), s.policy.name(), s);
    t.comment(
        "columns",
        "one row per area; *_hw are confidence half-widths (simulation only); \
         blocking is the stationary mass of lost arrivals",
    );
    t
}

pub fn run_solve(spec: &RunSpec, s: &PointSettings) -> Result<Table> {
    let traffic = spec.traffic()?;
    let p = evaluate_point(&spec.cell, &traffic, s, 0).map_err(|e| CliError::model("solve", e))?;
    let mut t = point_table("solve", spec, s);
    push_point(&mut t, &p);
    Ok(t)
}

pub fn run_simulate(spec: &RunSpec, s: &PointSettings) -> Result<Table> {
    let s = PointSettings {
        evaluator: Evaluator::Sim,
        ..s.clone()
    };
    let traffic = spec.traffic()?;
    let p =
        evaluate_point(&spec.cell, &traffic, &s, 0).map_err(|e| CliError::model("simulate", e))?;
    let mut t = point_table("simulate", spec, &s);
    push_point(&mut t, &p);
    Ok(t)
}

/// One row per grid point and area, in grid order.
pub fn run_sweep(spec: &RunSpec, s: &PointSettings) -> Result<Table> {
    let points = spec.sweep.points(spec.phi);
    let results = par_map(&points, |i, &(phi, rho)| {
        let at = || {
            format!(
                "grid point {} (phi={}, rho={})",
                i + 1,
                fmt_num(phi),
                fmt_num(rho)
            )
        };
        let traffic = spec.traffic_at(rho, phi)?;
        evaluate_point(&spec.cell, &traffic, s, i as u64).map_err(|e| CliError::model(at(), e))
    })?;
    let mut t = point_table("sweep", spec, s);
    for r in results {
        push_point(&mut t, &r?);
    }
    Ok(t)
}

pub const CAPACITY_COLUMNS: &[&str] = &[
    "preset",
    "phi",
    "area",
    "target",
    "theta_star",
    "published",
    "deviation",
    "achieved",
    "zero_load",
    "bracket_lo",
    "bracket_hi",
    "probes",
    "evaluator",
];

/// Capacity settings shared by config- and preset-driven runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacitySettings {
    pub evaluator: Evaluator,
    pub tolerance: f64,
    pub seed: u64,
    pub policy: Policy,
}

impl Default for CapacitySettings {
    fn default() -> Self {
        Self {
            evaluator: Evaluator::Ctmc,
            tolerance: CAPACITY_TOLERANCE,
            seed: crate::config::DEFAULT_SEED,
            policy: Policy::Jfq,
        }
    }
}

fn configure(mut q: CapacityQuery, s: &CapacitySettings) -> CapacityQuery {
    q.tolerance = s.tolerance;
    q.sim.seed = s.seed;
    q.policy = s.policy;
    q
}

fn evaluator_label(q: &CapacityQuery, r: &CapacityResult) -> String {
    let used_sim = r.probes.iter().any(|p| p.evaluator == Evaluator::Sim);
    match q.evaluator {
        Evaluator::Ctmc if used_sim => "ctmc+sim".into(),
        e => e.name().into(),
    }
}

fn capacity_row(preset: Option<&Preset>, q: &CapacityQuery, r: &CapacityResult) -> Vec<String> {
    let cmp = preset.map(|p| p.compare(q.phi, r.theta_star));
    vec![
        preset.map(|p| p.name.to_string()).unwrap_or_default(),
        fmt_num(q.phi),
        (q.area.unwrap_or(q.cfg.edge()) + 1).to_string(),
        fmt_num(q.target),
        fmt_num(r.theta_star),
        opt_num(cmp.as_ref().and_then(|c| c.expected)),
        opt_num(cmp.as_ref().and_then(|c| c.deviation)),
        fmt_num(r.achieved),
        fmt_num(r.zero_load_throughput),
        fmt_num(r.bracket.0),
        fmt_num(r.bracket.1),
        r.probes.len().to_string(),
        evaluator_label(q, r),
    ]
}

fn capacity_header(t: &mut Table, config: &str, s: &CapacitySettings) {
    t.comment("flowcap", t.name().to_string());
    t.comment("config", config);
    t.comment("policy", s.policy.name());
    t.comment(
        "evaluator",
        match s.evaluator {
            Evaluator::Ctmc => "ctmc (blocking mass <= 1e-5 per probe; simulator probes when the state budget is reached first)".to_string(),
            Evaluator::Sim => "sim (completions doubled from 1e5 until the CI separates from the target)".to_string(),
            Evaluator::Approx => "approx ((1 - rho) times the zero-load throughput)".to_string(),
        },
    );
    t.comment("truncation", "auto per probe");
    t.comment(
        "tolerance",
        format!("relative bracket width {}", fmt_num(s.tolerance)),
    );
    t.comment("seed", s.seed.to_string());
    t.comment(
        "columns",
        "theta_star is the bracket midpoint with sigma = 1; achieved is the target-area \
         mean throughput there; deviation = theta_star / published - 1",
    );
}

/// Capacity of a configured cell at `spec.sweep.phi` (or `spec.phi`).
pub fn run_capacity(spec: &RunSpec, s: &CapacitySettings) -> Result<Table> {
    let target = spec
        .capacity
        .target
        .ok_or_else(|| CliError::Invalid("capacity needs capacity.target in the config".into()))?;
    let phis = spec.sweep.phi.clone().unwrap_or_else(|| vec![spec.phi]);
    let queries: Vec<CapacityQuery> = phis
        .iter()
        .map(|&phi| {
            let mut q = configure(
                CapacityQuery::new(spec.cell.clone(), phi, target, s.evaluator),
                s,
            );
            q.area = spec.capacity.area;
            q
        })
        .collect();
    let mut t = Table::new("capacity", CAPACITY_COLUMNS);
    capacity_header(&mut t, &emit_inline(spec), s);
    let results = par_map(&queries, |_, q| max_sustainable_intensity(q))?;
    for (q, r) in queries.iter().zip(results) {
        let r = r.map_err(|e| CliError::model(format!("capacity at phi={}", fmt_num(q.phi)), e))?;
        t.push(capacity_row(None, q, &r));
    }
    Ok(t)
}

/// Capacity of named presets; `phis` defaults to the table columns.
pub fn run_capacity_presets(
    name: &str,
    presets: &[&str],
    phis: Option<&[f64]>,
    s: &CapacitySettings,
) -> Result<Table> {
    let phis = phis.unwrap_or(&TABLE_PHIS);
    let presets: Vec<Preset> = presets
        .iter()
        .map(|p| scenario_presets(p).map_err(|e| CliError::model("preset", e)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, f64)> = (0..presets.len())
        .flat_map(|k| phis.iter().map(move |&phi| (k, phi)))
        .collect();
    let queries: Vec<CapacityQuery> = jobs
        .iter()
        .map(|&(k, phi)| configure(presets[k].query(phi, s.evaluator), s))
        .collect();
    let mut t = Table::new(name, CAPACITY_COLUMNS);
    let configs: Vec<String> = presets
        .iter()
        .map(|p| {
            let mut spec = RunSpec::new(p.cfg.clone(), phis[0]);
            spec.sweep.phi = Some(phis.to_vec());
            spec.capacity.target = Some(p.target);
            spec.policy = s.policy;
            spec.evaluator = s.evaluator;
            spec.seed = s.seed;
            format!("[{}] {}", p.name, emit_inline(&spec))
        })
        .collect();
    capacity_header(&mut t, &configs.join(" "), s);
    let results = par_map(&queries, |_, q| max_sustainable_intensity(q))?;
    for ((&(k, phi), q), r) in jobs.iter().zip(&queries).zip(results) {
        let r = r.map_err(|e| {
            CliError::model(
                format!("capacity of {} at phi={}", presets[k].name, fmt_num(phi)),
                e,
            )
        })?;
        t.push(capacity_row(Some(&presets[k]), q, &r));
    }
    Ok(t)
}
