//! Datasets behind the published figures and capacity table.

use flowcap_core::capacity::{Evaluator, PRESET_NAMES};
use flowcap_core::ctmc::Policy;
use flowcap_core::model::{CellConfig, PeakRate};

use crate::config::{emit_inline, RunSpec, SimLength, DEFAULT_COMPLETIONS, DEFAULT_SEED};
use crate::csv::{fmt_num, opt_int, opt_num, Table};
use crate::error::{CliError, Result};
use crate::run::{
    describe, evaluate_point, par_map, run_capacity_presets, CapacitySettings, PointResult,
    PointSettings,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Table1,
}

impl Figure {
    pub const ALL: [Figure; 6] = [
        Figure::Fig2,
        Figure::Fig3,
        Figure::Fig4,
        Figure::Fig5,
        Figure::Fig6,
        Figure::Table1,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Table1 => "table1",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                CliError::Invalid(format!(
                    "unknown figure `{s}` (valid: fig2, fig3, fig4, fig5, fig6, table1)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproduceSettings {
    pub evaluator: Evaluator,
    pub seed: u64,
    pub max_total: Option<u32>,
    pub sim: SimLength,
    /// Relative bisection tolerance of the capacity table.
    pub tolerance: Option<f64>,
}

impl Default for ReproduceSettings {
    fn default() -> Self {
        Self {
            evaluator: Evaluator::Ctmc,
            seed: DEFAULT_SEED,
            max_total: None,
            sim: SimLength::Completions(DEFAULT_COMPLETIONS),
            tolerance: None,
        }
    }
}

impl ReproduceSettings {
    fn point(&self, policy: Policy) -> PointSettings {
        PointSettings {
            policy,
            evaluator: self.evaluator,
            max_total: self.max_total,
            blocking_threshold: crate::config::DEFAULT_BLOCKING_THRESHOLD,
            tol: flowcap_core::ctmc::DEFAULT_TOLERANCE,
            sim: self.sim,
            seed: self.seed,
            sim_fallback: true,
        }
    }
}

fn cell(c1: &str, c2: &str) -> CellConfig {
    let rate = |s: &str| PeakRate::parse(s).expect("figure rates are valid");
    CellConfig::single(rate(c1), rate(c2))
}

/// `k / 20` for `k` in `from..=to`.
fn twentieths(from: u32, to: u32) -> Vec<f64> {
    (from..=to).map(|k| f64::from(k) / 20.0).collect()
}

fn fig2_rho() -> Vec<f64> {
    let mut v = vec![0.02];
    v.extend(twentieths(1, 19));
    v
}

struct Job {
    policy: Policy,
    phi: f64,
    rho: f64,
}

fn evaluate(
    figure: &str,
    cell: &CellConfig,
    jobs: &[Job],
    s: &ReproduceSettings,
) -> Result<Vec<PointResult>> {
    let results = par_map(jobs, |i, job| {
        let traffic = flowcap_core::model::TrafficMix::at_load(cell, job.rho, job.phi, 1.0)
            .map_err(|e| CliError::model(format!("{figure} traffic"), e))?;
        evaluate_point(cell, &traffic, &s.point(job.policy), i as u64).map_err(|e| {
            CliError::model(
                format!(
                    "{figure} grid point {} (policy={}, phi={}, rho={})",
                    i + 1,
                    job.policy.name(),
                    fmt_num(job.phi),
                    fmt_num(job.rho)
                ),
                e,
            )
        })
    })?;
    results.into_iter().collect()
}

fn spec_for(cell: &CellConfig, phis: &[f64], rhos: &[f64], s: &ReproduceSettings) -> RunSpec {
    let mut spec = RunSpec::new(cell.clone(), phis[0]);
    spec.sweep.phi = Some(phis.to_vec());
    spec.sweep.rho = Some(rhos.to_vec());
    spec.evaluator = s.evaluator;
    spec.seed = s.seed;
    spec.max_total = s.max_total;
    if s.evaluator == Evaluator::Sim {
        spec.sim = Some(s.sim);
    }
    spec
}

fn header(t: &mut Table, spec: &RunSpec, policy: &str, s: &ReproduceSettings, what: &str) {
    let name = t.name().to_string();
    describe(
        t,
        &format!("reproduce {name}"),
        &emit_inline(spec),
        policy,
        &s.point(spec.policy),
    );
    t.comment("dataset", what);
}

fn diag(p: &PointResult) -> [String; 4] {
    [
        p.evaluator.to_string(),
        opt_int(p.states),
        opt_int(p.max_total),
        opt_num(p.blocking),
    ]
}

fn fig2(s: &ReproduceSettings) -> Result<Table> {
    let c = 1.0;
    let cell = cell("1", "1");
    let rhos = fig2_rho();
    let jobs: Vec<Job> = rhos
        .iter()
        .map(|&rho| Job {
            policy: Policy::Jfq,
            phi: 1.0,
            rho,
        })
        .collect();
    let res = evaluate("fig2", &cell, &jobs, s)?;
    let mut t = Table::new(
        "fig2",
        &[
            "rho",
            "gamma_sc",
            "gamma_sc_hw",
            "ps_reference",
            "ratio_to_pooled",
            "evaluator",
            "states",
            "max_total",
            "blocking",
        ],
    );
    header(
        &mut t,
        &spec_for(&cell, &[1.0], &rhos, s),
        "jfq",
        s,
        "SC-only mean throughput vs load, C1 = C2 = 1",
    );
    t.comment(
        "note",
        "the analytic JSQ series is replaced by the exact CTMC of equal-capacity JFQ, whose generator is identical to JSQ",
    );
    t.comment(
        "columns",
        "ps_reference = C(1 - rho), one PS carrier serving its own half of the traffic; \
         ratio_to_pooled = gamma_sc / (2C(1 - rho))",
    );
    for (job, p) in jobs.iter().zip(&res) {
        let a = &p.areas[0];
        let mut row = vec![
            fmt_num(job.rho),
            opt_num(a.sc),
            opt_num(a.sc_hw),
            fmt_num(c * (1.0 - job.rho)),
            opt_num(a.sc.map(|g| g / (2.0 * c * (1.0 - job.rho)))),
        ];
        row.extend(diag(p));
        t.push(row);
    }
    Ok(t)
}

/// Mixed-traffic load curves for several SC shares (figs. 3 and 5).
fn mix_curves(
    name: &str,
    c1: &str,
    c2: &str,
    phis: &[f64],
    s: &ReproduceSettings,
) -> Result<Table> {
    let cell = cell(c1, c2);
    let rhos = twentieths(1, 18);
    let jobs: Vec<Job> = phis
        .iter()
        .flat_map(|&phi| {
            rhos.iter().map(move |&rho| Job {
                policy: Policy::Jfq,
                phi,
                rho,
            })
        })
        .collect();
    let res = evaluate(name, &cell, &jobs, s)?;
    let mut t = Table::new(
        name,
        &[
            "phi",
            "rho",
            "gamma_sc",
            "gamma_sc_hw",
            "gamma_dc",
            "gamma_dc_hw",
            "gamma_mean",
            "sc_reference",
            "dc_reference",
            "evaluator",
            "states",
            "max_total",
            "blocking",
        ],
    );
    header(
        &mut t,
        &spec_for(&cell, phis, &rhos, s),
        "jfq",
        s,
        &format!("SC and DC mean throughput vs load, C1 = {c1}, C2 = {c2}"),
    );
    t.comment(
        "columns",
        "sc_reference = max(C1, C2)(1 - rho); dc_reference = (C1 + C2)(1 - rho), exact when phi = 0",
    );
    let area = cell.area(0);
    for (job, p) in jobs.iter().zip(&res) {
        let a = &p.areas[0];
        let mut row = vec![
            fmt_num(job.phi),
            fmt_num(job.rho),
            opt_num(a.sc),
            opt_num(a.sc_hw),
            opt_num(a.dc),
            opt_num(a.dc_hw),
            opt_num(a.mean),
            fmt_num(area.c_max() * (1.0 - job.rho)),
            fmt_num(area.total() * (1.0 - job.rho)),
        ];
        row.extend(diag(p));
        t.push(row);
    }
    Ok(t)
}

fn fig4(s: &ReproduceSettings) -> Result<Table> {
    let cell = cell("1", "2");
    let rhos = twentieths(1, 18);
    let jobs: Vec<Job> = [Policy::Jfq, Policy::Jsq]
        .iter()
        .flat_map(|&policy| {
            rhos.iter().map(move |&rho| Job {
                policy,
                phi: 1.0,
                rho,
            })
        })
        .collect();
    let res = evaluate("fig4", &cell, &jobs, s)?;
    let mut t = Table::new(
        "fig4",
        &[
            "policy",
            "rho",
            "gamma_sc",
            "gamma_sc_hw",
            "fast_reference",
            "evaluator",
            "states",
            "max_total",
            "blocking",
        ],
    );
    header(
        &mut t,
        &spec_for(&cell, &[1.0], &rhos, s),
        "jfq and jsq (column policy)",
        s,
        "SC-only mean throughput vs load under JFQ and JSQ, C1 = 1, C2 = 2",
    );
    t.comment("columns", "fast_reference = C2(1 - rho)");
    for (job, p) in jobs.iter().zip(&res) {
        let a = &p.areas[0];
        let mut row = vec![
            job.policy.name().to_string(),
            fmt_num(job.rho),
            opt_num(a.sc),
            opt_num(a.sc_hw),
            fmt_num(2.0 * (1.0 - job.rho)),
        ];
        row.extend(diag(p));
        t.push(row);
    }
    Ok(t)
}

fn fig6(s: &ReproduceSettings) -> Result<Table> {
    let cell = cell("1", "2");
    let loads = [0.2, 0.5, 0.8];
    let phis: Vec<f64> = (0..=10).map(|k| f64::from(k) / 10.0).collect();
    let jobs: Vec<Job> = loads
        .iter()
        .flat_map(|&rho| {
            phis.iter().map(move |&phi| Job {
                policy: Policy::Jfq,
                phi,
                rho,
            })
        })
        .collect();
    let res = evaluate("fig6", &cell, &jobs, s)?;
    let mut t = Table::new(
        "fig6",
        &[
            "rho",
            "phi",
            "gamma_sc",
            "gamma_sc_hw",
            "gamma_dc",
            "gamma_dc_hw",
            "gamma_mean",
            "gamma_mean_hw",
            "evaluator",
            "states",
            "max_total",
            "blocking",
        ],
    );
    header(
        &mut t,
        &spec_for(&cell, &phis, &loads, s),
        "jfq",
        s,
        "mean throughput vs SC share at loads 0.2, 0.5, 0.8, C1 = 1, C2 = 2",
    );
    t.comment("columns", "gamma_mean = phi gamma_sc + (1 - phi) gamma_dc");
    for (job, p) in jobs.iter().zip(&res) {
        let a = &p.areas[0];
        let mut row = vec![
            fmt_num(job.rho),
            fmt_num(job.phi),
            opt_num(a.sc),
            opt_num(a.sc_hw),
            opt_num(a.dc),
            opt_num(a.dc_hw),
            opt_num(a.mean),
            opt_num(a.mean_hw),
        ];
        row.extend(diag(p));
        t.push(row);
    }
    Ok(t)
}

fn table1(s: &ReproduceSettings) -> Result<Table> {
    let cs = CapacitySettings {
        evaluator: s.evaluator,
        tolerance: s
            .tolerance
            .unwrap_or(flowcap_core::capacity::DEFAULT_TOLERANCE),
        seed: s.seed,
        policy: Policy::Jfq,
    };
    let mut t = run_capacity_presets("table1", &PRESET_NAMES, None, &cs)?;
    t.comment(
        "dataset",
        "sustainable traffic intensity for an edge throughput target, per preset and SC share",
    );
    Ok(t)
}

pub fn run_reproduce(figure: Figure, s: &ReproduceSettings) -> Result<Table> {
    match figure {
        Figure::Fig2 => fig2(s),
        Figure::Fig3 => mix_curves("fig3", "1", "1", &[0.0, 0.5, 1.0], s),
        Figure::Fig4 => fig4(s),
        Figure::Fig5 => mix_curves("fig5", "1", "1.3", &[0.0, 0.1, 0.5, 1.0], s),
        Figure::Fig6 => fig6(s),
        Figure::Table1 => table1(s),
    }
}
