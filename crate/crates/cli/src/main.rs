use std::path::{Path, PathBuf};
use std::process;

use clap::{Args, Parser, Subcommand};
use flowcap::config::{parse_config, RunSpec, SimLength};
use flowcap::csv::Table;
use flowcap::reproduce::{run_reproduce, Figure, ReproduceSettings};
use flowcap::run::{self, CapacitySettings, PointSettings};
use flowcap::validate::{self, Fault, Status, ValidateOptions};
use flowcap::{CliError, ExitCode, Result};
use flowcap_core::capacity::{Evaluator, PRESET_NAMES};

/// Flow-level performance of two-carrier schedulers.
///
/// Worker threads for grids: FLOWCAP_WORKERS (default: one per core).
/// Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 failed validation.
#[derive(Parser)]
#[command(name = "flowcap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulator seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// ctmc, sim or approx (overrides the config).
    #[arg(long, value_parser = parse_evaluator)]
    evaluator: Option<Evaluator>,
    /// Fixed CTMC truncation (overrides the config).
    #[arg(long)]
    max_total: Option<u32>,
    /// Stationary residual tolerance, or relative bisection tolerance for capacity.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Throughputs at the configured load.
    Solve(Common),
    /// One simulation run at the configured load.
    Simulate(Common),
    /// Throughputs over the `sweep.rho` x `sweep.phi` grid.
    Sweep(Common),
    /// Largest traffic intensity meeting a throughput target.
    Capacity {
        #[command(flatten)]
        common: Common,
        /// Preset scenario instead of a config: dc-hsdpa, db-hsdpa or lte.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// SC share; repeatable. Defaults to the config's, or 1, 0.8, 0.5, 0.2 for presets.
        #[arg(long)]
        phi: Vec<f64>,
    },
    /// Dataset of a published figure or table: fig2..fig6, table1 or all.
    Reproduce {
        figure: String,
        #[command(flatten)]
        common: Common,
    },
    /// Structural self-check; exit 3 if a check fails.
    Validate {
        /// Completions per simulation check; 0 skips those checks.
        #[arg(long, default_value_t = 200_000)]
        sim_budget: u64,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

fn parse_evaluator(s: &str) -> std::result::Result<Evaluator, String> {
    Evaluator::parse(s).map_err(|e| e.to_string())
}

fn load_spec(c: &Common) -> Result<RunSpec> {
    let path = c
        .config
        .as_deref()
        .ok_or_else(|| CliError::Invalid("--config <path> is required".into()))?;
    let mut spec = parse_config(path)?;
    if let Some(seed) = c.seed {
        spec.seed = seed;
    }
    if let Some(e) = c.evaluator {
        spec.evaluator = e;
    }
    if let Some(n) = c.max_total {
        if n == 0 || n > u32::from(u16::MAX) {
            return Err(CliError::Invalid(format!(
                "--max-total {n} outside [1, {}]",
                u16::MAX
            )));
        }
        spec.max_total = Some(n);
    }
    Ok(spec)
}

fn check_tolerance(t: Option<f64>) -> Result<Option<f64>> {
    match t {
        Some(v) if !(v > 0.0 && v < 1.0) => Err(CliError::Invalid(format!(
            "--tolerance {v} must be in (0, 1)"
        ))),
        t => Ok(t),
    }
}

fn point_settings(spec: &RunSpec, c: &Common) -> Result<PointSettings> {
    let mut s = PointSettings::from_spec(spec);
    if let Some(t) = check_tolerance(c.tolerance)? {
        s.tol = t;
    }
    Ok(s)
}

fn emit(table: &Table, out: Option<&Path>) -> Result<()> {
    match out {
        Some(dir) => {
            let path = table.write_to(dir)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{}", table.render()),
    }
    Ok(())
}

fn capacity(common: &Common, preset: Option<String>, phi: Vec<f64>) -> Result<Table> {
    if let Some(p) = phi.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(CliError::Invalid(format!("--phi {p} outside [0, 1]")));
    }
    let phis = (!phi.is_empty()).then_some(phi);
    let mut s = CapacitySettings::default();
    if let Some(t) = check_tolerance(common.tolerance)? {
        s.tolerance = t;
    }
    match preset {
        Some(name) => {
            if let Some(e) = common.evaluator {
                s.evaluator = e;
            }
            if let Some(seed) = common.seed {
                s.seed = seed;
            }
            run::run_capacity_presets("capacity", &[name.as_str()], phis.as_deref(), &s)
        }
        None => {
            let mut spec = load_spec(common)?;
            if let Some(p) = phis {
                spec.sweep.phi = Some(p);
            }
            s.evaluator = spec.evaluator;
            s.seed = spec.seed;
            s.policy = spec.policy;
            if let (None, Some(t)) = (common.tolerance, spec.capacity.tolerance) {
                s.tolerance = t;
            }
            run::run_capacity(&spec, &s)
        }
    }
}

fn reproduce(figure: &str, common: &Common) -> Result<()> {
    if common.config.is_some() {
        return Err(CliError::Invalid(
            "reproduce uses fixed configurations; drop --config".into(),
        ));
    }
    let figures = if figure == "all" {
        if common.out.is_none() {
            return Err(CliError::Invalid("reproduce all needs --out <dir>".into()));
        }
        Figure::ALL.to_vec()
    } else {
        vec![Figure::parse(figure)?]
    };
    let mut s = ReproduceSettings {
        tolerance: check_tolerance(common.tolerance)?,
        max_total: common.max_total,
        ..ReproduceSettings::default()
    };
    if let Some(e) = common.evaluator {
        s.evaluator = e;
    }
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    if s.evaluator == Evaluator::Sim {
        s.sim = SimLength::Completions(flowcap::config::DEFAULT_COMPLETIONS);
    }
    for f in figures {
        emit(&run_reproduce(f, &s)?, common.out.as_deref())?;
    }
    Ok(())
}

fn validate(sim_budget: u64, inject_fault: Option<String>) -> Result<()> {
    let fault = match inject_fault.as_deref() {
        None => None,
        Some(f) => {
            Some(Fault::parse(f).ok_or_else(|| CliError::Invalid(format!("unknown fault `{f}`")))?)
        }
    };
    let opts = ValidateOptions {
        sim_budget: (sim_budget > 0).then_some(sim_budget),
        fault,
    };
    let results = validate::run_validate(&opts);
    print!("{}", validate::render(&results));
    let failed: Vec<String> = results
        .iter()
        .filter(|r| r.status == Status::Fail)
        .map(|r| r.name.to_string())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ValidateFailed { failed })
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(c) => {
            let spec = load_spec(&c)?;
            emit(
                &run::run_solve(&spec, &point_settings(&spec, &c)?)?,
                c.out.as_deref(),
            )
        }
        Command::Simulate(c) => {
            let spec = load_spec(&c)?;
            emit(
                &run::run_simulate(&spec, &point_settings(&spec, &c)?)?,
                c.out.as_deref(),
            )
        }
        Command::Sweep(c) => {
            let spec = load_spec(&c)?;
            emit(
                &run::run_sweep(&spec, &point_settings(&spec, &c)?)?,
                c.out.as_deref(),
            )
        }
        Command::Capacity {
            common,
            preset,
            phi,
        } => {
            if let Some(p) = &preset {
                if !PRESET_NAMES.contains(&p.as_str()) {
                    return Err(CliError::Invalid(format!(
                        "unknown preset `{p}` (valid: {})",
                        PRESET_NAMES.join(", ")
                    )));
                }
            }
            let out = common.out.clone();
            emit(&capacity(&common, preset, phi)?, out.as_deref())
        }
        Command::Reproduce { figure, common } => reproduce(&figure, &common),
        Command::Validate {
            sim_budget,
            inject_fault,
        } => validate(sim_budget, inject_fault),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitCode::Validation as i32
            } else {
                0
            };
            let _ = e.print();
            process::exit(code);
        }
    };
    if let Err(e) = execute(cli) {
        eprintln!("error: {e}");
        process::exit(e.exit_code() as i32);
    }
}
