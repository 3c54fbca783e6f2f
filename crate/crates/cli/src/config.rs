//! Flat `key = value` run configuration.
//!
//! ```text
//! # two carriers, one area
//! areas.1.c1 = 1
//! areas.1.c2 = 2
//! traffic.rho = 0.5
//! traffic.phi = 0.5
//! ```
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `areas.N.c1`, `areas.N.c2` | peak rates of area `N` (1-based, decimal or `a/b`) | required |
//! | `areas.N.q` | arrival share of area `N` | `1` for one area, else from `geometry.radii` |
//! | `geometry.radii` | comma-separated ring radii, innermost first | none |
//! | `traffic.lambda` / `traffic.rho` | total arrival rate / load (at most one) | none |
//! | `traffic.phi` | share of SC flows | required |
//! | `traffic.sigma` | mean flow volume | `1` |
//! | `ctmc.max_total` | fixed truncation (disables auto growth) | auto |
//! | `ctmc.blocking_threshold` | target blocking mass of auto truncation | `1e-6` |
//! | `policy` | `jfq`, `jsq` or `bernoulli` | `jfq` |
//! | `evaluator` | `ctmc`, `sim` or `approx` | `ctmc` |
//! | `seed` | simulator seed | `1` |
//! | `sim.completions` / `sim.horizon` | simulation length (at most one) | `1000000` completions |
//! | `sweep.rho`, `sweep.phi` | comma-separated grids | `0.1, …, 0.9` and `traffic.phi` |
//! | `capacity.target` | throughput target | required by `capacity` |
//! | `capacity.area` | area the target applies to (1-based) | outermost |
//! | `capacity.tolerance` | relative bisection tolerance | `0.01` |
//!
//! `#` starts a comment. Unknown and repeated keys are errors.

use std::collections::BTreeMap;
use std::path::Path;

use flowcap_core::capacity::Evaluator;
use flowcap_core::ctmc::Policy;
use flowcap_core::model::{ring_area_probabilities, AreaSpec, CellConfig, PeakRate, TrafficMix};

use crate::error::{CliError, Location, Result};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_COMPLETIONS: u64 = 1_000_000;
pub const DEFAULT_BLOCKING_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Load {
    Lambda(f64),
    Rho(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimLength {
    Completions(u64),
    Horizon(f64),
}

/// Axes of a sweep; the cross product runs `phi`-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepGrid {
    pub rho: Option<Vec<f64>>,
    pub phi: Option<Vec<f64>>,
}

impl SweepGrid {
    pub fn default_rho() -> Vec<f64> {
        (1..=9).map(|k| f64::from(k) / 10.0).collect()
    }

    /// `(phi, rho)` pairs in output order.
    pub fn points(&self, phi: f64) -> Vec<(f64, f64)> {
        let rhos = self.rho.clone().unwrap_or_else(Self::default_rho);
        let phis = self.phi.clone().unwrap_or_else(|| vec![phi]);
        phis.iter()
            .flat_map(|&p| rhos.iter().map(move |&r| (p, r)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CapacitySettings {
    pub target: Option<f64>,
    /// 0-based.
    pub area: Option<usize>,
    pub tolerance: Option<f64>,
}

/// A validated configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub cell: CellConfig,
    pub load: Option<Load>,
    pub phi: f64,
    pub sigma: f64,
    pub max_total: Option<u32>,
    pub blocking_threshold: Option<f64>,
    pub policy: Policy,
    pub evaluator: Evaluator,
    pub seed: u64,
    pub sim: Option<SimLength>,
    pub sweep: SweepGrid,
    pub capacity: CapacitySettings,
}

impl RunSpec {
    /// Defaults around a cell and an SC share.
    pub fn new(cell: CellConfig, phi: f64) -> Self {
        Self {
            cell,
            load: None,
            phi,
            sigma: 1.0,
            max_total: None,
            blocking_threshold: None,
            policy: Policy::Jfq,
            evaluator: Evaluator::Ctmc,
            seed: DEFAULT_SEED,
            sim: None,
            sweep: SweepGrid::default(),
            capacity: CapacitySettings::default(),
        }
    }

    pub fn blocking_threshold(&self) -> f64 {
        self.blocking_threshold
            .unwrap_or(DEFAULT_BLOCKING_THRESHOLD)
    }

    pub fn sim_length(&self) -> SimLength {
        self.sim
            .unwrap_or(SimLength::Completions(DEFAULT_COMPLETIONS))
    }

    /// Traffic at the configured load.
    pub fn traffic(&self) -> Result<TrafficMix> {
        let load = self.load.ok_or_else(|| {
            CliError::Invalid("the config needs traffic.lambda or traffic.rho".into())
        })?;
        let t = match load {
            Load::Lambda(l) => TrafficMix::new(l, self.phi, self.sigma),
            Load::Rho(r) => TrafficMix::at_load(&self.cell, r, self.phi, self.sigma),
        };
        t.map_err(|e| CliError::model("traffic", e))
    }

    /// Traffic at load `rho` and SC share `phi`, other settings unchanged.
    pub fn traffic_at(&self, rho: f64, phi: f64) -> Result<TrafficMix> {
        TrafficMix::at_load(&self.cell, rho, phi, self.sigma)
            .map_err(|e| CliError::model(format!("traffic at rho={rho}, phi={phi}"), e))
    }
}

pub fn parse_config(path: &Path) -> Result<RunSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum AreaField {
    C1,
    C2,
    Q,
}

struct Entry<'a> {
    line: usize,
    value: &'a str,
}

struct Parser<'a> {
    origin: &'a str,
    keys: BTreeMap<String, Entry<'a>>,
    areas: BTreeMap<usize, BTreeMap<AreaField, Entry<'a>>>,
}

const KEYS: &[&str] = &[
    "geometry.radii",
    "traffic.lambda",
    "traffic.rho",
    "traffic.phi",
    "traffic.sigma",
    "ctmc.max_total",
    "ctmc.blocking_threshold",
    "policy",
    "evaluator",
    "seed",
    "sim.completions",
    "sim.horizon",
    "sweep.rho",
    "sweep.phi",
    "capacity.target",
    "capacity.area",
    "capacity.tolerance",
];

fn area_key(key: &str) -> Option<Option<(usize, AreaField)>> {
    let rest = key.strip_prefix("areas.")?;
    let parsed = rest.split_once('.').and_then(|(n, f)| {
        let n: usize = n.parse().ok().filter(|&n| n >= 1)?;
        let f = match f {
            "c1" => AreaField::C1,
            "c2" => AreaField::C2,
            "q" => AreaField::Q,
            _ => return None,
        };
        Some((n, f))
    });
    Some(parsed)
}

impl<'a> Parser<'a> {
    fn err(&self, line: Option<usize>, message: impl Into<String>) -> CliError {
        CliError::Config {
            at: Location {
                path: self.origin.to_string(),
                line,
            },
            message: message.into(),
        }
    }

    fn scan(origin: &'a str, text: &'a str) -> Result<Self> {
        let mut p = Parser {
            origin,
            keys: BTreeMap::new(),
            areas: BTreeMap::new(),
        };
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split_once('#').map_or(raw, |(c, _)| c).trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(p.err(
                    Some(line),
                    format!("expected `key = value`, found `{content}`"),
                ));
            };
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(p.err(Some(line), format!("`{key}` has no value")));
            }
            let canonical = match area_key(key) {
                Some(Some((n, f))) => {
                    let slot = p.areas.entry(n).or_default();
                    slot.insert(f, Entry { line, value });
                    format!("areas.{n}.{}", ["c1", "c2", "q"][f as usize])
                }
                Some(None) => {
                    return Err(p.err(
                        Some(line),
                        format!("unknown key `{key}` (area keys are areas.N.c1, areas.N.c2, areas.N.q with N >= 1)"),
                    ))
                }
                None if KEYS.contains(&key) => {
                    p.keys.insert(key.to_string(), Entry { line, value });
                    key.to_string()
                }
                None => return Err(p.err(Some(line), format!("unknown key `{key}`"))),
            };
            if let Some(first) = seen.insert(canonical.clone(), line) {
                return Err(p.err(
                    Some(line),
                    format!("duplicate key `{canonical}` (first set on line {first})"),
                ));
            }
        }
        Ok(p)
    }

    fn get(&self, key: &str) -> Option<&Entry<'a>> {
        self.keys.get(key)
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.get(key).map(|e| e.line)
    }

    fn number(&self, key: &str, e: &Entry<'_>) -> Result<f64> {
        match e.value.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(
                Some(e.line),
                format!("{key} = `{}` is not a finite number", e.value),
            )),
        }
    }

    fn float(&self, key: &str, check: impl Fn(f64) -> bool, range: &str) -> Result<Option<f64>> {
        let Some(e) = self.get(key) else {
            return Ok(None);
        };
        let v = self.number(key, e)?;
        if !check(v) {
            return Err(self.err(
                Some(e.line),
                format!("{key} = {v} is out of range: must be {range}"),
            ));
        }
        Ok(Some(v))
    }

    fn integer(&self, key: &str, min: u64, max: u64) -> Result<Option<u64>> {
        let Some(e) = self.get(key) else {
            return Ok(None);
        };
        match e.value.parse::<u64>() {
            Ok(v) if (min..=max).contains(&v) => Ok(Some(v)),
            Ok(v) => Err(self.err(
                Some(e.line),
                format!("{key} = {v} is out of range: must be in [{min}, {max}]"),
            )),
            Err(_) => Err(self.err(
                Some(e.line),
                format!("{key} = `{}` is not a non-negative integer", e.value),
            )),
        }
    }

    fn list(
        &self,
        key: &str,
        check: impl Fn(f64) -> bool,
        range: &str,
    ) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.get(key) else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for item in e.value.split(',') {
            let item = item.trim();
            let v = self.number(
                key,
                &Entry {
                    line: e.line,
                    value: item,
                },
            )?;
            if !check(v) {
                return Err(self.err(
                    Some(e.line),
                    format!("{key}: {v} is out of range: values must be {range}"),
                ));
            }
            out.push(v);
        }
        Ok(Some(out))
    }

    fn exclusive(&self, a: &str, b: &str) -> Result<()> {
        if let (Some(ea), Some(eb)) = (self.get(a), self.get(b)) {
            let line = ea.line.max(eb.line);
            return Err(self.err(Some(line), format!("{a} and {b} are mutually exclusive")));
        }
        Ok(())
    }

    fn cell(&self) -> Result<CellConfig> {
        if self.areas.is_empty() {
            return Err(self.err(
                None,
                "missing key `areas.1.c1` (at least one area is required)",
            ));
        }
        let count = self.areas.len();
        if let Some((&n, fields)) = self.areas.iter().find(|(&n, _)| n > count) {
            let line = fields.values().map(|e| e.line).min();
            return Err(self.err(
                line,
                format!("area {n} given but areas must be numbered 1..{count} without gaps"),
            ));
        }
        let radii = self.list("geometry.radii", |r| r > 0.0, "positive and increasing")?;
        let ring_q = match &radii {
            Some(r) => Some(
                ring_area_probabilities(r)
                    .map_err(|e| self.err(self.line_of("geometry.radii"), e.to_string()))?,
            ),
            None => None,
        };
        if let Some(q) = &ring_q {
            if q.len() != count {
                return Err(self.err(
                    self.line_of("geometry.radii"),
                    format!("geometry.radii gives {} rings for {count} areas", q.len()),
                ));
            }
        }
        let mut areas = Vec::with_capacity(count);
        let mut q_line = None;
        for (&n, fields) in &self.areas {
            let rate = |f: AreaField, name: &str| -> Result<PeakRate> {
                let key = format!("areas.{n}.{name}");
                let e = fields
                    .get(&f)
                    .ok_or_else(|| self.err(None, format!("missing key `{key}`")))?;
                PeakRate::parse(e.value)
                    .map_err(|err| self.err(Some(e.line), format!("{key}: {err}")))
            };
            let c1 = rate(AreaField::C1, "c1")?;
            let c2 = rate(AreaField::C2, "c2")?;
            let q = match (fields.get(&AreaField::Q), &ring_q) {
                (Some(e), _) => {
                    q_line = q_line.or(Some(e.line));
                    let key = format!("areas.{n}.q");
                    let v = self.number(&key, e)?;
                    if !(0.0..=1.0).contains(&v) {
                        return Err(self.err(
                            Some(e.line),
                            format!("{key} = {v} is out of range: must be in [0, 1]"),
                        ));
                    }
                    v
                }
                (None, Some(q)) => q[n - 1],
                (None, None) if count == 1 => 1.0,
                (None, None) => {
                    return Err(self.err(
                        None,
                        format!("missing key `areas.{n}.q` (or give geometry.radii)"),
                    ))
                }
            };
            areas.push(AreaSpec::new(c1, c2, q));
        }
        let built = match radii {
            Some(r) => CellConfig::with_radii(areas, r),
            None => CellConfig::new(areas),
        };
        built.map_err(|e| {
            let line = self.line_of("geometry.radii").or(q_line);
            self.err(line, e.to_string())
        })
    }

    fn build(&self) -> Result<RunSpec> {
        let cell = self.cell()?;
        let areas = cell.num_areas();

        self.exclusive("traffic.lambda", "traffic.rho")?;
        self.exclusive("sim.completions", "sim.horizon")?;
        let load = match (
            self.float("traffic.lambda", |v| v >= 0.0, ">= 0")?,
            self.float("traffic.rho", |v| v >= 0.0, ">= 0")?,
        ) {
            (Some(l), _) => Some(Load::Lambda(l)),
            (_, Some(r)) => Some(Load::Rho(r)),
            _ => None,
        };
        let phi = self
            .float("traffic.phi", |v| (0.0..=1.0).contains(&v), "in [0, 1]")?
            .ok_or_else(|| self.err(None, "missing key `traffic.phi`"))?;
        let sigma = self
            .float("traffic.sigma", |v| v > 0.0, "> 0")?
            .unwrap_or(1.0);
        let max_total = self
            .integer("ctmc.max_total", 1, u64::from(u16::MAX))?
            .map(|v| v as u32);
        let blocking_threshold = self.float(
            "ctmc.blocking_threshold",
            |v| v > 0.0 && v < 1.0,
            "in (0, 1)",
        )?;

        let policy = match self.get("policy") {
            Some(e) => {
                Policy::parse(e.value).map_err(|err| self.err(Some(e.line), err.to_string()))?
            }
            None => Policy::Jfq,
        };
        let evaluator = match self.get("evaluator") {
            Some(e) => {
                Evaluator::parse(e.value).map_err(|err| self.err(Some(e.line), err.to_string()))?
            }
            None => Evaluator::Ctmc,
        };
        let seed = self.integer("seed", 0, u64::MAX)?.unwrap_or(DEFAULT_SEED);

        let sim = match (
            self.integer("sim.completions", 1, u64::MAX)?,
            self.float("sim.horizon", |v| v > 0.0, "> 0")?,
        ) {
            (Some(n), _) => Some(SimLength::Completions(n)),
            (_, Some(h)) => Some(SimLength::Horizon(h)),
            _ => None,
        };

        let stationary = evaluator != Evaluator::Sim;
        let sweep = SweepGrid {
            rho: if stationary {
                self.list("sweep.rho", |v| v > 0.0 && v < 1.0, "in (0, 1)")?
            } else {
                self.list("sweep.rho", |v| v > 0.0, "> 0")?
            },
            phi: self.list("sweep.phi", |v| (0.0..=1.0).contains(&v), "in [0, 1]")?,
        };

        let capacity = CapacitySettings {
            target: self.float("capacity.target", |v| v > 0.0, "> 0")?,
            area: self
                .integer("capacity.area", 1, areas as u64)?
                .map(|a| a as usize - 1),
            tolerance: self.float("capacity.tolerance", |v| v > 0.0 && v < 1.0, "in (0, 1)")?,
        };

        Ok(RunSpec {
            cell,
            load,
            phi,
            sigma,
            max_total,
            blocking_threshold,
            policy,
            evaluator,
            seed,
            sim,
            sweep,
            capacity,
        })
    }
}

/// Parses config text; `origin` names the source in diagnostics.
pub fn parse_config_str(text: &str, origin: &str) -> Result<RunSpec> {
    Parser::scan(origin, text)?.build()
}

fn list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// `(key, value)` pairs that [`parse_config_str`] reads back into `spec`.
pub fn entries(spec: &RunSpec) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut push = |k: &str, v: String| out.push((k.to_string(), v));
    for (j, a) in spec.cell.areas().iter().enumerate() {
        push(&format!("areas.{}.c1", j + 1), a.c1.to_string());
        push(&format!("areas.{}.c2", j + 1), a.c2.to_string());
        push(&format!("areas.{}.q", j + 1), a.q.to_string());
    }
    if let Some(r) = spec.cell.radii() {
        push("geometry.radii", list(r));
    }
    match spec.load {
        Some(Load::Lambda(l)) => push("traffic.lambda", l.to_string()),
        Some(Load::Rho(r)) => push("traffic.rho", r.to_string()),
        None => {}
    }
    push("traffic.phi", spec.phi.to_string());
    push("traffic.sigma", spec.sigma.to_string());
    if let Some(n) = spec.max_total {
        push("ctmc.max_total", n.to_string());
    }
    if let Some(b) = spec.blocking_threshold {
        push("ctmc.blocking_threshold", b.to_string());
    }
    push("policy", spec.policy.name().to_string());
    push("evaluator", spec.evaluator.name().to_string());
    push("seed", spec.seed.to_string());
    match spec.sim {
        Some(SimLength::Completions(n)) => push("sim.completions", n.to_string()),
        Some(SimLength::Horizon(h)) => push("sim.horizon", h.to_string()),
        None => {}
    }
    if let Some(r) = &spec.sweep.rho {
        push("sweep.rho", list(r));
    }
    if let Some(p) = &spec.sweep.phi {
        push("sweep.phi", list(p));
    }
    if let Some(t) = spec.capacity.target {
        push("capacity.target", t.to_string());
    }
    if let Some(a) = spec.capacity.area {
        push("capacity.area", (a + 1).to_string());
    }
    if let Some(t) = spec.capacity.tolerance {
        push("capacity.tolerance", t.to_string());
    }
    out
}

/// Config text for `spec`, one `key = value` per line.
pub fn emit(spec: &RunSpec) -> String {
    entries(spec)
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

/// The same pairs on one line, for CSV headers.
pub fn emit_inline(spec: &RunSpec) -> String {
    entries(spec)
        .into_iter()
        .map(|(k, v)| format!("{k}={}", v.replace(", ", ",")))
        .collect::<Vec<_>>()
        .join("; ")
}
