//! Domain types and the closed-form formulas every other module builds on.
//!
//! Units are fixed throughout: capacities in Mbit/s, volumes in Mbit, time in
//! seconds. Areas are indexed from zero; the last area is the cell edge.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::{Error, Result};

/// Tolerance on `Σ q = 1` and on radius-derived probabilities.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Relative half-width of the band around `ρ = 1` reported as critical.
pub const CRITICAL_EPSILON: f64 = 1e-9;

/// A carrier peak rate in Mbit/s, kept both as `f64` and as an exact reduced
/// fraction so that routing ties can be detected without rounding.
#[derive(Debug, Clone, Copy)]
pub struct PeakRate {
    value: f64,
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl PeakRate {
    /// Largest numerator or denominator accepted, so cross products fit in `u128`.
    pub const MAX_TERM: u64 = u32::MAX as u64;

    pub fn from_ratio(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::InvalidConfig(format!(
                "peak rate {num}/{den} must be strictly positive"
            )));
        }
        let g = gcd(num, den);
        let (num, den) = (num / g, den / g);
        if num > Self::MAX_TERM || den > Self::MAX_TERM {
            return Err(Error::InvalidConfig(format!(
                "peak rate {num}/{den} has too many significant digits"
            )));
        }
        Ok(Self {
            value: num as f64 / den as f64,
            num,
            den,
        })
    }

    pub fn from_int(n: u64) -> Result<Self> {
        Self::from_ratio(n, 1)
    }

    /// Parses a decimal (`"1.3"`, `"150"`) or a fraction (`"13/10"`).
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let bad = || Error::InvalidConfig(format!("`{text}` is not a positive decimal rate"));
        if let Some((n, d)) = text.split_once('/') {
            let n = n.trim().parse::<u64>().map_err(|_| bad())?;
            let d = d.trim().parse::<u64>().map_err(|_| bad())?;
            return Self::from_ratio(n, d);
        }
        let (int_part, frac_part) = text.split_once('.').unwrap_or((text, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part
            .bytes()
            .chain(frac_part.bytes())
            .all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        let frac_part = frac_part.trim_end_matches('0');
        if frac_part.len() > 18 {
            return Err(bad());
        }
        let den = 10u64.pow(frac_part.len() as u32);
        let mut num: u64 = 0;
        for b in int_part.bytes().chain(frac_part.bytes()) {
            num = num
                .checked_mul(10)
                .and_then(|v| v.checked_add(u64::from(b - b'0')))
                .ok_or_else(bad)?;
        }
        Self::from_ratio(num, den)
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.value
    }

    /// Reduced `(numerator, denominator)`.
    #[inline]
    pub fn ratio(&self) -> (u64, u64) {
        (self.num, self.den)
    }

    /// Exact multiplication by `num/den`.
    pub fn scaled(&self, num: u64, den: u64) -> Result<Self> {
        let n = u128::from(self.num) * u128::from(num);
        let d = u128::from(self.den) * u128::from(den);
        if d == 0 {
            return Err(Error::InvalidArgument("zero scale denominator".into()));
        }
        let g = {
            let (mut a, mut b) = (n, d);
            while b != 0 {
                let t = a % b;
                a = b;
                b = t;
            }
            a
        };
        let (n, d) = (n / g.max(1), d / g.max(1));
        if n > u128::from(Self::MAX_TERM) || d > u128::from(Self::MAX_TERM) {
            return Err(Error::InvalidArgument("scaled rate overflows".into()));
        }
        Self::from_ratio(n as u64, d as u64)
    }

    /// Exact comparison of `self · a` against `other · b`.
    pub fn cmp_weighted(&self, a: u64, other: &PeakRate, b: u64) -> Ordering {
        let lhs = u128::from(self.num) * u128::from(other.den) * u128::from(a);
        let rhs = u128::from(other.num) * u128::from(self.den) * u128::from(b);
        lhs.cmp(&rhs)
    }
}

impl PartialEq for PeakRate {
    fn eq(&self, other: &Self) -> bool {
        self.num == other.num && self.den == other.den
    }
}

impl Eq for PeakRate {}

impl fmt::Display for PeakRate {
    /// Exact decimal when the denominator divides a power of ten, else `num/den`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut digits = 0u32;
        let mut pow: u64 = 1;
        while !pow.is_multiple_of(self.den) {
            match pow.checked_mul(10) {
                Some(p) => {
                    pow = p;
                    digits += 1;
                }
                None => return write!(f, "{}/{}", self.num, self.den),
            }
        }
        if digits == 0 {
            return write!(f, "{}", self.num);
        }
        let scaled = u128::from(self.num) * u128::from(pow / self.den);
        let unit = u128::from(pow);
        write!(
            f,
            "{}.{:0width$}",
            scaled / unit,
            scaled % unit,
            width = digits as usize
        )
    }
}

/// Radio conditions and share of arrivals in one area of the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaSpec {
    pub c1: PeakRate,
    pub c2: PeakRate,
    pub q: f64,
}

impl AreaSpec {
    pub fn new(c1: PeakRate, c2: PeakRate, q: f64) -> Self {
        Self { c1, c2, q }
    }

    /// `C1 + C2`.
    pub fn total(&self) -> f64 {
        self.c1.value() + self.c2.value()
    }

    pub fn c_max(&self) -> f64 {
        self.c1.value().max(self.c2.value())
    }

    pub fn c_min(&self) -> f64 {
        self.c1.value().min(self.c2.value())
    }

    pub fn peak(&self, carrier: Carrier) -> &PeakRate {
        match carrier {
            Carrier::One => &self.c1,
            Carrier::Two => &self.c2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Carrier {
    One,
    Two,
}

/// Per-area peak rates and probabilities, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CellConfig {
    areas: Vec<AreaSpec>,
    radii: Option<Vec<f64>>,
}

impl CellConfig {
    pub fn new(areas: Vec<AreaSpec>) -> Result<Self> {
        Self::build(areas, None)
    }

    /// Areas whose probabilities must agree with the ring geometry.
    pub fn with_radii(areas: Vec<AreaSpec>, radii: Vec<f64>) -> Result<Self> {
        Self::build(areas, Some(radii))
    }

    /// Derives every `q_j` from concentric ring radii.
    pub fn from_radii(peaks: &[(PeakRate, PeakRate)], radii: Vec<f64>) -> Result<Self> {
        let q = ring_area_probabilities(&radii)?;
        if q.len() != peaks.len() {
            return Err(Error::InvalidGeometry(format!(
                "{} radii for {} areas",
                q.len(),
                peaks.len()
            )));
        }
        let areas = peaks
            .iter()
            .zip(q)
            .map(|(&(c1, c2), q)| AreaSpec::new(c1, c2, q))
            .collect();
        Self::build(areas, Some(radii))
    }

    /// One area with the whole cell at the given peak rates.
    pub fn single(c1: PeakRate, c2: PeakRate) -> Self {
        Self {
            areas: vec![AreaSpec::new(c1, c2, 1.0)],
            radii: None,
        }
    }

    fn build(areas: Vec<AreaSpec>, radii: Option<Vec<f64>>) -> Result<Self> {
        if areas.is_empty() {
            return Err(Error::InvalidConfig("at least one area is required".into()));
        }
        for (j, a) in areas.iter().enumerate() {
            if !(0.0..=1.0).contains(&a.q) || !a.q.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "area {j}: probability q = {} outside [0, 1]",
                    a.q
                )));
            }
        }
        let sum: f64 = areas.iter().map(|a| a.q).sum();
        if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "area probabilities must sum to 1 (got {sum})"
            )));
        }
        if let Some(r) = &radii {
            let q = ring_area_probabilities(r)?;
            if q.len() != areas.len() {
                return Err(Error::InvalidGeometry(format!(
                    "{} radii for {} areas",
                    q.len(),
                    areas.len()
                )));
            }
            for (j, (a, qj)) in areas.iter().zip(&q).enumerate() {
                if (a.q - qj).abs() > PROBABILITY_TOLERANCE {
                    return Err(Error::InvalidGeometry(format!(
                        "area {j}: q = {} disagrees with ring geometry ({qj})",
                        a.q
                    )));
                }
            }
        }
        Ok(Self { areas, radii })
    }

    #[inline]
    pub fn areas(&self) -> &[AreaSpec] {
        &self.areas
    }

    #[inline]
    pub fn area(&self, j: usize) -> &AreaSpec {
        &self.areas[j]
    }

    #[inline]
    pub fn num_areas(&self) -> usize {
        self.areas.len()
    }

    pub fn radii(&self) -> Option<&[f64]> {
        self.radii.as_deref()
    }

    /// Index of the cell-edge area.
    pub fn edge(&self) -> usize {
        self.areas.len() - 1
    }

    fn check_area(&self, j: usize) -> Result<&AreaSpec> {
        self.areas.get(j).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "area {j} out of range ({} areas)",
                self.areas.len()
            ))
        })
    }
}

/// Offered traffic: total flow arrival rate, SC share and mean flow volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficMix {
    lambda: f64,
    phi: f64,
    sigma: f64,
}

impl TrafficMix {
    pub fn new(lambda_total: f64, phi: f64, sigma: f64) -> Result<Self> {
        if !(lambda_total >= 0.0) || !lambda_total.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "arrival rate {lambda_total} must be finite and >= 0"
            )));
        }
        if !(0.0..=1.0).contains(&phi) {
            return Err(Error::InvalidConfig(format!("phi = {phi} outside [0, 1]")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "mean flow volume {sigma} must be > 0"
            )));
        }
        Ok(Self {
            lambda: lambda_total,
            phi,
            sigma,
        })
    }

    /// Traffic that puts the cell at system load `rho`.
    pub fn at_load(cfg: &CellConfig, rho: f64, phi: f64, sigma: f64) -> Result<Self> {
        Self::new(rho * harmonic_capacity(cfg) / sigma, phi, sigma)
    }

    #[inline]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[inline]
    pub fn phi(&self) -> f64 {
        self.phi
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// SC arrival rate `α = φΛ`.
    #[inline]
    pub fn alpha(&self) -> f64 {
        self.phi * self.lambda
    }

    /// DC arrival rate `β = Λ − α`, so that `α + β = Λ` holds exactly.
    #[inline]
    pub fn beta(&self) -> f64 {
        self.lambda - self.alpha()
    }

    pub fn sc_rate(&self, cfg: &CellConfig, j: usize) -> f64 {
        self.alpha() * cfg.area(j).q
    }

    pub fn dc_rate(&self, cfg: &CellConfig, j: usize) -> f64 {
        self.beta() * cfg.area(j).q
    }

    /// Traffic intensity `Λσ` in Mbit/s.
    pub fn intensity(&self) -> f64 {
        self.lambda * self.sigma
    }
}

/// Flow class index within an area: SC on carrier 1, SC on carrier 2, DC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Sc1 = 0,
    Sc2 = 1,
    Dc = 2,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Sc1, Slot::Sc2, Slot::Dc];
}

/// Occupancy vector `(n_{1,1}, n_{2,1}, m_1, …, n_{1,J}, n_{2,J}, m_J)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SystemState {
    counts: Vec<u32>,
}

impl SystemState {
    pub fn empty(areas: usize) -> Self {
        Self {
            counts: vec![0; 3 * areas],
        }
    }

    pub fn from_counts(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() || !counts.len().is_multiple_of(3) {
            return Err(Error::InvalidArgument(format!(
                "state needs 3 counts per area, got {}",
                counts.len()
            )));
        }
        Ok(Self { counts })
    }

    /// Single-area shorthand.
    pub fn single(n1: u32, n2: u32, m: u32) -> Self {
        Self {
            counts: vec![n1, n2, m],
        }
    }

    #[inline]
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    #[inline]
    pub fn num_areas(&self) -> usize {
        self.counts.len() / 3
    }

    #[inline]
    pub fn get(&self, slot: Slot, j: usize) -> u32 {
        self.counts[3 * j + slot as usize]
    }

    pub fn n1(&self) -> u32 {
        self.counts.iter().step_by(3).sum()
    }

    pub fn n2(&self) -> u32 {
        self.counts.iter().skip(1).step_by(3).sum()
    }

    pub fn m(&self) -> u32 {
        self.counts.iter().skip(2).step_by(3).sum()
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// `n + e_{slot,j}`.
    pub fn plus(&self, slot: Slot, j: usize) -> Self {
        let mut next = self.clone();
        next.counts[3 * j + slot as usize] += 1;
        next
    }

    /// `n − e_{slot,j}`, or `None` when that component is already zero.
    pub fn minus(&self, slot: Slot, j: usize) -> Option<Self> {
        let idx = 3 * j + slot as usize;
        let v = self.counts[idx].checked_sub(1)?;
        let mut next = self.clone();
        next.counts[idx] = v;
        Some(next)
    }
}

/// Carrier aggregates `(n1, n2, m)` of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Aggregates {
    pub n1: u32,
    pub n2: u32,
    pub m: u32,
}

impl Aggregates {
    pub fn of(state: &SystemState) -> Self {
        Self::from_counts(state.counts())
    }

    pub fn from_counts<T: Copy + Into<u32>>(counts: &[T]) -> Self {
        let mut agg = Self::default();
        for chunk in counts.chunks_exact(3) {
            agg.n1 += chunk[0].into();
            agg.n2 += chunk[1].into();
            agg.m += chunk[2].into();
        }
        agg
    }

    /// Users sharing carrier 1 (`n1 + m`).
    #[inline]
    pub fn on_carrier1(&self) -> u32 {
        self.n1 + self.m
    }

    #[inline]
    pub fn on_carrier2(&self) -> u32 {
        self.n2 + self.m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadSummary {
    pub rho: f64,
    pub rho_per_area: Vec<f64>,
    pub c_bar: f64,
}

/// Area probabilities of concentric rings with outer radii `r_1 < … < r_J = R`.
pub fn ring_area_probabilities(radii: &[f64]) -> Result<Vec<f64>> {
    if radii.is_empty() {
        return Err(Error::InvalidGeometry("no radii given".into()));
    }
    let mut prev = 0.0;
    for &r in radii {
        if !(r > prev) || !r.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "radii must be positive and strictly increasing (got {r} after {prev})"
            )));
        }
        prev = r;
    }
    let outer = radii[radii.len() - 1];
    let r2 = outer * outer;
    let mut inner = 0.0;
    Ok(radii
        .iter()
        .map(|&r| {
            let q = (r * r - inner * inner) / r2;
            inner = r;
            q
        })
        .collect())
}

#[inline]
pub(crate) fn carrier_rate_unchecked(
    cfg: &CellConfig,
    agg: Aggregates,
    j: usize,
    c: Carrier,
) -> f64 {
    match c {
        Carrier::One => cfg.area(j).c1.value() / f64::from(agg.on_carrier1()),
        Carrier::Two => cfg.area(j).c2.value() / f64::from(agg.on_carrier2()),
    }
}

/// Per-user rate `D_{k,j}(n)` on one carrier.
pub fn carrier_rate(
    state: &SystemState,
    j: usize,
    carrier: Carrier,
    cfg: &CellConfig,
) -> Result<f64> {
    cfg.check_area(j)?;
    let agg = Aggregates::of(state);
    let users = match carrier {
        Carrier::One => agg.on_carrier1(),
        Carrier::Two => agg.on_carrier2(),
    };
    if users == 0 {
        return Err(Error::EmptyCarrier {
            area: j,
            carrier: match carrier {
                Carrier::One => 1,
                Carrier::Two => 2,
            },
        });
    }
    Ok(carrier_rate_unchecked(cfg, agg, j, carrier))
}

/// `(D_{1,j}(n), D_{2,j}(n))`; both carriers must have at least one user.
pub fn per_user_rates(state: &SystemState, j: usize, cfg: &CellConfig) -> Result<(f64, f64)> {
    Ok((
        carrier_rate(state, j, Carrier::One, cfg)?,
        carrier_rate(state, j, Carrier::Two, cfg)?,
    ))
}

/// Aggregate rate `E_j = D_{1,j} + D_{2,j}` seen by a DC flow in area `j`.
pub fn dc_aggregate_rate(state: &SystemState, j: usize, cfg: &CellConfig) -> Result<f64> {
    cfg.check_area(j)?;
    if state.m() == 0 {
        return Err(Error::EmptyCarrier {
            area: j,
            carrier: 0,
        });
    }
    let (d1, d2) = per_user_rates(state, j, cfg)?;
    Ok(d1 + d2)
}

/// Volumes a DC flow transfers on each carrier over `dt` seconds of constant state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeSplit {
    pub carrier1: f64,
    pub carrier2: f64,
}

impl VolumeSplit {
    pub fn total(&self) -> f64 {
        self.carrier1 + self.carrier2
    }
}

/// Volume-balancing split: each carrier moves `D_{k,j}·dt`, so residual volumes
/// kept in the same proportion finish on both carriers at the same instant.
pub fn vb_split(state: &SystemState, j: usize, cfg: &CellConfig, dt: f64) -> Result<VolumeSplit> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("interval {dt} must be > 0")));
    }
    if state.m() == 0 {
        return Err(Error::InvalidArgument(
            "volume split needs a DC flow".into(),
        ));
    }
    let (d1, d2) = per_user_rates(state, j, cfg)?;
    Ok(VolumeSplit {
        carrier1: d1 * dt,
        carrier2: d2 * dt,
    })
}

/// Harmonic capacity `C̄` with `1/C̄ = Σ_j q_j / (C_{1,j} + C_{2,j})`.
pub fn harmonic_capacity(cfg: &CellConfig) -> f64 {
    let inv: f64 = cfg.areas().iter().map(|a| a.q / a.total()).sum();
    1.0 / inv
}

pub fn offered_load(cfg: &CellConfig, traffic: &TrafficMix) -> LoadSummary {
    let c_bar = harmonic_capacity(cfg);
    let rho_per_area = (0..cfg.num_areas())
        .map(|j| {
            (traffic.sc_rate(cfg, j) + traffic.dc_rate(cfg, j)) * traffic.sigma()
                / cfg.area(j).total()
        })
        .collect();
    LoadSummary {
        rho: traffic.intensity() / c_bar,
        rho_per_area,
        c_bar,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Critical,
    Unstable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    pub kind: Stability,
    pub rho: f64,
    pub note: Option<&'static str>,
}

const MULTI_AREA_NOTE: &str = "with several areas, rho < 1 is proven necessary; sufficiency \
     is conjectured from the Bernoulli policy, whose per-carrier loads equal rho";

pub fn stability_verdict(cfg: &CellConfig, traffic: &TrafficMix) -> StabilityVerdict {
    let rho = offered_load(cfg, traffic).rho;
    let kind = if (rho - 1.0).abs() <= CRITICAL_EPSILON {
        Stability::Critical
    } else if rho < 1.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    };
    StabilityVerdict {
        kind,
        rho,
        note: (cfg.num_areas() > 1).then_some(MULTI_AREA_NOTE),
    }
}

/// Drift of the total fluid volume `V1 + V2 + W` of a single-area cell.
pub fn fluid_total_drift(cfg: &CellConfig, traffic: &TrafficMix) -> Result<f64> {
    if cfg.num_areas() != 1 {
        return Err(Error::UnsupportedGeometry {
            areas: cfg.num_areas(),
        });
    }
    Ok(traffic.intensity() - cfg.area(0).total())
}

fn require_dc_only_stable(cfg: &CellConfig, traffic: &TrafficMix, j: usize) -> Result<f64> {
    cfg.check_area(j)?;
    if traffic.phi() != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "closed form needs DC-only traffic (phi = {})",
            traffic.phi()
        )));
    }
    let rho = offered_load(cfg, traffic).rho;
    if rho >= 1.0 {
        return Err(Error::Unstable { rho });
    }
    Ok(rho)
}

/// `γ_DC,j = (C_{1,j} + C_{2,j})(1 − ρ)` when only DC flows are present.
pub fn dc_only_throughput(cfg: &CellConfig, traffic: &TrafficMix, j: usize) -> Result<f64> {
    let rho = require_dc_only_stable(cfg, traffic, j)?;
    Ok(cfg.area(j).total() * (1.0 - rho))
}

/// `E[m_j] = ρ_j / (1 − ρ)` when only DC flows are present.
pub fn dc_only_mean_occupancy(cfg: &CellConfig, traffic: &TrafficMix, j: usize) -> Result<f64> {
    let rho = require_dc_only_stable(cfg, traffic, j)?;
    let rho_j = offered_load(cfg, traffic).rho_per_area[j];
    Ok(rho_j / (1.0 - rho))
}

/// `γ̄_j = φ·γ_SC,j + (1 − φ)·γ_DC,j`.
pub fn mixed_mean_throughput(gamma_sc: f64, gamma_dc: f64, phi: f64) -> f64 {
    phi * gamma_sc + (1.0 - phi) * gamma_dc
}

/// JFQ throughput of SC flows, approximated by a PS server at the faster
/// carrier's peak rate: `max(C_{1,j}, C_{2,j})·(1 − ρ)`.
pub fn sc_jfq_throughput_approx(cfg: &CellConfig, rho: f64, j: usize) -> Result<f64> {
    let area = cfg.check_area(j)?;
    if rho >= 1.0 {
        return Err(Error::Unstable { rho });
    }
    Ok(area.c_max() * (1.0 - rho))
}

/// Approximate sustainable intensity for an edge-area target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaApprox {
    /// Uses the slower carrier in the `(1 − φ)` term, the faster one alone.
    pub theta: f64,
    /// Same display with positional `C_{1,J}`, `C_{2,J}`; clamped at zero.
    pub theta_positional: f64,
    /// Set when either variant was negative before clamping.
    pub clamped: bool,
}

/// `Θ ≈ C̄·(1 − γ̄_J / ((1 − φ)·C_min,J + C_max,J))` for the edge area.
pub fn theta_approximation(cfg: &CellConfig, phi: f64, target: f64) -> Result<ThetaApprox> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::InvalidArgument(format!(
            "phi = {phi} outside [0, 1]"
        )));
    }
    if !(target >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target {target} must be >= 0"
        )));
    }
    let edge = cfg.area(cfg.edge());
    let c_bar = harmonic_capacity(cfg);
    let zero_load = (1.0 - phi) * edge.c_min() + edge.c_max();
    if target > zero_load {
        return Err(Error::InfeasibleTarget {
            target,
            max: zero_load,
        });
    }
    let theta = c_bar * (1.0 - target / zero_load);
    let positional = c_bar * (1.0 - target / ((1.0 - phi) * edge.c1.value() + edge.c2.value()));
    Ok(ThetaApprox {
        theta: theta.max(0.0),
        theta_positional: positional.max(0.0),
        clamped: theta < 0.0 || positional < 0.0,
    })
}

/// Bernoulli routing probabilities `C_{k,j} / (C_{1,j} + C_{2,j})`.
pub fn bernoulli_probabilities(cfg: &CellConfig, j: usize) -> (f64, f64) {
    let a = cfg.area(j);
    let p1 = a.c1.value() / a.total();
    (p1, 1.0 - p1)
}
