//! Small statistics toolkit: Student-t quantiles, batch-means intervals and a
//! least-squares trend test.

use alloc::format;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub half_width: f64,
    pub level: f64,
    pub batches: usize,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.mean).abs() <= self.half_width
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = f64::from(m);
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * libm::log(x)
        + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * regularized_beta(df / (df + t * t), 0.5 * df, 0.5);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Quantile of Student's t, found by bisection on the CDF.
pub fn student_t_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(df > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "t quantile needs 0 < p < 1 and df > 0 (p = {p}, df = {df})"
        )));
    }
    if p < 0.5 {
        return student_t_quantile(1.0 - p, df).map(|q| -q);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while student_t_cdf(hi, df) < p {
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(hi);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if student_t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn t_interval_of_means(
    batch_values: impl Iterator<Item = f64> + Clone,
    n_batches: usize,
    centre: f64,
    level: f64,
) -> Result<ConfidenceInterval> {
    let b = n_batches as f64;
    let mean = batch_values.clone().sum::<f64>() / b;
    let var = batch_values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (b - 1.0);
    let t = student_t_quantile(0.5 + 0.5 * level, b - 1.0)?;
    Ok(ConfidenceInterval {
        mean: centre,
        half_width: t * libm::sqrt(var / b),
        level,
        batches: n_batches,
    })
}

fn check_batches(len: usize, n_batches: usize, level: f64) -> Result<usize> {
    if n_batches < 2 {
        return Err(Error::NoData(format!(
            "{n_batches} batch(es) leave the variance undefined"
        )));
    }
    if len < 2 * n_batches {
        return Err(Error::NoData(format!(
            "{len} samples are too few for {n_batches} batches"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level}")));
    }
    Ok(len / n_batches)
}

/// Batch-means interval for the mean of a stationary series.
///
/// The series is cut into `n_batches` equal consecutive batches; leading
/// samples that do not fill a batch are dropped.
pub fn batch_means_ci(samples: &[f64], n_batches: usize, level: f64) -> Result<ConfidenceInterval> {
    let size = check_batches(samples.len(), n_batches, level)?;
    let used = &samples[samples.len() - size * n_batches..];
    let means = used
        .chunks_exact(size)
        .map(|c| c.iter().sum::<f64>() / size as f64);
    let centre = used.iter().sum::<f64>() / used.len() as f64;
    t_interval_of_means(means, n_batches, centre, level)
}

/// Batch-means interval for a ratio of sums `Σ num / Σ den`.
///
/// Each batch contributes its own ratio; the centre is the pooled ratio.
pub fn batch_ratio_ci(
    num: &[f64],
    den: &[f64],
    n_batches: usize,
    level: f64,
) -> Result<ConfidenceInterval> {
    if num.len() != den.len() {
        return Err(Error::InvalidArgument(
            "ratio series differ in length".into(),
        ));
    }
    let size = check_batches(num.len(), n_batches, level)?;
    let skip = num.len() - size * n_batches;
    let (num, den) = (&num[skip..], &den[skip..]);
    let ratios = num
        .chunks_exact(size)
        .zip(den.chunks_exact(size))
        .map(|(a, b)| a.iter().sum::<f64>() / b.iter().sum::<f64>());
    let centre = num.iter().sum::<f64>() / den.iter().sum::<f64>();
    t_interval_of_means(ratios, n_batches, centre, level)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearTrend {
    pub slope: f64,
    /// `slope / se(slope)`; infinite for a perfect non-flat fit.
    pub t_stat: f64,
    /// Lag-one autocorrelation of the residuals.
    pub residual_autocorrelation: f64,
}

impl LinearTrend {
    /// t-statistic deflated for AR(1) residuals by `√((1 − r)/(1 + r))`.
    pub fn t_stat_adjusted(&self) -> f64 {
        let r = self.residual_autocorrelation.clamp(0.0, 0.999);
        self.t_stat * libm::sqrt((1.0 - r) / (1.0 + r))
    }
}

/// Ordinary least-squares slope of `y` on `x` and its t-statistic.
pub fn linear_trend(x: &[f64], y: &[f64]) -> Result<LinearTrend> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::NoData(format!(
            "trend needs at least 3 paired points (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::NoData("trend abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let resid: alloc::vec::Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| b - my - slope * (a - mx))
        .collect();
    let sse: f64 = resid.iter().map(|r| r * r).sum();
    let lagged: f64 = resid.windows(2).map(|w| w[0] * w[1]).sum();
    let residual_autocorrelation = if sse > 0.0 { lagged / sse } else { 0.0 };
    let se = libm::sqrt(sse / (n - 2.0) / sxx);
    let t_stat = if se > 0.0 {
        slope / se
    } else if slope == 0.0 {
        0.0
    } else {
        slope.signum() * f64::INFINITY
    };
    Ok(LinearTrend {
        slope,
        t_stat,
        residual_autocorrelation,
    })
}
