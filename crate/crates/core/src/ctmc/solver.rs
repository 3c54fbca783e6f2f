use alloc::vec;
use alloc::vec::Vec;

use super::{BlockingMass, Generator};
use crate::{Error, Result};

/// Residual bound relative to the uniformization rate.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 1_000_000;

const CHECK_EVERY: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub probs: Vec<f64>,
    /// `‖ΠQ‖∞` at acceptance.
    pub residual: f64,
    pub iterations: usize,
    pub blocking: BlockingMass,
}

impl StationaryDistribution {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Column-oriented copy of the off-diagonal rates plus level bookkeeping.
struct Workspace {
    col_ptr: Vec<usize>,
    srcs: Vec<u32>,
    rates: Vec<f64>,
    level: Vec<u32>,
    up: Vec<f64>,
    down: Vec<f64>,
    levels: usize,
}

impl Workspace {
    fn new(gen: &Generator) -> Self {
        let n = gen.len();
        let mut col_ptr = vec![0usize; n + 1];
        for i in 0..n {
            for (c, _) in gen.row(i) {
                col_ptr[c + 1] += 1;
            }
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        let nnz = col_ptr[n];
        let mut fill = col_ptr.clone();
        let mut srcs = vec![0u32; nnz];
        let mut rates = vec![0.0; nnz];
        let space = gen.space();
        let level: Vec<u32> = (0..n).map(|i| space.total(i)).collect();
        let mut up = vec![0.0; n];
        let mut down = vec![0.0; n];
        for i in 0..n {
            for (c, r) in gen.row(i) {
                srcs[fill[c]] = i as u32;
                rates[fill[c]] = r;
                fill[c] += 1;
                if level[c] > level[i] {
                    up[i] += r;
                } else if level[c] < level[i] {
                    down[i] += r;
                }
            }
        }
        let levels = level.iter().copied().max().map_or(0, |m| m as usize + 1);
        Self {
            col_ptr,
            srcs,
            rates,
            level,
            up,
            down,
            levels,
        }
    }

    #[inline]
    fn inflow(&self, probs: &[f64], c: usize) -> f64 {
        let range = self.col_ptr[c]..self.col_ptr[c + 1];
        self.srcs[range.clone()]
            .iter()
            .zip(&self.rates[range])
            .map(|(&s, &r)| probs[s as usize] * r)
            .sum()
    }

    fn residual(&self, gen: &Generator, probs: &[f64]) -> f64 {
        (0..probs.len())
            .map(|c| (self.inflow(probs, c) + probs[c] * gen.diagonal(c)).abs())
            .fold(0.0, f64::max)
    }

    /// Rescales each population level to the stationary law of the
    /// birth–death chain the current iterate induces on levels.
    fn aggregate(&self, probs: &mut [f64], counts: &[usize]) {
        let l = self.levels;
        let mut mass = vec![0.0; l];
        let mut up = vec![0.0; l];
        let mut down = vec![0.0; l];
        for (i, &p) in probs.iter().enumerate() {
            let k = self.level[i] as usize;
            mass[k] += p;
            up[k] += p * self.up[i];
            down[k] += p * self.down[i];
        }
        // levels with no mass yet: weight their states uniformly
        for k in 0..l {
            if mass[k] <= 0.0 {
                let w = 1.0 / counts[k] as f64;
                let (mut u, mut d) = (0.0, 0.0);
                for (i, _) in probs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| self.level[*i] as usize == k)
                {
                    u += w * self.up[i];
                    d += w * self.down[i];
                }
                up[k] = u;
                down[k] = d;
            } else {
                up[k] /= mass[k];
                down[k] /= mass[k];
            }
        }
        let mut target = vec![0.0; l];
        target[0] = 1.0;
        for k in 1..l {
            target[k] = if down[k] > 0.0 {
                target[k - 1] * up[k - 1] / down[k]
            } else {
                0.0
            };
        }
        let norm: f64 = target.iter().sum();
        if !(norm.is_finite() && norm > 0.0) {
            return;
        }
        for (i, p) in probs.iter_mut().enumerate() {
            let k = self.level[i] as usize;
            let t = target[k] / norm;
            *p = if mass[k] > 0.0 {
                *p * t / mass[k]
            } else {
                t / counts[k] as f64
            };
        }
    }

    fn gauss_seidel(&self, gen: &Generator, probs: &mut [f64], backward: bool) {
        let n = probs.len();
        for k in 0..n {
            let c = if backward { n - 1 - k } else { k };
            let d = gen.diagonal(c);
            if d < 0.0 {
                probs[c] = self.inflow(probs, c) / -d;
            }
        }
    }
}

fn normalize(probs: &mut [f64]) {
    let s: f64 = probs.iter().sum();
    if s > 0.0 {
        probs.iter_mut().for_each(|p| *p /= s);
    }
}

/// Stationary distribution of a generator.
///
/// Gauss–Seidel sweeps on the balance equations (alternating direction), each preceded by an
/// aggregation step over population levels (all transitions change the total
/// population by one, so levels form a birth–death chain that is solved
/// exactly). Stops once `‖ΠQ‖∞ ≤ tol · q` with `q` the uniformization rate.
pub fn solve_stationary(
    gen: &Generator,
    tol: f64,
    max_iters: usize,
) -> Result<StationaryDistribution> {
    solve_stationary_from(gen, None, tol, max_iters)
}

/// [`solve_stationary`] starting from `initial` (normalized here) instead of
/// the uniform vector.
pub fn solve_stationary_from(
    gen: &Generator,
    initial: Option<Vec<f64>>,
    tol: f64,
    max_iters: usize,
) -> Result<StationaryDistribution> {
    let n = gen.len();
    if n == 0 {
        return Err(Error::Degenerate("empty state space".into()));
    }
    let ws = Workspace::new(gen);
    let mut counts = vec![0usize; ws.levels];
    for &k in &ws.level {
        counts[k as usize] += 1;
    }
    let bound = tol * gen.uniformization_rate();
    let mut probs = match initial {
        Some(p) if p.len() == n && p.iter().all(|v| *v >= 0.0) && p.iter().sum::<f64>() > 0.0 => p,
        Some(_) => {
            return Err(Error::InvalidArgument(
                "initial vector does not fit the generator".into(),
            ))
        }
        None => vec![1.0 / n as f64; n],
    };
    normalize(&mut probs);
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;

    for iter in 0..=max_iters {
        if iter % CHECK_EVERY == 0 || iter == max_iters {
            residual = ws.residual(gen, &probs);
            trace.push(residual);
            if residual <= bound {
                let blocking = super::report::blocking_of(gen, &probs);
                return Ok(StationaryDistribution {
                    probs,
                    residual,
                    iterations: iter,
                    blocking,
                });
            }
        }
        if iter == max_iters {
            break;
        }
        ws.aggregate(&mut probs, &counts);
        ws.gauss_seidel(gen, &mut probs, iter % 2 == 1);
        normalize(&mut probs);
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        residual,
        trace,
    })
}
