//! Exact stationary distribution of the treatment-marginalized chain on
//! `2^n` states, for small `n`. State index `x` encodes unit `i` in bit `i`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationModel;
use crate::error::{Error, Result};
use crate::graph::{check_len, InterferenceGraph};
use crate::linalg::max_abs_diff;
use crate::simulate::PolicyVector;

pub const DEFAULT_CAP: usize = 12;
pub const HARD_CAP: usize = 20;
pub const DEFAULT_TOL: f64 = 1e-13;

/// Source states per accumulation block. Blocks are fixed by the state
/// count alone, so the summation order never depends on the thread pool.
const BLOCK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub cap: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            tol: DEFAULT_TOL,
            max_iter: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactDistribution {
    pub n: usize,
    pub probs: Vec<f64>,
    /// Max-norm invariance defect `‖μP − μ‖_∞`.
    pub residual: f64,
    pub iterations: usize,
}

pub fn decode(n: usize, x: usize) -> Vec<u8> {
    (0..n).map(|i| ((x >> i) & 1) as u8).collect()
}

pub fn encode(y: &[u8]) -> usize {
    y.iter().enumerate().fold(0, |x, (i, &b)| x | ((b as usize & 1) << i))
}

impl ExactDistribution {
    /// `Σ_x μ(x) h(x)`
    pub fn expect(&self, mut h: impl FnMut(&[u8]) -> f64) -> f64 {
        let mut y = vec![0u8; self.n];
        let mut total = 0.0;
        for (x, &p) in self.probs.iter().enumerate() {
            for (i, b) in y.iter_mut().enumerate() {
                *b = ((x >> i) & 1) as u8;
            }
            total += p * h(&y);
        }
        total
    }

    /// `state,probability` rows after a comment header; `state` is the
    /// bitmask with unit `i` in bit `i`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "# exact stationary distribution, n={} residual={:e}", self.n, self.residual)?;
        writeln!(out, "state,probability")?;
        for (x, p) in self.probs.iter().enumerate() {
            writeln!(out, "{x},{p:e}")?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_inputs(g: &InterferenceGraph, m: &ActivationModel, pi: &PolicyVector) -> Result<()> {
    check_len(g.n(), m.n())?;
    check_len(g.n(), pi.len())
}

/// Chance that each unit is 1 next step given state `y`, with the treatment
/// integrated out: `π_i f_i(y_i, 1, z_i) + (1 − π_i) f_i(y_i, 0, z_i)`.
pub fn marginal_transition_prob(g: &InterferenceGraph, m: &ActivationModel, pi: &PolicyVector, y: &[u8]) -> Result<Vec<f64>> {
    check_inputs(g, m, pi)?;
    let z = g.neighbor_sums(y)?;
    Ok((0..g.n())
        .map(|i| {
            let z = z[i] as f64;
            pi[i] * m.eval_f(i, y[i], 1, z) + (1.0 - pi[i]) * m.eval_f(i, y[i], 0, z)
        })
        .collect())
}

struct Kernel {
    n: usize,
    /// `p_i(y)` for every source state, row-major by state.
    p: Vec<f64>,
}

impl Kernel {
    fn build(g: &InterferenceGraph, m: &ActivationModel, pi: &PolicyVector) -> Result<Self> {
        let n = g.n();
        let rows: Vec<Vec<f64>> = (0..1usize << n)
            .into_par_iter()
            .map(|x| marginal_transition_prob(g, m, pi, &decode(n, x)))
            .collect::<Result<_>>()?;
        Ok(Self {
            n,
            p: rows.concat(),
        })
    }

    /// `μ ↦ μP`, scattering each source state's product-Bernoulli row.
    fn apply(&self, mu: &[f64], out: &mut [f64]) {
        let n = self.n;
        let size = 1usize << n;
        let partials: Vec<Vec<f64>> = mu
            .par_chunks(BLOCK)
            .enumerate()
            .map(|(b, chunk)| {
                let mut acc = vec![0.0; size];
                let mut row = vec![0.0; size];
                for (k, &mass) in chunk.iter().enumerate() {
                    if mass == 0.0 {
                        continue;
                    }
                    let y = b * BLOCK + k;
                    let p = &self.p[y * n..(y + 1) * n];
                    row[0] = mass;
                    for (i, &pi) in p.iter().enumerate() {
                        let half = 1usize << i;
                        for x in 0..half {
                            let v = row[x];
                            row[x] = v * (1.0 - pi);
                            row[x + half] = v * pi;
                        }
                    }
                    for (a, r) in acc.iter_mut().zip(&row) {
                        *a += r;
                    }
                }
                acc
            })
            .collect();
        out.fill(0.0);
        for part in &partials {
            for (o, v) in out.iter_mut().zip(part) {
                *o += v;
            }
        }
    }
}

fn power_iterate(kernel: &Kernel, init: Vec<f64>, opts: &OracleOptions) -> Result<ExactDistribution> {
    let mut mu = init;
    let mut next = vec![0.0; mu.len()];
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        kernel.apply(&mu, &mut next);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        change = max_abs_diff(&mu, &next);
        std::mem::swap(&mut mu, &mut next);
        if change <= opts.tol {
            kernel.apply(&mu, &mut next);
            let residual = max_abs_diff(&mu, &next);
            return Ok(ExactDistribution {
                n: kernel.n,
                probs: mu,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "stationary distribution",
        iterations: opts.max_iter,
        change,
    })
}

fn check_size(n: usize, opts: &OracleOptions) -> Result<()> {
    let cap = opts.cap.min(HARD_CAP);
    if n > cap {
        return Err(Error::TooLarge { n, cap });
    }
    if n > DEFAULT_CAP {
        log::warn!("exact oracle on {n} units keeps {} MiB per distribution", (8usize << n) >> 20);
    }
    Ok(())
}

pub fn exact_stationary(g: &InterferenceGraph, m: &ActivationModel, pi: &PolicyVector) -> Result<ExactDistribution> {
    exact_stationary_with(g, m, pi, &OracleOptions::default(), None)
}

/// Power iteration from `warm` (uniform when absent).
pub fn exact_stationary_with(
    g: &InterferenceGraph,
    m: &ActivationModel,
    pi: &PolicyVector,
    opts: &OracleOptions,
    warm: Option<&ExactDistribution>,
) -> Result<ExactDistribution> {
    check_inputs(g, m, pi)?;
    check_size(g.n(), opts)?;
    let size = 1usize << g.n();
    let init = match warm {
        Some(d) => {
            check_len(size, d.probs.len())?;
            d.probs.clone()
        }
        None => vec![1.0 / size as f64; size],
    };
    power_iterate(&Kernel::build(g, m, pi)?, init, opts)
}

/// `E_μ[Y_i]` for every unit.
pub fn exact_mean(dist: &ExactDistribution) -> Vec<f64> {
    let mut mean = vec![0.0; dist.n];
    for (x, &p) in dist.probs.iter().enumerate() {
        for (i, m) in mean.iter_mut().enumerate() {
            if (x >> i) & 1 == 1 {
                *m += p;
            }
        }
    }
    mean
}

/// `(1/n) Σ_i [f_i(y_i, 1, z_i) − f_i(y_i, 0, z_i)]` at state `y`.
pub fn exact_sde(g: &InterferenceGraph, m: &ActivationModel, y: &[u8]) -> Result<f64> {
    check_len(g.n(), m.n())?;
    let z = g.neighbor_sums(y)?;
    let total: f64 = (0..g.n())
        .map(|i| m.eval_f(i, y[i], 1, z[i] as f64) - m.eval_f(i, y[i], 0, z[i] as f64))
        .sum();
    Ok(total / g.n().max(1) as f64)
}

/// `E_μ[τ_SDE(Y)]`, the target of time-averaged IPW.
pub fn stationary_sde(g: &InterferenceGraph, m: &ActivationModel, dist: &ExactDistribution) -> Result<f64> {
    check_len(g.n(), dist.n)?;
    let mut err = None;
    let value = dist.expect(|y| match exact_sde(g, m, y) {
        Ok(v) => v,
        Err(e) => {
            err = Some(e);
            0.0
        }
    });
    err.map_or(Ok(value), Err)
}

fn mean_of(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// `(1/n) Σ_i [E_{μ(π₁)}[Y_i] − E_{μ(π₂)}[Y_i]]`.
pub fn exact_lte(g: &InterferenceGraph, m: &ActivationModel, pi1: &PolicyVector, pi2: &PolicyVector) -> Result<f64> {
    if pi1 == pi2 {
        check_inputs(g, m, pi1)?;
        check_size(g.n(), &OracleOptions::default())?;
        return Ok(0.0);
    }
    let base = exact_stationary(g, m, pi2)?;
    let moved = exact_stationary_with(g, m, pi1, &OracleOptions::default(), Some(&base))?;
    Ok(mean_of(&exact_mean(&moved)) - mean_of(&exact_mean(&base)))
}

/// `(1/n) Σ_i [E_{μ(π_i=γ₁, π_{−i})}[Y_i] − E_{μ(π_i=γ₂, π_{−i})}[Y_i]]`
/// via `2n` tilted solves warm-started from `μ(π)`.
pub fn exact_lde(g: &InterferenceGraph, m: &ActivationModel, pi: &PolicyVector, gamma1: f64, gamma2: f64) -> Result<f64> {
    for gamma in [gamma1, gamma2] {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::PolicyOutOfRange { unit: 0, value: gamma });
        }
    }
    let opts = OracleOptions::default();
    check_inputs(g, m, pi)?;
    check_size(g.n(), &opts)?;
    if gamma1 == gamma2 {
        return Ok(0.0);
    }
    let base = exact_stationary(g, m, pi)?;
    let per_unit: Vec<f64> = (0..g.n())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let hi = exact_stationary_with(g, m, &pi.with_unit(i, gamma1)?, &opts, Some(&base))?;
            let lo = exact_stationary_with(g, m, &pi.with_unit(i, gamma2)?, &opts, Some(&base))?;
            Ok(exact_mean(&hi)[i] - exact_mean(&lo)[i])
        })
        .collect::<Result<_>>()?;
    Ok(mean_of(&per_unit))
}
