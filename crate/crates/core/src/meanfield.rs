//! Deterministic mean-field system `P_{t+1,i} = f_i(P_ti, π_i, Q_ti)` with
//! `Q_t = A P_t`, its fixed point and the fixed point's policy derivative.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationModel;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::graph::{check_len, InterferenceGraph};
use crate::linalg::{iteration_budget, max_abs_diff, neumann};
use crate::simulate::PolicyVector;

pub const DEFAULT_TOL: f64 = 1e-10;
/// Bound on `‖(I − DA − W)p − u‖_∞` accepted from the derivative solve.
pub const DERIVATIVE_RESIDUAL: f64 = 1e-9;

/// Units per rayon task in a sweep; small graphs stay on one thread.
const SWEEP_CHUNK: usize = 512;

fn solution_key(g: &InterferenceGraph, m: &ActivationModel, pi: &PolicyVector) -> Fingerprint {
    Fingerprint::combine(&[g.fingerprint(), m.fingerprint(), pi.fingerprint()])
}

fn check_inputs(g: &InterferenceGraph, m: &ActivationModel, pi: &PolicyVector) -> Result<()> {
    check_len(g.n(), m.n())?;
    check_len(g.n(), pi.len())
}

fn sweep(g: &InterferenceGraph, m: &ActivationModel, pi: &[f64], p: &[f64], q: &mut [f64], out: &mut [f64]) {
    g.adjacency_mul(p, q);
    out.par_iter_mut()
        .with_min_len(SWEEP_CHUNK)
        .enumerate()
        .for_each(|(i, o)| *o = m.eval_abcd(i, q[i]).eval(p[i], pi[i]));
}

/// One step of the mean-field map: the bilinear extension of `f_i` evaluated
/// at `(P_i, π_i, Q_i)`.
pub fn mf_step(g: &InterferenceGraph, m: &ActivationModel, pi: &PolicyVector, p: &[f64]) -> Result<Vec<f64>> {
    check_inputs(g, m, pi)?;
    check_len(g.n(), p.len())?;
    if let Some(&bad) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidProbability(bad));
    }
    let mut q = vec![0.0; g.n()];
    let mut out = vec![0.0; g.n()];
    sweep(g, m, pi.as_slice(), p, &mut q, &mut out);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    pub tol: f64,
    /// Defaults to a budget derived from the contraction constant.
    pub max_iter: Option<usize>,
    /// Starting vector; `0.5·1` when absent.
    pub init: Option<Vec<f64>>,
    /// Keep every iterate in [`MeanFieldSolution::trace`].
    pub record: bool,
    /// Iterate even when `C ≥ 1` instead of refusing.
    pub allow_non_contractive: bool,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: None,
            init: None,
            record: false,
            allow_non_contractive: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldSolution {
    pub p_star: Vec<f64>,
    pub q_star: Vec<f64>,
    pub iterations: usize,
    /// `‖P − f(P, π, Q)‖_∞` at the returned point.
    pub residual: f64,
    pub policy: PolicyVector,
    /// Contraction constant `C` of the configuration.
    pub contraction: f64,
    /// Hash of (graph, model, policy) the solution belongs to.
    pub key: Fingerprint,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<Vec<f64>>,
}

impl MeanFieldSolution {
    pub fn mean(&self) -> f64 {
        self.p_star.iter().sum::<f64>() / self.p_star.len().max(1) as f64
    }

    /// Plain-text report: `key = value` header lines followed by a
    /// `unit,pi,p_star,q_star` table.
    pub fn to_report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# mean-field fixed point");
        let _ = writeln!(s, "n = {}", self.p_star.len());
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "residual = {:e}", self.residual);
        let _ = writeln!(s, "contraction = {}", self.contraction);
        let _ = writeln!(s, "mean_p_star = {}", self.mean());
        let _ = writeln!(s, "key = {}", self.key);
        let _ = writeln!(s, "unit,pi,p_star,q_star");
        for i in 0..self.p_star.len() {
            let _ = writeln!(s, "{i},{},{},{}", self.policy[i], self.p_star[i], self.q_star[i]);
        }
        s
    }
}

fn solve(
    g: &InterferenceGraph,
    m: &ActivationModel,
    pi: &PolicyVector,
    opts: &FixedPointOptions,
    contraction: f64,
) -> Result<MeanFieldSolution> {
    let n = g.n();
    if contraction >= 1.0 {
        if !opts.allow_non_contractive {
            return Err(Error::ContractionViolated(contraction));
        }
        log::warn!("iterating the mean-field map with contraction constant {contraction} ≥ 1");
    }
    let mut p = match &opts.init {
        Some(init) => {
            check_len(n, init.len())?;
            if let Some(&bad) = init.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::InvalidProbability(bad));
            }
            init.clone()
        }
        None => vec![0.5; n],
    };
    let max_iter = opts.max_iter.unwrap_or_else(|| iteration_budget(contraction, opts.tol, n));
    let mut q = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut trace = Vec::new();
    if opts.record {
        trace.push(p.clone());
    }
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        sweep(g, m, pi.as_slice(), &p, &mut q, &mut next);
        change = max_abs_diff(&p, &next);
        std::mem::swap(&mut p, &mut next);
        if opts.record {
            trace.push(p.clone());
        }
        if change <= opts.tol {
            sweep(g, m, pi.as_slice(), &p, &mut next, &mut q);
            let residual = max_abs_diff(&p, &q);
            g.adjacency_mul(&p, &mut q);
            return Ok(MeanFieldSolution {
                p_star: p,
                q_star: q,
                iterations: it,
                residual,
                policy: pi.clone(),
                contraction,
                key: solution_key(g, m, pi),
                trace,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "mean-field fixed point",
        iterations: max_iter,
        change,
    })
}

/// Iterates [`mf_step`] until the max-norm change is at most `opts.tol`.
/// Refuses configurations with `C ≥ 1` unless `allow_non_contractive` is set.
pub fn mf_fixed_point(
    g: &InterferenceGraph,
    m: &ActivationModel,
    pi: &PolicyVector,
    opts: &FixedPointOptions,
) -> Result<MeanFieldSolution> {
    check_inputs(g, m, pi)?;
    let c = m.assumption_constants(g).contraction;
    solve(g, m, pi, opts, c)
}

/// Diagonal pieces of the linearization at a fixed point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianParts {
    /// `D_i = ∂f_i/∂Q` at `(P*_i, π_i, Q*_i)`.
    pub d: Vec<f64>,
    /// `W_i = c_i(Q*) + d_i(Q*)π_i`.
    pub w: Vec<f64>,
    /// `u_i = v_i (b_i(Q*) + d_i(Q*)P*_i)`.
    pub u: Vec<f64>,
}

pub fn mf_jacobian_parts(
    g: &InterferenceGraph,
    m: &ActivationModel,
    sol: &MeanFieldSolution,
    pi: &PolicyVector,
    v: &[f64],
) -> Result<JacobianParts> {
    check_inputs(g, m, pi)?;
    check_len(g.n(), v.len())?;
    if sol.key != solution_key(g, m, pi) {
        return Err(Error::StaleSolution);
    }
    let n = g.n();
    let (mut d, mut w, mut u) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let (p, q, pol) = (sol.p_star[i], sol.q_star[i], pi[i]);
        let c = m.eval_abcd(i, q);
        d[i] = m.eval_abcd_deriv(i, q).eval(p, pol);
        w[i] = c.c + c.d * pol;
        u[i] = v[i] * (c.b + c.d * p);
    }
    Ok(JacobianParts { d, w, u })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derivative {
    /// `p* = ∇_π P*(π)ᵀ v`, one entry per unit.
    pub p: Vec<f64>,
    pub iterations: usize,
    /// `‖(I − DA − W)p − u‖_∞`
    pub residual: f64,
    /// `‖v‖₂`; the natural scale is `√n`.
    pub v_norm: f64,
}

impl Derivative {
    /// `(1/n) 1ᵀ p*`
    pub fn average(&self) -> f64 {
        self.p.iter().sum::<f64>() / self.p.len().max(1) as f64
    }
}

fn v_norm(v: &[f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = (v.len() as f64).sqrt();
    if (norm - target).abs() > 1e-9 * target.max(1.0) {
        log::info!("direction norm {norm} differs from √n = {target}");
    }
    norm
}

/// Solves `(I − DA − W) p = u` at an existing fixed point.
pub fn mf_derivative_at(
    g: &InterferenceGraph,
    m: &ActivationModel,
    sol: &MeanFieldSolution,
    pi: &PolicyVector,
    v: &[f64],
) -> Result<Derivative> {
    let parts = mf_jacobian_parts(g, m, sol, pi, v)?;
    let c = sol.contraction;
    if c >= 1.0 {
        log::warn!("derivative solve with contraction constant {c} ≥ 1 may diverge");
    }
    let apply = |x: &[f64], out: &mut [f64]| {
        g.adjacency_mul(x, out);
        for i in 0..out.len() {
            out[i] = parts.d[i] * out[i] + parts.w[i] * x[i];
        }
    };
    let solved = neumann(&parts.u, apply, DEFAULT_TOL, iteration_budget(c, DEFAULT_TOL, g.n()), "mean-field derivative")?;
    if solved.residual > DERIVATIVE_RESIDUAL {
        return Err(Error::NoConvergence {
            what: "mean-field derivative",
            iterations: solved.iterations,
            change: solved.residual,
        });
    }
    Ok(Derivative {
        p: solved.x,
        iterations: solved.iterations,
        residual: solved.residual,
        v_norm: v_norm(v),
    })
}

/// Directional derivative of the fixed point in the policy direction `v`.
pub fn mf_derivative(g: &InterferenceGraph, m: &ActivationModel, pi: &PolicyVector, v: &[f64]) -> Result<Derivative> {
    let sol = mf_fixed_point(g, m, pi, &FixedPointOptions::default())?;
    mf_derivative_at(g, m, &sol, pi, v)
}

/// `(1/n) Σ_i [P*_i(π + Δv) − P*_i(π)]`.
pub fn mf_lte(g: &InterferenceGraph, m: &ActivationModel, pi: &PolicyVector, delta: f64, v: &[f64]) -> Result<f64> {
    let shifted = pi.shifted(delta, v)?;
    if shifted == *pi {
        return Ok(0.0);
    }
    let opts = FixedPointOptions::default();
    let base = mf_fixed_point(g, m, pi, &opts)?;
    let moved = solve(g, m, &shifted, &FixedPointOptions { init: Some(base.p_star.clone()), ..opts }, base.contraction)?;
    Ok(moved.mean() - base.mean())
}

/// `(1/n) Σ_i [P*_i(π_i = γ₁, π_{−i}) − P*_i(π_i = γ₂, π_{−i})]`, with the
/// `2n` tilted solves warm-started from `P*(π)` and run concurrently.
pub fn mf_lde(g: &InterferenceGraph, m: &ActivationModel, pi: &PolicyVector, gamma1: f64, gamma2: f64) -> Result<f64> {
    for gamma in [gamma1, gamma2] {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::PolicyOutOfRange { unit: 0, value: gamma });
        }
    }
    let opts = FixedPointOptions::default();
    let base = mf_fixed_point(g, m, pi, &opts)?;
    let warm = FixedPointOptions {
        init: Some(base.p_star.clone()),
        ..opts
    };
    let c = base.contraction;
    let per_unit: Vec<f64> = (0..g.n())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let hi = solve(g, m, &pi.with_unit(i, gamma1)?, &warm, c)?;
            let lo = solve(g, m, &pi.with_unit(i, gamma2)?, &warm, c)?;
            Ok(hi.p_star[i] - lo.p_star[i])
        })
        .collect::<Result<_>>()?;
    Ok(per_unit.iter().sum::<f64>() / g.n().max(1) as f64)
}
