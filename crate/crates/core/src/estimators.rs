//! Estimators computed from one recorded trajectory: IPW for the short-term
//! direct effect, plug-in long-term direct effect, and the derivative-based
//! long-term total effect.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::activation::{cell, Abcd};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::graph::{check_len, InterferenceGraph};
use crate::linalg::{iteration_budget, neumann};
use crate::simulate::{PolicyVector, Trajectory};

/// Smallest admissible `|1 − ĉ_i − d̂_i γ|` in the plug-in LDE.
pub const LDE_DENOMINATOR_MIN: f64 = 1e-3;
pub const DEFAULT_ETA: f64 = 0.05;
pub const DEFAULT_KAPPA: f64 = 0.05;
const SOLVE_TOL: f64 = 1e-10;

/// `T^{-1/4}`
pub fn default_delta_t(horizon: usize) -> f64 {
    (horizon.max(1) as f64).powf(-0.25)
}

/// `(1/n) Σ_i Y_next,i (W_i/π_i − (1 − W_i)/(1 − π_i))` for one transition.
pub fn ipw(y_next: &[u8], w: &[u8], pi: &PolicyVector) -> Result<f64> {
    check_len(pi.len(), y_next.len())?;
    check_len(pi.len(), w.len())?;
    let total: f64 = (0..pi.len())
        .filter(|&i| y_next[i] == 1)
        .map(|i| if w[i] == 1 { 1.0 / pi[i] } else { -1.0 / (1.0 - pi[i]) })
        .sum();
    Ok(total / pi.len().max(1) as f64)
}

/// IPW estimate of the short-term direct effect at decision point `t`.
pub fn sde_ipw(traj: &Trajectory, t: usize, pi: &PolicyVector) -> Result<f64> {
    if t >= traj.horizon() {
        return Err(Error::TimeOutOfRange { t, horizon: traj.horizon() });
    }
    ipw(traj.y(t + 1), traj.w(t), pi)
}

/// Average of [`sde_ipw`] over decision points in `window`.
pub fn sde_ipw_avg(traj: &Trajectory, pi: &PolicyVector, window: Range<usize>) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if window.end > traj.horizon() {
        return Err(Error::TimeOutOfRange { t: window.end - 1, horizon: traj.horizon() });
    }
    let len = window.len() as f64;
    let mut total = 0.0;
    for t in window {
        total += sde_ipw(traj, t, pi)?;
    }
    Ok(total / len)
}

/// Integer moments of one unit's visits to one `(y, w)` cell; `z` is the
/// same-time neighbor sum and `y` the next outcome.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStats {
    pub count: u64,
    pub sum_y: u64,
    pub sum_z: u64,
    pub sum_z2: u64,
    pub sum_yz: u64,
}

impl CellStats {
    /// `Σ (Y − Ȳ)(Z − Z̄)` computed exactly from the integer sums.
    fn centered_yz(&self) -> f64 {
        let c = self.count as i128;
        (c * self.sum_yz as i128 - self.sum_y as i128 * self.sum_z as i128) as f64 / self.count as f64
    }

    /// `Σ (Z − Z̄)²`
    fn centered_zz(&self) -> f64 {
        let c = self.count as i128;
        (c * self.sum_z2 as i128 - (self.sum_z as i128).pow(2)) as f64 / self.count as f64
    }
}

/// One pass over a trajectory collecting everything the estimators need.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub n: usize,
    pub horizon: usize,
    /// Per unit, indexed by `2y + w`.
    pub cells: Vec<[CellStats; 4]>,
    /// `Σ_{t=1..T} Y_it`
    pub ones: Vec<u64>,
    pub trajectory: Fingerprint,
}

impl TrajectoryStats {
    pub fn compute(traj: &Trajectory) -> Self {
        let n = traj.n();
        let mut cells = vec![[CellStats::default(); 4]; n];
        let mut ones = vec![0u64; n];
        for t in 0..traj.horizon() {
            let (y, w, z, next) = (traj.y(t), traj.w(t), traj.z(t), traj.y(t + 1));
            for i in 0..n {
                let s = &mut cells[i][cell(y[i], w[i])];
                let (zi, yn) = (z[i] as u64, next[i] as u64);
                s.count += 1;
                s.sum_y += yn;
                s.sum_z += zi;
                s.sum_z2 += zi * zi;
                s.sum_yz += yn * zi;
                ones[i] += yn;
            }
        }
        Self {
            n,
            horizon: traj.horizon(),
            cells,
            ones,
            trajectory: traj.fingerprint(),
        }
    }

    pub fn occupancy(&self, i: usize) -> [u64; 4] {
        self.cells[i].map(|c| c.count)
    }

    fn visited(&self, i: usize, y: u8, w: u8) -> Result<&CellStats> {
        let s = &self.cells[i][cell(y, w)];
        if s.count == 0 {
            return Err(Error::EmptyCell { unit: i, y, w });
        }
        Ok(s)
    }

    pub fn fhat(&self, i: usize, y: u8, w: u8) -> Result<f64> {
        let s = self.visited(i, y, w)?;
        Ok(s.sum_y as f64 / s.count as f64)
    }

    pub fn abcd_hat(&self, i: usize) -> Result<Abcd> {
        Ok(Abcd::from_cells([
            self.fhat(i, 0, 0)?,
            self.fhat(i, 0, 1)?,
            self.fhat(i, 1, 0)?,
            self.fhat(i, 1, 1)?,
        ]))
    }

    pub fn phat(&self, i: usize) -> f64 {
        self.ones[i] as f64 / self.horizon.max(1) as f64
    }

    /// Floored within-cell regression slope of `Y_{t+1}` on `Z_t`.
    pub fn fprime_hat(&self, i: usize, y: u8, w: u8, max_degree: usize, delta_t: f64) -> Result<FPrime> {
        if !(delta_t > 0.0) {
            return Err(Error::ConfigInvalid(format!("δ_T must be positive, got {delta_t}")));
        }
        let s = self.visited(i, y, w)?;
        let floor = max_degree as f64 * self.horizon as f64 * delta_t;
        let spread = s.centered_zz();
        let denominator = floor.max(spread);
        let value = if denominator > 0.0 { s.centered_yz() / denominator } else { 0.0 };
        Ok(FPrime {
            value,
            floored: floor >= spread,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FPrime {
    pub value: f64,
    /// The `D_n·T·δ_T` floor set the denominator.
    pub floored: bool,
}

pub fn fhat(traj: &Trajectory, i: usize, y: u8, w: u8) -> Result<f64> {
    TrajectoryStats::compute(traj).fhat(i, y, w)
}

pub fn abcd_hat(traj: &Trajectory, i: usize) -> Result<Abcd> {
    TrajectoryStats::compute(traj).abcd_hat(i)
}

pub fn phat(traj: &Trajectory, i: usize) -> f64 {
    TrajectoryStats::compute(traj).phat(i)
}

pub fn fprime_hat(traj: &Trajectory, g: &InterferenceGraph, i: usize, y: u8, w: u8, delta_t: f64) -> Result<f64> {
    check_len(g.n(), traj.n())?;
    Ok(TrajectoryStats::compute(traj)
        .fprime_hat(i, y, w, g.max_degree(), delta_t)?
        .value)
}

/// `(1/n) Σ_i [(â_i + b̂_i γ₁)/(1 − ĉ_i − d̂_i γ₁) − (â_i + b̂_i γ₂)/(1 − ĉ_i − d̂_i γ₂)]`.
pub fn lde_plugin(moments: &[Abcd], gamma1: f64, gamma2: f64) -> Result<f64> {
    if gamma1 == gamma2 {
        return Ok(0.0);
    }
    let ratio = |unit: usize, m: &Abcd, gamma: f64| {
        let den = 1.0 - m.c - m.d * gamma;
        if den.abs() < LDE_DENOMINATOR_MIN {
            return Err(Error::DegenerateDenominator { unit, value: den });
        }
        Ok((m.a + m.b * gamma) / den)
    };
    let mut total = 0.0;
    for (i, m) in moments.iter().enumerate() {
        total += ratio(i, m, gamma1)? - ratio(i, m, gamma2)?;
    }
    Ok(total / moments.len().max(1) as f64)
}

pub fn lde_hat(traj: &Trajectory, gamma1: f64, gamma2: f64) -> Result<f64> {
    lde_from_stats(&TrajectoryStats::compute(traj), gamma1, gamma2)
}

pub fn lde_from_stats(stats: &TrajectoryStats, gamma1: f64, gamma2: f64) -> Result<f64> {
    let moments = (0..stats.n).map(|i| stats.abcd_hat(i)).collect::<Result<Vec<_>>>()?;
    lde_plugin(&moments, gamma1, gamma2)
}

/// Diagonal guard in `M`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MGuard {
    /// `|D̂_i|`, which makes the iteration a contraction.
    #[default]
    DerivativeMagnitude,
    /// `d̂_i`, the interaction moment.
    PaperLiteral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LteTuning {
    pub delta: f64,
    /// Direction; all ones when absent.
    #[serde(default)]
    pub v: Option<Vec<f64>>,
    /// `T^{-1/4}` when absent.
    #[serde(default)]
    pub delta_t: Option<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub m_guard: MGuard,
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

impl LteTuning {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            v: None,
            delta_t: None,
            eta: DEFAULT_ETA,
            kappa: DEFAULT_KAPPA,
            m_guard: MGuard::default(),
        }
    }
}

/// Estimated linearization pieces, one entry per unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LteParts {
    /// `D̂_i`
    pub d_hat: Vec<f64>,
    /// `ω̂_i = min(1 − κ, ĉ_i + d̂_i π_i)`
    pub omega: Vec<f64>,
    /// `û_i = (b̂_i + d̂_i P̂_i) v_i`
    pub u: Vec<f64>,
    /// Guard value per unit (`|D̂_i|` or `d̂_i`).
    pub guard: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LteDetails {
    pub value: f64,
    /// Solution of `M x = û + (D̂A + Ŵ) x`.
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Unit-cells whose `f̂'` denominator was floored.
    pub floored_cells: usize,
    /// Units where `ω̂` was clipped at `1 − κ`.
    pub clipped_units: usize,
    /// Units where `M_i > 1`.
    pub guarded_units: usize,
    pub delta_t: f64,
    pub v_norm: f64,
}

/// Solves `M x = û + (D̂A + Ŵ) x` with `M_i = max(1, guard_i·D_n/(1−η) + ω̂_i)`
/// and returns `(Δ/n) 1ᵀ x` plus the solution.
pub fn lte_solve(g: &InterferenceGraph, parts: &LteParts, delta: f64, eta: f64) -> Result<(f64, Vec<f64>, usize, usize)> {
    let n = g.n();
    for v in [&parts.d_hat, &parts.omega, &parts.u, &parts.guard] {
        check_len(n, v.len())?;
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::ConfigInvalid(format!("η must lie in (0, 1), got {eta}")));
    }
    let dn = g.max_degree() as f64;
    let m: Vec<f64> = (0..n)
        .map(|i| (parts.guard[i] * dn / (1.0 - eta) + parts.omega[i]).max(1.0))
        .collect();
    let guarded = m.iter().filter(|&&v| v > 1.0).count();
    let rhs: Vec<f64> = (0..n).map(|i| parts.u[i] / m[i]).collect();
    let norm = (0..n)
        .map(|i| (parts.d_hat[i].abs() * g.degree(i) as f64 + parts.omega[i].abs()) / m[i])
        .fold(0.0, f64::max);
    let apply = |x: &[f64], out: &mut [f64]| {
        g.adjacency_mul(x, out);
        for i in 0..out.len() {
            out[i] = (parts.d_hat[i] * out[i] + parts.omega[i] * x[i]) / m[i];
        }
    };
    let solved = neumann(&rhs, apply, SOLVE_TOL, iteration_budget(norm, SOLVE_TOL, n), "long-term effect solve")?;
    let value = delta * solved.x.iter().sum::<f64>() / n.max(1) as f64;
    Ok((value, solved.x, solved.iterations, guarded))
}

pub fn lte_hat(traj: &Trajectory, g: &InterferenceGraph, pi: &PolicyVector, tuning: &LteTuning) -> Result<f64> {
    Ok(lte_from_stats(&TrajectoryStats::compute(traj), g, pi, tuning)?.value)
}

pub fn lte_from_stats(stats: &TrajectoryStats, g: &InterferenceGraph, pi: &PolicyVector, tuning: &LteTuning) -> Result<LteDetails> {
    let n = g.n();
    check_len(n, stats.n)?;
    check_len(n, pi.len())?;
    if !(tuning.kappa > 0.0 && tuning.kappa < 1.0) {
        return Err(Error::ConfigInvalid(format!("κ must lie in (0, 1), got {}", tuning.kappa)));
    }
    let ones;
    let v = match &tuning.v {
        Some(v) => {
            check_len(n, v.len())?;
            v.as_slice()
        }
        None => {
            ones = vec![1.0; n];
            ones.as_slice()
        }
    };
    let delta_t = tuning.delta_t.unwrap_or_else(|| default_delta_t(stats.horizon));
    let dn = g.max_degree();
    let mut parts = LteParts {
        d_hat: vec![0.0; n],
        omega: vec![0.0; n],
        u: vec![0.0; n],
        guard: vec![0.0; n],
    };
    let (mut floored, mut clipped) = (0, 0);
    for i in 0..n {
        let m = stats.abcd_hat(i)?;
        let (p, pol) = (stats.phat(i), pi[i]);
        let mut fp = [0.0; 4];
        for (c, slot) in fp.iter_mut().enumerate() {
            let est = stats.fprime_hat(i, (c >> 1) as u8, (c & 1) as u8, dn, delta_t)?;
            floored += est.floored as usize;
            *slot = est.value;
        }
        let d_hat = (1.0 - pol) * (1.0 - p) * fp[0] + pol * (1.0 - p) * fp[1] + p * (1.0 - pol) * fp[2] + p * pol * fp[3];
        let raw = m.c + m.d * pol;
        if raw > 1.0 - tuning.kappa {
            clipped += 1;
        }
        parts.d_hat[i] = d_hat;
        parts.omega[i] = raw.min(1.0 - tuning.kappa);
        parts.u[i] = (m.b + m.d * p) * v[i];
        parts.guard[i] = match tuning.m_guard {
            MGuard::DerivativeMagnitude => d_hat.abs(),
            MGuard::PaperLiteral => m.d,
        };
    }
    let (value, x, iterations, guarded) = lte_solve(g, &parts, tuning.delta, tuning.eta)?;
    Ok(LteDetails {
        value,
        x,
        iterations,
        floored_cells: floored,
        clipped_units: clipped,
        guarded_units: guarded,
        delta_t,
        v_norm: v.iter().map(|x| x * x).sum::<f64>().sqrt(),
    })
}

/// Estimand requested from a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimand {
    /// Time-averaged IPW over all decision points.
    Sde,
    Lde { gamma1: f64, gamma2: f64 },
    Lte(LteTuning),
}

impl Estimand {
    pub fn name(&self) -> &'static str {
        match self {
            Estimand::Sde => "sde",
            Estimand::Lde { .. } => "lde",
            Estimand::Lte(_) => "lte",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimand: String,
    pub value: f64,
    pub tuning: BTreeMap<String, f64>,
    /// Per-unit visit counts of cells `(0,0), (0,1), (1,0), (1,1)`.
    pub occupancy: Vec<[u64; 4]>,
    pub flags: BTreeMap<String, usize>,
    pub trajectory: Fingerprint,
}

impl EstimateReport {
    pub fn min_occupancy(&self) -> u64 {
        self.occupancy.iter().flatten().copied().min().unwrap_or(0)
    }

    /// Single-line `key=value` record.
    pub fn to_record(&self) -> String {
        let mut s = format!("estimand={} value={:e}", self.estimand, self.value);
        for (k, v) in &self.tuning {
            let _ = write!(s, " {k}={v}");
        }
        for (k, v) in &self.flags {
            let _ = write!(s, " {k}={v}");
        }
        let _ = write!(s, " min_occupancy={} trajectory={}", self.min_occupancy(), self.trajectory);
        s
    }
}

/// Runs one estimator and collects diagnostics.
pub fn estimate(traj: &Trajectory, g: &InterferenceGraph, pi: &PolicyVector, what: &Estimand) -> Result<EstimateReport> {
    check_len(g.n(), traj.n())?;
    let stats = TrajectoryStats::compute(traj);
    estimate_from_stats(traj, &stats, g, pi, what)
}

pub fn estimate_from_stats(
    traj: &Trajectory,
    stats: &TrajectoryStats,
    g: &InterferenceGraph,
    pi: &PolicyVector,
    what: &Estimand,
) -> Result<EstimateReport> {
    let mut tuning = BTreeMap::new();
    let mut flags = BTreeMap::new();
    let value = match what {
        Estimand::Sde => sde_ipw_avg(traj, pi, 0..traj.horizon())?,
        Estimand::Lde { gamma1, gamma2 } => {
            tuning.insert("gamma1".into(), *gamma1);
            tuning.insert("gamma2".into(), *gamma2);
            lde_from_stats(stats, *gamma1, *gamma2)?
        }
        Estimand::Lte(t) => {
            let d = lte_from_stats(stats, g, pi, t)?;
            tuning.insert("delta".into(), t.delta);
            tuning.insert("delta_t".into(), d.delta_t);
            tuning.insert("eta".into(), t.eta);
            tuning.insert("kappa".into(), t.kappa);
            tuning.insert("v_norm".into(), d.v_norm);
            flags.insert("floored_cells".into(), d.floored_cells);
            flags.insert("clipped_units".into(), d.clipped_units);
            flags.insert("guarded_units".into(), d.guarded_units);
            flags.insert("paper_literal_guard".into(), (t.m_guard == MGuard::PaperLiteral) as usize);
            d.value
        }
    };
    Ok(EstimateReport {
        estimand: what.name().into(),
        value,
        tuning,
        occupancy: (0..stats.n).map(|i| stats.occupancy(i)).collect(),
        flags,
        trajectory: stats.trajectory,
    })
}
