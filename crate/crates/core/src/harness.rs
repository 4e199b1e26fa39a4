//! Config-driven experiments: build the graph and model, simulate
//! replications, run the requested estimators and compare them against an
//! exact or mean-field ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationModel, AssumptionReport, ModelSpec};
use crate::error::{Error, Result};
use crate::estimators::{estimate_from_stats, Estimand, TrajectoryStats};
use crate::fingerprint::Fingerprint;
use crate::graph::{InterferenceGraph, Kernel};
use crate::meanfield::{mf_fixed_point, mf_lde, mf_lte, FixedPointOptions};
use crate::oracle::{self, exact_lde, exact_lte, exact_stationary, stationary_sde};
use crate::simulate::{simulate, InitSpec, PolicyVector, SimOptions, Trajectory};

/// Burn-in used when any long-term estimand is requested and none is set.
pub const DEFAULT_BURN_IN: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Empty { n: usize },
    Complete { n: usize },
    Path { n: usize },
    Star { n: usize },
    ErdosRenyi { n: usize, rho: f64, seed: Option<u64> },
    Graphon { n: usize, rho: f64, kernel: Kernel, seed: Option<u64> },
    Edges { n: usize, edges: Vec<(usize, usize)> },
    File { path: PathBuf },
}

impl GraphSpec {
    /// Random generators fall back to `default_seed` when no seed is given.
    pub fn build(&self, default_seed: u64, base: &Path) -> Result<InterferenceGraph> {
        Ok(match self {
            GraphSpec::Empty { n } => InterferenceGraph::empty(*n),
            GraphSpec::Complete { n } => InterferenceGraph::complete(*n),
            GraphSpec::Path { n } => InterferenceGraph::path(*n),
            GraphSpec::Star { n } => InterferenceGraph::star(*n),
            GraphSpec::ErdosRenyi { n, rho, seed } => InterferenceGraph::erdos_renyi(*n, *rho, seed.unwrap_or(default_seed))?,
            GraphSpec::Graphon { n, rho, kernel, seed } => {
                InterferenceGraph::graphon(*n, *rho, kernel, seed.unwrap_or(default_seed))?.0
            }
            GraphSpec::Edges { n, edges } => InterferenceGraph::from_edges(*n, edges)?,
            GraphSpec::File { path } => InterferenceGraph::read_edge_list(base.join(path))?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Constant { p: f64 },
    Vector { values: Vec<f64> },
}

impl PolicySpec {
    pub fn build(&self, n: usize) -> Result<PolicyVector> {
        match self {
            PolicySpec::Constant { p } => PolicyVector::constant(n, *p),
            PolicySpec::Vector { values } => {
                crate::graph::check_len(n, values.len())?;
                PolicyVector::new(values.clone())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMode {
    Oracle,
    Meanfield,
    None,
}

impl TruthMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TruthMode::Oracle => "oracle",
            TruthMode::Meanfield => "meanfield",
            TruthMode::None => "none",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory, relative to the config file.
    pub dir: Option<PathBuf>,
    /// Also dump every simulated trajectory (binary format).
    #[serde(default)]
    pub trajectories: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub replications: u64,
    /// Horizon ladder. Each replication simulates the longest horizon once
    /// and the shorter ones are its prefixes.
    pub horizons: Vec<usize>,
    /// Defaults to 1000 when LDE/LTE are requested, else 0.
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub init: InitSpec,
    pub graph: GraphSpec,
    pub model: Option<ModelSpec>,
    /// Model spec file, alternative to an inline `[model]` table.
    pub model_file: Option<PathBuf>,
    pub policy: PolicySpec,
    pub estimands: Vec<Estimand>,
    /// Oracle up to the exact-oracle cap, mean-field above it, when absent.
    pub truth: Option<TruthMode>,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or_else(|| {
            if self.estimands.iter().any(|e| !matches!(e, Estimand::Sde)) {
                DEFAULT_BURN_IN
            } else {
                0
            }
        })
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.output.dir.as_ref().map(|d| self.base_dir.join(d))
    }

    pub fn build_graph(&self) -> Result<InterferenceGraph> {
        self.graph.build(self.seed, &self.base_dir)
    }

    pub fn build_model(&self, g: &InterferenceGraph) -> Result<ActivationModel> {
        match (&self.model, &self.model_file) {
            (Some(spec), None) => ActivationModel::build(spec, g),
            (None, Some(file)) => ActivationModel::from_file(self.base_dir.join(file), g),
            _ => Err(Error::ConfigInvalid("give exactly one of `model` and `model_file`".into())),
        }
    }

    /// Builds and checks everything the run needs; nothing is simulated.
    pub fn resolve(&self) -> Result<Experiment> {
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::ConfigInvalid("`horizons` must list positive horizons".into()));
        }
        let graph = self.build_graph()?;
        let model = self.build_model(&graph)?;
        let policy = self.policy.build(graph.n())?;
        let assumptions = model.assumption_constants(&graph);
        let n = graph.n();
        let truth = match self.truth {
            Some(TruthMode::Oracle) if n > oracle::DEFAULT_CAP => {
                return Err(Error::ConfigInvalid(format!(
                    "oracle truth needs n ≤ {}, got {n}",
                    oracle::DEFAULT_CAP
                )))
            }
            Some(mode) => mode,
            None if n <= oracle::DEFAULT_CAP => TruthMode::Oracle,
            None => TruthMode::Meanfield,
        };
        for e in &self.estimands {
            match e {
                Estimand::Sde => {}
                Estimand::Lde { gamma1, gamma2 } => {
                    for g in [gamma1, gamma2] {
                        if !(*g > 0.0 && *g < 1.0) {
                            return Err(Error::ConfigInvalid(format!("γ = {g} is outside (0, 1)")));
                        }
                    }
                }
                Estimand::Lte(t) => {
                    let v = t.v.clone().unwrap_or_else(|| vec![1.0; n]);
                    policy.shifted(t.delta, &v)?;
                    for (name, x) in [("eta", t.eta), ("kappa", t.kappa)] {
                        if !(x > 0.0 && x < 1.0) {
                            return Err(Error::ConfigInvalid(format!("{name} = {x} is outside (0, 1)")));
                        }
                    }
                    if t.delta_t.is_some_and(|d| !(d > 0.0)) {
                        return Err(Error::ConfigInvalid("delta_t must be positive".into()));
                    }
                }
            }
        }
        Ok(Experiment {
            graph,
            model,
            policy,
            assumptions,
            truth,
        })
    }
}

/// A validated configuration, ready to run.
pub struct Experiment {
    pub graph: InterferenceGraph,
    pub model: ActivationModel,
    pub policy: PolicyVector,
    pub assumptions: AssumptionReport,
    pub truth: TruthMode,
}

impl Experiment {
    /// Ground truth for each estimand, in request order.
    pub fn truths(&self, estimands: &[Estimand]) -> Result<Vec<Option<f64>>> {
        let (g, m, pi) = (&self.graph, &self.model, &self.policy);
        let n = g.n();
        let stationary = match self.truth {
            TruthMode::Oracle if estimands.contains(&Estimand::Sde) => Some(exact_stationary(g, m, pi)?),
            _ => None,
        };
        let fixed_point = match self.truth {
            TruthMode::Meanfield if estimands.contains(&Estimand::Sde) => Some(mf_fixed_point(g, m, pi, &FixedPointOptions::default())?),
            _ => None,
        };
        estimands
            .iter()
            .map(|e| -> Result<Option<f64>> {
                Ok(match (self.truth, e) {
                    (TruthMode::None, _) => None,
                    (TruthMode::Oracle, Estimand::Sde) => Some(stationary_sde(g, m, stationary.as_ref().expect("computed above"))?),
                    (TruthMode::Oracle, Estimand::Lde { gamma1, gamma2 }) => Some(exact_lde(g, m, pi, *gamma1, *gamma2)?),
                    (TruthMode::Oracle, Estimand::Lte(t)) => {
                        let v = t.v.clone().unwrap_or_else(|| vec![1.0; n]);
                        Some(exact_lte(g, m, &pi.shifted(t.delta, &v)?, pi)?)
                    }
                    (TruthMode::Meanfield, Estimand::Sde) => {
                        let sol = fixed_point.as_ref().expect("computed above");
                        let total: f64 = (0..n)
                            .map(|i| {
                                let c = m.eval_abcd(i, sol.q_star[i]);
                                c.b + c.d * sol.p_star[i]
                            })
                            .sum();
                        Some(total / n.max(1) as f64)
                    }
                    (TruthMode::Meanfield, Estimand::Lde { gamma1, gamma2 }) => Some(mf_lde(g, m, pi, *gamma1, *gamma2)?),
                    (TruthMode::Meanfield, Estimand::Lte(t)) => {
                        let v = t.v.clone().unwrap_or_else(|| vec![1.0; n]);
                        Some(mf_lte(g, m, pi, t.delta, &v)?)
                    }
                })
            })
            .collect()
    }
}

/// One estimate from one replication at one horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub replication: u64,
    pub horizon: usize,
    pub estimand: String,
    pub estimate: f64,
    pub truth: Option<f64>,
    pub error: Option<f64>,
    pub truth_mode: TruthMode,
    pub tuning: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, usize>,
    pub min_occupancy: u64,
    pub seed: u64,
    pub burn_in: usize,
    pub graph: Fingerprint,
    pub model: Fingerprint,
    pub trajectory: Fingerprint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimand: String,
    pub horizon: usize,
    pub count: usize,
    pub truth: Option<f64>,
    pub truth_mode: TruthMode,
    pub median_estimate: f64,
    pub median_error: Option<f64>,
    pub median_abs_error: Option<f64>,
    pub iqr_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub name: String,
    pub truth_mode: TruthMode,
    pub assumptions: AssumptionReport,
    pub rows: Vec<Row>,
    pub summary: Vec<SummaryRow>,
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

fn summarize(rows: &[Row], estimands: &[Estimand], horizons: &[usize], truths: &[Option<f64>], mode: TruthMode) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for (e, truth) in estimands.iter().zip(truths) {
        for &h in horizons {
            let sel: Vec<&Row> = rows.iter().filter(|r| r.estimand == e.name() && r.horizon == h).collect();
            let estimates: Vec<f64> = sel.iter().map(|r| r.estimate).collect();
            let mut errors: Vec<f64> = sel.iter().filter_map(|r| r.error).collect();
            errors.sort_by(f64::total_cmp);
            let has = truth.is_some() && !errors.is_empty();
            out.push(SummaryRow {
                estimand: e.name().into(),
                horizon: h,
                count: sel.len(),
                truth: *truth,
                truth_mode: mode,
                median_estimate: median(&estimates),
                median_error: has.then(|| quantile(&errors, 0.5)),
                median_abs_error: has.then(|| median(&errors.iter().map(|e| e.abs()).collect::<Vec<_>>())),
                iqr_error: has.then(|| quantile(&errors, 0.75) - quantile(&errors, 0.25)),
            });
        }
    }
    out
}

fn run_replication(cfg: &ExperimentConfig, exp: &Experiment, truths: &[Option<f64>], r: u64, dump: Option<&Path>) -> Result<Vec<Row>> {
    let mut horizons = cfg.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    let longest = *horizons.last().expect("validated non-empty");
    let opts = SimOptions::new(cfg.seed).replication(r).burn_in(cfg.burn_in()).init(cfg.init.clone());
    let full = simulate(&exp.graph, &exp.model, &exp.policy, longest, &opts)?;
    if let Some(dir) = dump {
        full.save(dir.join(format!("trajectory_r{r}.bin")))?;
    }
    let mut rows = Vec::new();
    for &h in &horizons {
        let traj: std::borrow::Cow<Trajectory> = if h == longest {
            std::borrow::Cow::Borrowed(&full)
        } else {
            std::borrow::Cow::Owned(full.prefix(h)?)
        };
        let stats = TrajectoryStats::compute(&traj);
        for (e, truth) in cfg.estimands.iter().zip(truths) {
            let report = estimate_from_stats(&traj, &stats, &exp.graph, &exp.policy, e)?;
            rows.push(Row {
                replication: r,
                horizon: h,
                estimand: report.estimand.clone(),
                estimate: report.value,
                truth: *truth,
                error: truth.map(|t| report.value - t),
                truth_mode: exp.truth,
                min_occupancy: report.min_occupancy(),
                tuning: report.tuning,
                flags: report.flags,
                seed: cfg.seed,
                burn_in: cfg.burn_in(),
                graph: exp.graph.fingerprint(),
                model: exp.model.fingerprint(),
                trajectory: report.trajectory,
            });
        }
    }
    Ok(rows)
}

/// Runs every replication (concurrently) and returns rows ordered by
/// replication, horizon and estimand request order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let exp = cfg.resolve()?;
    let truths = exp.truths(&cfg.estimands)?;
    let dump = match cfg.output_dir() {
        Some(dir) if cfg.output.trajectories => {
            std::fs::create_dir_all(&dir)?;
            Some(dir)
        }
        _ => None,
    };
    let per_rep: Vec<Vec<Row>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            run_replication(cfg, &exp, &truths, r, dump.as_deref()).map_err(|e| Error::Replication {
                replication: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Row> = per_rep.into_iter().flatten().collect();
    let mut horizons = cfg.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    let summary = summarize(&rows, &cfg.estimands, &horizons, &truths, exp.truth);
    Ok(ExperimentOutput {
        name: cfg.name.clone(),
        truth_mode: exp.truth,
        assumptions: exp.assumptions,
        rows,
        summary,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn pairs<V: std::fmt::Display>(map: &BTreeMap<String, V>) -> String {
    map.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

pub const ROW_HEADER: &str =
    "replication,horizon,estimand,estimate,truth,error,truth_mode,tuning,flags,min_occupancy,seed,burn_in,graph,model,trajectory";
pub const SUMMARY_HEADER: &str = "estimand,horizon,count,truth,truth_mode,median_estimate,median_error,median_abs_error,iqr_error";

impl ExperimentOutput {
    pub fn rows_csv(&self) -> String {
        let mut s = format!("{ROW_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:e},{},{},{},{},{},{},{},{},{},{},{}",
                r.replication,
                r.horizon,
                r.estimand,
                r.estimate,
                opt(r.truth),
                opt(r.error),
                r.truth_mode.as_str(),
                pairs(&r.tuning),
                pairs(&r.flags),
                r.min_occupancy,
                r.seed,
                r.burn_in,
                r.graph,
                r.model,
                r.trajectory
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = format!("{SUMMARY_HEADER}\n");
        for r in &self.summary {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:e},{},{},{}",
                r.estimand,
                r.horizon,
                r.count,
                opt(r.truth),
                r.truth_mode.as_str(),
                r.median_estimate,
                opt(r.median_error),
                opt(r.median_abs_error),
                opt(r.iqr_error)
            );
        }
        s
    }

    pub fn rows_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("rows serialize") + "\n")
            .collect()
    }

    /// Writes `assumptions.json` plus rows and summary in the chosen format;
    /// returns the written paths.
    pub fn write(&self, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut files = vec![(dir.join("assumptions.json"), pretty(&self.assumptions))];
        match format {
            OutputFormat::Csv => {
                files.push((dir.join("replications.csv"), self.rows_csv()));
                files.push((dir.join("summary.csv"), self.summary_csv()));
            }
            OutputFormat::Json => {
                files.push((dir.join("replications.jsonl"), self.rows_jsonl()));
                files.push((dir.join("summary.json"), pretty(&self.summary)));
            }
        }
        for (path, text) in &files {
            std::fs::write(path, text)?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

/// Names of the scenarios shipped with the crate.
pub const SCENARIOS: &[&str] = &["single-unit", "lde-consistency", "sde-ipw", "lte-moderate", "contraction-violation"];

/// Text of a shipped scenario file.
pub fn scenario_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "single-unit" => include_str!("../scenarios/single-unit.toml"),
        "lde-consistency" => include_str!("../scenarios/lde-consistency.toml"),
        "sde-ipw" => include_str!("../scenarios/sde-ipw.toml"),
        "lte-moderate" => include_str!("../scenarios/lte-moderate.toml"),
        "contraction-violation" => include_str!("../scenarios/contraction-violation.toml"),
        _ => return None,
    })
}

pub fn scenario(name: &str) -> Result<ExperimentConfig> {
    let text = scenario_text(name).ok_or_else(|| Error::ConfigInvalid(format!("unknown scenario `{name}`")))?;
    ExperimentConfig::from_toml_str(text)
}
