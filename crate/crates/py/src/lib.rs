//! Python module `netmrt`: graphs, activation models, simulation, mean-field
//! and exact truths, and the trajectory estimators.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use netmrt::activation::{CurveSpec, ModelSpec, Parametrization};
use netmrt::estimators::{self, LteTuning, MGuard, TrajectoryStats};
use netmrt::{meanfield, oracle, simulate as sim, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NoConvergence { .. } | Error::Io(_) | Error::Replication { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for netmrt::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

#[pyclass(name = "Graph", module = "netmrt", frozen)]
struct Graph {
    inner: netmrt::InterferenceGraph,
}

#[pymethods]
impl Graph {
    #[staticmethod]
    fn empty(n: usize) -> Self {
        Self { inner: netmrt::InterferenceGraph::empty(n) }
    }

    #[staticmethod]
    fn complete(n: usize) -> Self {
        Self { inner: netmrt::InterferenceGraph::complete(n) }
    }

    #[staticmethod]
    fn path(n: usize) -> Self {
        Self { inner: netmrt::InterferenceGraph::path(n) }
    }

    #[staticmethod]
    fn star(n: usize) -> Self {
        Self { inner: netmrt::InterferenceGraph::star(n) }
    }

    #[staticmethod]
    fn erdos_renyi(n: usize, rho: f64, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: netmrt::InterferenceGraph::erdos_renyi(n, rho, seed).py()? })
    }

    #[staticmethod]
    fn from_edges(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(Self { inner: netmrt::InterferenceGraph::from_edges(n, &edges).py()? })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self { inner: netmrt::InterferenceGraph::read_edge_list(path).py()? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn max_degree(&self) -> usize {
        self.inner.max_degree()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint().to_string()
    }

    fn neighbors(&self, i: usize) -> PyResult<Vec<usize>> {
        if i >= self.inner.n() {
            return Err(py_err(Error::IndexOutOfRange { index: i, n: self.inner.n() }));
        }
        Ok(self.inner.neighbors(i).to_vec())
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().collect()
    }

    fn neighbor_sums(&self, state: Vec<u8>) -> PyResult<Vec<u32>> {
        self.inner.neighbor_sums(&state).py()
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={})", self.inner.n(), self.inner.edge_count())
    }
}

#[pyclass(name = "Model", module = "netmrt", frozen)]
struct Model {
    inner: netmrt::ActivationModel,
}

fn parametrization(name: &str) -> PyResult<Parametrization> {
    match name {
        "cells" => Ok(Parametrization::Cells),
        "abcd" => Ok(Parametrization::Abcd),
        other => Err(PyValueError::new_err(format!("unknown parametrization `{other}`"))),
    }
}

#[pymethods]
impl Model {
    /// Affine curves `base + slope·z`, given per cell or as `(a, b, c, d)`.
    #[staticmethod]
    #[pyo3(signature = (graph, base, slope, parametrization = "cells"))]
    fn affine(graph: &Graph, base: [f64; 4], slope: [f64; 4], parametrization: &str) -> PyResult<Self> {
        let spec = ModelSpec::uniform(CurveSpec::affine(self::parametrization(parametrization)?, base, slope));
        Ok(Self { inner: netmrt::ActivationModel::build(&spec, &graph.inner).py()? })
    }

    #[staticmethod]
    fn logistic(graph: &Graph, intercept: [f64; 4], slope: [f64; 4], scale: f64) -> PyResult<Self> {
        let spec = ModelSpec::uniform(CurveSpec::logistic(intercept, slope, scale));
        Ok(Self { inner: netmrt::ActivationModel::build(&spec, &graph.inner).py()? })
    }

    #[staticmethod]
    fn from_toml(text: &str, graph: &Graph) -> PyResult<Self> {
        Ok(Self { inner: netmrt::ActivationModel::from_toml_str(text, &graph.inner).py()? })
    }

    #[staticmethod]
    fn from_file(path: &str, graph: &Graph) -> PyResult<Self> {
        Ok(Self { inner: netmrt::ActivationModel::from_file(path, &graph.inner).py()? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn eval_f(&self, i: usize, y: u8, w: u8, z: f64) -> f64 {
        self.inner.eval_f(i, y, w, z)
    }

    /// `(a, b, c, d)` at neighbor sum `z`.
    fn eval_abcd(&self, i: usize, z: f64) -> (f64, f64, f64, f64) {
        let m = self.inner.eval_abcd(i, z);
        (m.a, m.b, m.c, m.d)
    }

    fn assumption_constants<'py>(&self, py: Python<'py>, graph: &Graph) -> PyResult<Bound<'py, PyDict>> {
        let r = self.inner.assumption_constants(&graph.inner);
        let d = PyDict::new(py);
        d.set_item("lipschitz", r.lipschitz)?;
        d.set_item("self_feedback", r.self_feedback)?;
        d.set_item("second_derivative", r.second_derivative)?;
        d.set_item("max_degree", r.max_degree)?;
        d.set_item("contraction", r.contraction)?;
        d.set_item("smoothness", r.smoothness)?;
        d.set_item("contraction_ok", r.contraction_ok)?;
        d.set_item("smoothness_ok", r.smoothness_ok)?;
        Ok(d)
    }
}

#[pyclass(name = "Trajectory", module = "netmrt", frozen)]
struct Trajectory {
    inner: sim::Trajectory,
}

#[pymethods]
impl Trajectory {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: sim::Trajectory::load(path).py()? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint().to_string()
    }

    fn y(&self, t: usize) -> PyResult<Vec<u8>> {
        self.check(t, self.inner.horizon() + 1)?;
        Ok(self.inner.y(t).to_vec())
    }

    fn w(&self, t: usize) -> PyResult<Vec<u8>> {
        self.check(t, self.inner.horizon())?;
        Ok(self.inner.w(t).to_vec())
    }

    fn z(&self, t: usize) -> PyResult<Vec<u32>> {
        self.check(t, self.inner.horizon())?;
        Ok(self.inner.z(t).to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Trajectory(n={}, horizon={})", self.inner.n(), self.inner.horizon())
    }
}

impl Trajectory {
    /// Requires `t < end`.
    fn check(&self, t: usize, end: usize) -> PyResult<()> {
        if t >= end {
            return Err(py_err(Error::TimeOutOfRange { t, horizon: self.inner.horizon() }));
        }
        Ok(())
    }
}

/// A treatment policy: one probability for everyone or one per unit.
#[derive(FromPyObject)]
enum Policy {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Policy {
    fn build(self, n: usize) -> PyResult<sim::PolicyVector> {
        match self {
            Policy::Scalar(p) => sim::PolicyVector::constant(n, p).py(),
            Policy::Vector(v) => {
                if v.len() != n {
                    return Err(py_err(Error::LengthMismatch { expected: n, got: v.len() }));
                }
                sim::PolicyVector::new(v).py()
            }
        }
    }
}

#[pyfunction]
#[pyo3(signature = (graph, model, pi, horizon, seed = 0, replication = 0, burn_in = 0, init_p = 0.5))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    graph: &Graph,
    model: &Model,
    pi: Policy,
    horizon: usize,
    seed: u64,
    replication: u64,
    burn_in: usize,
    init_p: f64,
) -> PyResult<Trajectory> {
    let pi = pi.build(graph.inner.n())?;
    let opts = sim::SimOptions::new(seed)
        .replication(replication)
        .burn_in(burn_in)
        .init(sim::InitSpec::Bernoulli { p: init_p });
    let inner = py.detach(|| sim::simulate(&graph.inner, &model.inner, &pi, horizon, &opts)).py()?;
    Ok(Trajectory { inner })
}

/// Mean-field fixed point as `(p_star, q_star, iterations, residual)`.
#[pyfunction]
fn mf_fixed_point(graph: &Graph, model: &Model, pi: Policy) -> PyResult<(Vec<f64>, Vec<f64>, usize, f64)> {
    let pi = pi.build(graph.inner.n())?;
    let s = meanfield::mf_fixed_point(&graph.inner, &model.inner, &pi, &Default::default()).py()?;
    Ok((s.p_star, s.q_star, s.iterations, s.residual))
}

#[pyfunction]
fn mf_derivative(graph: &Graph, model: &Model, pi: Policy, v: Vec<f64>) -> PyResult<Vec<f64>> {
    let pi = pi.build(graph.inner.n())?;
    Ok(meanfield::mf_derivative(&graph.inner, &model.inner, &pi, &v).py()?.p)
}

#[pyfunction]
fn mf_lte(graph: &Graph, model: &Model, pi: Policy, delta: f64, v: Vec<f64>) -> PyResult<f64> {
    let pi = pi.build(graph.inner.n())?;
    meanfield::mf_lte(&graph.inner, &model.inner, &pi, delta, &v).py()
}

#[pyfunction]
fn mf_lde(graph: &Graph, model: &Model, pi: Policy, gamma1: f64, gamma2: f64) -> PyResult<f64> {
    let pi = pi.build(graph.inner.n())?;
    meanfield::mf_lde(&graph.inner, &model.inner, &pi, gamma1, gamma2).py()
}

/// Exact stationary probabilities indexed by state bitmask (unit `i` in bit `i`).
#[pyfunction]
fn exact_stationary(py: Python<'_>, graph: &Graph, model: &Model, pi: Policy) -> PyResult<Vec<f64>> {
    let pi = pi.build(graph.inner.n())?;
    Ok(py.detach(|| oracle::exact_stationary(&graph.inner, &model.inner, &pi)).py()?.probs)
}

#[pyfunction]
fn exact_mean(graph: &Graph, model: &Model, pi: Policy) -> PyResult<Vec<f64>> {
    let pi = pi.build(graph.inner.n())?;
    Ok(oracle::exact_mean(&oracle::exact_stationary(&graph.inner, &model.inner, &pi).py()?))
}

#[pyfunction]
fn exact_sde(graph: &Graph, model: &Model, y: Vec<u8>) -> PyResult<f64> {
    oracle::exact_sde(&graph.inner, &model.inner, &y).py()
}

#[pyfunction]
fn exact_lde(graph: &Graph, model: &Model, pi: Policy, gamma1: f64, gamma2: f64) -> PyResult<f64> {
    let pi = pi.build(graph.inner.n())?;
    oracle::exact_lde(&graph.inner, &model.inner, &pi, gamma1, gamma2).py()
}

#[pyfunction]
fn exact_lte(graph: &Graph, model: &Model, pi1: Policy, pi2: Policy) -> PyResult<f64> {
    let n = graph.inner.n();
    oracle::exact_lte(&graph.inner, &model.inner, &pi1.build(n)?, &pi2.build(n)?).py()
}

#[pyfunction]
fn sde_ipw(traj: &Trajectory, t: usize, pi: Policy) -> PyResult<f64> {
    estimators::sde_ipw(&traj.inner, t, &pi.build(traj.inner.n())?).py()
}

#[pyfunction]
fn fhat(traj: &Trajectory, i: usize, y: u8, w: u8) -> PyResult<f64> {
    estimators::fhat(&traj.inner, i, y, w).py()
}

#[pyfunction]
fn abcd_hat(traj: &Trajectory, i: usize) -> PyResult<(f64, f64, f64, f64)> {
    let m = estimators::abcd_hat(&traj.inner, i).py()?;
    Ok((m.a, m.b, m.c, m.d))
}

#[pyfunction]
fn phat(traj: &Trajectory, i: usize) -> f64 {
    estimators::phat(&traj.inner, i)
}

#[pyfunction]
fn fprime_hat(traj: &Trajectory, graph: &Graph, i: usize, y: u8, w: u8, delta_t: f64) -> PyResult<f64> {
    estimators::fprime_hat(&traj.inner, &graph.inner, i, y, w, delta_t).py()
}

#[pyfunction]
fn lde_hat(traj: &Trajectory, gamma1: f64, gamma2: f64) -> PyResult<f64> {
    estimators::lde_hat(&traj.inner, gamma1, gamma2).py()
}

#[pyfunction]
#[pyo3(signature = (traj, graph, pi, delta, v = None, delta_t = None, eta = 0.05, kappa = 0.05, m_guard = "derivative_magnitude"))]
#[allow(clippy::too_many_arguments)]
fn lte_hat(
    traj: &Trajectory,
    graph: &Graph,
    pi: Policy,
    delta: f64,
    v: Option<Vec<f64>>,
    delta_t: Option<f64>,
    eta: f64,
    kappa: f64,
    m_guard: &str,
) -> PyResult<f64> {
    let m_guard = match m_guard {
        "derivative_magnitude" => MGuard::DerivativeMagnitude,
        "paper_literal" => MGuard::PaperLiteral,
        other => return Err(PyValueError::new_err(format!("unknown guard `{other}`"))),
    };
    let tuning = LteTuning {
        delta,
        v,
        delta_t,
        eta,
        kappa,
        m_guard,
    };
    let pi = pi.build(graph.inner.n())?;
    let stats = TrajectoryStats::compute(&traj.inner);
    Ok(estimators::lte_from_stats(&stats, &graph.inner, &pi, &tuning).py()?.value)
}

/// Runs an experiment from TOML text and returns its output as a JSON string.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = netmrt::ExperimentConfig::from_toml_str(config).py()?;
    let out = py.detach(|| netmrt::run_experiment(&cfg)).py()?;
    serde_json::to_string(&out).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "netmrt")]
fn netmrt_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<Model>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(mf_fixed_point, m)?)?;
    m.add_function(wrap_pyfunction!(mf_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(mf_lte, m)?)?;
    m.add_function(wrap_pyfunction!(mf_lde, m)?)?;
    m.add_function(wrap_pyfunction!(exact_stationary, m)?)?;
    m.add_function(wrap_pyfunction!(exact_mean, m)?)?;
    m.add_function(wrap_pyfunction!(exact_sde, m)?)?;
    m.add_function(wrap_pyfunction!(exact_lde, m)?)?;
    m.add_function(wrap_pyfunction!(exact_lte, m)?)?;
    m.add_function(wrap_pyfunction!(sde_ipw, m)?)?;
    m.add_function(wrap_pyfunction!(fhat, m)?)?;
    m.add_function(wrap_pyfunction!(abcd_hat, m)?)?;
    m.add_function(wrap_pyfunction!(phat, m)?)?;
    m.add_function(wrap_pyfunction!(fprime_hat, m)?)?;
    m.add_function(wrap_pyfunction!(lde_hat, m)?)?;
    m.add_function(wrap_pyfunction!(lte_hat, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
