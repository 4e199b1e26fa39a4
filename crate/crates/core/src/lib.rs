//! Simulation and estimation for micro-randomized trials on an interference
//! network.
//!
//! Units sit on an undirected graph. At each decision point unit `i` is
//! treated with probability `π_i`, and its next binary outcome is drawn from
//! `Ber(f_i(Y_it, W_it, Z_it))` where `Z_it` counts neighbors with outcome 1.
//! The crate provides:
//!
//! * [`graph`]: interference graphs and random generators,
//! * [`activation`]: activation curves and their contraction constants,
//! * [`simulate`]: the Markov chain under Bernoulli policies, with coupled runs,
//! * [`meanfield`]: the deterministic mean-field system and its policy derivative,
//! * [`oracle`]: exact stationary distributions for small `n`,
//! * [`estimators`]: IPW, long-term direct and long-term total effect estimators,
//! * [`harness`]: config-driven experiments.

pub mod activation;
pub mod error;
pub mod estimators;
pub mod fingerprint;
pub mod graph;
pub mod harness;
mod linalg;
pub mod meanfield;
pub mod oracle;
pub mod rng;
pub mod simulate;

pub use activation::{Abcd, ActivationModel, AssumptionReport, CurveSpec, ModelSpec, Parametrization};
pub use error::{Error, Result};
pub use estimators::{Estimand, EstimateReport, LteTuning, MGuard, TrajectoryStats};
pub use fingerprint::Fingerprint;
pub use graph::{InterferenceGraph, Kernel};
pub use harness::{run_experiment, ExperimentConfig, ExperimentOutput, TruthMode};
pub use meanfield::{FixedPointOptions, MeanFieldSolution};
pub use oracle::ExactDistribution;
pub use simulate::{InitSpec, PolicyVector, Share, SimOptions, Trajectory};
