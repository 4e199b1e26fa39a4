use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unit index {index} out of range for {n} units")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("self-loop at unit {0}")]
    SelfLoop(usize),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid graphon kernel: {0}")]
    InvalidKernel(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("activation value {value} at unit {unit}, cell (y={y}, w={w}), z={z} is outside (0, 1)")]
    RangeViolation {
        unit: usize,
        y: u8,
        w: u8,
        z: f64,
        value: f64,
    },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("treatment probability {value} at unit {unit} is not strictly inside (0, 1)")]
    PolicyOutOfRange { unit: usize, value: f64 },
    #[error("time {t} out of range for horizon {horizon}")]
    TimeOutOfRange { t: usize, horizon: usize },
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("{what} did not converge after {iterations} iterations (last change {change:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        change: f64,
    },
    #[error("contraction constant C = {0} is not below 1")]
    ContractionViolated(f64),
    #[error("mean-field solution does not match the graph, model and policy it is used with")]
    StaleSolution,
    #[error("{n} units exceeds the exact-oracle cap of {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("unit {unit} never visited cell (y={y}, w={w})")]
    EmptyCell { unit: usize, y: u8, w: u8 },
    #[error("denominator {value} for unit {unit} is too close to zero")]
    DegenerateDenominator { unit: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("replication {replication}: {source}")]
    Replication {
        replication: u64,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
