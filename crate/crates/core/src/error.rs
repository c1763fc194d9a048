use std::fmt;

use thiserror::Error;

/// A single violated invariant found while validating a [`GameConfig`](crate::GameConfig).
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    InvalidInterval(String),
    NegativeCost(String),
    NonMonotoneReward(String),
    BadDistribution(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InvalidInterval(m) => write!(f, "invalid interval: {m}"),
            Violation::NegativeCost(m) => write!(f, "negative cost: {m}"),
            Violation::NonMonotoneReward(m) => write!(f, "non-monotone reward: {m}"),
            Violation::BadDistribution(m) => write!(f, "bad distribution: {m}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game configuration: {}", join(.0))]
    InvalidConfig(Vec<Violation>),

    #[error("could not parse game configuration: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("{what} = {value} is outside its domain {domain}")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    #[error("negative input: {what} = {value}")]
    NegativeInput { what: &'static str, value: f64 },

    #[error("quadrature did not converge: estimate {estimate}, error {error:e}")]
    QuadratureNotConverged { estimate: f64, error: f64 },

    #[error("closed form requires linear reward and exponential collocation time")]
    WrongInstantiation,

    #[error("lambda_min is zero; the uniform attacker threshold is unbounded")]
    DegenerateLambdaMin,

    #[error("back-off check requires lambda_min = 0 (got {0})")]
    RequiresZeroLambdaMin(f64),

    #[error("best-response iteration did not converge in {iterations} steps (last step {last_step:e})")]
    MaxItersExceeded {
        iterations: usize,
        last_step: f64,
        last_point: (f64, f64),
    },

    #[error("best-response iteration converged to ({0}, {1}) which is not an epsilon-equilibrium")]
    UnverifiedFixedPoint(f64, f64),

    #[error("no pure-strategy equilibrium found")]
    NoEquilibriumFound,
}

impl Error {
    /// Configuration and parse errors, as opposed to numerical failures.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::InvalidConfig(_) | Error::Parse(_))
    }
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
