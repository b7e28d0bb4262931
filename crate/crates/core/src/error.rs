use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("unstable load: utilization {utilization:.6} >= 1")]
    UnstableLoad { utilization: f64 },

    #[error("unstable queue: arrival rate {lambda} >= service rate {service_rate}")]
    UnstableQueue { lambda: f64, service_rate: f64 },

    #[error("bisection did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("queue of node {node} exceeded {cap} packets")]
    QueueOverflow { node: usize, cap: usize },

    #[error("degenerate occupancy trace: no busy time observed")]
    DegenerateTrace,

    #[error("every replication failed: {0}")]
    AllRunsFailed(Box<Error>),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
