use std::io;

/// Errors produced by the resync toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("insufficient detections: {available} available, at least {required} required")]
    InsufficientDetections { available: usize, required: usize },

    #[error("threshold t = {t} is infeasible for QBER {qber}: requires t < 1 - 2Q = {bound}")]
    InfeasibleThreshold { t: f64, qber: f64, bound: f64 },

    #[error("invalid schedule: block duration {block_s} s exceeds interval {interval_s} s")]
    InvalidSchedule { block_s: f64, interval_s: f64 },

    #[error("no feasible (N_d, t) pair on the search grid")]
    NoFeasibleSolution,

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        if err.is_io() {
            Error::Io(err.into())
        } else {
            Error::Malformed(err.to_string())
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        if err.is_io_error() {
            match err.into_kind() {
                csv::ErrorKind::Io(e) => Error::Io(e),
                _ => unreachable!(),
            }
        } else {
            Error::Malformed(err.to_string())
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
