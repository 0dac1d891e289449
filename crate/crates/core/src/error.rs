use alloc::string::String;
use alloc::vec::Vec;

use crate::sdp::IterationLog;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient training length: L = {0}, need L >= 3")]
    InsufficientTrainingLength(usize),

    #[error("antenna index v = {v} out of range 2..={antennas}")]
    AntennaIndexOutOfRange { v: usize, antennas: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("missing feedback records: {0}")]
    MissingFeedback(String),

    #[error("channel vector is zero")]
    ZeroChannel,

    #[error("cluster count {clusters} exceeds point count {points}")]
    TooManyClusters { clusters: usize, points: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge: {message}")]
    Solver { message: String, trace: Vec<IterationLog> },
}
