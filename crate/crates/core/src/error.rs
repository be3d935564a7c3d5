use thiserror::Error;

/// Errors raised by the space, tree, measure and estimator builders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point index {index} out of range for a space of {n} points")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("empty metric space")]
    EmptySpace,

    #[error("malformed distance data: {0}")]
    MalformedDistances(String),

    #[error("space of {n} points exceeds the configured cap of {cap}")]
    SizeCapExceeded { n: usize, cap: usize },

    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),

    #[error("scale ratio r = {0} must lie in (0, 1/3); use regrade_scales for larger ratios")]
    RatioOutOfRange(f64),

    #[error("level {k} outside the materialized range [{k_min}, {k_max}]")]
    LevelOutOfRange { k: i32, k_min: i32, k_max: i32 },

    #[error("p = {p} is not admissible: require 0 < p <= 1/(M_max+1) = {bound}")]
    MassParameterOutOfRange { p: f64, bound: f64 },

    #[error("beta = {beta} is too small: minimal admissible beta is log(M_max+1)/log(1/r) = {min_beta}")]
    BetaTooSmall { beta: f64, min_beta: f64 },

    #[error("self-similar split failed: {0}")]
    SelfSimilar(String),

    #[error("measure does not match tree: {0}")]
    Mismatch(String),

    #[error("ball B({x}, {t}) has zero mass")]
    ZeroMassBall { x: usize, t: f64 },

    #[error("degenerate estimation window: {0}")]
    DegenerateWindow(String),

    #[error("io: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
