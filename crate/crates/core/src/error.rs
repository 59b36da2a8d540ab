use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("invalid field `{field}`: {msg}")]
    Field { field: String, msg: String },

    #[error("tie-line graph is disconnected: region {0} is unreachable from region 0")]
    Disconnected(usize),

    #[error("region {region} has non-positive inertia {value}")]
    NonPositiveInertia { region: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigenvector matrix is near-defective (condition number {cond:.3e})")]
    NearDefective { cond: f64 },

    #[error("region {0} carries no disturbance")]
    NoDisturbance(usize),

    #[error("simulation diverged at t = {t} s")]
    Divergence { t: f64 },

    #[error("no boundary found in box: {0}")]
    NoBoundary(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("dispatch infeasible; row classes implicated: {classes:?}")]
    Infeasible { classes: Vec<String> },

    #[error("solver error: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn field(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Field {
            field: field.into(),
            msg: msg.into(),
        }
    }
}
