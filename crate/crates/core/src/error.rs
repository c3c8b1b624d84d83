use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("plant is not observable (observability condition estimate {condition:e})")]
    Unobservable { condition: f64 },

    #[error("filter gain does not make A_K Hurwitz (max eigenvalue real part {max_real})")]
    NotHurwitz { max_real: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite derivative at t = {t}")]
    NonFinite { t: f64 },

    #[error("time grids are not aligned")]
    MisalignedGrids,

    #[error("empty excitation window [{from}, {to}]")]
    EmptyWindow { from: f64, to: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid value for `{field}`: {msg}")]
    Validation { field: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
