use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row index {index} out of range for a matrix with {rows} rows")]
    RowIndex { index: usize, rows: usize },

    #[error("dimension mismatch: expected length {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("matrix has {count} zero row(s), first at row {first}")]
    ZeroRows { count: usize, first: usize },

    #[error("matrix has {count} non-finite entr(y/ies), first in row {row}")]
    NonFinite { count: usize, row: usize },

    #[error("cannot project onto zero row {0}")]
    ZeroRow(usize),

    #[error("{what} needs more than two rows, matrix has {rows}")]
    TooFewRows { what: &'static str, rows: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("the relative solution error stop rule needs a known solution")]
    MissingSolution,

    #[error("spectral iteration did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("matrix is too large for dense spectral work ({rows}x{cols})")]
    TooLarge { rows: usize, cols: usize },

    #[error("system is inconsistent (relative residual {0:e})")]
    Inconsistent(f64),

    #[error("{}:{line}: {msg}", path.display())]
    MatrixMarket {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Config {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for refusals that come from the numbers themselves (bad matrix,
    /// violated method preconditions, non-convergent oracles) as opposed to
    /// malformed input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::InvalidMatrix(_)
                | Error::ZeroRows { .. }
                | Error::NonFinite { .. }
                | Error::ZeroRow(_)
                | Error::TooFewRows { .. }
                | Error::NoConvergence(_)
                | Error::TooLarge { .. }
                | Error::Inconsistent(_)
        )
    }
}
