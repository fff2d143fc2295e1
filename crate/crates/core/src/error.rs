use std::io;

use thiserror::Error;

/// Errors raised by the numerical kernels, the state parsers and the CLI plumbing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} contains non-finite entries")]
    NonFinite { what: &'static str },

    #[error("expected {expected}, found a {rows}x{cols} matrix")]
    Shape {
        expected: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("matrix is not Hermitian (max |H - H^dagger| = {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not complex symmetric (|Q - Q^T|_F = {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not unitary (max |U^dagger U - 1| = {defect:.3e})")]
    NotUnitary { defect: f64 },

    #[error("matrix is not real orthogonal (defect {defect:.3e})")]
    NotOrthogonal { defect: f64 },

    #[error("expected determinant +1, found {re:.6} {im:+.6}i")]
    Determinant { re: f64, im: f64 },

    #[error("negative eigenvalue {value:.3e} beyond tolerance")]
    NegativeEigenvalue { value: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("vector is not normalized (norm {norm:.12})")]
    NotNormalized { norm: f64 },

    #[error("invalid party permutation: {0}")]
    InvalidPermutation(String),

    #[error("unknown fixture `{0}` (expected ghz, swap, comm75 or povm31)")]
    UnknownFixture(String),

    #[error("rank {rank} is outside the supported range for {operation}")]
    Rank {
        rank: usize,
        operation: &'static str,
    },

    #[error("phase pattern residual {residual:.3e} exceeds {threshold:.1e}; local measurements do not attain the joint optimum")]
    NotLocal { residual: f64, threshold: f64 },

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("party {0} cannot act as the first assistant")]
    InvalidParty(char),

    #[error("state file: {0}")]
    StateFormat(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("I/O error after {written} records: {source}")]
    Io {
        written: usize,
        #[source]
        source: io::Error,
    },
}

impl From<io::Error> for Error {
    fn from(source: io::Error) -> Self {
        Error::Io { written: 0, source }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io {
            written: 0,
            source: io::Error::other(err),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
