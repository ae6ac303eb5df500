//! Error type shared by every module of the crate.

use std::path::PathBuf;

use crate::cayley::BoundReport;
use crate::codec::CodecError;
use crate::optimizer::Trace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    Empty { rows: usize, cols: usize },

    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength {
        rows: usize,
        cols: usize,
        len: usize,
    },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("singular matrix: pivot {pivot:e} at column {col} is below threshold {threshold:e}")]
    Singular {
        col: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("A + I is singular (A has eigenvalue -1); apply a signature matrix first")]
    EigenvalueMinusOne,

    #[error("power iteration did not converge after {iterations} iterations (best estimate {estimate:e})")]
    NonConvergence { iterations: usize, estimate: f64 },

    #[error("matrix is not orthogonal: ||U^T U - I||_F = {residual:e} exceeds {tolerance:e}")]
    NotOrthogonal { residual: f64, tolerance: f64 },

    #[error("matrix is not skew-symmetric: ||S + S^T||_F = {residual:e} exceeds {tolerance:e}")]
    NotSkew { residual: f64, tolerance: f64 },

    #[error("signature has {signs} entries but matrix has {rows} rows")]
    SignatureLength { signs: usize, rows: usize },

    #[error("invalid sign {0}; signature entries must be -1 or +1")]
    InvalidSign(i64),

    #[error("{angles} rotation angles need n >= {needed}, got n = {n}")]
    TooManyAngles {
        angles: usize,
        needed: usize,
        n: usize,
    },

    #[error("n = {n} exceeds the limit of {max} for {what}")]
    SizeGuard {
        what: &'static str,
        n: usize,
        max: usize,
    },

    #[error("log|det(A+D)| = {lhs} and log|det(DA+I)| = {rhs} disagree")]
    Inconsistent { lhs: f64, rhs: f64 },

    #[error("no signature reaches |det(A+D)| >= 1 among all 2^{n} candidates")]
    NoFeasibleSignature { n: usize },

    #[error("bound violated: {0}")]
    BoundViolation(Box<BoundReport>),

    #[error("line search failed at iteration {iteration} after {backtracks} backtracks")]
    Stagnation {
        iteration: usize,
        backtracks: usize,
        trace: Box<Trace>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Codec(#[from] CodecError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
