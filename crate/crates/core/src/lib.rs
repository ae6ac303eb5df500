//! Signature-pivoted Cayley factorization of orthogonal matrices.
//!
//! Every real square matrix `A` has a diagonal sign matrix `D` with
//! `|det(A + D)| >= 1`, and [`choose_signature`] finds one by a single pass
//! of Gaussian elimination in `O(n^3)`. Applied to an orthogonal `U` this
//! makes `DU + I` invertible, which gives the factorization
//!
//! ```text
//! U = D (I - S)(I + S)^{-1},   S = C(DU) skew-symmetric,   ||S||_2 <= 1 + 2^n
//! ```
//!
//! The crate builds on that to offer:
//!
//! - [`cayley`]: the Cayley transform, [`factor`]/[`reconstruct`] and
//!   measured bound checks;
//! - [`codec`]: a lossless binary format storing `n(n-1)/2` doubles and `n`
//!   sign bits;
//! - [`optimizer`]: gradient descent in Cayley charts with recentering;
//! - [`oracle`]: exhaustive search over all `2^n` signatures for small `n`.
//!
//! ```
//! use orthocayley::{factor, random_orthogonal, reconstruct, DEFAULT_ORTH_TOL};
//!
//! let u = random_orthogonal(6, 42);
//! let f = factor(&u, DEFAULT_ORTH_TOL).unwrap();
//! let back = reconstruct(&f).unwrap();
//! assert!(back.sub(&u).unwrap().frobenius_norm() < 1e-12);
//! ```

pub mod cayley;
pub mod codec;
pub mod error;
pub mod io;
pub mod matrix;
pub mod optimizer;
pub mod oracle;
pub mod random;
pub mod signature;

pub use cayley::{
    cayley_transform, check_bounds, factor, reconstruct, BoundReport, CayleyFactorization,
    CayleyMode, DEFAULT_ORTH_TOL,
};
pub use codec::{decode, encode, encoded_len, CodecBlob, CodecError};
pub use error::{Error, Result};
pub use io::{read_matrix, write_matrix};
pub use matrix::{
    frobenius_norm, logdet_lu, matmul, orthogonality_residual, solve, spectral_norm, DenseMatrix,
    LogDet, Lu,
};
pub use optimizer::{
    chart_gradient, minimize, procrustes_value_grad, recenter, ChartState, Minimized, Objective,
    OptimizerConfig, ProcrustesProblem, Trace, TraceRow,
};
pub use oracle::{exhaustive_det, exhaustive_entrywise, DetOracle, EntrywiseOracle, OracleReport};
pub use random::{adversarial_orthogonal, gaussian_matrix, random_orthogonal};
pub use signature::{
    apply_signature, choose_signature, verify_signature, SignatureResult, SignatureVector,
};
