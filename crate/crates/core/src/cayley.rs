//! Cayley transform and the signature-pivoted factorization
//! `U = D (I - S)(I + S)^{-1}` of an orthogonal matrix.
//!
//! For orthogonal `U`, [`factor`] picks `D` with [`choose_signature`] so that
//! `|det(DU + I)| >= 1`, then sets `S = C(DU)`. Because `DU + I` is normal,
//! its smallest singular value equals its smallest eigenvalue modulus, which
//! is at least `2^(1-n)`; hence `||S||_2 <= 1 + 2^n`. [`check_bounds`]
//! measures both quantities.

use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::{
    frobenius_norm, logdet_lu, orthogonality_residual, power_iteration, spectral_norm, DenseMatrix,
    LogDet, Lu, SPECTRAL_MAX_ITER, SPECTRAL_TOL,
};
use crate::signature::{apply_signature, choose_signature, SignatureVector};

/// Default per-dimension orthogonality tolerance for [`factor`].
pub const DEFAULT_ORTH_TOL: f64 = 1e-8;

/// Largest `n` accepted by [`check_bounds`].
pub const MAX_BOUND_CHECK_N: usize = 1000;

/// Slack applied to every exact-arithmetic inequality.
pub const BOUND_SLACK: f64 = 1e-6;

/// Whether [`cayley_transform`] symmetrizes its output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CayleyMode {
    /// Return `(I - A)(A + I)^{-1}` as computed.
    Raw,
    /// Replace the result `X` by `(X - X^T)/2`. Use for orthogonal `A`.
    #[default]
    Skew,
}

/// `C(A) = (I - A)(A + I)^{-1}`, computed as one solve
/// `(A + I)^T X^T = (I - A)^T`.
pub fn cayley_transform(a: &DenseMatrix, mode: CayleyMode) -> Result<DenseMatrix> {
    let n = a.require_square()?;
    let lu = match Lu::factor(&a.add_scaled_identity(1.0)?.transpose()) {
        Ok(lu) => lu,
        Err(Error::Singular { .. }) => return Err(Error::EigenvalueMinusOne),
        Err(e) => return Err(e),
    };
    let rhs = DenseMatrix::identity(n).sub(a)?.transpose();
    let x = lu.solve(&rhs)?.transpose();
    match mode {
        CayleyMode::Raw => Ok(x),
        CayleyMode::Skew => x.skew_part(),
    }
}

/// A signature `D` and skew-symmetric `S` with `U = D (I - S)(I + S)^{-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CayleyFactorization {
    signature: SignatureVector,
    skew: DenseMatrix,
}

impl CayleyFactorization {
    /// Validates shapes and `||S + S^T||_F <= 1e-10 (1 + ||S||_F)`.
    pub fn new(signature: SignatureVector, skew: DenseMatrix) -> Result<Self> {
        let n = skew.require_square()?;
        if signature.len() != n {
            return Err(Error::SignatureLength {
                signs: signature.len(),
                rows: n,
            });
        }
        skew.require_finite()?;
        let residual = skew.skew_residual();
        let tolerance = 1e-10 * (1.0 + frobenius_norm(&skew));
        if residual > tolerance {
            return Err(Error::NotSkew {
                residual,
                tolerance,
            });
        }
        Ok(Self { signature, skew })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            signature: SignatureVector::all_plus(n),
            skew: DenseMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.skew.rows()
    }

    pub fn signature(&self) -> &SignatureVector {
        &self.signature
    }

    pub fn skew(&self) -> &DenseMatrix {
        &self.skew
    }

    pub fn into_parts(self) -> (SignatureVector, DenseMatrix) {
        (self.signature, self.skew)
    }
}

fn require_orthogonal(u: &DenseMatrix, orth_tol: f64) -> Result<usize> {
    let n = u.require_square()?;
    u.require_finite()?;
    let residual = orthogonality_residual(u);
    let tolerance = orth_tol * n as f64;
    if !(residual <= tolerance) {
        return Err(Error::NotOrthogonal {
            residual,
            tolerance,
        });
    }
    Ok(n)
}

/// Computes `(D, S)` with `U = D (I - S)(I + S)^{-1}` in `O(n^3)`.
///
/// `u` must satisfy `||U^T U - I||_F <= orth_tol * n`.
pub fn factor(u: &DenseMatrix, orth_tol: f64) -> Result<CayleyFactorization> {
    require_orthogonal(u, orth_tol)?;
    let signature = choose_signature(u)?.signature;
    let du = apply_signature(&signature, u)?;
    let skew = cayley_transform(&du, CayleyMode::Skew)?;
    Ok(CayleyFactorization { signature, skew })
}

/// `U = D (I - S)(I + S)^{-1}`.
pub fn reconstruct(f: &CayleyFactorization) -> Result<DenseMatrix> {
    // I + S is nonsingular for real skew S; a solve failure means the
    // factorization was corrupted.
    let core = cayley_transform(&f.skew, CayleyMode::Raw)?;
    apply_signature(&f.signature, &core)
}

/// Reconstruction tolerance `||UᵀU - I||_F` for a factorization whose chart
/// has `sigma_min(DU + I) = sigma_min`.
pub fn reconstruct_tolerance(n: usize, sigma_min: f64) -> f64 {
    if sigma_min < 1e-3 {
        1e-6 * n as f64
    } else {
        1e-9 * n as f64
    }
}

/// Measured quantities behind the uniform bound on the pivoted Cayley
/// transform.
#[derive(Clone, Debug)]
pub struct BoundReport {
    pub n: usize,
    pub signature: SignatureVector,
    /// `det(DU + I)`; its magnitude must be at least 1.
    pub logdet_du_plus_i: LogDet,
    /// `sigma_min(DU + I)`, which equals `|lambda_min|` since `DU + I` is normal.
    pub sigma_min_du_plus_i: f64,
    /// Whether the power iteration for `sigma_min` met its tolerance.
    pub sigma_min_converged: bool,
    /// `rho(S) = ||S||_2` for `S = C(DU)`.
    pub rho_s: f64,
    pub rho_s_converged: bool,
    pub det_ok: bool,
    pub sigma_min_ok: bool,
    pub rho_ok: bool,
}

impl BoundReport {
    /// `ln(2^(1-n))`.
    pub fn log_sigma_min_bound(&self) -> f64 {
        (1.0 - self.n as f64) * std::f64::consts::LN_2
    }

    /// `ln(1 + 2^n)`, evaluated without overflow.
    pub fn log_rho_bound(&self) -> f64 {
        log_one_plus_pow2(self.n)
    }

    /// `rho_s / (1 + 2^n)`.
    pub fn rho_ratio(&self) -> f64 {
        (self.rho_s.ln() - self.log_rho_bound()).exp()
    }

    pub fn passed(&self) -> bool {
        self.det_ok && self.sigma_min_ok && self.rho_ok
    }

    pub fn reconstruct_tolerance(&self) -> f64 {
        reconstruct_tolerance(self.n, self.sigma_min_du_plus_i)
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |ok: bool| if ok { "ok" } else { "VIOLATED" };
        writeln!(f, "n: {}", self.n)?;
        writeln!(f, "signs: {}", self.signature)?;
        writeln!(
            f,
            "log|det(DU+I)|: {:.6} (>= 0) {}",
            self.logdet_du_plus_i.log_abs,
            mark(self.det_ok)
        )?;
        writeln!(
            f,
            "sigma_min(DU+I): {:.6e} (>= 2^{} = {:.6e}) {}",
            self.sigma_min_du_plus_i,
            1 - self.n as i64,
            self.log_sigma_min_bound().exp(),
            mark(self.sigma_min_ok)
        )?;
        write!(
            f,
            "rho(S): {:.6e} (<= 1 + 2^{}, ratio {:.3e}) {}",
            self.rho_s,
            self.n,
            self.rho_ratio(),
            mark(self.rho_ok)
        )
    }
}

pub(crate) fn log_one_plus_pow2(n: usize) -> f64 {
    let nl = n as f64 * std::f64::consts::LN_2;
    // ln(1 + 2^n) = n ln 2 + ln(1 + 2^-n)
    nl + (-nl).exp().ln_1p()
}

/// Runs the pivoted factorization of `u` and measures `det(DU + I)`,
/// `sigma_min(DU + I)` and `rho(C(DU))` against their bounds. Returns
/// [`Error::BoundViolation`] carrying the report if any bound fails beyond
/// the relative slack `1e-6`.
pub fn check_bounds(u: &DenseMatrix) -> Result<BoundReport> {
    let n = require_orthogonal(u, DEFAULT_ORTH_TOL)?;
    if n > MAX_BOUND_CHECK_N {
        return Err(Error::SizeGuard {
            what: "bound check",
            n,
            max: MAX_BOUND_CHECK_N,
        });
    }
    let signature = choose_signature(u)?.signature;
    let du = apply_signature(&signature, u)?;
    let shifted = du.add_scaled_identity(1.0)?;
    let logdet_du_plus_i = logdet_lu(&shifted)?;

    let lu = Lu::factor(&shifted)?;
    // Largest eigenvalue of M^{-T} M^{-1} is 1 / sigma_min(M)^2.
    let inv_gram = power_iteration(n, SPECTRAL_TOL, SPECTRAL_MAX_ITER, |x, y| {
        y.copy_from_slice(x);
        lu.solve_vec(y);
        lu.solve_transpose_vec(y);
        Ok(())
    });
    let (inv_gram, sigma_min_converged) = split_estimate(inv_gram)?;
    let sigma_min = 1.0 / inv_gram.sqrt();

    let skew = cayley_transform(&du, CayleyMode::Skew)?;
    let (rho_s, rho_s_converged) =
        split_estimate(spectral_norm(&skew, SPECTRAL_TOL, SPECTRAL_MAX_ITER))?;

    let det_ok = logdet_du_plus_i.sign != 0 && logdet_du_plus_i.log_abs >= -BOUND_SLACK;
    let mut report = BoundReport {
        n,
        signature,
        logdet_du_plus_i,
        sigma_min_du_plus_i: sigma_min,
        sigma_min_converged,
        rho_s,
        rho_s_converged,
        det_ok,
        sigma_min_ok: false,
        rho_ok: false,
    };
    report.sigma_min_ok = sigma_min.ln() >= report.log_sigma_min_bound() + (-BOUND_SLACK).ln_1p();
    report.rho_ok = if n <= 50 {
        rho_s <= (1.0 + 2f64.powi(n as i32)) * (1.0 + BOUND_SLACK)
    } else {
        rho_s.ln() <= report.log_rho_bound() + BOUND_SLACK.ln_1p()
    };
    if report.passed() {
        Ok(report)
    } else {
        Err(Error::BoundViolation(Box::new(report)))
    }
}

fn split_estimate(r: Result<f64>) -> Result<(f64, bool)> {
    match r {
        Ok(v) => Ok((v, true)),
        Err(Error::NonConvergence { estimate, .. }) => Ok((estimate, false)),
        Err(e) => Err(e),
    }
}
