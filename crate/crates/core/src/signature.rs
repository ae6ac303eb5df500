//! Signature selection by permutation-free Gaussian elimination.
//!
//! For a real square `A`, [`choose_signature`] builds `D = diag(d_1..d_n)`
//! with `d_i ∈ {-1, +1}` such that `|det(A + D)| >= 1`. Column by column, the
//! sign `d_i` is picked so that the current pivot `w_ii + d_i` has magnitude
//! `|w_ii| + 1 >= 1`, then the entries below it are eliminated with row
//! replacements `R_r <- R_r - c R_i`. Row replacements leave the determinant
//! unchanged, so `det(A + D)` is the product of the pivots. There are no row
//! or column swaps: pivot `i` always belongs to `d_i`.

use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::{logdet_lu, DenseMatrix, LogDet};

/// Diagonal of a signature matrix; every entry is -1 or +1.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SignatureVector {
    signs: Vec<i8>,
}

impl SignatureVector {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if let Some(&bad) = signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidSign(bad.into()));
        }
        Ok(Self { signs })
    }

    pub fn all_plus(n: usize) -> Self {
        Self { signs: vec![1; n] }
    }

    pub fn all_minus(n: usize) -> Self {
        Self { signs: vec![-1; n] }
    }

    /// Bit `i` of `mask` set means `d_i = -1`.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        debug_assert!(n <= 64);
        let signs = (0..n)
            .map(|i| if mask >> i & 1 == 1 { -1 } else { 1 })
            .collect();
        Self { signs }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.signs
    }

    #[inline]
    pub fn is_negative(&self, i: usize) -> bool {
        self.signs[i] < 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.signs.iter().map(|&s| f64::from(s)).collect()
    }

    pub fn negative_count(&self) -> usize {
        self.signs.iter().filter(|&&s| s < 0).count()
    }

    /// `det(D)`.
    pub fn determinant(&self) -> i8 {
        if self.negative_count() % 2 == 0 {
            1
        } else {
            -1
        }
    }
}

impl fmt::Display for SignatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &s) in self.signs.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(if s > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for SignatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SignatureVector({self})")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignatureResult {
    pub signature: SignatureVector,
    /// Successive diagonal entries `w_ii + d_i` of the eliminated `A + D`.
    pub pivots: Vec<f64>,
    /// `det(A + D)` assembled from the pivots.
    pub logdet: LogDet,
    /// `max |U_ij| / max |A_ij|` over the upper-triangular factor, with the
    /// signs already folded into the diagonal. Equals `+inf` only for `A = 0`.
    pub growth_factor: f64,
    /// Multiply-add count of the trailing updates.
    pub multiply_adds: u64,
}

impl SignatureResult {
    pub fn min_pivot_magnitude(&self) -> f64 {
        self.pivots
            .iter()
            .fold(f64::INFINITY, |m, p| m.min(p.abs()))
    }
}

/// Pivots per panel in [`choose_signature`].
const BLOCK: usize = 32;

/// Computes `D` with `|det(A + D)| >= 1` in `O(n^3)`.
///
/// The pivot rule is `d_i = +1` when `w_ii >= 0` and `-1` otherwise, so each
/// pivot has magnitude `|w_ii| + 1`. Fails only if `a` is not square.
pub fn choose_signature(a: &DenseMatrix) -> Result<SignatureResult> {
    let n = a.require_square()?;
    let mut w = a.as_slice().to_vec();
    let mut signs = Vec::with_capacity(n);
    let mut pivots = Vec::with_capacity(n);
    let mut log_abs = 0.0;
    let mut sign = 1i8;
    let mut max_u = 0.0f64;
    let mut multiply_adds = 0u64;

    // Blocked right-looking elimination: a panel of BLOCK pivots is applied to
    // each trailing row in one pass. Every entry still receives its updates in
    // pivot order, so the result matches the unblocked loop bit for bit.
    let mut k0 = 0;
    while k0 < n {
        let k1 = (k0 + BLOCK).min(n);
        for i in k0..k1 {
            let wii = w[i * n + i];
            let d: i8 = if wii >= 0.0 { 1 } else { -1 };
            let p = wii + f64::from(d);
            signs.push(d);
            pivots.push(p);
            log_abs += p.abs().ln();
            if p < 0.0 {
                sign = -sign;
            }

            let (head, tail) = w.split_at_mut((i + 1) * n);
            let pivot_row = &head[i * n..(i + 1) * n];
            max_u = pivot_row[i + 1..]
                .iter()
                .fold(max_u.max(p.abs()), |m, v| m.max(v.abs()));

            for r in 0..(n - i - 1) {
                let row = &mut tail[r * n..(r + 1) * n];
                let m = row[i] / p;
                // Column i below the pivot now holds the multiplier.
                row[i] = m;
                if m == 0.0 {
                    continue;
                }
                let end = if i + 1 + r < k1 { n } else { k1 };
                for (x, &y) in row[i + 1..end].iter_mut().zip(&pivot_row[i + 1..end]) {
                    *x -= m * y;
                }
                multiply_adds += (n - i - 1) as u64;
            }
        }

        let (head, tail) = w.split_at_mut(k1 * n);
        let panel = &head[k0 * n..];
        for row in tail.chunks_exact_mut(n) {
            for k in k0..k1 {
                let m = row[k];
                if m == 0.0 {
                    continue;
                }
                let u = &panel[(k - k0) * n + k1..(k - k0 + 1) * n];
                for (x, &y) in row[k1..].iter_mut().zip(u) {
                    *x -= m * y;
                }
            }
        }
        k0 = k1;
    }

    Ok(SignatureResult {
        signature: SignatureVector { signs },
        pivots,
        logdet: LogDet { sign, log_abs },
        growth_factor: max_u / a.max_abs(),
        multiply_adds,
    })
}

/// `D A`, computed by negating the rows where `d_i = -1`.
pub fn apply_signature(d: &SignatureVector, a: &DenseMatrix) -> Result<DenseMatrix> {
    if d.len() != a.rows() {
        return Err(Error::SignatureLength {
            signs: d.len(),
            rows: a.rows(),
        });
    }
    let mut out = a.clone();
    for i in 0..a.rows() {
        if d.is_negative(i) {
            out.row_mut(i).iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(out)
}

/// Independently evaluates `det(A + D)` and `det(DA + I)` by LU with partial
/// pivoting and checks that their magnitudes agree within `1e-8 * n` in log
/// domain. Returns `det(A + D)`; a magnitude below 1 is not an error here.
pub fn verify_signature(a: &DenseMatrix, d: &SignatureVector) -> Result<LogDet> {
    let n = a.require_square()?;
    if d.len() != n {
        return Err(Error::SignatureLength {
            signs: d.len(),
            rows: n,
        });
    }
    let lhs = logdet_lu(&a.add_diagonal(&d.to_f64())?)?;
    let rhs = logdet_lu(&apply_signature(d, a)?.add_scaled_identity(1.0)?)?;
    let agree = match (lhs.is_singular(), rhs.is_singular()) {
        (true, true) => true,
        (false, false) => (lhs.log_abs - rhs.log_abs).abs() <= 1e-8 * n as f64,
        _ => false,
    };
    if !agree {
        return Err(Error::Inconsistent {
            lhs: lhs.log_abs,
            rhs: rhs.log_abs,
        });
    }
    Ok(lhs)
}
