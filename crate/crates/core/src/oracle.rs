//! Exhaustive search over all `2^n` signature matrices.
//!
//! Candidates are visited in reflected Gray-code order, so consecutive
//! candidates differ in one sign and the working matrix is updated in place
//! (one diagonal entry or one row). Every candidate's determinant is still
//! recomputed from scratch with [`logdet_lu`]. Ties are broken towards the
//! lexicographically smallest sign vector, with `+1 < -1`.

use crate::cayley::{cayley_transform, CayleyMode};
use crate::error::{Error, Result};
use crate::matrix::{logdet_lu, orthogonality_residual, DenseMatrix, LogDet};
use crate::signature::{SignatureResult, SignatureVector};

pub const MAX_DET_N: usize = 20;
pub const MAX_ENTRYWISE_N: usize = 16;

/// `|det(A + D)| >= 1 - FEASIBLE_SLACK` counts as feasible.
pub const FEASIBLE_SLACK: f64 = 1e-6;

/// Objective values closer than this are treated as ties.
const TIE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DetOracle {
    pub best_signature: SignatureVector,
    pub best_logdet: LogDet,
    /// Number of signatures with `|det(A + D)| >= 1 - 1e-6`.
    pub count_feasible: u64,
}

impl DetOracle {
    /// `ln|det|` of the best signature minus that of the constructive one.
    pub fn gap(&self, constructive: &SignatureResult) -> f64 {
        self.best_logdet.log_abs - constructive.logdet.log_abs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntrywiseOracle {
    pub best_signature: SignatureVector,
    /// `min_D max_ij |C(DU)_ij|` over signatures where `C(DU)` exists.
    pub best_max: f64,
    /// Signatures skipped because `DU + I` is singular.
    pub skipped: u64,
}

impl EntrywiseOracle {
    pub fn within_unit_interval(&self) -> bool {
        self.best_max <= 1.0 + 1e-6
    }
}

/// Combined oracle output for one matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub det: DetOracle,
    /// Present only when requested for an orthogonal input.
    pub entrywise: Option<EntrywiseOracle>,
}

pub fn oracle_report(a: &DenseMatrix, entrywise: bool) -> Result<OracleReport> {
    let det = exhaustive_det(a)?;
    let entrywise = if entrywise {
        Some(exhaustive_entrywise(a)?)
    } else {
        None
    };
    Ok(OracleReport { det, entrywise })
}

/// Gray-code walk over masks `0..2^n`; yields `(mask, flipped_bit)` where
/// `flipped_bit` is `None` for the first mask.
fn gray_walk(n: usize) -> impl Iterator<Item = (u64, Option<usize>)> {
    (0u64..1 << n).map(|k| {
        let mask = k ^ (k >> 1);
        let flipped = (k > 0).then(|| k.trailing_zeros() as usize);
        (mask, flipped)
    })
}

/// Lexicographic rank of a mask: index 0 is the most significant sign.
fn lex_key(mask: u64, n: usize) -> u64 {
    (0..n).fold(0, |key, i| (key << 1) | (mask >> i & 1))
}

/// Tracks the best candidate under `higher is better` with lexicographic ties.
struct Best {
    value: f64,
    key: u64,
    mask: u64,
}

impl Best {
    fn offer(slot: &mut Option<Best>, value: f64, mask: u64, n: usize) {
        let key = lex_key(mask, n);
        let replace = match slot {
            None => true,
            Some(b) => {
                if value > b.value + TIE {
                    true
                } else if (value - b.value).abs() <= TIE || value == b.value {
                    key < b.key
                } else {
                    false
                }
            }
        };
        if replace {
            *slot = Some(Best { value, key, mask });
        }
    }
}

fn guard(what: &'static str, n: usize, max: usize) -> Result<()> {
    if n > max {
        Err(Error::SizeGuard { what, n, max })
    } else {
        Ok(())
    }
}

/// Maximizes `|det(A + D)|` over all `2^n` signatures and counts the
/// feasible ones. Fails if none is feasible, which would contradict the
/// existence guarantee.
pub fn exhaustive_det(a: &DenseMatrix) -> Result<DetOracle> {
    let n = a.require_square()?;
    guard("exhaustive determinant search", n, MAX_DET_N)?;
    let feasible_floor = (1.0 - FEASIBLE_SLACK).ln();

    let mut work = a.add_scaled_identity(1.0)?;
    let mut best: Option<Best> = None;
    let mut best_logdet = LogDet::SINGULAR;
    let mut count_feasible = 0u64;

    for (mask, flipped) in gray_walk(n) {
        if let Some(i) = flipped {
            let now_negative = mask >> i & 1 == 1;
            work[(i, i)] = a[(i, i)] + if now_negative { -1.0 } else { 1.0 };
        }
        let ld = logdet_lu(&work)?;
        if !ld.is_singular() && ld.log_abs >= feasible_floor {
            count_feasible += 1;
        }
        let before = best.as_ref().map(|b| b.mask);
        Best::offer(&mut best, ld.log_abs, mask, n);
        if best.as_ref().map(|b| b.mask) != before {
            best_logdet = ld;
        }
    }

    if count_feasible == 0 {
        return Err(Error::NoFeasibleSignature { n });
    }
    let best = best.expect("at least one candidate");
    Ok(DetOracle {
        best_signature: SignatureVector::from_mask(best.mask, n),
        best_logdet,
        count_feasible,
    })
}

/// Minimizes `max_ij |C(DU)_ij|` over all signatures for which `DU + I` is
/// nonsingular.
pub fn exhaustive_entrywise(u: &DenseMatrix) -> Result<EntrywiseOracle> {
    let n = u.require_square()?;
    guard("exhaustive entrywise search", n, MAX_ENTRYWISE_N)?;
    u.require_finite()?;
    let residual = orthogonality_residual(u);
    let tolerance = 1e-8 * n as f64;
    if !(residual <= tolerance) {
        return Err(Error::NotOrthogonal {
            residual,
            tolerance,
        });
    }

    let mut du = u.clone();
    let mut best: Option<Best> = None;
    let mut skipped = 0u64;

    for (mask, flipped) in gray_walk(n) {
        if let Some(i) = flipped {
            du.row_mut(i).iter_mut().for_each(|v| *v = -*v);
        }
        if logdet_lu(&du.add_scaled_identity(1.0)?)?.is_singular() {
            skipped += 1;
            continue;
        }
        let c = match cayley_transform(&du, CayleyMode::Skew) {
            Ok(c) => c,
            Err(Error::EigenvalueMinusOne) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        // Maximize the negated objective so `Best` can be shared.
        Best::offer(&mut best, -c.max_abs(), mask, n);
    }

    // D = I or D = -I leaves at least one candidate for every orthogonal U,
    // since the existence guarantee yields a nonsingular DU + I.
    let best = best.ok_or(Error::NoFeasibleSignature { n })?;
    Ok(EntrywiseOracle {
        best_signature: SignatureVector::from_mask(best.mask, n),
        best_max: -best.value,
        skipped,
    })
}
