//! Seeded matrix generators.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)` (crate
//! `rand_chacha`) with standard normals drawn through
//! `rand_distr::StandardNormal`, so a given `(n, seed)` always reproduces the
//! same matrix bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{matmul, DenseMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `rows x cols` matrix of i.i.d. standard normals.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    gaussian_matrix_from(&mut rng(seed), rows, cols)
}

pub fn gaussian_matrix_from(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    DenseMatrix::from_vec(rows, cols, data).expect("positive dimensions")
}

/// Householder QR of a square matrix. Returns `(Q, diag(R))`.
fn householder_qr(a: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
    let n = a.rows();
    let mut r = a.clone();
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);

    for k in 0..n {
        let x: Vec<f64> = (k..n).map(|i| r[(i, k)]).collect();
        let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        v.iter_mut().for_each(|t| *t /= vnorm);
        for j in k..n {
            let s: f64 = v.iter().enumerate().map(|(t, vt)| vt * r[(k + t, j)]).sum();
            for (t, vt) in v.iter().enumerate() {
                r[(k + t, j)] -= 2.0 * vt * s;
            }
        }
        reflectors.push(Some(v));
    }

    // Q = H_0 H_1 ... H_{n-1}, accumulated right to left onto the identity.
    let mut q = DenseMatrix::identity(n);
    for (k, v) in reflectors.iter().enumerate().rev() {
        let Some(v) = v else { continue };
        for j in 0..n {
            let s: f64 = v.iter().enumerate().map(|(t, vt)| vt * q[(k + t, j)]).sum();
            for (t, vt) in v.iter().enumerate() {
                q[(k + t, j)] -= 2.0 * vt * s;
            }
        }
    }
    let diag = (0..n).map(|i| r[(i, i)]).collect();
    (q, diag)
}

/// Haar-distributed orthogonal `n x n` matrix: QR of a Gaussian matrix with
/// column `j` of `Q` multiplied by `sign(R_jj)`.
pub fn random_orthogonal(n: usize, seed: u64) -> DenseMatrix {
    random_orthogonal_from(&mut rng(seed), n)
}

pub fn random_orthogonal_from(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let g = gaussian_matrix_from(rng, n, n);
    let (mut q, diag) = householder_qr(&g);
    for (j, d) in diag.iter().enumerate() {
        if *d < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// `Q B Q^T` where `B` carries one 2x2 rotation block per angle (the rest of
/// the diagonal is +1) and `Q = random_orthogonal(n, seed)`. The result has
/// eigenvalues `exp(±i*theta)` for every requested `theta`.
pub fn adversarial_orthogonal(n: usize, angles: &[f64], seed: u64) -> Result<DenseMatrix> {
    let needed = 2 * angles.len();
    if needed > n || n == 0 {
        return Err(Error::TooManyAngles {
            angles: angles.len(),
            needed: needed.max(1),
            n,
        });
    }
    let mut b = DenseMatrix::identity(n);
    for (k, &theta) in angles.iter().enumerate() {
        let (s, c) = theta.sin_cos();
        let i = 2 * k;
        b[(i, i)] = c;
        b[(i, i + 1)] = -s;
        b[(i + 1, i)] = s;
        b[(i + 1, i + 1)] = c;
    }
    let q = random_orthogonal(n, seed);
    matmul(&matmul(&q, &b)?, &q.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{logdet_lu, orthogonality_residual};
    use std::f64::consts::PI;

    #[test]
    fn haar_is_orthogonal() {
        let u = random_orthogonal(16, 1);
        assert!(orthogonality_residual(&u) <= 1e-12 * 16.0);
    }

    #[test]
    fn haar_unit_determinant() {
        let d = logdet_lu(&random_orthogonal(8, 7)).unwrap();
        assert!(d.log_abs.exp() - 1.0 <= 1e-10 && 1.0 - d.log_abs.exp() <= 1e-10);
    }

    #[test]
    fn haar_is_deterministic() {
        let a = random_orthogonal(9, 42);
        let b = random_orthogonal(9, 42);
        let bits = |m: &DenseMatrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&random_orthogonal(9, 43)));
    }

    #[test]
    fn haar_sign_corrected_mean() {
        let mut rng = rng(2024);
        let mean = (0..1000)
            .map(|_| random_orthogonal_from(&mut rng, 2)[(0, 0)])
            .sum::<f64>()
            / 1000.0;
        assert!(mean.abs() <= 0.1, "mean {mean}");
    }

    #[test]
    fn haar_one_by_one() {
        for seed in 0..10 {
            let u = random_orthogonal(1, seed);
            assert_eq!(u[(0, 0)].abs(), 1.0);
        }
    }

    #[test]
    fn adversarial_rotation_by_pi_is_minus_identity() {
        let u = adversarial_orthogonal(2, &[PI], 5).unwrap();
        let err = u.add(&DenseMatrix::identity(2)).unwrap().max_abs();
        assert!(err < 1e-14, "{u:?}");
    }

    #[test]
    fn adversarial_quarter_turn_has_eigenvalues_pm_i() {
        // 2x2 real matrix with trace 0 and det 1 has characteristic polynomial x^2 + 1.
        let u = adversarial_orthogonal(2, &[PI / 2.0], 11).unwrap();
        assert!((u[(0, 0)] + u[(1, 1)]).abs() < 1e-12);
        let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
        assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adversarial_near_pi_nearly_singular_shift() {
        let u = adversarial_orthogonal(4, &[PI - 1e-3], 3).unwrap();
        let d = logdet_lu(&u.add_scaled_identity(1.0).unwrap()).unwrap();
        assert!(d.value().abs() < 1e-2);
        // Exact value: 4 * |1 + e^{i theta}|^2 = 16 sin^2(5e-4).
        let exact = 16.0 * (5e-4f64).sin().powi(2);
        assert!((d.value() - exact).abs() < 1e-9);
    }

    #[test]
    fn adversarial_too_many_angles() {
        assert!(matches!(
            adversarial_orthogonal(3, &[PI, PI], 0),
            Err(Error::TooManyAngles { .. })
        ));
    }
}
