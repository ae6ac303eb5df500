//! Dense row-major matrices and the linear-algebra kernels the rest of the
//! crate is built on.
//!
//! Every inverse that appears in a formula is realized as a solve against an
//! LU factorization with partial pivoting; no explicit inverse is formed
//! anywhere. Determinants are carried as `(sign, ln|det|)` so that products
//! of many pivots of magnitude `>= 1` never overflow.

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative pivot threshold: a pivot below `PIVOT_RTOL * ||A||_F` marks `A`
/// as numerically singular.
pub const PIVOT_RTOL: f64 = 1e-13;

/// Default relative tolerance for [`spectral_norm`].
pub const SPECTRAL_TOL: f64 = 1e-10;

/// Default iteration cap for [`spectral_norm`].
pub const SPECTRAL_MAX_ITER: usize = 10_000;

/// A real `rows x cols` matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// All-zero matrix. Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(Error::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(Error::DataLength {
                    rows: nrows,
                    cols: ncols,
                    len: data.len() + r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(nrows, ncols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Returns the side length, or [`Error::NotSquare`].
    pub fn require_square(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    pub fn require_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::NonFinite {
                row: k / self.cols,
                col: k % self.cols,
            }),
            None => Ok(()),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    fn zip_with(
        &self,
        other: &Self,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self + diag(diag)` for a square matrix.
    pub fn add_diagonal(&self, diag: &[f64]) -> Result<Self> {
        let n = self.require_square()?;
        if diag.len() != n {
            return Err(Error::DimensionMismatch {
                op: "add_diagonal",
                left: self.shape(),
                right: (diag.len(), diag.len()),
            });
        }
        let mut out = self.clone();
        for (i, d) in diag.iter().enumerate() {
            out.data[i * n + i] += d;
        }
        Ok(out)
    }

    /// `self + s * I` for a square matrix.
    pub fn add_scaled_identity(&self, s: f64) -> Result<Self> {
        let n = self.require_square()?;
        let mut out = self.clone();
        for i in 0..n {
            out.data[i * n + i] += s;
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    /// `(X - X^T) / 2`, written so the result is exactly skew-symmetric in
    /// floating point: `out[j][i] == 0.0 - out[i][j]` bit for bit and the
    /// diagonal is `+0.0`.
    pub fn skew_part(&self) -> Result<Self> {
        let n = self.require_square()?;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (self.data[i * n + j] - self.data[j * n + i]) * 0.5;
                out.data[i * n + j] = v;
                out.data[j * n + i] = 0.0 - v;
            }
        }
        Ok(out)
    }

    /// `||S + S^T||_F`.
    pub fn skew_residual(&self) -> f64 {
        let n = self.rows.min(self.cols);
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = self.data[i * self.cols + j] + self.data[j * self.cols + i];
                acc += v * v;
            }
        }
        acc.sqrt()
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// A determinant in log domain: `det = sign * exp(log_abs)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogDet {
    /// -1, 0 or +1; zero iff the matrix is numerically singular.
    pub sign: i8,
    /// `ln|det|`; `-inf` when `sign == 0`.
    pub log_abs: f64,
}

impl LogDet {
    pub const SINGULAR: LogDet = LogDet {
        sign: 0,
        log_abs: f64::NEG_INFINITY,
    };

    pub fn is_singular(&self) -> bool {
        self.sign == 0
    }

    /// The determinant in linear domain. Overflows to `±inf` for large `log_abs`.
    pub fn value(&self) -> f64 {
        f64::from(self.sign) * self.log_abs.exp()
    }
}

pub fn frobenius_norm(a: &DenseMatrix) -> f64 {
    a.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (n, m) = (a.rows, b.cols);
    let mut c = DenseMatrix::zeros(n, m);
    for i in 0..n {
        let out = &mut c.data[i * m..(i + 1) * m];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(c)
}

/// `||U^T U - I||_F`.
pub fn orthogonality_residual(u: &DenseMatrix) -> f64 {
    let (r, c) = u.shape();
    let mut gram = vec![0.0; c * c];
    for k in 0..r {
        let row = u.row(k);
        for (i, &ui) in row.iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            for (g, &uj) in gram[i * c..(i + 1) * c].iter_mut().zip(row) {
                *g += ui * uj;
            }
        }
    }
    for i in 0..c {
        gram[i * c + i] -= 1.0;
    }
    gram.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// LU factorization `P A = L U` with partial pivoting. `L` is unit lower
/// triangular and shares storage with `U`.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    factors: Vec<f64>,
    perm: Vec<usize>,
    perm_sign: i8,
}

enum Factored {
    Ok(Lu),
    Singular {
        col: usize,
        pivot: f64,
        threshold: f64,
    },
}

fn factor_in_place(a: &DenseMatrix) -> Result<Factored> {
    let n = a.require_square()?;
    let threshold = PIVOT_RTOL * frobenius_norm(a);
    let mut w = a.data.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut perm_sign = 1i8;

    for k in 0..n {
        let (mut p, mut best) = (k, w[k * n + k].abs());
        for r in (k + 1)..n {
            let v = w[r * n + k].abs();
            if v > best {
                best = v;
                p = r;
            }
        }
        if p != k {
            for j in 0..n {
                w.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
            perm_sign = -perm_sign;
        }
        // `!(x > t)` also catches NaN pivots.
        if !(best > threshold) || best == 0.0 {
            let pivot = w[k * n + k];
            return Ok(Factored::Singular {
                col: k,
                pivot,
                threshold,
            });
        }
        let pivot = w[k * n + k];
        let (head, tail) = w.split_at_mut((k + 1) * n);
        let pivot_row = &head[k * n..];
        for r in 0..(n - k - 1) {
            let row = &mut tail[r * n..(r + 1) * n];
            let m = row[k] / pivot;
            row[k] = m;
            if m == 0.0 {
                continue;
            }
            for (x, &y) in row[k + 1..].iter_mut().zip(&pivot_row[k + 1..]) {
                *x -= m * y;
            }
        }
    }
    Ok(Factored::Ok(Lu {
        n,
        factors: w,
        perm,
        perm_sign,
    }))
}

impl Lu {
    /// Factors `a`, failing with [`Error::Singular`] when a pivot magnitude
    /// falls below `1e-13 * ||a||_F`.
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        match factor_in_place(a)? {
            Factored::Ok(lu) => Ok(lu),
            Factored::Singular {
                col,
                pivot,
                threshold,
                ..
            } => Err(Error::Singular {
                col,
                pivot,
                threshold,
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn logdet(&self) -> LogDet {
        let n = self.n;
        let mut sign = self.perm_sign;
        let mut log_abs = 0.0;
        for i in 0..n {
            let p = self.factors[i * n + i];
            if p < 0.0 {
                sign = -sign;
            }
            log_abs += p.abs().ln();
        }
        LogDet { sign, log_abs }
    }

    /// Solves `A x = b` in place.
    pub fn solve_vec(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.factors[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.factors[i * n..(i + 1) * n];
            let s: f64 = row[i + 1..]
                .iter()
                .zip(&x[i + 1..])
                .map(|(u, v)| u * v)
                .sum();
            x[i] = (x[i] - s) / row[i];
        }
        b.copy_from_slice(&x);
    }

    /// Solves `A^T x = b` in place.
    pub fn solve_transpose_vec(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        // A^T = U^T L^T P, so solve U^T y = b, L^T z = y, x = P^T z.
        let mut y = b.to_vec();
        for i in 0..n {
            y[i] /= self.factors[i * n + i];
            let yi = y[i];
            for j in (i + 1)..n {
                y[j] -= self.factors[i * n + j] * yi;
            }
        }
        for i in (0..n).rev() {
            let yi = y[i];
            for j in 0..i {
                y[j] -= self.factors[i * n + j] * yi;
            }
        }
        for (i, &p) in self.perm.iter().enumerate() {
            b[p] = y[i];
        }
    }

    /// Solves `A X = B` for a matrix right-hand side.
    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let n = self.n;
        if b.rows != n {
            return Err(Error::DimensionMismatch {
                op: "solve",
                left: (n, n),
                right: b.shape(),
            });
        }
        let m = b.cols;
        let mut x = DenseMatrix::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            x.row_mut(i).copy_from_slice(b.row(p));
        }
        for i in 0..n {
            let (done, rest) = x.data.split_at_mut(i * m);
            let xi = &mut rest[..m];
            for k in 0..i {
                let l = self.factors[i * n + k];
                if l == 0.0 {
                    continue;
                }
                for (t, &s) in xi.iter_mut().zip(&done[k * m..(k + 1) * m]) {
                    *t -= l * s;
                }
            }
        }
        for i in (0..n).rev() {
            let (head, rest) = x.data.split_at_mut((i + 1) * m);
            let xi = &mut head[i * m..];
            for k in (i + 1)..n {
                let u = self.factors[i * n + k];
                if u == 0.0 {
                    continue;
                }
                let off = (k - i - 1) * m;
                for (t, &s) in xi.iter_mut().zip(&rest[off..off + m]) {
                    *t -= u * s;
                }
            }
            let d = self.factors[i * n + i];
            for t in xi.iter_mut() {
                *t /= d;
            }
        }
        Ok(x)
    }
}

/// Solves `a X = b` by LU with partial pivoting.
pub fn solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    Lu::factor(a)?.solve(b)
}

/// Determinant of `a` via LU with partial pivoting. Never fails on
/// singular input; it reports `sign == 0` instead.
pub fn logdet_lu(a: &DenseMatrix) -> Result<LogDet> {
    Ok(match factor_in_place(a)? {
        Factored::Ok(lu) => lu.logdet(),
        Factored::Singular { .. } => LogDet::SINGULAR,
    })
}

/// Largest eigenvalue of a symmetric positive semidefinite operator given
/// only through its action `y = M x`, by power iteration with a Rayleigh
/// quotient estimate. Stops when two successive estimates agree to
/// relative `tol`.
pub fn power_iteration<F>(dim: usize, tol: f64, max_iter: usize, mut apply: F) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    if !(tol > 0.0) {
        return Err(Error::Config(format!(
            "power iteration tolerance must be positive, got {tol}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x00C0_FFEE);
    let mut x: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut y = vec![0.0; dim];
    let mut prev = f64::NAN;
    let mut lambda = 0.0;
    for it in 0..max_iter {
        apply(&x, &mut y)?;
        lambda = dot(&x, &y);
        let ny = norm(&y);
        if ny == 0.0 {
            return Ok(0.0);
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
        if it > 0 && (lambda - prev).abs() <= tol * lambda.abs() {
            return Ok(lambda);
        }
        prev = lambda;
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        estimate: lambda,
    })
}

/// Largest singular value `sigma_max(a)` by power iteration on `a^T a`.
pub fn spectral_norm(a: &DenseMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    let (r, c) = a.shape();
    let mut tmp = vec![0.0; r];
    let res = power_iteration(c, tol, max_iter, |x, y| {
        for i in 0..r {
            tmp[i] = dot(a.row(i), x);
        }
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..r {
            let t = tmp[i];
            for (yj, &aij) in y.iter_mut().zip(a.row(i)) {
                *yj += aij * t;
            }
        }
        Ok(())
    });
    match res {
        Ok(l) => Ok(l.max(0.0).sqrt()),
        Err(Error::NonConvergence {
            iterations,
            estimate,
        }) => Err(Error::NonConvergence {
            iterations,
            estimate: estimate.max(0.0).sqrt(),
        }),
        Err(e) => Err(e),
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
