//! Gradient descent on the orthogonal group in Cayley charts.
//!
//! An iterate is a chart `(D, S)` representing `U = D (I - S)(I + S)^{-1}`.
//! Steps move `S` along the negative chart gradient with Armijo backtracking;
//! every `S` is skew, so every iterate is orthogonal up to solve round-off.
//! When `||S||_F` exceeds `recenter_tau` the chart is replaced by the
//! pivoted factorization of the current point, whose skew part obeys
//! `||S||_2 <= 1 + 2^n`.
//!
//! `det U` never changes during a run: `det (I - S)(I + S)^{-1} = 1` and
//! recentering keeps `U` fixed. A run therefore stays in the connected
//! component of `u0`.

use std::io::Write;

use crate::cayley::{cayley_transform, factor, CayleyFactorization, CayleyMode};
use crate::error::{Error, Result};
use crate::matrix::{frobenius_norm, matmul, orthogonality_residual, DenseMatrix, Lu};
use crate::signature::{apply_signature, SignatureVector};

/// Orthogonality tolerance (per dimension) for start points and recentering.
pub const ORTH_TOL: f64 = 1e-8;

/// Maximum number of step halvings in one line search.
pub const MAX_BACKTRACKS: usize = 60;

/// A smooth objective on `n x n` matrices with its Euclidean gradient.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value_grad(&self, u: &DenseMatrix) -> Result<(f64, DenseMatrix)>;

    fn value(&self, u: &DenseMatrix) -> Result<f64> {
        Ok(self.value_grad(u)?.0)
    }
}

/// `f(U) = ||U A - B||_F^2`.
#[derive(Clone, Debug)]
pub struct ProcrustesProblem {
    a: DenseMatrix,
    b: DenseMatrix,
}

impl ProcrustesProblem {
    pub fn new(a: DenseMatrix, b: DenseMatrix) -> Result<Self> {
        if a.shape() != b.shape() {
            return Err(Error::DimensionMismatch {
                op: "procrustes",
                left: a.shape(),
                right: b.shape(),
            });
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    fn residual(&self, u: &DenseMatrix) -> Result<DenseMatrix> {
        if u.shape() != (self.a.rows(), self.a.rows()) {
            return Err(Error::DimensionMismatch {
                op: "procrustes",
                left: u.shape(),
                right: self.a.shape(),
            });
        }
        matmul(u, &self.a)?.sub(&self.b)
    }
}

impl Objective for ProcrustesProblem {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn value_grad(&self, u: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
        procrustes_value_grad(self, u)
    }

    fn value(&self, u: &DenseMatrix) -> Result<f64> {
        Ok(sum_of_squares(&self.residual(u)?))
    }
}

/// `(||UA - B||_F^2, 2 (UA - B) A^T)`.
pub fn procrustes_value_grad(p: &ProcrustesProblem, u: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
    let r = p.residual(u)?;
    let f = sum_of_squares(&r);
    let g = matmul(&r, &p.a.transpose())?.scale(2.0);
    Ok((f, g))
}

fn sum_of_squares(m: &DenseMatrix) -> f64 {
    inner(m, m)
}

fn inner(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Recenter when `||S||_F` exceeds this.
    pub recenter_tau: f64,
    pub initial_step: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    /// Start each line search from the Barzilai-Borwein step
    /// `<dS, dS> / <dS, dG>` of the previous iteration instead of
    /// `initial_step`. Falls back to `initial_step` on the first iteration,
    /// after a recenter, and when the curvature estimate is not positive.
    pub bb_trial_step: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            grad_tol: 1e-8,
            recenter_tau: 10.0,
            initial_step: 1.0,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            bb_trial_step: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("recenter_tau", self.recenter_tau),
            ("initial_step", self.initial_step),
            ("armijo_c", self.armijo_c),
            ("backtrack_factor", self.backtrack_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        if self.backtrack_factor >= 1.0 {
            return Err(Error::Config(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            )));
        }
        Ok(())
    }
}

/// One optimizer iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartState {
    pub signature: SignatureVector,
    pub skew: DenseMatrix,
    pub objective_value: f64,
    pub gradient_norm: f64,
    pub recenter_count: usize,
    pub iteration: usize,
}

impl ChartState {
    /// Chart at `(D, S)` with no objective information yet.
    pub fn new(signature: SignatureVector, skew: DenseMatrix) -> Self {
        Self {
            signature,
            skew,
            objective_value: f64::NAN,
            gradient_norm: f64::NAN,
            recenter_count: 0,
            iteration: 0,
        }
    }

    /// Starting chart for `u0`: the plain Cayley chart (`D = I`) when
    /// `u0 + I` is invertible and reproduces `u0` within tolerance, else the
    /// pivoted factorization.
    pub fn from_orthogonal(u0: &DenseMatrix) -> Result<Self> {
        let n = u0.require_square()?;
        let f = factor(u0, ORTH_TOL)?;
        if let Ok(skew) = cayley_transform(u0, CayleyMode::Skew) {
            let plain = ChartState::new(SignatureVector::all_plus(n), skew);
            if let Ok(u) = plain.point() {
                if frobenius_norm(&u.sub(u0)?) <= ORTH_TOL * n as f64 {
                    return Ok(plain);
                }
            }
        }
        let (signature, skew) = f.into_parts();
        Ok(ChartState::new(signature, skew))
    }

    pub fn dim(&self) -> usize {
        self.skew.rows()
    }

    /// The represented orthogonal matrix.
    pub fn point(&self) -> Result<DenseMatrix> {
        point_of(&self.signature, &self.skew)
    }

    pub fn skew_norm(&self) -> f64 {
        frobenius_norm(&self.skew)
    }
}

fn point_of(signature: &SignatureVector, skew: &DenseMatrix) -> Result<DenseMatrix> {
    let core = cayley_transform(skew, CayleyMode::Raw)?;
    apply_signature(signature, &core)
}

/// Gradient of `S -> f(D (I - S)(I + S)^{-1})` with respect to the skew
/// coordinates, in the Frobenius inner product:
/// `Skew(-2 (I - S)^{-1} D G (I - S)^{-1})`.
pub fn chart_gradient(g_u: &DenseMatrix, state: &ChartState) -> Result<DenseMatrix> {
    let n = state.dim();
    if g_u.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            op: "chart_gradient",
            left: g_u.shape(),
            right: (n, n),
        });
    }
    let i_minus_s = DenseMatrix::identity(n).sub(&state.skew)?;
    let lu = Lu::factor(&i_minus_s)?;
    // Z = (I - S)^{-1} D G
    let z = lu.solve(&apply_signature(&state.signature, g_u)?)?;
    // Y = Z (I - S)^{-1}  <=>  (I - S)^T Y^T = Z^T
    let lu_t = Lu::factor(&i_minus_s.transpose())?;
    let y = lu_t.solve(&z.transpose())?.transpose();
    y.scale(-2.0).skew_part()
}

/// Moves the state to the pivoted chart of its current point.
pub fn recenter(state: &ChartState) -> Result<ChartState> {
    let u = state.point()?;
    let f = factor(&u, ORTH_TOL)?;
    let (signature, skew) = f.into_parts();
    Ok(ChartState {
        signature,
        skew,
        recenter_count: state.recenter_count + 1,
        ..state.clone()
    })
}

/// One row of the optimizer trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub skew_fro: f64,
    /// The chart was recentered just before this row was evaluated.
    pub recenter: bool,
    /// `||U^T U - I||_F` of this row's iterate. Not exported to CSV.
    pub orth_residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub const CSV_HEADER: &'static str = "iter,f,grad_norm,skew_fro,recenter";

    pub fn recenter_events(&self) -> usize {
        self.rows.iter().filter(|r| r.recenter).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{}",
                r.iter,
                r.f,
                r.grad_norm,
                r.skew_fro,
                u8::from(r.recenter)
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii")
    }
}

#[derive(Clone, Debug)]
pub struct Minimized {
    pub state: ChartState,
    pub trace: Trace,
    /// `||G_S||_F <= grad_tol` was reached before `max_iter`.
    pub converged: bool,
}

impl Minimized {
    pub fn point(&self) -> Result<DenseMatrix> {
        self.state.point()
    }

    pub fn factorization(&self) -> Result<CayleyFactorization> {
        CayleyFactorization::new(self.state.signature.clone(), self.state.skew.clone())
    }
}

/// Minimizes `obj` over the orthogonal group starting from `u0`.
pub fn minimize<O: Objective + ?Sized>(
    obj: &O,
    u0: &DenseMatrix,
    cfg: &OptimizerConfig,
) -> Result<Minimized> {
    cfg.validate()?;
    let n = u0.require_square()?;
    if n != obj.dim() {
        return Err(Error::DimensionMismatch {
            op: "minimize",
            left: u0.shape(),
            right: (obj.dim(), obj.dim()),
        });
    }
    let mut state = ChartState::from_orthogonal(u0)?;
    let mut trace = Trace::default();
    let mut recentered = false;
    if state.skew_norm() > cfg.recenter_tau {
        state = recenter(&state)?;
        recentered = true;
    }

    // (S_k - S_{k-1}, G_{k-1}) within the current chart.
    let mut last_step: Option<(DenseMatrix, DenseMatrix)> = None;

    for k in 0..=cfg.max_iter {
        let u = state.point()?;
        let (f, g_u) = obj.value_grad(&u)?;
        let g_s = chart_gradient(&g_u, &state)?;
        let gnorm = frobenius_norm(&g_s);
        state.objective_value = f;
        state.gradient_norm = gnorm;
        state.iteration = k;
        trace.rows.push(TraceRow {
            iter: k,
            f,
            grad_norm: gnorm,
            skew_fro: state.skew_norm(),
            recenter: recentered,
            orth_residual: orthogonality_residual(&u),
        });
        recentered = false;

        if gnorm <= cfg.grad_tol {
            return Ok(Minimized {
                state,
                trace,
                converged: true,
            });
        }
        if k == cfg.max_iter {
            break;
        }

        let slope = -gnorm * gnorm;
        let mut alpha = cfg.initial_step;
        if let Some((ds, g_prev)) = last_step.take() {
            if cfg.bb_trial_step {
                let dg = g_s.sub(&g_prev)?;
                let curvature = inner(&ds, &dg);
                if curvature > 0.0 {
                    alpha = inner(&ds, &ds) / curvature;
                }
            }
        }
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = state.skew.sub(&g_s.scale(alpha))?;
            let f_new = obj.value(&point_of(&state.signature, &candidate)?)?;
            if f_new <= f + cfg.armijo_c * alpha * slope {
                accepted = Some(candidate);
                break;
            }
            alpha *= cfg.backtrack_factor;
        }
        let Some(next) = accepted else {
            return Err(Error::Stagnation {
                iteration: k,
                backtracks: MAX_BACKTRACKS,
                trace: Box::new(trace),
            });
        };
        last_step = Some((next.sub(&state.skew)?, g_s));
        state.skew = next;
        if state.skew_norm() > cfg.recenter_tau {
            state = recenter(&state)?;
            recentered = true;
            last_step = None;
        }
    }

    Ok(Minimized {
        state,
        trace,
        converged: false,
    })
}

/// Planted Procrustes instance: `A` Gaussian, `B = Q A`. Returns the problem
/// and the minimizer `Q`. With `det_sign = Some(s)`, `Q` is adjusted (first
/// column negated) so that `det Q = s`.
pub fn planted_procrustes(
    n: usize,
    m: usize,
    seed: u64,
    det_sign: Option<i8>,
) -> Result<(ProcrustesProblem, DenseMatrix)> {
    let mut rng = crate::random::rng(seed);
    let a = crate::random::gaussian_matrix_from(&mut rng, n, m);
    let mut q = crate::random::random_orthogonal_from(&mut rng, n);
    if let Some(s) = det_sign {
        let current = crate::matrix::logdet_lu(&q)?.sign;
        if current != s {
            for i in 0..n {
                q[(i, 0)] = -q[(i, 0)];
            }
        }
    }
    let b = matmul(&q, &a)?;
    Ok((ProcrustesProblem::new(a, b)?, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::logdet_lu;
    use crate::random::{adversarial_orthogonal, gaussian_matrix, random_orthogonal};
    use std::f64::consts::PI;

    #[test]
    fn value_grad_at_planted_optimum() {
        let q = random_orthogonal(4, 1);
        let a = gaussian_matrix(4, 3, 2);
        let p = ProcrustesProblem::new(a.clone(), matmul(&q, &a).unwrap()).unwrap();
        let (f, g) = procrustes_value_grad(&p, &q).unwrap();
        assert!(f < 1e-28);
        assert!(g.max_abs() < 1e-14);
    }

    #[test]
    fn value_grad_by_hand() {
        let p = ProcrustesProblem::new(DenseMatrix::identity(2), DenseMatrix::zeros(2, 2)).unwrap();
        let (f, g) = procrustes_value_grad(&p, &DenseMatrix::identity(2)).unwrap();
        assert_eq!(f, 2.0);
        assert_eq!(g, DenseMatrix::identity(2).scale(2.0));
    }

    #[test]
    fn value_grad_finite_differences() {
        let p = ProcrustesProblem::new(gaussian_matrix(4, 5, 3), gaussian_matrix(4, 5, 4)).unwrap();
        let u = gaussian_matrix(4, 4, 5);
        let e = gaussian_matrix(4, 4, 6);
        let (_, g) = procrustes_value_grad(&p, &u).unwrap();
        let h = 1e-6;
        let fp = p.value(&u.add(&e.scale(h)).unwrap()).unwrap();
        let fm = p.value(&u.sub(&e.scale(h)).unwrap()).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        let exact: f64 = g
            .as_slice()
            .iter()
            .zip(e.as_slice())
            .map(|(x, y)| x * y)
            .sum();
        assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()));
    }

    #[test]
    fn value_grad_dimension_mismatch() {
        let p = ProcrustesProblem::new(DenseMatrix::identity(3), DenseMatrix::identity(3)).unwrap();
        assert!(procrustes_value_grad(&p, &DenseMatrix::identity(2)).is_err());
        assert!(
            ProcrustesProblem::new(DenseMatrix::identity(3), DenseMatrix::zeros(3, 2)).is_err()
        );
    }

    #[test]
    fn chart_gradient_trivial_cases() {
        let state = ChartState::new(SignatureVector::all_plus(3), DenseMatrix::zeros(3, 3));
        let zero = chart_gradient(&DenseMatrix::zeros(3, 3), &state).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        let g = gaussian_matrix(3, 3, 7);
        let got = chart_gradient(&g, &state).unwrap();
        let want = g.scale(-2.0).skew_part().unwrap();
        assert!(frobenius_norm(&got.sub(&want).unwrap()) < 1e-14);
    }

    #[test]
    fn recenter_identity_is_unchanged() {
        let state = ChartState::new(SignatureVector::all_plus(3), DenseMatrix::zeros(3, 3));
        let r = recenter(&state).unwrap();
        assert_eq!(r.signature, state.signature);
        assert_eq!(r.skew.max_abs(), 0.0);
        assert_eq!(r.recenter_count, 1);
    }

    #[test]
    fn recenter_near_half_turn() {
        let theta = PI - 0.01;
        let t = (theta / 2.0).tan();
        let skew = DenseMatrix::from_rows(&[[0.0, t], [-t, 0.0]]).unwrap();
        let state = ChartState::new(SignatureVector::all_plus(2), skew);
        assert!((t - 199.998_333).abs() < 1e-3);
        let u_before = state.point().unwrap();
        let (s, c) = theta.sin_cos();
        let rot = DenseMatrix::from_rows(&[[c, -s], [s, c]]).unwrap();
        assert!(frobenius_norm(&u_before.sub(&rot).unwrap()) < 1e-12);

        let after = recenter(&state).unwrap();
        assert_eq!(after.signature, SignatureVector::all_minus(2));
        assert!((after.skew[(0, 1)].abs() - 0.005f64.tan()).abs() < 1e-12);
        let u_after = after.point().unwrap();
        assert!(frobenius_norm(&u_after.sub(&u_before).unwrap()) <= 1e-8 * 2.0);
    }

    #[test]
    fn recenter_preserves_objective() {
        let (p, _) = planted_procrustes(5, 5, 3, None).unwrap();
        let u = adversarial_orthogonal(5, &[PI - 1e-3, 0.4], 8).unwrap();
        let state = ChartState::new(
            SignatureVector::all_plus(5),
            cayley_transform(&u, CayleyMode::Skew).unwrap(),
        );
        let after = recenter(&state).unwrap();
        let fb = p.value(&state.point().unwrap()).unwrap();
        let fa = p.value(&after.point().unwrap()).unwrap();
        assert!((fb - fa).abs() <= 1e-8 * (1.0 + fb.abs()));
        assert!(after.skew_norm() < state.skew_norm());
    }

    #[test]
    fn start_at_optimum_converges_immediately() {
        let (p, q) = planted_procrustes(6, 6, 11, None).unwrap();
        let out = minimize(&p, &q, &OptimizerConfig::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.state.iteration, 0);
        assert_eq!(out.trace.rows.len(), 1);
    }

    #[test]
    fn planted_problem_converges() {
        let u0 = random_orthogonal(6, 1);
        let det = logdet_lu(&u0).unwrap().sign;
        let (p, _) = planted_procrustes(6, 6, 2, Some(det)).unwrap();
        let out = minimize(&p, &u0, &OptimizerConfig::default()).unwrap();
        assert!(
            out.state.objective_value <= 1e-8,
            "{}",
            out.state.objective_value
        );
        for row in &out.trace.rows {
            assert!(row.orth_residual <= 1e-8 * 6.0);
        }
        for w in out.trace.rows.windows(2) {
            assert!(w[1].f <= w[0].f + 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        let bad = OptimizerConfig {
            backtrack_factor: 1.5,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = OptimizerConfig {
            grad_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        OptimizerConfig::default().validate().unwrap();
    }

    #[test]
    fn csv_export() {
        let mut t = Trace::default();
        t.rows.push(TraceRow {
            iter: 0,
            f: 1.5,
            grad_norm: 0.25,
            skew_fro: 0.0,
            recenter: true,
            orth_residual: 0.0,
        });
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iter,f,grad_norm,skew_fro,recenter"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "0");
        assert_eq!(row[1].parse::<f64>().unwrap(), 1.5);
        assert_eq!(row[4], "1");
    }
}
