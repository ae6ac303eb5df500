use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use orthocayley::codec::{read_blob, write_blob};
use orthocayley::io::format_matrix;
use orthocayley::random::gaussian_matrix;
use orthocayley::*;
use serde_json::{json, Value};

use crate::{
    Command, Failure, GenArgs, GenKind, OptimizeArgs, OracleObjective, Output, EXIT_OK,
    EXIT_PROPERTY,
};

type CmdResult = std::result::Result<Output, Failure>;

/// Largest size accepted by `gen` and `bench`.
pub const MAX_GEN_N: usize = 4096;

pub(crate) fn dispatch(cmd: &Command) -> CmdResult {
    match cmd {
        Command::Sign { input } => sign(input),
        Command::Factor {
            input,
            output,
            orth_tol,
        } => factor_cmd(input, output, *orth_tol),
        Command::Reconstruct { input, output } => reconstruct_cmd(input, output),
        Command::Verify { input } => verify(input),
        Command::Oracle { input, objective } => oracle(input, *objective),
        Command::Gen(args) => gen(args),
        Command::Optimize(args) => optimize(args),
        Command::Bench { sizes, reps, seed } => bench(sizes, *reps, *seed),
    }
}

fn ok(text: String, record: Value) -> CmdResult {
    Ok(Output {
        code: EXIT_OK,
        text,
        records: vec![record],
    })
}

fn signs_json(s: &SignatureVector) -> Value {
    Value::from(s.as_slice().to_vec())
}

fn sign(input: &Path) -> CmdResult {
    let a = read_matrix(input)?;
    let n = a.require_square()?;
    let r = choose_signature(&a)?;
    let lu = logdet_lu(&a.add_diagonal(&r.signature.to_f64())?)?;
    let cross = verify_signature(&a, &r.signature);
    let agree = lu.sign == r.logdet.sign
        && (lu.log_abs - r.logdet.log_abs).abs() <= 1e-6 * lu.log_abs.abs().max(1.0);

    let mut text = String::new();
    let _ = writeln!(text, "n: {n}");
    let _ = writeln!(text, "signs: {}", r.signature);
    let _ = writeln!(text, "log|det|: {:.4}", r.logdet.log_abs);
    let _ = writeln!(
        text,
        "log|det| via LU: {:.4} ({})",
        lu.log_abs,
        if agree { "agrees" } else { "MISMATCH" }
    );
    let _ = writeln!(text, "min |pivot|: {:.6e}", r.min_pivot_magnitude());
    let _ = writeln!(text, "growth factor: {:.6e}", r.growth_factor);
    let record = json!({
        "n": n,
        "signs": signs_json(&r.signature),
        "log_abs_det": r.logdet.log_abs,
        "det_sign": r.logdet.sign,
        "log_abs_det_lu": lu.log_abs,
        "min_pivot": r.min_pivot_magnitude(),
        "growth_factor": r.growth_factor,
        "multiply_adds": r.multiply_adds,
    });

    if let Err(error) = cross {
        return Err(Failure {
            error,
            text,
            record,
        });
    }
    let code = if r.logdet.log_abs < -1e-6 || !agree {
        EXIT_PROPERTY
    } else {
        EXIT_OK
    };
    Ok(Output {
        code,
        text,
        records: vec![record],
    })
}

fn factor_cmd(input: &Path, output: &Path, orth_tol: f64) -> CmdResult {
    let u = read_matrix(input)?;
    let f = factor(&u, orth_tol)?;
    write_blob(output, &f)?;
    let n = f.dim();
    let back = reconstruct(&f)?;
    let err = frobenius_norm(&back.sub(&u)?);
    let bytes = encoded_len(n);

    let mut text = String::new();
    let _ = writeln!(text, "n: {n}");
    let _ = writeln!(text, "signs: {}", f.signature());
    let _ = writeln!(text, "negative signs: {}", f.signature().negative_count());
    let _ = writeln!(text, "||S||_F: {:.6e}", frobenius_norm(f.skew()));
    let _ = writeln!(text, "max |S_ij|: {:.6e}", f.skew().max_abs());
    let _ = writeln!(text, "blob bytes: {bytes} (dense: {})", 8 * n * n);
    let _ = writeln!(text, "reconstruct error: {err:.6e}");
    let _ = writeln!(text, "wrote {}", output.display());
    ok(
        text,
        json!({
            "n": n,
            "signs": signs_json(f.signature()),
            "skew_fro": frobenius_norm(f.skew()),
            "skew_max_abs": f.skew().max_abs(),
            "blob_bytes": bytes,
            "dense_bytes": 8 * n * n,
            "reconstruct_error": err,
            "output": output.display().to_string(),
        }),
    )
}

fn reconstruct_cmd(input: &Path, output: &Path) -> CmdResult {
    let f = read_blob(input)?;
    let u = reconstruct(&f)?;
    write_matrix(output, &u)?;
    let residual = orthogonality_residual(&u);
    let mut text = String::new();
    let _ = writeln!(text, "n: {}", f.dim());
    let _ = writeln!(text, "signs: {}", f.signature());
    let _ = writeln!(text, "||U^T U - I||_F: {residual:.6e}");
    let _ = writeln!(text, "wrote {}", output.display());
    ok(
        text,
        json!({
            "n": f.dim(),
            "signs": signs_json(f.signature()),
            "orth_residual": residual,
            "output": output.display().to_string(),
        }),
    )
}

fn bound_record(r: &BoundReport) -> Value {
    json!({
        "n": r.n,
        "signs": signs_json(&r.signature),
        "log_abs_det_du_plus_i": r.logdet_du_plus_i.log_abs,
        "sigma_min_du_plus_i": r.sigma_min_du_plus_i,
        "sigma_min_bound": r.log_sigma_min_bound().exp(),
        "rho_s": r.rho_s,
        "log_rho_bound": r.log_rho_bound(),
        "rho_ratio": r.rho_ratio(),
        "det_ok": r.det_ok,
        "sigma_min_ok": r.sigma_min_ok,
        "rho_ok": r.rho_ok,
        "passed": r.passed(),
    })
}

fn verify(input: &Path) -> CmdResult {
    let u = read_matrix(input)?;
    let report = match check_bounds(&u) {
        Ok(r) => r,
        Err(Error::BoundViolation(r)) => {
            return Err(Failure {
                text: format!("{r}\n"),
                record: bound_record(&r),
                error: Error::BoundViolation(r),
            })
        }
        Err(e) => return Err(e.into()),
    };
    let f = factor(&u, DEFAULT_ORTH_TOL)?;
    let err = frobenius_norm(&reconstruct(&f)?.sub(&u)?);
    let tol = report.reconstruct_tolerance();
    let round_trip_ok = err <= tol;

    let mut text = format!("{report}\n");
    let _ = writeln!(
        text,
        "reconstruct error: {err:.6e} (<= {tol:.1e}) {}",
        if round_trip_ok { "ok" } else { "VIOLATED" }
    );
    let mut record = bound_record(&report);
    record["reconstruct_error"] = json!(err);
    record["reconstruct_tolerance"] = json!(tol);
    record["passed"] = json!(report.passed() && round_trip_ok);
    Ok(Output {
        code: if round_trip_ok {
            EXIT_OK
        } else {
            EXIT_PROPERTY
        },
        text,
        records: vec![record],
    })
}

fn oracle(input: &Path, objective: OracleObjective) -> CmdResult {
    let a = read_matrix(input)?;
    let n = a.require_square()?;
    let constructive = choose_signature(&a)?;
    let mut text = String::new();
    let _ = writeln!(text, "n: {n}");
    match objective {
        OracleObjective::Det => {
            let o = exhaustive_det(&a)?;
            let gap = o.gap(&constructive);
            let _ = writeln!(text, "best signs: {}", o.best_signature);
            let _ = writeln!(text, "best log|det|: {:.6}", o.best_logdet.log_abs);
            let _ = writeln!(
                text,
                "feasible signatures: {} of {}",
                o.count_feasible,
                1u64 << n
            );
            let _ = writeln!(text, "constructive signs: {}", constructive.signature);
            let _ = writeln!(
                text,
                "constructive log|det|: {:.6}",
                constructive.logdet.log_abs
            );
            let _ = writeln!(text, "gap: {gap:.6}");
            ok(
                text,
                json!({
                    "objective": "det",
                    "n": n,
                    "best_signs": signs_json(&o.best_signature),
                    "best_log_abs_det": o.best_logdet.log_abs,
                    "count_feasible": o.count_feasible,
                    "constructive_signs": signs_json(&constructive.signature),
                    "constructive_log_abs_det": constructive.logdet.log_abs,
                    "gap": gap,
                }),
            )
        }
        OracleObjective::Entrywise => {
            let o = exhaustive_entrywise(&a)?;
            let f = factor(&a, DEFAULT_ORTH_TOL)?;
            let constructive_max = f.skew().max_abs();
            let gap = constructive_max - o.best_max;
            let same = &o.best_signature == f.signature();
            let _ = writeln!(text, "best signs: {}", o.best_signature);
            let _ = writeln!(text, "best max |C(DU)_ij|: {:.6e}", o.best_max);
            let _ = writeln!(text, "skipped (DU + I singular): {}", o.skipped);
            let _ = writeln!(text, "constructive signs: {}", f.signature());
            let _ = writeln!(text, "constructive max |C(DU)_ij|: {constructive_max:.6e}");
            let _ = writeln!(text, "gap: {gap:.6e}");
            let _ = writeln!(text, "same signature: {}", if same { "yes" } else { "no" });
            let _ = writeln!(
                text,
                "best max <= 1: {}",
                if o.within_unit_interval() {
                    "yes"
                } else {
                    "no"
                }
            );
            let record = json!({
                "objective": "entrywise",
                "n": n,
                "best_signs": signs_json(&o.best_signature),
                "best_max_abs": o.best_max,
                "skipped": o.skipped,
                "constructive_signs": signs_json(f.signature()),
                "constructive_max_abs": constructive_max,
                "gap": gap,
                "same_signature": same,
                "within_unit_interval": o.within_unit_interval(),
            });
            Ok(Output {
                code: if o.within_unit_interval() {
                    EXIT_OK
                } else {
                    EXIT_PROPERTY
                },
                text,
                records: vec![record],
            })
        }
    }
}

fn check_size(what: &'static str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config(format!("{what}: n must be positive")));
    }
    if n > MAX_GEN_N {
        return Err(Error::SizeGuard {
            what,
            n,
            max: MAX_GEN_N,
        });
    }
    Ok(())
}

fn gen(args: &GenArgs) -> CmdResult {
    check_size("gen", args.n)?;
    let (kind, m) = if !args.angles.is_empty() {
        (
            "adversarial",
            adversarial_orthogonal(args.n, &args.angles, args.seed)?,
        )
    } else {
        match args.kind {
            GenKind::Haar => ("haar", random_orthogonal(args.n, args.seed)),
            GenKind::Gaussian => ("gaussian", gaussian_matrix(args.n, args.n, args.seed)),
        }
    };
    let mut record = json!({ "n": args.n, "seed": args.seed, "kind": kind, "angles": args.angles });
    let text = match &args.out {
        Some(path) => {
            write_matrix(path, &m)?;
            record["output"] = json!(path.display().to_string());
            format!(
                "wrote {} {}x{} matrix to {}\n",
                kind,
                args.n,
                args.n,
                path.display()
            )
        }
        None => {
            record["matrix"] = json!((0..m.rows()).map(|i| m.row(i).to_vec()).collect::<Vec<_>>());
            format_matrix(&m)
        }
    };
    ok(text, record)
}

fn write_trace(path: Option<&Path>, trace: &Trace) -> Result<()> {
    let Some(path) = path else { return Ok(()) };
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    trace.write_csv(std::io::BufWriter::new(file)).map_err(io)
}

fn optimize(args: &OptimizeArgs) -> CmdResult {
    let a = read_matrix(&args.a)?;
    let b = read_matrix(&args.b)?;
    let p = ProcrustesProblem::new(a, b)?;
    let u0 = match &args.u0 {
        Some(path) => read_matrix(path)?,
        None => DenseMatrix::identity(p.dim()),
    };
    let cfg = OptimizerConfig {
        max_iter: args.max_iter,
        recenter_tau: args.tau,
        grad_tol: args.grad_tol,
        ..Default::default()
    };
    let out = match minimize(&p, &u0, &cfg) {
        Ok(out) => out,
        Err(Error::Stagnation {
            iteration,
            backtracks,
            trace,
        }) => {
            write_trace(args.trace_out.as_deref(), &trace)?;
            let last = trace.rows.last();
            let text = format!(
                "stagnated at iteration {iteration}\nf: {:.6e}\n",
                last.map_or(f64::NAN, |r| r.f)
            );
            let record = json!({
                "iterations": iteration,
                "f": last.map(|r| r.f),
                "recenters": trace.recenter_events(),
            });
            return Err(Failure {
                error: Error::Stagnation {
                    iteration,
                    backtracks,
                    trace,
                },
                text,
                record,
            });
        }
        Err(e) => return Err(e.into()),
    };
    write_trace(args.trace_out.as_deref(), &out.trace)?;
    let u = out.point()?;
    if let Some(path) = &args.out {
        write_matrix(path, &u)?;
    }
    let s = &out.state;
    let residual = orthogonality_residual(&u);

    let mut text = String::new();
    let _ = writeln!(text, "f: {:.6e}", s.objective_value);
    let _ = writeln!(text, "iterations: {}", s.iteration);
    let _ = writeln!(text, "recenters: {}", s.recenter_count);
    let _ = writeln!(text, "grad norm: {:.6e}", s.gradient_norm);
    let _ = writeln!(
        text,
        "converged: {}",
        if out.converged { "yes" } else { "no" }
    );
    let _ = writeln!(text, "||U^T U - I||_F: {residual:.6e}");
    let _ = writeln!(text, "final signs: {}", s.signature);
    ok(
        text,
        json!({
            "f": s.objective_value,
            "iterations": s.iteration,
            "recenters": s.recenter_count,
            "grad_norm": s.gradient_norm,
            "converged": out.converged,
            "orth_residual": residual,
            "signs": signs_json(&s.signature),
        }),
    )
}

/// Median timings for one size.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub sign_median_s: f64,
    /// Ratio to the previous row; `None` for the first.
    pub sign_ratio: Option<f64>,
    pub factor_median_s: f64,
    pub factor_ratio: Option<f64>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn time<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    // Untimed warm-up so the first sample does not pay for cold caches.
    std::hint::black_box(f()?);
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        std::hint::black_box(f()?);
        samples.push(t.elapsed().as_secs_f64());
    }
    Ok(median(samples))
}

/// Times `choose_signature` on a Gaussian matrix and `factor` on a Haar
/// matrix for each size, `reps` runs each.
pub fn bench_rows(sizes: &[usize], reps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if sizes.is_empty() {
        return Err(Error::Config("bench: no sizes given".into()));
    }
    if reps == 0 {
        return Err(Error::Config("bench: reps must be positive".into()));
    }
    for &n in sizes {
        check_size("bench", n)?;
    }
    let mut rows: Vec<BenchRow> = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let a = gaussian_matrix(n, n, seed.wrapping_add(n as u64));
        let u = random_orthogonal(n, seed.wrapping_add(n as u64));
        let sign_median_s = time(reps, || choose_signature(&a))?;
        let factor_median_s = time(reps, || factor(&u, DEFAULT_ORTH_TOL))?;
        let prev = rows.last();
        rows.push(BenchRow {
            n,
            sign_median_s,
            sign_ratio: prev.map(|p| sign_median_s / p.sign_median_s),
            factor_median_s,
            factor_ratio: prev.map(|p| factor_median_s / p.factor_median_s),
        });
    }
    Ok(rows)
}

fn bench(sizes: &[usize], reps: usize, seed: u64) -> CmdResult {
    let rows = bench_rows(sizes, reps, seed)?;
    let ratio = |r: Option<f64>| r.map_or_else(|| "-".to_string(), |r| format!("{r:.2}"));
    let mut text = format!(
        "{:>6} {:>15} {:>10} {:>15} {:>12}\n",
        "n", "sign_median_s", "sign_ratio", "factor_median_s", "factor_ratio"
    );
    for r in &rows {
        let _ = writeln!(
            text,
            "{:>6} {:>15.6e} {:>10} {:>15.6e} {:>12}",
            r.n,
            r.sign_median_s,
            ratio(r.sign_ratio),
            r.factor_median_s,
            ratio(r.factor_ratio)
        );
    }
    let records = rows
        .iter()
        .map(|r| {
            json!({
                "n": r.n,
                "reps": reps,
                "sign_median_s": r.sign_median_s,
                "sign_ratio": r.sign_ratio,
                "factor_median_s": r.factor_median_s,
                "factor_ratio": r.factor_ratio,
            })
        })
        .collect();
    Ok(Output {
        code: EXIT_OK,
        text,
        records,
    })
}
