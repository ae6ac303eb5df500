//! Command-line front end for `orthocayley`.
//!
//! [`run`] parses arguments and executes one command, returning a
//! [`CommandOutcome`] instead of printing, so the binary and the tests share
//! the same code path.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use orthocayley::Error;
use serde_json::Value;

mod commands;

pub use commands::{bench_rows, BenchRow, MAX_GEN_N};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_PROPERTY: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "orthocayley",
    version,
    about = "Signature-pivoted Cayley factorization of orthogonal matrices"
)]
pub struct Cli {
    /// Emit JSON lines instead of the human-readable report.
    #[arg(long, global = true)]
    pub json: bool,

    /// Suppress the report on standard output. Errors still go to standard error.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Choose D with |det(A + D)| >= 1 and cross-check it.
    Sign { input: PathBuf },
    /// Factor an orthogonal matrix into a .cayc blob.
    Factor {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = orthocayley::DEFAULT_ORTH_TOL)]
        orth_tol: f64,
    },
    /// Rebuild the matrix stored in a .cayc blob.
    Reconstruct { input: PathBuf, output: PathBuf },
    /// Measure the factorization bounds for an orthogonal matrix.
    Verify { input: PathBuf },
    /// Exhaustive search over all 2^n signatures.
    Oracle {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = OracleObjective::Det)]
        objective: OracleObjective,
    },
    /// Write a random matrix.
    Gen(GenArgs),
    /// Orthogonal Procrustes by gradient descent in Cayley charts.
    Optimize(OptimizeArgs),
    /// Time choose_signature and factor over a range of sizes.
    Bench {
        /// Comma-separated matrix sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OracleObjective {
    /// Maximize |det(A + D)|.
    Det,
    /// Minimize max |C(DU)_ij| over orthogonal U.
    Entrywise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    /// Haar-distributed orthogonal matrix.
    Haar,
    /// Independent standard normal entries.
    Gaussian,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rotation angles for an adversarial orthogonal matrix, one 2x2 block each.
    #[arg(long, num_args = 1.., value_delimiter = ',', allow_negative_numbers = true)]
    pub angles: Vec<f64>,
    #[arg(long, value_enum, default_value_t = GenKind::Haar, conflicts_with = "angles")]
    pub kind: GenKind,
    /// Output file; the matrix is printed when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long = "a", visible_alias = "A")]
    pub a: PathBuf,
    #[arg(long = "b", visible_alias = "B")]
    pub b: PathBuf,
    /// Starting point; the identity when omitted.
    #[arg(long)]
    pub u0: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 10.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Write the final matrix here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Result of one command.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    /// Human-readable report for standard output.
    pub report: String,
    /// JSON lines, present when `--json` was given.
    pub machine_report: Option<String>,
    /// Error message for standard error.
    pub error: Option<String>,
    /// `--quiet` was given.
    pub quiet: bool,
}

impl CommandOutcome {
    /// The text the binary writes to standard output.
    pub fn stdout(&self) -> &str {
        match (&self.machine_report, self.quiet) {
            (Some(m), _) => m,
            (None, true) => "",
            (None, false) => &self.report,
        }
    }
}

/// Maps a library error to the exit-code contract.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Io { .. } | Error::Codec(_) => EXIT_IO,
        Error::BoundViolation(_)
        | Error::Stagnation { .. }
        | Error::Inconsistent { .. }
        | Error::NoFeasibleSignature { .. }
        | Error::NonConvergence { .. }
        | Error::EigenvalueMinusOne
        | Error::Singular { .. } => EXIT_PROPERTY,
        _ => EXIT_VALIDATION,
    }
}

/// Body of a command: a report plus JSON records, or an error with whatever
/// partial report was produced before it.
pub(crate) struct Output {
    pub code: i32,
    pub text: String,
    pub records: Vec<Value>,
}

pub(crate) struct Failure {
    pub error: Error,
    pub text: String,
    pub record: Value,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure {
            error,
            text: String::new(),
            record: Value::Object(Default::default()),
        }
    }
}

pub fn run<I, T>(args: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CommandOutcome {
                    exit_code: EXIT_OK,
                    report: text,
                    ..Default::default()
                },
                _ => CommandOutcome {
                    exit_code: EXIT_VALIDATION,
                    error: Some(text.trim_end().to_string()),
                    ..Default::default()
                },
            };
        }
    };
    execute(&cli)
}

pub fn execute(cli: &Cli) -> CommandOutcome {
    let name = command_name(&cli.command);
    let result = commands::dispatch(&cli.command);
    let (exit_code, report, mut records, error) = match result {
        Ok(out) => (out.code, out.text, out.records, None),
        Err(f) => {
            let code = exit_code_for(&f.error);
            let mut record = f.record;
            if let Value::Object(map) = &mut record {
                map.insert("error".into(), Value::String(f.error.to_string()));
            }
            (
                code,
                f.text,
                vec![record],
                Some(format!("error: {}", f.error)),
            )
        }
    };
    let machine_report = cli.json.then(|| {
        let mut lines = String::new();
        for rec in records.iter_mut() {
            let mut obj = serde_json::Map::new();
            obj.insert("command".into(), Value::String(name.into()));
            obj.insert("exit_code".into(), Value::from(exit_code));
            if let Value::Object(fields) = rec.take() {
                obj.extend(fields);
            }
            lines.push_str(&Value::Object(obj).to_string());
            lines.push('\n');
        }
        lines
    });
    CommandOutcome {
        exit_code,
        report,
        machine_report,
        error,
        quiet: cli.quiet,
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Sign { .. } => "sign",
        Command::Factor { .. } => "factor",
        Command::Reconstruct { .. } => "reconstruct",
        Command::Verify { .. } => "verify",
        Command::Oracle { .. } => "oracle",
        Command::Gen(_) => "gen",
        Command::Optimize(_) => "optimize",
        Command::Bench { .. } => "bench",
    }
}
