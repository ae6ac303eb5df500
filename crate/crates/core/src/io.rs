//! Plain-text matrix files.
//!
//! Line 1 holds `rows cols`; each following line holds one row of
//! whitespace-separated reals. Values are written with 17 significant digits
//! so a write/read cycle is lossless.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub fn format_matrix(a: &DenseMatrix) -> String {
    let mut out = String::with_capacity(a.rows() * a.cols() * 25 + 16);
    let _ = writeln!(out, "{} {}", a.rows(), a.cols());
    for i in 0..a.rows() {
        let mut first = true;
        for v in a.row(i) {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v:.16e}");
        }
        out.push('\n');
    }
    out
}

/// Parses the text format. `origin` only labels error messages.
pub fn parse_matrix(text: &str, origin: &Path) -> Result<DenseMatrix> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    let parse_dim = |s: &str| s.parse::<usize>().ok().filter(|&d| d > 0);
    let (rows, cols) = match dims.as_slice() {
        [r, c] => match (parse_dim(r), parse_dim(c)) {
            (Some(r), Some(c)) => (r, c),
            _ => return Err(err(1, format!("malformed header {header:?}"))),
        },
        _ => return Err(err(1, format!("malformed header {header:?}"))),
    };

    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if seen == rows {
            if line.trim().is_empty() {
                continue;
            }
            return Err(err(
                lineno,
                format!("expected {rows} rows, found extra data"),
            ));
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| err(lineno, format!("non-numeric token {tok:?}")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("non-finite value {tok:?}")));
            }
            data.push(v);
        }
        let found = data.len() - before;
        if found != cols {
            return Err(err(
                lineno,
                format!("row has {found} entries, expected {cols}"),
            ));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(err(seen + 2, format!("expected {rows} rows, found {seen}")));
    }
    DenseMatrix::from_vec(rows, cols, data)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_matrix(&text, path)
}

pub fn write_matrix(path: impl AsRef<Path>, a: &DenseMatrix) -> Result<()> {
    let path = path.as_ref();
    a.require_finite()?;
    std::fs::write(path, format_matrix(a)).map_err(|source| Error::Io {
        path: PathBuf::from(path),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::gaussian_matrix;

    fn parse(s: &str) -> Result<DenseMatrix> {
        parse_matrix(s, Path::new("<mem>"))
    }

    #[test]
    fn identity_round_trip_exact() {
        let i3 = DenseMatrix::identity(3);
        assert_eq!(parse(&format_matrix(&i3)).unwrap(), i3);
    }

    #[test]
    fn parses_format_definition() {
        let a = parse("2 2\n0 1\n1 0\n").unwrap();
        assert_eq!(a, DenseMatrix::from_rows(&[[0., 1.], [1., 0.]]).unwrap());
        let b = parse("1 3\n1e-3 -2.5E2 +7\n").unwrap();
        assert_eq!(b.as_slice(), &[1e-3, -250.0, 7.0]);
    }

    #[test]
    fn random_round_trip_is_lossless() {
        let a = gaussian_matrix(5, 3, 77).scale(1e7);
        let b = parse(&format_matrix(&a)).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!(((x - y) / x).abs() <= 1e-15);
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            "",
            "2\n1 2\n",
            "2 x\n",
            "0 2\n",
            "2 2\n1 2\n3\n",
            "2 2\n1 2\n3 four\n",
            "1 1\nnan\n",
            "1 1\ninf\n",
            "2 2\n1 2\n",
            "1 1\n1\n2\n",
        ] {
            assert!(
                matches!(parse(bad), Err(Error::Parse { .. })),
                "accepted {bad:?}"
            );
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("orthocayley-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.txt");
        let a = gaussian_matrix(4, 4, 5);
        write_matrix(&path, &a).unwrap();
        assert_eq!(read_matrix(&path).unwrap(), a);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
