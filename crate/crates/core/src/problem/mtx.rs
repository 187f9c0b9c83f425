//! Matrix Market coordinate files and plain-text vector files.
//!
//! Vector files hold the entry count on the first line followed by one
//! decimal value per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::{csr_from_triplets, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

/// Reads a real (or integer) coordinate Matrix Market file.
///
/// `symmetric` files are expanded by mirroring off-diagonal entries. Matrices
/// stored as `general` are taken as-is, with no symmetry assumed.
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_market(&text, path)
}

pub fn parse_matrix_market(text: &str, path: &Path) -> Result<SparseMatrix> {
    let malformed = |line: usize, message: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(1, "empty file".into()))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.first().map(String::as_str) != Some("%%matrixmarket") || tokens.len() < 5 {
        return Err(malformed(1, format!("bad header `{header}`")));
    }
    if tokens[1] != "matrix" {
        return Err(Error::UnsupportedFormat(tokens[1].clone()));
    }
    if tokens[2] != "coordinate" {
        return Err(Error::UnsupportedFormat(tokens[2].clone()));
    }
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(Error::UnsupportedFormat(format!("field {other}"))),
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(Error::UnsupportedFormat(format!("symmetry {other}"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });

    let (size_line, size) = body
        .next()
        .ok_or_else(|| malformed(2, "missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| malformed(size_line, format!("bad size line: {e}")))?;
    let [n_rows, n_cols, nnz] = dims[..] else {
        return Err(malformed(size_line, "size line needs rows, cols, entries".into()));
    };

    let mut triplets = Vec::with_capacity(match symmetry {
        Symmetry::General => nnz,
        Symmetry::Symmetric => 2 * nnz,
    });
    let mut seen = 0usize;
    for (line_no, line) in body {
        seen += 1;
        if seen > nnz {
            return Err(malformed(line_no, format!("more than the declared {nnz} entries")));
        }
        let mut it = line.split_whitespace();
        let (Some(i), Some(j), Some(v), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(malformed(line_no, format!("expected `row col value`, got `{line}`")));
        };
        let i: usize = i.parse().map_err(|e| malformed(line_no, format!("row index: {e}")))?;
        let j: usize = j.parse().map_err(|e| malformed(line_no, format!("column index: {e}")))?;
        let v: f64 = v.parse().map_err(|e| malformed(line_no, format!("value: {e}")))?;
        if i == 0 || j == 0 || i > n_rows || j > n_cols {
            return Err(malformed(
                line_no,
                format!("index ({i}, {j}) outside 1..={n_rows} x 1..={n_cols}"),
            ));
        }
        if !v.is_finite() {
            return Err(malformed(line_no, format!("non-finite value {v}")));
        }
        triplets.push((i - 1, j - 1, v));
        if symmetry == Symmetry::Symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    if seen < nnz {
        return Err(malformed(
            text.lines().count(),
            format!("declared {nnz} entries, found {seen}"),
        ));
    }
    csr_from_triplets(&triplets, n_rows, n_cols)
}

/// Writes `coordinate real general` with shortest round-trip decimals, so a
/// re-read reproduces a canonical matrix exactly.
pub fn write_matrix_market(a: &SparseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_matrix_market(a)).map_err(|e| Error::io(path, e))
}

pub fn format_matrix_market(a: &SparseMatrix) -> String {
    let mut out = String::with_capacity(32 + 24 * a.nnz());
    out.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz());
    for (i, j, v) in a.triplets() {
        let _ = writeln!(out, "{} {} {:e}", i + 1, j + 1, v);
    }
    out
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vector(&text, path)
}

pub fn parse_vector(text: &str, path: &Path) -> Result<Vec<f64>> {
    let malformed = |line: usize, message: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (first, count) = lines
        .next()
        .ok_or_else(|| malformed(1, "missing count line".into()))?;
    let n: usize = count
        .parse()
        .map_err(|e| malformed(first, format!("count: {e}")))?;
    let mut out = Vec::with_capacity(n);
    for (line_no, l) in lines {
        if out.len() == n {
            return Err(malformed(line_no, format!("more than the declared {n} values")));
        }
        let v: f64 = l
            .parse()
            .map_err(|e| malformed(line_no, format!("value: {e}")))?;
        out.push(v);
    }
    if out.len() != n {
        return Err(malformed(
            text.lines().count(),
            format!("declared {n} values, found {}", out.len()),
        ));
    }
    Ok(out)
}

pub fn format_vector(v: &[f64]) -> String {
    let mut out = String::with_capacity(8 + 24 * v.len());
    let _ = writeln!(out, "{}", v.len());
    for x in v {
        let _ = writeln!(out, "{x:e}");
    }
    out
}

pub fn write_vector(v: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_vector(v)).map_err(|e| Error::io(path, e))
}
