//! Matrix Market exchange format, real fields only.
//!
//! Coordinate files load into sparse rows and array files into dense rows.
//! Symmetric storage is expanded to the full matrix, explicit zeros are
//! dropped and duplicate coordinates are summed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{Problem, Provenance};
use crate::error::{Error, Result};
use crate::linalg::RowMatrix;

/// Where the right-hand side of a loaded problem comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum RhsMode {
    /// `b = A * 1`, with the all-ones vector recorded as the solution.
    AllOnes,
    /// `b` read from a Matrix Market array file with one column; no known
    /// solution.
    FromFile(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

struct Header {
    layout: Layout,
    symmetry: Symmetry,
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line_no: usize,
    path: PathBuf,
}

impl<R: BufRead> Lines<R> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::MatrixMarket {
            path: self.path.clone(),
            line: self.line_no,
            msg: msg.into(),
        }
    }

    fn next_raw(&mut self) -> Result<Option<String>> {
        match self.inner.next() {
            Some(line) => {
                self.line_no += 1;
                Ok(Some(line?))
            }
            None => Ok(None),
        }
    }

    /// Next line that is neither blank nor a `%` comment.
    fn next_data(&mut self) -> Result<Option<String>> {
        while let Some(line) = self.next_raw()? {
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            return Ok(Some(t.to_string()));
        }
        Ok(None)
    }

    fn expect_data(&mut self, what: &str) -> Result<String> {
        self.next_data()?
            .ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }

    fn parse<T: std::str::FromStr>(&self, tok: Option<&str>, what: &str) -> Result<T> {
        let tok = tok.ok_or_else(|| self.err(format!("missing {what}")))?;
        tok.parse()
            .map_err(|_| self.err(format!("cannot parse {what} from `{tok}`")))
    }
}

fn parse_header<R: BufRead>(lines: &mut Lines<R>) -> Result<Header> {
    let first = lines
        .next_raw()?
        .ok_or_else(|| lines.err("empty file"))?;
    let lower = first.trim().to_ascii_lowercase();
    let toks: Vec<&str> = lower.split_whitespace().collect();
    if toks.len() != 5 || toks[0] != "%%matrixmarket" || toks[1] != "matrix" {
        return Err(lines.err("expected `%%MatrixMarket matrix <layout> <field> <symmetry>` header"));
    }
    let layout = match toks[2] {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(lines.err(format!("unknown layout `{other}`"))),
    };
    match toks[3] {
        "real" | "double" => {}
        "pattern" => return Err(lines.err("pattern matrices carry no values and are not supported")),
        "complex" => return Err(lines.err("complex matrices are not supported")),
        other => return Err(lines.err(format!("unsupported field `{other}`"))),
    }
    let symmetry = match toks[4] {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(lines.err(format!("unsupported symmetry `{other}`"))),
    };
    Ok(Header { layout, symmetry })
}

/// Parse a Matrix Market stream. `path` is used only in error messages.
pub fn read_matrix_market<R: BufRead>(reader: R, path: &Path) -> Result<RowMatrix> {
    let mut lines = Lines {
        inner: reader.lines(),
        line_no: 0,
        path: path.to_path_buf(),
    };
    let header = parse_header(&mut lines)?;
    let size = lines.expect_data("size line")?;
    let mut toks = size.split_whitespace();
    let m: usize = lines.parse(toks.next(), "row count")?;
    let n: usize = lines.parse(toks.next(), "column count")?;
    if m == 0 || n == 0 {
        return Err(lines.err(format!("empty shape {m}x{n}")));
    }
    if header.symmetry == Symmetry::Symmetric && m != n {
        return Err(lines.err(format!("symmetric matrix must be square, got {m}x{n}")));
    }

    match header.layout {
        Layout::Coordinate => {
            let nnz: usize = lines.parse(toks.next(), "entry count")?;
            let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
            for _ in 0..nnz {
                let line = lines.expect_data("matrix entry")?;
                let mut t = line.split_whitespace();
                let i: usize = lines.parse(t.next(), "row index")?;
                let j: usize = lines.parse(t.next(), "column index")?;
                let v: f64 = lines.parse(t.next(), "value")?;
                if i == 0 || i > m || j == 0 || j > n {
                    return Err(lines.err(format!("entry ({i}, {j}) outside {m}x{n}")));
                }
                if header.symmetry == Symmetry::Symmetric && j > i {
                    return Err(lines.err(format!(
                        "symmetric file holds upper-triangle entry ({i}, {j})"
                    )));
                }
                rows[i - 1].push((j - 1, v));
                if header.symmetry == Symmetry::Symmetric && i != j {
                    rows[j - 1].push((i - 1, v));
                }
            }
            if lines.next_data()?.is_some() {
                return Err(lines.err(format!("more than the declared {nnz} entries")));
            }
            let rows = rows.into_iter().map(merge_row).collect();
            RowMatrix::from_sparse_rows(n, rows)
        }
        Layout::Array => {
            let mut values = vec![0.0; m * n];
            // Column-major; symmetric files list the lower triangle only.
            for j in 0..n {
                let start = if header.symmetry == Symmetry::Symmetric { j } else { 0 };
                for i in start..m {
                    let line = lines.expect_data("array value")?;
                    let v: f64 = lines.parse(line.split_whitespace().next(), "value")?;
                    values[i * n + j] = v;
                    if header.symmetry == Symmetry::Symmetric {
                        values[j * n + i] = v;
                    }
                }
            }
            if lines.next_data()?.is_some() {
                return Err(lines.err("trailing data after array values"));
            }
            RowMatrix::from_dense(m, n, values)
        }
    }
}

fn merge_row(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|&(j, _)| j);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (j, v) in row {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => out.push((j, v)),
        }
    }
    out.retain(|&(_, v)| v != 0.0);
    out
}

/// Load a problem from a Matrix Market file.
pub fn load_matrix_market(path: &Path, rhs: RhsMode) -> Result<Problem> {
    let file = File::open(path)?;
    let mat = read_matrix_market(BufReader::new(file), path)?;
    let (b, x_true) = match rhs {
        RhsMode::AllOnes => {
            let ones = vec![1.0; mat.ncols()];
            (mat.matvec(&ones)?, Some(ones))
        }
        RhsMode::FromFile(rhs_path) => (read_vector(&rhs_path)?, None),
    };
    Problem::new(mat, b, x_true, Provenance::File(path.to_path_buf()))
}

/// Write `mat` as a general real Matrix Market file: coordinate layout for
/// sparse storage, array layout for dense storage. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_matrix_market(mat: &RowMatrix, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let (m, n) = (mat.nrows(), mat.ncols());
    if mat.is_sparse() {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{m} {n} {}", mat.nnz())?;
        for i in 0..m {
            for (j, v) in mat.row(i).entries() {
                writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
            }
        }
    } else {
        writeln!(w, "%%MatrixMarket matrix array real general")?;
        writeln!(w, "{m} {n}")?;
        let dense = mat.to_dense();
        for j in 0..n {
            for i in 0..m {
                writeln!(w, "{:e}", dense[i * n + j])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Write a vector as an `len x 1` array file.
pub fn write_vector(values: &[f64], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} 1", values.len())?;
    for v in values {
        writeln!(w, "{v:e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a single-column Matrix Market file (array or coordinate) as a vector.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let mat = read_matrix_market(BufReader::new(File::open(path)?), path)?;
    if mat.ncols() != 1 {
        return Err(Error::MatrixMarket {
            path: path.to_path_buf(),
            line: 2,
            msg: format!("expected one column, found {}", mat.ncols()),
        });
    }
    Ok(mat.to_dense())
}
