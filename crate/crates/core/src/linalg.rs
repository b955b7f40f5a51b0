//! Row-accessible matrix storage and the small amount of dense numerics the
//! solvers and diagnostics need.
//!
//! Every reduction here is a plain left-to-right loop so that results are
//! bitwise reproducible for a given input.

use crate::error::{Error, Result};

/// Squared row norms below this are treated as zero rows.
pub const ZERO_ROW_THRESHOLD: f64 = 1e-300;

/// Largest `m * n` accepted by the dense spectral routines.
pub const MAX_DENSE_ENTRIES: usize = 1_000_000;

const MAX_GRAM_DIM: usize = 2048;
const MAX_INVERSE_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    /// Row-major values, `m * n` long.
    Dense(Vec<f64>),
    /// Compressed rows; each row's column indices are strictly increasing.
    Sparse {
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    },
}

/// Borrowed view of one matrix row.
#[derive(Debug, Clone, Copy)]
pub enum Row<'a> {
    Dense(&'a [f64]),
    Sparse {
        indices: &'a [usize],
        values: &'a [f64],
    },
}

impl Row<'_> {
    /// Inner product with a dense vector, accumulated left to right.
    #[inline]
    pub fn dot(&self, x: &[f64]) -> f64 {
        match *self {
            Row::Dense(vals) => dot(vals, x),
            Row::Sparse { indices, values } => {
                let mut acc = 0.0;
                for (&j, &v) in indices.iter().zip(values) {
                    acc += v * x[j];
                }
                acc
            }
        }
    }

    /// `x += alpha * row`.
    #[inline]
    pub fn axpy_into(&self, alpha: f64, x: &mut [f64]) {
        match *self {
            Row::Dense(vals) => {
                for (xi, &v) in x.iter_mut().zip(vals) {
                    *xi += alpha * v;
                }
            }
            Row::Sparse { indices, values } => {
                for (&j, &v) in indices.iter().zip(values) {
                    x[j] += alpha * v;
                }
            }
        }
    }

    /// Iterate over `(column, value)` pairs of the stored entries.
    pub fn entries(&self) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        match *self {
            Row::Dense(vals) => Box::new(vals.iter().copied().enumerate()),
            Row::Sparse { indices, values } => {
                Box::new(indices.iter().copied().zip(values.iter().copied()))
            }
        }
    }

    fn norm_sq(&self) -> f64 {
        let vals = match *self {
            Row::Dense(v) => v,
            Row::Sparse { values, .. } => values,
        };
        dot(vals, vals)
    }
}

/// Inner product of two rows of the same storage kind.
fn row_row_dot(a: Row<'_>, b: Row<'_>) -> f64 {
    match (a, b) {
        (Row::Dense(x), Row::Dense(y)) => dot(x, y),
        (
            Row::Sparse {
                indices: ia,
                values: va,
            },
            Row::Sparse {
                indices: ib,
                values: vb,
            },
        ) => {
            let (mut p, mut q, mut acc) = (0, 0, 0.0);
            while p < ia.len() && q < ib.len() {
                match ia[p].cmp(&ib[q]) {
                    std::cmp::Ordering::Less => p += 1,
                    std::cmp::Ordering::Greater => q += 1,
                    std::cmp::Ordering::Equal => {
                        acc += va[p] * vb[q];
                        p += 1;
                        q += 1;
                    }
                }
            }
            acc
        }
        (Row::Dense(x), s @ Row::Sparse { .. }) | (s @ Row::Sparse { .. }, Row::Dense(x)) => {
            s.dot(x)
        }
    }
}

/// A real `m x n` matrix accessed one row at a time, with cached squared row
/// norms `M(i) = ||a_i||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    rows: usize,
    cols: usize,
    storage: Storage,
    row_norms_sq: Vec<f64>,
}

impl RowMatrix {
    /// Dense matrix from row-major values.
    pub fn from_dense(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(rows, cols)?;
        if values.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                found: values.len(),
            });
        }
        let mut mat = RowMatrix {
            rows,
            cols,
            storage: Storage::Dense(values),
            row_norms_sq: Vec::new(),
        };
        mat.refresh_norms();
        Ok(mat)
    }

    /// Dense matrix from a list of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(m * n);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::from_dense(m, n, values)
    }

    /// Sparse matrix from per-row `(column, value)` lists. Column indices in
    /// each row must be strictly increasing and below `cols`.
    pub fn from_sparse_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let m = rows.len();
        check_shape(m, cols)?;
        let mut row_ptr = Vec::with_capacity(m + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if j >= cols {
                    return Err(Error::InvalidMatrix(format!(
                        "row {i}: column {j} out of range for {cols} columns"
                    )));
                }
                if last.is_some_and(|l| j <= l) {
                    return Err(Error::InvalidMatrix(format!(
                        "row {i}: column indices not strictly increasing at {j}"
                    )));
                }
                last = Some(j);
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        let mut mat = RowMatrix {
            rows: m,
            cols,
            storage: Storage::Sparse {
                row_ptr,
                col_idx,
                values,
            },
            row_norms_sq: Vec::new(),
        };
        mat.refresh_norms();
        Ok(mat)
    }

    fn refresh_norms(&mut self) {
        self.row_norms_sq = (0..self.rows).map(|i| self.row(i).norm_sq()).collect();
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    /// Number of stored entries (all `m * n` for dense storage).
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(v) => v.len(),
            Storage::Sparse { values, .. } => values.len(),
        }
    }

    /// Fraction of structurally nonzero entries. Explicit zeros in dense
    /// storage are not counted.
    pub fn density(&self) -> f64 {
        let nonzero = match &self.storage {
            Storage::Dense(v) => v.iter().filter(|&&x| x != 0.0).count(),
            Storage::Sparse { values, .. } => values.len(),
        };
        nonzero as f64 / (self.rows as f64 * self.cols as f64)
    }

    /// Row `i` (0-based). Panics when out of range.
    #[inline]
    pub fn row(&self, i: usize) -> Row<'_> {
        match &self.storage {
            Storage::Dense(v) => Row::Dense(&v[i * self.cols..(i + 1) * self.cols]),
            Storage::Sparse {
                row_ptr,
                col_idx,
                values,
            } => {
                let (s, e) = (row_ptr[i], row_ptr[i + 1]);
                Row::Sparse {
                    indices: &col_idx[s..e],
                    values: &values[s..e],
                }
            }
        }
    }

    /// Cached `||a_i||^2`.
    #[inline]
    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row_norms_sq[i]
    }

    pub fn row_norms_sq(&self) -> &[f64] {
        &self.row_norms_sq
    }

    /// `||A||_F^2` as the sequential sum of the cached row norms.
    pub fn fro_norm_sq(&self) -> f64 {
        self.row_norms_sq.iter().fold(0.0, |acc, &v| acc + v)
    }

    /// Checked `<a_i, x>`.
    pub fn row_dot(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_row(i)?;
        check_len(x, self.cols)?;
        Ok(self.row(i).dot(x))
    }

    /// `<a_i, a_j>`.
    #[inline]
    pub fn rows_dot(&self, i: usize, j: usize) -> f64 {
        row_row_dot(self.row(i), self.row(j))
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x, self.cols)?;
        Ok((0..self.rows).map(|i| self.row(i).dot(x)).collect())
    }

    /// `A^T y`.
    pub fn matvec_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(y, self.rows)?;
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            self.row(i).axpy_into(yi, &mut out);
        }
        Ok(out)
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(v) => v.clone(),
            Storage::Sparse { .. } => {
                let mut out = vec![0.0; self.rows * self.cols];
                for i in 0..self.rows {
                    for (j, v) in self.row(i).entries() {
                        out[i * self.cols + j] = v;
                    }
                }
                out
            }
        }
    }

    /// Dense `n x n` Gram matrix `A^T A`, row-major.
    pub fn gram(&self) -> Vec<f64> {
        let n = self.cols;
        let mut g = vec![0.0; n * n];
        for i in 0..self.rows {
            let entries: Vec<(usize, f64)> = self.row(i).entries().collect();
            for &(p, vp) in &entries {
                for &(q, vq) in &entries {
                    g[p * n + q] += vp * vq;
                }
            }
        }
        g
    }

    pub(crate) fn check_row(&self, i: usize) -> Result<()> {
        if i >= self.rows {
            return Err(Error::RowIndex {
                index: i,
                rows: self.rows,
            });
        }
        Ok(())
    }

    /// Refuse matrices that [`validate`] flags.
    pub fn ensure_valid(&self) -> Result<()> {
        validate(self).into_result()
    }
}

fn check_shape(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidMatrix(format!(
            "shape {rows}x{cols} has an empty dimension"
        )));
    }
    Ok(())
}

pub(crate) fn check_len(x: &[f64], expected: usize) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Dimension {
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    /// Rows with `||a_i||^2 < 1e-300`.
    pub zero_rows: Vec<usize>,
    /// `(row, column)` of every NaN or infinite entry.
    pub non_finite: Vec<(usize, usize)>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.zero_rows.is_empty() && self.non_finite.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if let Some(&(row, _)) = self.non_finite.first() {
            return Err(Error::NonFinite {
                count: self.non_finite.len(),
                row,
            });
        }
        if let Some(&first) = self.zero_rows.first() {
            return Err(Error::ZeroRows {
                count: self.zero_rows.len(),
                first,
            });
        }
        Ok(())
    }
}

/// Report zero rows and non-finite entries without modifying the matrix.
pub fn validate(mat: &RowMatrix) -> ValidationReport {
    let mut report = ValidationReport::default();
    for i in 0..mat.nrows() {
        let mut finite = true;
        for (j, v) in mat.row(i).entries() {
            if !v.is_finite() {
                report.non_finite.push((i, j));
                finite = false;
            }
        }
        if finite && mat.row_norm_sq(i) < ZERO_ROW_THRESHOLD {
            report.zero_rows.push(i);
        }
    }
    report
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

#[inline]
pub fn norm_sq(x: &[f64]) -> f64 {
    dot(x, x)
}

/// `||x - y||^2`.
#[inline]
pub fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        acc += d * d;
    }
    acc
}

/// Spectral quantities used by the randomized contraction bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralStats {
    /// `||A||_F^2`.
    pub fro_norm_sq: f64,
    /// Square of the smallest nonzero singular value.
    pub sigma_min_sq: f64,
    pub rank_estimate: usize,
}

/// Smallest nonzero squared singular value, Frobenius norm and numerical
/// rank.
///
/// `sigma_min^2` is the smallest eigenvalue of `A^T A` above
/// `tol * ||A||_F^2`, found by shifted inverse iteration on the Gram matrix.
/// Eigenvectors at or below the threshold are deflated one at a time and
/// counted against the rank.
pub fn spectral_stats(mat: &RowMatrix, tol: f64) -> Result<SpectralStats> {
    let (m, n) = (mat.nrows(), mat.ncols());
    if m.saturating_mul(n) > MAX_DENSE_ENTRIES || n > MAX_GRAM_DIM {
        return Err(Error::TooLarge { rows: m, cols: n });
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "spectral tolerance must lie in (0, 1), got {tol}"
        )));
    }
    mat.ensure_valid()?;

    let fro = mat.fro_norm_sq();
    let threshold = tol * fro;
    let gram = mat.gram();

    let mut shift = 1e-10 * fro;
    let chol = loop {
        let mut shifted = gram.clone();
        for d in 0..n {
            shifted[d * n + d] += shift;
        }
        match cholesky(&shifted, n) {
            Some(l) => break l,
            None if shift < fro => shift *= 100.0,
            None => return Err(Error::NoConvergence(0)),
        }
    };

    let mut deflated: Vec<Vec<f64>> = Vec::new();
    let mut seed = 0x9e37_79b9_7f4a_7c15_u64;
    while deflated.len() < n {
        let mut v: Vec<f64> = (0..n)
            .map(|_| {
                seed = splitmix64(seed);
                (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        orthogonalize(&mut v, &deflated);
        if !normalize(&mut v) {
            break;
        }

        let mut lambda = rayleigh(mat, &v);
        let mut converged = false;
        for _ in 0..MAX_INVERSE_ITERATIONS {
            let mut y = cholesky_solve(&chol, n, &v);
            orthogonalize(&mut y, &deflated);
            if !normalize(&mut y) {
                break;
            }
            let next = rayleigh(mat, &y);
            let delta = (next - lambda).abs();
            v = y;
            lambda = next;
            if delta <= tol * next.max(threshold) && gram_residual(&gram, n, &v, lambda) <= tol.sqrt() * fro {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence(MAX_INVERSE_ITERATIONS));
        }
        if lambda > threshold {
            return Ok(SpectralStats {
                fro_norm_sq: fro,
                sigma_min_sq: lambda,
                rank_estimate: n - deflated.len(),
            });
        }
        deflated.push(v);
    }
    // Only reachable for a numerically zero matrix, which validation excludes.
    Err(Error::InvalidMatrix("matrix has no nonzero singular value".into()))
}

/// `||A v||^2` for unit `v`.
fn rayleigh(mat: &RowMatrix, v: &[f64]) -> f64 {
    (0..mat.nrows())
        .map(|i| mat.row(i).dot(v))
        .fold(0.0, |acc, r| acc + r * r)
}

fn gram_residual(gram: &[f64], n: usize, v: &[f64], lambda: f64) -> f64 {
    let mut acc = 0.0;
    for p in 0..n {
        let r = dot(&gram[p * n..(p + 1) * n], v) - lambda * v[p];
        acc += r * r;
    }
    acc.sqrt()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // Two passes of modified Gram-Schmidt.
    for _ in 0..2 {
        for q in basis {
            let c = dot(v, q);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let nrm = norm_sq(v).sqrt();
    if !(nrm > 0.0) || !nrm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= nrm);
    true
}

/// Lower Cholesky factor of a symmetric positive definite row-major matrix.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// Eigen-decomposition of a symmetric row-major `n x n` matrix by cyclic
/// Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching unit eigenvectors
/// (one `Vec` per eigenvalue).
pub fn symmetric_eigen(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_len(a, n * n)?;
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = norm_sq(&a).sqrt();
    let mut converged = n < 2 || scale == 0.0;
    for _sweep in 0..100 {
        if converged {
            break;
        }
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence(100));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k * n + i]).collect())
        .collect();
    Ok((values, vectors))
}

pub(crate) fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
