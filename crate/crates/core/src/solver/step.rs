//! Single projection updates.

use super::{DegeneratePolicy, SolverConfig, SolverState, StepKind, StepRecord};
use crate::error::{Error, Result};
use crate::linalg::{Row, RowMatrix};

/// The oblique direction between two rows, before any right-hand side is
/// involved.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    /// `D = <a_prev, a_next>`.
    pub d: f64,
    /// `w = a_next - (D / M(prev)) a_prev`, dense.
    pub w: Vec<f64>,
    /// `h = M(next) - (D / M(prev)) D`, which equals `||w||^2` in exact
    /// arithmetic.
    pub h: f64,
}

/// Everything computed for one oblique step.
#[derive(Debug, Clone, PartialEq)]
pub struct ObliqueGeometry {
    pub d: f64,
    pub w: Vec<f64>,
    pub h: f64,
    /// Residual of the incoming row at the current iterate.
    pub r: f64,
    /// Coefficient applied along `w`; zero when the step was degenerate.
    pub alpha: f64,
    /// `h / M(next)`, the squared sine of the angle between the two
    /// hyperplanes.
    pub sin2_theta: f64,
}

/// Direction storage reused across steps. Sparse matrices keep only the
/// union of the two rows' patterns.
#[derive(Debug, Clone, Default)]
pub(crate) struct DirBuf {
    pub idx: Vec<usize>,
    pub vals: Vec<f64>,
    sparse: bool,
}

impl DirBuf {
    pub fn new(mat: &RowMatrix) -> Self {
        let sparse = mat.is_sparse();
        DirBuf {
            idx: Vec::new(),
            vals: if sparse { Vec::new() } else { vec![0.0; mat.ncols()] },
            sparse,
        }
    }

    /// `x += alpha * w`.
    #[inline]
    pub fn axpy_into(&self, alpha: f64, x: &mut [f64]) {
        if self.sparse {
            for (&j, &v) in self.idx.iter().zip(&self.vals) {
                x[j] += alpha * v;
            }
        } else {
            for (xi, &v) in x.iter_mut().zip(&self.vals) {
                *xi += alpha * v;
            }
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        if self.sparse {
            let mut out = vec![0.0; n];
            for (&j, &v) in self.idx.iter().zip(&self.vals) {
                out[j] = v;
            }
            out
        } else {
            self.vals.clone()
        }
    }
}

/// Fill `buf` with `a_next - coef * a_prev` and return `(D, h)`.
pub(crate) fn build_direction(mat: &RowMatrix, prev: usize, next: usize, buf: &mut DirBuf) -> (f64, f64) {
    let d = mat.rows_dot(prev, next);
    let m_prev = mat.row_norm_sq(prev);
    let m_next = mat.row_norm_sq(next);
    let coef = d / m_prev;
    let h = m_next - coef * d;
    match (mat.row(prev), mat.row(next)) {
        (Row::Dense(a0), Row::Dense(a1)) => {
            for ((w, &u), &v) in buf.vals.iter_mut().zip(a1).zip(a0) {
                *w = u - coef * v;
            }
        }
        (
            Row::Sparse {
                indices: i0,
                values: v0,
            },
            Row::Sparse {
                indices: i1,
                values: v1,
            },
        ) => {
            buf.idx.clear();
            buf.vals.clear();
            let (mut p, mut q) = (0, 0);
            while p < i0.len() || q < i1.len() {
                let j0 = i0.get(p).copied().unwrap_or(usize::MAX);
                let j1 = i1.get(q).copied().unwrap_or(usize::MAX);
                let (j, u, v) = if j0 == j1 {
                    p += 1;
                    q += 1;
                    (j0, v1[q - 1], v0[p - 1])
                } else if j1 < j0 {
                    q += 1;
                    (j1, v1[q - 1], 0.0)
                } else {
                    p += 1;
                    (j0, 0.0, v0[p - 1])
                };
                buf.idx.push(j);
                buf.vals.push(u - coef * v);
            }
        }
        _ => unreachable!("rows of one matrix share a storage kind"),
    }
    (d, h)
}

/// Orthogonal projection of `x` onto row `i`'s hyperplane, in place.
/// Returns the residual before the step and the step length.
#[inline]
pub(crate) fn apply_orthogonal(mat: &RowMatrix, b: &[f64], i: usize, x: &mut [f64]) -> (f64, f64) {
    let row = mat.row(i);
    let m = mat.row_norm_sq(i);
    let r = b[i] - row.dot(x);
    let coef = r / m;
    row.axpy_into(coef, x);
    (r, coef.abs() * m.sqrt())
}

/// Outcome of one oblique attempt.
pub(crate) struct ObliqueOutcome {
    pub kind: StepKind,
    pub d: f64,
    pub h: f64,
    pub r: f64,
    pub alpha: f64,
    pub step_len: f64,
}

/// Oblique update along a precomputed direction, falling back or skipping
/// when `h <= epsilon_rel * M(next)`.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn apply_oblique(
    mat: &RowMatrix,
    b: &[f64],
    next: usize,
    d: f64,
    h: f64,
    dir: &DirBuf,
    epsilon_rel: f64,
    policy: DegeneratePolicy,
    x: &mut [f64],
) -> ObliqueOutcome {
    let m_next = mat.row_norm_sq(next);
    if h > epsilon_rel * m_next {
        let r = b[next] - mat.row(next).dot(x);
        let alpha = r / h;
        dir.axpy_into(alpha, x);
        ObliqueOutcome {
            kind: StepKind::Oblique,
            d,
            h,
            r,
            alpha,
            step_len: alpha.abs() * h.sqrt(),
        }
    } else {
        match policy {
            DegeneratePolicy::Fallback => {
                let (r, step_len) = apply_orthogonal(mat, b, next, x);
                ObliqueOutcome {
                    kind: StepKind::Orthogonal,
                    d,
                    h,
                    r,
                    alpha: 0.0,
                    step_len,
                }
            }
            DegeneratePolicy::Skip => ObliqueOutcome {
                kind: StepKind::SkippedDegenerate,
                d,
                h,
                r: b[next] - mat.row(next).dot(x),
                alpha: 0.0,
                step_len: 0.0,
            },
        }
    }
}

/// Relative residual `|b_i - <a_i, x>| / (||a_i|| ||x|| + |b_i|)`.
pub(crate) fn membership(mat: &RowMatrix, b: &[f64], i: usize, x: &[f64]) -> f64 {
    let r = (b[i] - mat.row(i).dot(x)).abs();
    let scale = mat.row_norm_sq(i).sqrt() * crate::linalg::norm_sq(x).sqrt() + b[i].abs();
    if scale > 0.0 {
        r / scale
    } else {
        r
    }
}

fn check_step_inputs(state: &SolverState, mat: &RowMatrix, b: &[f64], i: usize) -> Result<()> {
    mat.check_row(i)?;
    crate::linalg::check_len(&state.x, mat.ncols())?;
    crate::linalg::check_len(b, mat.nrows())?;
    if mat.row_norm_sq(i) < crate::linalg::ZERO_ROW_THRESHOLD {
        return Err(Error::ZeroRow(i));
    }
    Ok(())
}

/// Project the iterate orthogonally onto hyperplane `i`:
/// `x + (b_i - <a_i, x>) / ||a_i||^2 * a_i`.
pub fn orthogonal_step(state: &SolverState, mat: &RowMatrix, b: &[f64], i: usize) -> Result<SolverState> {
    check_step_inputs(state, mat, b, i)?;
    let mut x = state.x.clone();
    apply_orthogonal(mat, b, i, &mut x);
    Ok(SolverState {
        x,
        k: state.k + 1,
        last_index: Some(i),
        prev_index: state.last_index,
    })
}

/// Direction from row `prev` to row `next`. `h` comes from the closed form,
/// not from renorming `w`.
pub fn oblique_direction(mat: &RowMatrix, prev: usize, next: usize) -> Result<Direction> {
    mat.check_row(prev)?;
    mat.check_row(next)?;
    if prev == next {
        return Err(Error::InvalidConfig(format!(
            "oblique direction needs two distinct rows, got {prev} twice"
        )));
    }
    for i in [prev, next] {
        if mat.row_norm_sq(i) < crate::linalg::ZERO_ROW_THRESHOLD {
            return Err(Error::ZeroRow(i));
        }
    }
    let mut buf = DirBuf::new(mat);
    let (d, h) = build_direction(mat, prev, next, &mut buf);
    let w = buf.to_dense(mat.ncols());
    debug_assert!(
        (crate::linalg::norm_sq(&w) - h).abs()
            <= 1e-8 * mat.row_norm_sq(next) + 1e-12 * mat.row_norm_sq(prev),
        "closed-form h disagrees with ||w||^2"
    );
    Ok(Direction { d, w, h })
}

/// One oblique step from `state` onto row `next`, along the direction
/// orthogonal to the previous row. Degenerate pairs follow
/// `config.degenerate`.
pub fn oblique_step(
    state: &SolverState,
    mat: &RowMatrix,
    b: &[f64],
    next: usize,
    config: &SolverConfig,
) -> Result<(SolverState, StepRecord)> {
    check_step_inputs(state, mat, b, next)?;
    let prev = state.last_index.ok_or_else(|| {
        Error::InvalidConfig("oblique step needs a previous row; project orthogonally first".into())
    })?;
    if prev == next {
        return Err(Error::InvalidConfig(format!(
            "oblique step onto row {next} repeats the previous row"
        )));
    }
    let mut buf = DirBuf::new(mat);
    let (d, h) = build_direction(mat, prev, next, &mut buf);
    let mut x = state.x.clone();
    let out = apply_oblique(mat, b, next, d, h, &buf, config.epsilon_rel, config.degenerate, &mut x);
    let new_state = SolverState {
        x,
        k: state.k + 1,
        last_index: Some(next),
        prev_index: Some(prev),
    };
    let record = StepRecord {
        k: new_state.k,
        index: next,
        previous_index: Some(prev),
        kind: out.kind,
        geometry: Some(ObliqueGeometry {
            d,
            w: buf.to_dense(mat.ncols()),
            h,
            r: out.r,
            alpha: out.alpha,
            sin2_theta: h / mat.row_norm_sq(next),
        }),
        residual: out.r,
        error_sq_before: None,
        error_sq_after: None,
        membership: membership(mat, b, next, &new_state.x),
        previous_membership: Some(membership(mat, b, prev, &new_state.x)),
        x_before: state.x.clone(),
        x_after: new_state.x.clone(),
    };
    Ok((new_state, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::solver::{Method, SolverConfig};

    fn state(x: Vec<f64>, last: Option<usize>) -> SolverState {
        SolverState {
            x,
            k: 1,
            last_index: last,
            prev_index: None,
        }
    }

    #[test]
    fn orthogonal_step_examples() {
        let mat = RowMatrix::from_rows(&[[7.0, -8.0], [8.0, -7.0]]).unwrap();
        let s = orthogonal_step(&state(vec![0.0, 0.0], None), &mat, &[-1.0, 1.0], 0).unwrap();
        assert!((s.x[0] + 7.0 / 113.0).abs() < 1e-16);
        assert!((s.x[1] - 8.0 / 113.0).abs() < 1e-16);
        assert_eq!(s.last_index, Some(0));

        // Already on the hyperplane.
        let on = state(vec![1.0, 1.0], None);
        assert_eq!(orthogonal_step(&on, &mat, &[-1.0, 1.0], 0).unwrap().x, vec![1.0, 1.0]);

        let id = RowMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let s = orthogonal_step(&state(vec![0.0; 3], None), &id, &[1.0, 2.0, 3.0], 0).unwrap();
        assert_eq!(s.x, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn orthogonal_step_refuses_zero_row() {
        let mat = RowMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        let err = orthogonal_step(&state(vec![0.0, 0.0], None), &mat, &[1.0, 0.0], 1);
        assert!(matches!(err, Err(Error::ZeroRow(1))));
    }

    #[test]
    fn direction_examples() {
        let orth = RowMatrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
        let d = oblique_direction(&orth, 0, 1).unwrap();
        assert_eq!((d.d, d.h), (0.0, 4.0));
        assert_eq!(d.w, vec![0.0, 2.0]);

        let par = RowMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        let d = oblique_direction(&par, 0, 1).unwrap();
        assert_eq!(d.h, 0.0);
        assert_eq!(d.w, vec![0.0, 0.0]);

        let m = RowMatrix::from_rows(&[[7.0, -8.0], [8.0, -7.0]]).unwrap();
        let d = oblique_direction(&m, 0, 1).unwrap();
        assert_eq!(d.d, 112.0);
        assert!((d.w[0] - 120.0 / 113.0).abs() < 1e-15);
        assert!((d.w[1] - 105.0 / 113.0).abs() < 1e-15);
        assert!((d.h - 225.0 / 113.0).abs() < 1e-13);
        assert!(dot(&d.w, &[7.0, -8.0]).abs() < 1e-13);

        assert!(oblique_direction(&m, 1, 1).is_err());
    }

    #[test]
    fn sparse_direction_matches_dense() {
        let dense = RowMatrix::from_rows(&[[1.0, 0.0, 2.0, 0.0], [0.0, 3.0, 1.0, 5.0]]).unwrap();
        let sparse = RowMatrix::from_sparse_rows(
            4,
            vec![vec![(0, 1.0), (2, 2.0)], vec![(1, 3.0), (2, 1.0), (3, 5.0)]],
        )
        .unwrap();
        assert_eq!(
            oblique_direction(&dense, 0, 1).unwrap(),
            oblique_direction(&sparse, 0, 1).unwrap()
        );
        assert_eq!(
            oblique_direction(&dense, 1, 0).unwrap(),
            oblique_direction(&sparse, 1, 0).unwrap()
        );
    }

    #[test]
    fn first_fixture_single_oblique_step() {
        let mat = RowMatrix::from_rows(&[[7.0, -8.0], [8.0, -7.0]]).unwrap();
        let b = [-1.0, 1.0];
        let cfg = SolverConfig::new(Method::Ko);
        let s1 = orthogonal_step(&state(vec![0.0, 0.0], None), &mat, &b, 0).unwrap();
        let (s2, rec) = oblique_step(&s1, &mat, &b, 1, &cfg).unwrap();
        let g = rec.geometry.unwrap();
        assert!((g.r - 225.0 / 113.0).abs() < 1e-13);
        assert!((g.alpha - 1.0).abs() < 1e-13);
        assert!((s2.x[0] - 1.0).abs() < 1e-13 && (s2.x[1] - 1.0).abs() < 1e-13);
        assert_eq!(rec.kind, StepKind::Oblique);
    }

    #[test]
    fn orthogonal_rows_reduce_to_kaczmarz() {
        let mat = RowMatrix::from_rows(&[[1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        let b = [2.0, 0.5, 3.0];
        let cfg = SolverConfig::new(Method::Ko);
        let s1 = orthogonal_step(&state(vec![0.3, -0.2, 0.1], None), &mat, &b, 0).unwrap();
        let (obl, _) = oblique_step(&s1, &mat, &b, 1, &cfg).unwrap();
        let ort = orthogonal_step(&s1, &mat, &b, 1).unwrap();
        assert_eq!(obl.x, ort.x);
    }

    #[test]
    fn coincident_rows_fallback_and_skip() {
        let mat = RowMatrix::from_rows(&[[1.0, 2.0], [3.0, 6.0]]).unwrap();
        let b = [5.0, 15.0];
        let s1 = orthogonal_step(&state(vec![0.0, 0.0], None), &mat, &b, 0).unwrap();
        let cfg = SolverConfig::new(Method::Ko);
        let (s2, rec) = oblique_step(&s1, &mat, &b, 1, &cfg).unwrap();
        assert_eq!(rec.kind, StepKind::Orthogonal);
        for (a, c) in s2.x.iter().zip(&s1.x) {
            assert!((a - c).abs() < 1e-15);
        }
        let skip = SolverConfig {
            degenerate: DegeneratePolicy::Skip,
            ..cfg
        };
        let (s3, rec) = oblique_step(&s1, &mat, &b, 1, &skip).unwrap();
        assert_eq!(rec.kind, StepKind::SkippedDegenerate);
        assert_eq!(s3.x, s1.x);
        assert_eq!(s3.k, s1.k + 1);
    }

    #[test]
    fn oblique_step_preconditions() {
        let mat = RowMatrix::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap();
        let cfg = SolverConfig::new(Method::Ko);
        assert!(oblique_step(&state(vec![0.0, 0.0], None), &mat, &[1.0, 2.0], 1, &cfg).is_err());
        assert!(oblique_step(&state(vec![0.0, 0.0], Some(1)), &mat, &[1.0, 2.0], 1, &cfg).is_err());
    }
}
