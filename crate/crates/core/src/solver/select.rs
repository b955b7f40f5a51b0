//! Row selection rules.

use rand::Rng;

use super::{Projection, Selection, SolverRng, SolverState};
use crate::error::{Error, Result};
use crate::linalg::RowMatrix;

/// Chooses the next row for a run. Holds the cumulative norm table for
/// norm-proportional sampling so it is built once.
#[derive(Debug, Clone)]
pub(crate) struct Selector {
    selection: Selection,
    /// Oblique randomized runs never redraw the last two rows.
    exclude_recent: bool,
    cumulative: Vec<f64>,
}

impl Selector {
    pub fn new(selection: Selection, projection: Projection, mat: &RowMatrix) -> Result<Self> {
        let exclude_recent = projection == Projection::Oblique
            && matches!(selection, Selection::Uniform | Selection::NormProportional);
        if exclude_recent && mat.nrows() <= 2 {
            return Err(Error::TooFewRows {
                what: "randomized oblique projection",
                rows: mat.nrows(),
            });
        }
        let cumulative = if selection == Selection::NormProportional {
            let mut acc = 0.0;
            mat.row_norms_sq()
                .iter()
                .map(|v| {
                    acc += v;
                    acc
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Selector {
            selection,
            exclude_recent,
            cumulative,
        })
    }

    pub fn next(&self, state: &SolverState, mat: &RowMatrix, b: &[f64], rng: &mut SolverRng) -> usize {
        let m = mat.nrows();
        match self.selection {
            Selection::Cyclic => state.k % m,
            Selection::Uniform => {
                let excluded = self.excluded(state);
                let mut u = rng.gen_range(0..m - excluded.len());
                for e in excluded {
                    if u >= e {
                        u += 1;
                    }
                }
                u
            }
            Selection::NormProportional => {
                let excluded = self.excluded(state);
                let total = *self.cumulative.last().expect("matrix has rows");
                loop {
                    let t = rng.gen::<f64>() * total;
                    let i = self.cumulative.partition_point(|&c| c <= t).min(m - 1);
                    if !excluded.contains(&i) {
                        break i;
                    }
                }
            }
            Selection::MaxResidual | Selection::MaxDistance => {
                let mut best = 0;
                let mut best_val = f64::NEG_INFINITY;
                for (i, &bi) in b.iter().enumerate().take(m) {
                    let r = (bi - mat.row(i).dot(&state.x)).abs();
                    let v = if self.selection == Selection::MaxDistance {
                        r / mat.row_norm_sq(i).sqrt()
                    } else {
                        r
                    };
                    if v > best_val {
                        best_val = v;
                        best = i;
                    }
                }
                best
            }
        }
    }

    /// Sorted rows barred from the next draw.
    fn excluded(&self, state: &SolverState) -> Vec<usize> {
        if !self.exclude_recent {
            return Vec::new();
        }
        let mut ex: Vec<usize> = state.last_index.into_iter().chain(state.prev_index).collect();
        ex.sort_unstable();
        ex.dedup();
        ex
    }
}

/// Next row index under `selection`.
///
/// Cyclic: `k mod m`. Uniform: over all rows for orthogonal projection,
/// over rows other than the last two for oblique projection (other than the
/// last one on the second step). Norm-proportional: probability
/// `M(i) / ||A||_F^2`, with the same exclusions. Max-residual and
/// max-distance: argmax of `|r_i|` or `|r_i| / ||a_i||`, lowest index on
/// ties.
pub fn select_next(
    selection: Selection,
    projection: Projection,
    state: &SolverState,
    mat: &RowMatrix,
    b: &[f64],
    rng: &mut SolverRng,
) -> Result<usize> {
    crate::linalg::check_len(&state.x, mat.ncols())?;
    crate::linalg::check_len(b, mat.nrows())?;
    Ok(Selector::new(selection, projection, mat)?.next(state, mat, b, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn st(k: usize, last: Option<usize>, prev: Option<usize>, n: usize) -> SolverState {
        SolverState {
            x: vec![0.0; n],
            k,
            last_index: last,
            prev_index: prev,
        }
    }

    #[test]
    fn cyclic_sequence_after_first_row() {
        let mat = RowMatrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let mut rng = SolverRng::seed_from_u64(0);
        let seq: Vec<usize> = (1..=4)
            .map(|k| {
                select_next(Selection::Cyclic, Projection::Oblique, &st(k, Some(0), None, 1), &mat, &[0.0; 3], &mut rng)
                    .unwrap()
            })
            .collect();
        assert_eq!(seq, vec![1, 2, 0, 1]);
    }

    #[test]
    fn max_residual_and_distance() {
        // Residuals at x = 0 are b = (0, -3, 2).
        let mat = RowMatrix::from_rows(&[[1.0, 0.0], [0.0, 10.0], [1.0, 0.0]]).unwrap();
        let b = [0.0, -3.0, 2.0];
        let mut rng = SolverRng::seed_from_u64(0);
        let s = st(0, None, None, 2);
        assert_eq!(select_next(Selection::MaxResidual, Projection::Orthogonal, &s, &mat, &b, &mut rng).unwrap(), 1);
        // Distances: 0, 0.3, 2.
        assert_eq!(select_next(Selection::MaxDistance, Projection::Orthogonal, &s, &mat, &b, &mut rng).unwrap(), 2);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let mat = RowMatrix::from_rows(&[[1.0], [1.0], [1.0]]).unwrap();
        let mut rng = SolverRng::seed_from_u64(0);
        let s = st(0, None, None, 1);
        let i = select_next(Selection::MaxResidual, Projection::Orthogonal, &s, &mat, &[2.0, -2.0, 2.0], &mut rng).unwrap();
        assert_eq!(i, 0);
    }

    #[test]
    fn randomized_oblique_needs_three_rows() {
        let mat = RowMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let mut rng = SolverRng::seed_from_u64(0);
        let err = select_next(Selection::Uniform, Projection::Oblique, &st(2, Some(0), Some(1), 2), &mat, &[0.0; 2], &mut rng);
        assert!(matches!(err, Err(Error::TooFewRows { rows: 2, .. })));
    }

    #[test]
    fn exclusion_draws_are_uniform() {
        // m = 5, last two rows are 1 and 3 (0-based): draws must be 0, 2 or 4,
        // each with probability 1/3. Chi-square with 2 dof, 99.9% quantile 13.8.
        let mat = RowMatrix::from_rows(&[[1.0], [1.0], [1.0], [1.0], [1.0]]).unwrap();
        let b = [0.0; 5];
        let s = st(5, Some(1), Some(3), 1);
        let sel = Selector::new(Selection::Uniform, Projection::Oblique, &mat).unwrap();
        let mut rng = SolverRng::seed_from_u64(2024);
        let draws = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            counts[sel.next(&s, &mat, &b, &mut rng)] += 1;
        }
        assert_eq!(counts[1] + counts[3], 0);
        let expected = draws as f64 / 3.0;
        let chi2: f64 = [0, 2, 4]
            .iter()
            .map(|&i| (counts[i] as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 13.8, "chi2 = {chi2}, counts = {counts:?}");
        let sigma = (draws as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for i in [0, 2, 4] {
            assert!((counts[i] as f64 - expected).abs() <= 3.0 * sigma);
        }
    }

    #[test]
    fn second_step_excludes_only_first_row() {
        let mat = RowMatrix::from_rows(&[[1.0], [1.0], [1.0]]).unwrap();
        let sel = Selector::new(Selection::Uniform, Projection::Oblique, &mat).unwrap();
        let s = st(1, Some(2), None, 1);
        let mut rng = SolverRng::seed_from_u64(7);
        let mut seen = [false; 3];
        for _ in 0..200 {
            seen[sel.next(&s, &mat, &[0.0; 3], &mut rng)] = true;
        }
        assert_eq!(seen, [true, true, false]);
    }

    #[test]
    fn norm_proportional_frequencies() {
        let mat = RowMatrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let sel = Selector::new(Selection::NormProportional, Projection::Orthogonal, &mat).unwrap();
        let s = st(0, None, None, 1);
        let mut rng = SolverRng::seed_from_u64(99);
        let mut counts = [0usize; 3];
        let draws = 140_000;
        for _ in 0..draws {
            counts[sel.next(&s, &mat, &[0.0; 3], &mut rng)] += 1;
        }
        for (i, &p) in [1.0 / 14.0, 4.0 / 14.0, 9.0 / 14.0].iter().enumerate() {
            let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!((counts[i] as f64 - draws as f64 * p).abs() <= 4.0 * sigma);
        }
    }
}
