//! Linear systems to solve: generated families, the two-equation fixtures,
//! and Matrix Market files.

mod generate;
mod mtx;
mod oracle;

use std::path::PathBuf;

pub use generate::{generate, Family, GeneratorSpec};
pub use mtx::{load_matrix_market, read_matrix_market, read_vector, write_matrix_market, write_vector, RhsMode};
pub use oracle::least_norm_oracle;

use crate::error::{Error, Result};
use crate::linalg::{check_len, norm_sq, RowMatrix};

/// Relative tolerance of the consistency certificate.
pub const CONSISTENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Generated(GeneratorSpec),
    File(PathBuf),
    Fixture(&'static str),
}

/// `A x = b`, optionally with a known exact solution.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mat: RowMatrix,
    pub b: Vec<f64>,
    pub x_true: Option<Vec<f64>>,
    pub provenance: Provenance,
}

impl Problem {
    /// Build a problem, certifying `||A x_true - b|| <= 1e-10 ||A||_F ||x_true||`
    /// when a solution is supplied.
    pub fn new(
        mat: RowMatrix,
        b: Vec<f64>,
        x_true: Option<Vec<f64>>,
        provenance: Provenance,
    ) -> Result<Self> {
        check_len(&b, mat.nrows())?;
        if let Some(x) = &x_true {
            check_len(x, mat.ncols())?;
            let rel = consistency_residual(&mat, &b, x)?;
            if rel > CONSISTENCY_TOL {
                return Err(Error::Inconsistent(rel));
            }
        }
        Ok(Problem {
            mat,
            b,
            x_true,
            provenance,
        })
    }

    pub fn nrows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.mat.ncols()
    }
}

/// `||A x - b|| / (||A||_F ||x||)`, or the plain residual norm when the
/// denominator vanishes.
pub fn consistency_residual(mat: &RowMatrix, b: &[f64], x: &[f64]) -> Result<f64> {
    let ax = mat.matvec(x)?;
    let res: f64 = ax
        .iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .fold(0.0, |acc, v| acc + v)
        .sqrt();
    let scale = (mat.fro_norm_sq() * norm_sq(x)).sqrt();
    Ok(if scale > 0.0 { res / scale } else { res })
}

/// The two-equation systems with solution `(1, 1)`.
///
/// `which = 1`: rows `(7,-8), (8,-7)`, `b = (-1, 1)`.
/// `which = 2`: the nearly dependent rows `(7,8), (140,159)`, `b = (15, 299)`.
pub fn fixture_two_equation(which: u8) -> Result<Problem> {
    let (rows, b, name) = match which {
        1 => ([[7.0, -8.0], [8.0, -7.0]], vec![-1.0, 1.0], "two-equation-1"),
        2 => ([[7.0, 8.0], [140.0, 159.0]], vec![15.0, 299.0], "two-equation-2"),
        other => {
            return Err(Error::InvalidConfig(format!(
                "fixture must be 1 or 2, got {other}"
            )))
        }
    };
    Problem::new(
        RowMatrix::from_rows(&rows)?,
        b,
        Some(vec![1.0, 1.0]),
        Provenance::Fixture(name),
    )
}
