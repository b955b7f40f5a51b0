use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Problem, Provenance};
use crate::error::{Error, Result};
use crate::linalg::RowMatrix;

/// Random matrix families.
///
/// All draws come from ChaCha8 seeded with `seed_from_u64(seed)`, so a seed
/// names the same matrix on every platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Dense, i.i.d. uniform on `[0, 1]`.
    UniformDense,
    /// Dense, i.i.d. uniform on `[c, 1]`.
    UniformInterval,
    /// Each entry nonzero with probability `density`, nonzeros uniform on
    /// `[c, 1]`.
    SparseUniform,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::UniformDense => "uniform-dense",
            Family::UniformInterval => "uniform-interval",
            Family::SparseUniform => "sparse-uniform",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-dense" => Ok(Family::UniformDense),
            "uniform-interval" => Ok(Family::UniformInterval),
            "sparse-uniform" => Ok(Family::SparseUniform),
            other => Err(Error::InvalidConfig(format!("unknown family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub family: Family,
    pub m: usize,
    pub n: usize,
    /// Lower end of the entry interval `[c, 1]`.
    pub c: f64,
    /// Only meaningful for [`Family::SparseUniform`].
    pub density: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn uniform(m: usize, n: usize, seed: u64) -> Self {
        GeneratorSpec {
            family: Family::UniformDense,
            m,
            n,
            c: 0.0,
            density: 1.0,
            seed,
        }
    }

    pub fn interval(m: usize, n: usize, c: f64, seed: u64) -> Self {
        GeneratorSpec {
            family: Family::UniformInterval,
            c,
            ..Self::uniform(m, n, seed)
        }
    }

    pub fn sparse(m: usize, n: usize, c: f64, density: f64, seed: u64) -> Self {
        GeneratorSpec {
            family: Family::SparseUniform,
            c,
            density,
            ..Self::uniform(m, n, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidConfig(format!(
                "generator shape {}x{} has an empty dimension",
                self.m, self.n
            )));
        }
        if !(0.0..1.0).contains(&self.c) {
            return Err(Error::InvalidConfig(format!(
                "interval lower bound c must satisfy 0 <= c < 1, got {}",
                self.c
            )));
        }
        if self.family == Family::UniformDense && self.c != 0.0 {
            return Err(Error::InvalidConfig(
                "uniform-dense draws from [0, 1]; use uniform-interval for c > 0".into(),
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "density must satisfy 0 < density <= 1, got {}",
                self.density
            )));
        }
        Ok(())
    }

    /// Short label for reports: `c` for dense families, `c/density` for
    /// sparse ones.
    pub fn c_density_label(&self) -> String {
        match self.family {
            Family::SparseUniform => format!("{}/{}", self.c, self.density),
            _ => format!("{}", self.c),
        }
    }
}

/// Draw a matrix from `spec` and pair it with `b = A * 1`.
///
/// Rows that come out numerically zero are redrawn; the number of redraws is
/// returned alongside the problem.
pub fn generate_counted(spec: &GeneratorSpec) -> Result<(Problem, usize)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = 1.0 - spec.c;
    let mut redraws = 0usize;

    let mat = match spec.family {
        Family::UniformDense | Family::UniformInterval => {
            let mut values = Vec::with_capacity(spec.m * spec.n);
            for _ in 0..spec.m {
                loop {
                    let row: Vec<f64> = (0..spec.n)
                        .map(|_| spec.c + width * rng.gen::<f64>())
                        .collect();
                    if row.iter().any(|&v| v != 0.0) {
                        values.extend(row);
                        break;
                    }
                    redraws += 1;
                }
            }
            RowMatrix::from_dense(spec.m, spec.n, values)?
        }
        Family::SparseUniform => {
            let mut rows = Vec::with_capacity(spec.m);
            for _ in 0..spec.m {
                loop {
                    let mut row = Vec::new();
                    for j in 0..spec.n {
                        if rng.gen::<f64>() < spec.density {
                            let v = spec.c + width * rng.gen::<f64>();
                            if v != 0.0 {
                                row.push((j, v));
                            }
                        }
                    }
                    if !row.is_empty() {
                        rows.push(row);
                        break;
                    }
                    redraws += 1;
                }
            }
            RowMatrix::from_sparse_rows(spec.n, rows)?
        }
    };

    let ones = vec![1.0; spec.n];
    let b = mat.matvec(&ones)?;
    let problem = Problem::new(mat, b, Some(ones), Provenance::Generated(spec.clone()))?;
    Ok((problem, redraws))
}

/// [`generate_counted`] without the redraw count.
pub fn generate(spec: &GeneratorSpec) -> Result<Problem> {
    generate_counted(spec).map(|(p, _)| p)
}
