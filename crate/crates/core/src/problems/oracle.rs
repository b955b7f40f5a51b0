use super::Problem;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq, symmetric_eigen, MAX_DENSE_ENTRIES};

const RANK_TOL: f64 = 1e-12;
const CONSISTENCY_TOL: f64 = 1e-8;

/// Least-norm solution `A^+ b` of a small consistent system, for use as a
/// test oracle.
///
/// Works on the eigen-decomposition of `A^T A`: eigenvalues at or below
/// `1e-12 * ||A||_F^2` span the null space, the rest are inverted. One step
/// of iterative refinement follows. The result is checked to solve the
/// system and to be orthogonal to every null-space eigenvector.
pub fn least_norm_oracle(problem: &Problem) -> Result<Vec<f64>> {
    let mat = &problem.mat;
    let (m, n) = (mat.nrows(), mat.ncols());
    if m.saturating_mul(n) > MAX_DENSE_ENTRIES {
        return Err(Error::TooLarge { rows: m, cols: n });
    }
    let (values, vectors) = symmetric_eigen(&mat.gram(), n)?;
    let threshold = RANK_TOL * mat.fro_norm_sq();

    let pinv_normal = |rhs: &[f64]| -> Vec<f64> {
        // (A^T A)^+ rhs restricted to the range eigenvectors.
        let mut out = vec![0.0; n];
        for (lambda, v) in values.iter().zip(&vectors) {
            if *lambda > threshold {
                let c = dot(v, rhs) / lambda;
                for (o, vi) in out.iter_mut().zip(v) {
                    *o += c * vi;
                }
            }
        }
        out
    };

    let mut x = pinv_normal(&mat.matvec_transpose(&problem.b)?);
    let residual = |x: &[f64]| -> Result<Vec<f64>> {
        Ok(mat
            .matvec(x)?
            .iter()
            .zip(&problem.b)
            .map(|(ax, b)| b - ax)
            .collect())
    };
    let correction = pinv_normal(&mat.matvec_transpose(&residual(&x)?)?);
    for (xi, ci) in x.iter_mut().zip(&correction) {
        *xi += ci;
    }

    let r = residual(&x)?;
    let scale = (mat.fro_norm_sq() * norm_sq(&x)).sqrt() + norm_sq(&problem.b).sqrt();
    let rel = norm_sq(&r).sqrt() / scale.max(f64::MIN_POSITIVE);
    if rel > CONSISTENCY_TOL {
        return Err(Error::Inconsistent(rel));
    }
    let xnorm = norm_sq(&x).sqrt();
    for (lambda, v) in values.iter().zip(&vectors) {
        if *lambda <= threshold && dot(v, &x).abs() > 1e-10 * xnorm.max(1.0) {
            return Err(Error::InvalidMatrix(
                "least-norm oracle lost orthogonality to the null space".into(),
            ));
        }
    }
    Ok(x)
}
