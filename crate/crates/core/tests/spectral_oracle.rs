//! `spectral_stats` against nalgebra's dense SVD.

use nalgebra::DMatrix;
use oblique_kaczmarz::diagnostics::contraction_bound;
use oblique_kaczmarz::linalg::{spectral_stats, RowMatrix};
use oblique_kaczmarz::problems::{generate, GeneratorSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn svd_stats(mat: &RowMatrix, rank_tol: f64) -> (f64, f64, usize) {
    let a = DMatrix::from_row_slice(mat.nrows(), mat.ncols(), &mat.to_dense());
    let sq: Vec<f64> = a.singular_values().iter().map(|s| s * s).collect();
    let fro: f64 = sq.iter().sum();
    let nonzero: Vec<f64> = sq.iter().copied().filter(|&v| v > rank_tol * fro).collect();
    let smin = nonzero.iter().copied().fold(f64::INFINITY, f64::min);
    (fro, smin, nonzero.len())
}

fn assert_matches(mat: &RowMatrix, what: &str) {
    let tol = 1e-12;
    let got = spectral_stats(mat, tol).unwrap();
    let (fro, smin, rank) = svd_stats(mat, 1e-10);
    assert!((got.fro_norm_sq - fro).abs() <= 1e-12 * fro, "{what}: fro");
    assert!(
        (got.sigma_min_sq - smin).abs() <= 1e-10 * smin,
        "{what}: sigma_min^2 {} vs {smin}",
        got.sigma_min_sq
    );
    assert_eq!(got.rank_estimate, rank, "{what}: rank");
}

#[test]
fn random_dense_matrices() {
    for seed in 0..10 {
        let p = generate(&GeneratorSpec::uniform(20 + seed as usize, 5 + seed as usize % 4, seed)).unwrap();
        assert_matches(&p.mat, &format!("uniform seed {seed}"));
    }
}

#[test]
fn coherent_matrices() {
    // Entries on [0.9, 1] give one dominant singular value and a small tail.
    for seed in 0..5 {
        let p = generate(&GeneratorSpec::interval(60, 8, 0.9, seed)).unwrap();
        assert_matches(&p.mat, &format!("interval seed {seed}"));
    }
}

#[test]
fn sparse_matrices() {
    for seed in 0..5 {
        let p = generate(&GeneratorSpec::sparse(40, 10, 0.0, 0.3, seed)).unwrap();
        assert_matches(&p.mat, &format!("sparse seed {seed}"));
    }
}

#[test]
fn rank_deficient_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (m, n, r) in [(6, 4, 2), (10, 6, 3), (12, 12, 7)] {
        let b = DMatrix::from_fn(m, r, |_, _| rng.gen_range(-1.0..1.0));
        let c = DMatrix::from_fn(r, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = b * c;
        let rows: Vec<Vec<f64>> = (0..m).map(|i| a.row(i).iter().cloned().collect()).collect();
        let mat = RowMatrix::from_rows(&rows).unwrap();
        assert_matches(&mat, &format!("{m}x{n} rank {r}"));
    }
}

#[test]
fn second_two_equation_system_closed_form() {
    // Gram matrix [[19649, 22316], [22316, 25345]]: eigenvalues from the
    // characteristic polynomial.
    let mat = RowMatrix::from_rows(&[[7.0, 8.0], [140.0, 159.0]]).unwrap();
    let (a, b, d): (f64, f64, f64) = (19649.0, 22316.0, 25345.0);
    let tr = a + d;
    let det = a * d - b * b;
    let lmin = det / ((tr + (tr * tr - 4.0 * det).sqrt()) / 2.0);
    let got = spectral_stats(&mat, 1e-12).unwrap();
    assert!((got.sigma_min_sq - lmin).abs() <= 1e-10 * lmin);
    assert_eq!(got.fro_norm_sq, tr);
}

#[test]
fn contraction_bound_uses_the_oracle_value() {
    let p = generate(&GeneratorSpec::uniform(20, 5, 6)).unwrap();
    let bound = contraction_bound(&p.mat).unwrap();
    let (fro, smin, _) = svd_stats(&p.mat, 1e-10);
    let rho = 1.0 - smin / (18.0 * (fro - smin));
    assert!((bound.rho - rho).abs() <= 1e-12);
    assert!(bound.rho > 0.0 && bound.rho < 1.0);
}
