use std::path::{Path, PathBuf};

use oblique_kaczmarz::problems::{fixture_two_equation, load_matrix_market, RhsMode};
use oblique_kaczmarz::{Error, Problem};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn load(name: &str) -> Problem {
    load_matrix_market(&data(name), RhsMode::AllOnes).unwrap()
}

#[test]
fn coordinate_file_encodes_the_first_fixture() {
    let p = load("two_equation_1.mtx");
    let fx = fixture_two_equation(1).unwrap();
    assert_eq!(p.mat.to_dense(), fx.mat.to_dense());
    assert!(p.mat.is_sparse());
    assert_eq!(p.mat.row_norms_sq(), &[113.0, 113.0]);
    // All-ones right-hand side records the solution.
    assert_eq!(p.b, vec![-1.0, 1.0]);
    assert_eq!(p.x_true, Some(vec![1.0, 1.0]));
}

#[test]
fn rhs_from_file_has_no_known_solution() {
    let p = load_matrix_market(&data("two_equation_1.mtx"), RhsMode::FromFile(data("rhs_2.mtx"))).unwrap();
    assert_eq!(p.b, vec![-1.0, 1.0]);
    assert!(p.x_true.is_none());
}

#[test]
fn symmetric_file_is_expanded() {
    let p = load("symmetric_3x3.mtx");
    let a = p.mat.to_dense();
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(a[i * 3 + j], a[j * 3 + i]);
        }
    }
    assert_eq!(a, vec![4.0, -1.5, 0.5, -1.5, 3.25, 0.0, 0.5, 0.0, 2.0]);
    assert_eq!(p.mat.nnz(), 7);
}

#[test]
fn array_file_is_column_major() {
    let p = load("array_3x2.mtx");
    assert!(!p.mat.is_sparse());
    assert_eq!(p.mat.to_dense(), vec![1.0, -4.5, 2.0, 0.0, 3.0, 0.6]);
}

#[test]
fn sparse_rectangular_file() {
    let p = load("sparse_8x5.mtx");
    assert_eq!((p.nrows(), p.ncols(), p.mat.nnz()), (8, 5, 14));
    assert!((p.mat.density() - 14.0 / 40.0).abs() < 1e-15);
    // Row 6 (1-based) lists column 5 before column 1; storage is sorted.
    let row: Vec<(usize, f64)> = p.mat.row(5).entries().collect();
    assert_eq!(row, vec![(0, 0.5), (4, 1.0)]);
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_matrix_market(&data("does_not_exist.mtx"), RhsMode::AllOnes).unwrap_err();
    assert!(matches!(err, Error::Io(_)));
    assert!(!err.is_numerical());
}

#[test]
fn header_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("%%MatrixMarket matrix coordinate pattern general\n2 2 1\n1 1\n", 1),
        ("%%MatrixMarket matrix coordinate complex general\n2 2 1\n1 1 1 0\n", 1),
        ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n3 1 1\n", 4),
        ("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n2 2 1\n", 4),
        ("not a header\n", 1),
    ];
    for (text, line) in cases {
        let path = dir.path().join("bad.mtx");
        std::fs::write(&path, text).unwrap();
        match load_matrix_market(&path, RhsMode::AllOnes) {
            Err(Error::MatrixMarket { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}
