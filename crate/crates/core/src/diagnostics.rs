//! Executable checks of the convergence theory: per-step invariants of the
//! oblique update, the expected-contraction bound of the randomized method
//! and a statistical probe of that bound.

use std::borrow::Borrow;

use rand::SeedableRng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dist_sq, dot, norm_sq, spectral_stats, RowMatrix};
use crate::problems::Problem;
use crate::solver::{derive_seed, iterate_stream, SolverConfig, SolverRng, StepKind, StepRecord, StopRule, Stepper};

/// Relative tolerance for `sigma_min^2` in [`contraction_bound`].
pub const SPECTRAL_TOL: f64 = 1e-12;

pub const ORTHOGONALITY_TOL: f64 = 1e-8;
pub const DECREASE_TOL: f64 = 1e-8;
pub const MEMBERSHIP_TOL: f64 = 1e-10;
/// Allowed growth of `||x_k - x*||`, relative to `||x*||`.
pub const MONOTONICITY_SLACK: f64 = 1e-12;

/// Relative checks divide by `||x - x*||`. Once the error is below this
/// fraction of `||x*||` the iterate's own rounding dominates it, so the
/// checks divide by the floor instead. Runs stopped at the default RSE
/// tolerance never get this close.
pub const ERROR_FLOOR: f64 = 1e-5;

/// Expected one-step contraction factor of randomized oblique Kaczmarz:
/// `rho = 1 - s / ((m - 2) (||A||_F^2 - s))` with `s = sigma_min^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionBound {
    pub m: usize,
    pub fro_norm_sq: f64,
    pub sigma_min_sq: f64,
    pub rho: f64,
}

pub fn contraction_bound(mat: &RowMatrix) -> Result<ContractionBound> {
    let m = mat.nrows();
    if m <= 2 {
        return Err(Error::TooFewRows {
            what: "the contraction bound",
            rows: m,
        });
    }
    let stats = spectral_stats(mat, SPECTRAL_TOL)?;
    let gap = stats.fro_norm_sq - stats.sigma_min_sq;
    if gap <= SPECTRAL_TOL * stats.fro_norm_sq {
        return Err(Error::InvalidMatrix(
            "rank-one matrix: the contraction bound is undefined".into(),
        ));
    }
    Ok(ContractionBound {
        m,
        fro_norm_sq: stats.fro_norm_sq,
        sigma_min_sq: stats.sigma_min_sq,
        rho: 1.0 - stats.sigma_min_sq / ((m - 2) as f64 * gap),
    })
}

/// Worst value of one check and the iteration count at which it occurred.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Worst {
    pub value: f64,
    pub k: Option<usize>,
}

impl Worst {
    fn update(&mut self, value: f64, k: usize) {
        // NaN counts as worst so a broken step can never pass.
        let worse = value.is_nan() || value > self.value || self.k.is_none() && value >= self.value;
        if worse && !self.value.is_nan() {
            self.value = value;
            self.k = Some(k);
        }
    }

    fn within(&self, tol: f64) -> bool {
        self.value <= tol
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InvariantReport {
    pub steps: usize,
    pub oblique_steps: usize,
    /// `|<w, x_{k+1} - x*>| / (||w|| ||x_{k+1} - x*||)` over oblique steps.
    pub orthogonality: Worst,
    /// `|(e_k - e_{k+1}) - r^2 / h| / e_k` with `e = ||x - x*||^2`, over
    /// oblique steps.
    pub decrease_identity: Worst,
    /// Relative residual of the rows just projected onto.
    pub membership: Worst,
    /// `max(0, ||x_{k+1} - x*|| - ||x_k - x*||) / ||x*||` over all steps.
    pub monotonicity: Worst,
}

impl InvariantReport {
    pub fn orthogonality_ok(&self) -> bool {
        self.orthogonality.within(ORTHOGONALITY_TOL)
    }

    pub fn decrease_ok(&self) -> bool {
        self.decrease_identity.within(DECREASE_TOL)
    }

    pub fn membership_ok(&self) -> bool {
        self.membership.within(MEMBERSHIP_TOL)
    }

    pub fn monotonicity_ok(&self) -> bool {
        self.monotonicity.within(MONOTONICITY_SLACK)
    }

    pub fn passed(&self) -> bool {
        self.orthogonality_ok() && self.decrease_ok() && self.membership_ok() && self.monotonicity_ok()
    }

    /// Fold another report into this one.
    pub fn merge(&mut self, other: &InvariantReport) {
        self.steps += other.steps;
        self.oblique_steps += other.oblique_steps;
        for (mine, theirs) in [
            (&mut self.orthogonality, other.orthogonality),
            (&mut self.decrease_identity, other.decrease_identity),
            (&mut self.membership, other.membership),
            (&mut self.monotonicity, other.monotonicity),
        ] {
            if let Some(k) = theirs.k {
                mine.update(theirs.value, k);
            }
        }
    }
}

/// Evaluate the per-step invariants on a recorded run with known solution
/// `x_true`. Orthogonal steps contribute to membership and monotonicity
/// only; skipped steps to monotonicity only.
pub fn check_run<I>(records: I, x_true: &[f64]) -> InvariantReport
where
    I: IntoIterator,
    I::Item: Borrow<StepRecord>,
{
    let xt_norm = norm_sq(x_true).sqrt();
    let floor = ERROR_FLOOR * xt_norm.max(f64::MIN_POSITIVE);
    let mut rep = InvariantReport::default();
    for rec in records {
        let rec = rec.borrow();
        rep.steps += 1;
        let e_before = dist_sq(&rec.x_before, x_true);
        let e_after = dist_sq(&rec.x_after, x_true);

        let growth = (e_after.sqrt() - e_before.sqrt()).max(0.0) / xt_norm.max(f64::MIN_POSITIVE);
        rep.monotonicity.update(growth, rec.k);

        if rec.kind == StepKind::SkippedDegenerate {
            continue;
        }
        rep.membership.update(rec.membership, rec.k);

        if rec.kind != StepKind::Oblique {
            continue;
        }
        rep.oblique_steps += 1;
        if let Some(pm) = rec.previous_membership {
            rep.membership.update(pm, rec.k);
        }
        let Some(g) = &rec.geometry else {
            // An oblique step without geometry cannot be checked: fail it.
            rep.orthogonality.update(f64::NAN, rec.k);
            continue;
        };
        let err: Vec<f64> = rec.x_after.iter().zip(x_true).map(|(a, b)| a - b).collect();
        let w_norm = norm_sq(&g.w).sqrt();
        let orth = dot(&g.w, &err).abs() / (w_norm * e_after.sqrt().max(floor)).max(f64::MIN_POSITIVE);
        rep.orthogonality.update(orth, rec.k);

        let predicted = g.r * g.r / g.h;
        let mismatch = ((e_before - e_after) - predicted).abs() / e_before.max(floor * floor);
        rep.decrease_identity.update(mismatch, rec.k);
    }
    rep
}

/// Run `problem` under `config` with full step records and check them.
pub fn check_solver_run(problem: &Problem, config: &SolverConfig) -> Result<InvariantReport> {
    let x_true = problem.x_true.as_deref().ok_or(Error::MissingSolution)?;
    Ok(check_run(iterate_stream(problem, config)?, x_true))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionSample {
    /// Mean of `||x_{k+1} - x*||^2 / ||x_k - x*||^2` over the trials.
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
    pub k_probe: usize,
    /// `||x_k - x*||^2` at the probe point.
    pub error_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContractionProbe {
    Measured(ContractionSample),
    /// The shared prefix already reached the solution; the ratio is
    /// undefined.
    AlreadyConverged,
}

pub const MIN_PROBE_TRIALS: usize = 100;

/// Estimate the expected one-step contraction at step `k_probe`.
///
/// The first `k_probe` steps are taken once with `config.seed`; each trial
/// then takes one more step from that common iterate with its own seed.
/// Trials run in parallel; ratios are summed in trial order with
/// compensated summation, so the estimate does not depend on scheduling.
pub fn empirical_contraction(
    problem: &Problem,
    config: &SolverConfig,
    trials: usize,
    k_probe: usize,
) -> Result<ContractionProbe> {
    if trials < MIN_PROBE_TRIALS {
        return Err(Error::InvalidConfig(format!(
            "contraction probe needs at least {MIN_PROBE_TRIALS} trials, got {trials}"
        )));
    }
    if k_probe < 2 {
        return Err(Error::InvalidConfig(format!(
            "contraction probe starts after two steps, got k = {k_probe}"
        )));
    }
    let x_true = problem.x_true.as_deref().ok_or(Error::MissingSolution)?;
    if problem.nrows() <= 2 {
        return Err(Error::TooFewRows {
            what: "the contraction probe",
            rows: problem.nrows(),
        });
    }

    // Run the prefix without any stop rule getting in the way.
    let prefix_cfg = SolverConfig {
        stop: StopRule::RelativeSolutionError(f64::MIN_POSITIVE),
        max_iters: k_probe,
        stagnation_window: usize::MAX,
        history_stride: 0,
        ..config.clone()
    };
    let mut stream = iterate_stream(problem, &prefix_cfg)?;
    stream.by_ref().for_each(drop);
    let state = stream.state().clone();
    let error_sq = dist_sq(&state.x, x_true);
    if error_sq == 0.0 || error_sq <= f64::EPSILON * f64::EPSILON * norm_sq(x_true) {
        return Ok(ContractionProbe::AlreadyConverged);
    }
    if state.k < k_probe {
        return Err(Error::InvalidConfig(format!(
            "prefix run stopped after {} of {k_probe} steps",
            state.k
        )));
    }

    let stepper = Stepper::new(problem, config)?;
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = SolverRng::seed_from_u64(derive_seed(config.seed, "contraction-probe", t as u64));
            let x = stepper.step(&state, &mut rng);
            dist_sq(&x, x_true) / error_sq
        })
        .collect();

    let mean = kahan_sum(ratios.iter().copied()) / trials as f64;
    let var = kahan_sum(ratios.iter().map(|r| (r - mean) * (r - mean))) / (trials - 1) as f64;
    Ok(ContractionProbe::Measured(ContractionSample {
        mean,
        std_err: (var / trials as f64).sqrt(),
        trials,
        k_probe,
        error_sq,
    }))
}

/// Compensated (Neumaier) summation.
fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{fixture_two_equation, generate, GeneratorSpec, Provenance};
    use crate::solver::{Method, ObliqueGeometry};

    fn diag(values: &[f64]) -> RowMatrix {
        let n = values.len();
        let mut v = vec![0.0; n * n];
        for (i, d) in values.iter().enumerate() {
            v[i * n + i] = *d;
        }
        RowMatrix::from_dense(n, n, v).unwrap()
    }

    #[test]
    fn bound_identity_and_scaled_identity() {
        let b = contraction_bound(&diag(&[1.0; 3])).unwrap();
        assert!((b.rho - 0.5).abs() < 1e-12);
        let b = contraction_bound(&diag(&[2.0; 4])).unwrap();
        assert!((b.rho - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn bound_refuses_two_rows_and_rank_one() {
        let p = fixture_two_equation(1).unwrap();
        assert!(matches!(contraction_bound(&p.mat), Err(Error::TooFewRows { .. })));
        let r1 = RowMatrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        assert!(contraction_bound(&r1).is_err());
    }

    #[test]
    fn bound_is_permutation_invariant() {
        let p = generate(&GeneratorSpec::uniform(12, 4, 3)).unwrap();
        let rows: Vec<Vec<f64>> = (0..12).rev().map(|i| p.mat.row(i).entries().map(|(_, v)| v).collect()).collect();
        let rev = RowMatrix::from_rows(&rows).unwrap();
        let a = contraction_bound(&p.mat).unwrap().rho;
        let b = contraction_bound(&rev).unwrap().rho;
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn ko_fixture_passes_checks() {
        for which in [1, 2] {
            let p = fixture_two_equation(which).unwrap();
            let rep = check_solver_run(&p, &SolverConfig::new(Method::Ko)).unwrap();
            assert_eq!(rep.oblique_steps, 1);
            // The step lands on the solution, so the orthogonality residual
            // is pure rounding measured against the error floor.
            assert!(rep.orthogonality_ok(), "{rep:?}");
            assert!(rep.decrease_identity.value <= 1e-10, "{rep:?}");
            assert!(rep.membership.value <= 1e-10, "{rep:?}");
            assert!(rep.passed());
        }
    }

    #[test]
    fn orthogonal_only_run_passes_vacuously() {
        let p = generate(&GeneratorSpec::uniform(30, 6, 4)).unwrap();
        let rep = check_solver_run(&p, &SolverConfig::new(Method::K).with_max_iters(500)).unwrap();
        assert_eq!(rep.oblique_steps, 0);
        assert_eq!(rep.orthogonality.k, None);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn doubled_step_fails_decrease_identity() {
        let p = generate(&GeneratorSpec::interval(20, 5, 0.5, 2)).unwrap();
        let cfg = SolverConfig::new(Method::Ko).with_max_iters(40);
        let mut records: Vec<StepRecord> = iterate_stream(&p, &cfg).unwrap().collect();
        let x_true = p.x_true.clone().unwrap();
        assert!(check_run(&records, &x_true).passed());

        let rec = records.iter_mut().find(|r| r.kind == StepKind::Oblique).unwrap();
        let g: &mut ObliqueGeometry = rec.geometry.as_mut().unwrap();
        g.alpha *= 2.0;
        let x_after: Vec<f64> = rec.x_before.iter().zip(&g.w).map(|(x, w)| x + g.alpha * w).collect();
        rec.x_after = x_after;
        let rep = check_run(&records, &x_true);
        assert!(!rep.decrease_ok(), "{rep:?}");
        assert!(!rep.passed());
    }

    #[test]
    fn probe_on_identity_always_contracts() {
        let mat = diag(&[1.0; 6]);
        let x_true = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let p = Problem::new(mat, x_true.clone(), Some(x_true), Provenance::Fixture("eye")).unwrap();
        let cfg = SolverConfig::new(Method::Rko).with_seed(3);
        match empirical_contraction(&p, &cfg, 200, 2).unwrap() {
            ContractionProbe::Measured(s) => assert!(s.mean < 1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn probe_guards_converged_prefix() {
        // Three orthonormal rows in R^3: three steps solve the system exactly.
        let mat = diag(&[1.0; 3]);
        let x_true = vec![1.0, 1.0, 1.0];
        let p = Problem::new(mat, x_true.clone(), Some(x_true), Provenance::Fixture("eye")).unwrap();
        let cfg = SolverConfig::new(Method::Rko);
        assert_eq!(
            empirical_contraction(&p, &cfg, 100, 3).unwrap(),
            ContractionProbe::AlreadyConverged
        );
    }

    #[test]
    fn probe_is_deterministic_and_validates() {
        let p = generate(&GeneratorSpec::uniform(20, 5, 11)).unwrap();
        let cfg = SolverConfig::new(Method::Rko).with_seed(5);
        let a = empirical_contraction(&p, &cfg, 300, 10).unwrap();
        let b = empirical_contraction(&p, &cfg, 300, 10).unwrap();
        assert_eq!(a, b);
        assert!(empirical_contraction(&p, &cfg, 10, 10).is_err());
        assert!(empirical_contraction(&p, &cfg, 300, 1).is_err());
    }

    #[test]
    fn kahan_handles_cancellation() {
        let vals = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(kahan_sum(vals.into_iter()), 2.0);
    }
}
