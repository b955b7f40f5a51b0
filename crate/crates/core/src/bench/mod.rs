//! Multi-trial benchmark harness: experiment plans, parallel execution and
//! CSV / aligned-table output.
//!
//! Every `(solver, trial)` run gets its own seed derived from the plan's
//! base seed, the solver label and the trial index, and results are stored
//! by position, so output does not depend on the number of worker threads.

mod config;
mod emit;

use std::path::PathBuf;
use std::time::Duration;

use rayon::prelude::*;

pub use config::{load_plans, parse_plans};
pub use emit::{emit, Format, CSV_HEADER};

use crate::error::{Error, Result};
use crate::problems::{fixture_two_equation, generate, load_matrix_market, GeneratorSpec, Problem, RhsMode};
use crate::solver::{derive_seed, preflight, solve, Method, SolverConfig, StopRule, Termination};

pub const DEFAULT_TRIALS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    Generated(GeneratorSpec),
    File { matrix: PathBuf, rhs: RhsMode },
    /// One of the two-equation fixtures, `1` or `2`.
    Fixture(u8),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSpec {
    /// Column label in reports; defaults to the upper-case method name.
    pub label: String,
    pub method: Method,
    /// Stop rule, iteration cap and seed are overwritten from the plan.
    pub config: SolverConfig,
}

impl SolverSpec {
    pub fn new(method: Method) -> Self {
        SolverSpec {
            label: method.name().to_uppercase(),
            method,
            config: SolverConfig::new(method),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub id: String,
    pub source: ProblemSource,
    pub solvers: Vec<SolverSpec>,
    pub trials: usize,
    pub base_seed: u64,
    /// Shared by every solver so the comparison is fair.
    pub stop: StopRule,
    pub max_iters: usize,
    /// Draw a fresh matrix for every trial (generated sources only).
    pub resample: bool,
    /// Worker threads; 0 uses all available cores.
    pub threads: usize,
    pub output: Option<PathBuf>,
}

impl ExperimentPlan {
    pub fn new(id: impl Into<String>, source: ProblemSource) -> Self {
        ExperimentPlan {
            id: id.into(),
            source,
            solvers: Vec::new(),
            trials: DEFAULT_TRIALS,
            base_seed: 0,
            stop: StopRule::RelativeSolutionError(crate::solver::DEFAULT_RSE_TOL),
            max_iters: crate::solver::DEFAULT_MAX_ITERS,
            resample: true,
            threads: 0,
            output: None,
        }
    }

    pub fn with_solvers(mut self, methods: &[Method]) -> Self {
        self.solvers = methods.iter().map(|&m| SolverSpec::new(m)).collect();
        self
    }

    /// Configuration actually used for one trial of one solver.
    pub fn trial_config(&self, solver: &SolverSpec, trial: usize) -> SolverConfig {
        SolverConfig {
            stop: self.stop,
            max_iters: self.max_iters,
            seed: derive_seed(self.base_seed, &solver.label, trial as u64),
            ..solver.config.clone()
        }
    }

    /// Problem for one trial. Generated sources draw from a seed derived
    /// from the generator seed (and the trial index when resampling).
    pub fn trial_problem(&self, trial: usize) -> Result<Problem> {
        match &self.source {
            ProblemSource::Generated(spec) => {
                let t = if self.resample { trial as u64 } else { 0 };
                generate(&GeneratorSpec {
                    seed: derive_seed(spec.seed, "problem", t),
                    ..spec.clone()
                })
            }
            ProblemSource::File { matrix, rhs } => load_matrix_market(matrix, rhs.clone()),
            ProblemSource::Fixture(which) => fixture_two_equation(*which),
        }
    }

    fn distinct_problems(&self) -> usize {
        match self.source {
            ProblemSource::Generated(_) if self.resample => self.trials,
            _ => 1,
        }
    }

    /// Checks that need no problem data.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig(format!("experiment `{}`: trials must be at least 1", self.id)));
        }
        if self.solvers.is_empty() {
            return Err(Error::InvalidConfig(format!("experiment `{}` has no solvers", self.id)));
        }
        let mut labels: Vec<&str> = self.solvers.iter().map(|s| s.label.as_str()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(format!(
                "experiment `{}`: duplicate solver label `{}`",
                self.id, w[0]
            )));
        }
        if let ProblemSource::Generated(spec) = &self.source {
            spec.validate()?;
        }
        for s in &self.solvers {
            self.trial_config(s, 0).validate()?;
        }
        Ok(())
    }

    /// `c` or `c/density` for generated sources, empty otherwise.
    pub fn c_density(&self) -> String {
        match &self.source {
            ProblemSource::Generated(spec) => spec.c_density_label(),
            _ => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub iterations: usize,
    pub termination: Termination,
    pub wall_time: Duration,
}

/// Aggregated results of one solver over all trials of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub experiment_id: String,
    pub label: String,
    pub method: Method,
    pub m: usize,
    pub n: usize,
    pub c_density: String,
    pub trials: Vec<TrialResult>,
}

impl SolverReport {
    /// Arithmetic mean of the per-trial iteration counts: integer sum, then
    /// one division.
    pub fn mean_iterations(&self) -> f64 {
        let total: u128 = self.trials.iter().map(|t| t.iterations as u128).sum();
        total as f64 / self.trials.len().max(1) as f64
    }

    pub fn mean_cpu_seconds(&self) -> f64 {
        let total: f64 = self.trials.iter().map(|t| t.wall_time.as_secs_f64()).sum();
        total / self.trials.len().max(1) as f64
    }

    pub fn converged_count(&self) -> usize {
        self.trials
            .iter()
            .filter(|t| t.termination == Termination::Converged)
            .count()
    }

    pub fn converged_fraction(&self) -> f64 {
        self.converged_count() as f64 / self.trials.len().max(1) as f64
    }

    /// True when every trial converged; otherwise the means are not
    /// comparable and reports show `-`.
    pub fn all_converged(&self) -> bool {
        !self.trials.is_empty() && self.converged_count() == self.trials.len()
    }
}

/// Run every solver of `plan` for `plan.trials` trials.
///
/// All problems are built and every solver configuration is checked against
/// them before the first run, so an invalid plan produces no partial
/// results.
pub fn run_plan(plan: &ExperimentPlan) -> Result<Vec<SolverReport>> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;

    pool.install(|| {
        let problems: Vec<Problem> = (0..plan.distinct_problems())
            .into_par_iter()
            .map(|t| plan.trial_problem(t))
            .collect::<Result<_>>()?;
        for s in &plan.solvers {
            preflight(&problems[0], &plan.trial_config(s, 0))?;
        }

        let jobs: Vec<(usize, usize)> = (0..plan.solvers.len())
            .flat_map(|s| (0..plan.trials).map(move |t| (s, t)))
            .collect();
        let results: Vec<TrialResult> = jobs
            .par_iter()
            .map(|&(s, t)| {
                let problem = &problems[t.min(problems.len() - 1)];
                let rep = solve(problem, &plan.trial_config(&plan.solvers[s], t))?;
                Ok(TrialResult {
                    trial: t,
                    iterations: rep.iterations,
                    termination: rep.termination,
                    wall_time: rep.wall_time,
                })
            })
            .collect::<Result<_>>()?;

        let (m, n) = (problems[0].nrows(), problems[0].ncols());
        Ok(plan
            .solvers
            .iter()
            .zip(results.chunks(plan.trials))
            .map(|(s, chunk)| SolverReport {
                experiment_id: plan.id.clone(),
                label: s.label.clone(),
                method: s.method,
                m,
                n,
                c_density: plan.c_density(),
                trials: chunk.to_vec(),
            })
            .collect())
    })
}
