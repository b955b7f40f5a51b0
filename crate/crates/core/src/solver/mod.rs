//! Kaczmarz-type row-action solvers.
//!
//! One stepping engine covers all methods. A method is a pair of a row
//! [`Selection`] rule and a [`Projection`] kind:
//!
//! | method | selection      | projection |
//! |--------|----------------|------------|
//! | K      | cyclic         | orthogonal |
//! | RK     | uniform        | orthogonal |
//! | KO     | cyclic         | oblique    |
//! | RKO    | uniform        | oblique    |
//! | MR     | max residual   | orthogonal |
//! | MD     | max distance   | orthogonal |
//!
//! The first step of every run is an orthogonal projection onto the first
//! selected row. With oblique projection each later step moves along the
//! component of the incoming row orthogonal to the previous row, so the new
//! iterate lies on both hyperplanes.
//!
//! Iteration counts include that first projection: a KO run that solves a
//! two-equation system with one oblique step reports two iterations.

mod select;
mod step;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;

pub use select::select_next;
pub use step::{oblique_direction, oblique_step, orthogonal_step, Direction, ObliqueGeometry};

use crate::error::{Error, Result};
use crate::linalg::{check_len, dist_sq, norm_sq, RowMatrix};
use crate::problems::Problem;
use select::Selector;
use step::{apply_oblique, apply_orthogonal, build_direction, membership, DirBuf};

/// Random stream type used by every solver run.
pub type SolverRng = rand_chacha::ChaCha8Rng;

pub const DEFAULT_MAX_ITERS: usize = 100_000;
pub const DEFAULT_RSE_TOL: f64 = 0.5e-6;
/// Residual tolerance used when no solution is known and none is given.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-6;
pub const DEFAULT_EPSILON_REL: f64 = 1e-12;
pub const DEFAULT_STAGNATION_WINDOW: usize = 1000;
/// Relative step length below which a step counts toward stagnation.
pub const STAGNATION_STEP_TOL: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Cyclic,
    Uniform,
    NormProportional,
    MaxResidual,
    MaxDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    Orthogonal,
    Oblique,
}

/// How the cyclic oblique method obtains its directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Compute `D`, `w` and `h` at every step.
    Online,
    /// Compute them once for all `m` adjacent cyclic pairs.
    Preprocessing,
}

/// What to do when `h <= epsilon_rel * M(next)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegeneratePolicy {
    /// Project orthogonally onto the incoming row instead.
    Fallback,
    /// Leave the iterate unchanged.
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Stop once `||x - x*||^2 / ||x*||^2 < tol`. Needs a known solution.
    RelativeSolutionError(f64),
    /// Stop once `||b - A x|| / ||b|| <= tol`, checked once per `m` steps.
    RelativeResidual(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    K,
    Rk,
    Ko,
    Rko,
    Mr,
    Md,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::K, Method::Rk, Method::Ko, Method::Rko, Method::Mr, Method::Md];

    pub fn name(&self) -> &'static str {
        match self {
            Method::K => "k",
            Method::Rk => "rk",
            Method::Ko => "ko",
            Method::Rko => "rko",
            Method::Mr => "mr",
            Method::Md => "md",
        }
    }

    pub fn selection(&self) -> Selection {
        match self {
            Method::K | Method::Ko => Selection::Cyclic,
            Method::Rk | Method::Rko => Selection::Uniform,
            Method::Mr => Selection::MaxResidual,
            Method::Md => Selection::MaxDistance,
        }
    }

    pub fn projection(&self) -> Projection {
        match self {
            Method::Ko | Method::Rko => Projection::Oblique,
            _ => Projection::Orthogonal,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown solver `{s}` (expected k, rk, ko, rko, mr or md)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub stop: StopRule,
    /// Degeneracy guard relative to `M(next)`.
    pub epsilon_rel: f64,
    pub degenerate: DegeneratePolicy,
    pub seed: u64,
    pub mode: Mode,
    pub selection: Selection,
    pub projection: Projection,
    /// Starting vector; zero when `None`.
    pub x0: Option<Vec<f64>>,
    /// Record a history point every this many steps; 0 disables history.
    pub history_stride: usize,
    /// Consecutive negligible steps before a run is declared stagnant.
    pub stagnation_window: usize,
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        SolverConfig {
            max_iters: DEFAULT_MAX_ITERS,
            stop: StopRule::RelativeSolutionError(DEFAULT_RSE_TOL),
            epsilon_rel: DEFAULT_EPSILON_REL,
            degenerate: DegeneratePolicy::Fallback,
            seed: 0,
            mode: Mode::Online,
            selection: method.selection(),
            projection: method.projection(),
            x0: None,
            history_stride: 0,
            stagnation_window: DEFAULT_STAGNATION_WINDOW,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_stop(mut self, stop: StopRule) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    /// Checks that do not need a problem.
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        let tol = match self.stop {
            StopRule::RelativeSolutionError(t) | StopRule::RelativeResidual(t) => t,
        };
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("stop tolerance must be positive, got {tol}")));
        }
        if !(self.epsilon_rel > 0.0 && self.epsilon_rel < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon_rel must lie in (0, 1), got {}",
                self.epsilon_rel
            )));
        }
        if self.mode == Mode::Preprocessing
            && !(self.selection == Selection::Cyclic && self.projection == Projection::Oblique)
        {
            return Err(Error::InvalidConfig(
                "preprocessing mode applies to the cyclic oblique method only".into(),
            ));
        }
        if self.stagnation_window == 0 {
            return Err(Error::InvalidConfig("stagnation_window must be at least 1".into()));
        }
        Ok(())
    }
}

/// Iterate and the rows that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vec<f64>,
    /// Number of updates applied so far.
    pub k: usize,
    /// Row of the most recent update.
    pub last_index: Option<usize>,
    /// Row of the update before that.
    pub prev_index: Option<usize>,
}

impl SolverState {
    pub fn new(x: Vec<f64>) -> Self {
        SolverState {
            x,
            k: 0,
            last_index: None,
            prev_index: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Orthogonal,
    Oblique,
    SkippedDegenerate,
}

/// Per-step diagnostic data.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Iteration count after this step.
    pub k: usize,
    pub index: usize,
    /// Row the oblique direction was taken against.
    pub previous_index: Option<usize>,
    pub kind: StepKind,
    /// Present whenever an oblique direction was formed, including
    /// degenerate steps.
    pub geometry: Option<ObliqueGeometry>,
    /// Residual of the chosen row before the step.
    pub residual: f64,
    pub x_before: Vec<f64>,
    pub x_after: Vec<f64>,
    pub error_sq_before: Option<f64>,
    pub error_sq_after: Option<f64>,
    /// Relative residual of row `index` after the step.
    pub membership: f64,
    /// Relative residual of row `previous_index` after the step.
    pub previous_membership: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    IterationCap,
    Stagnation,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::IterationCap => "iteration-cap",
            Termination::Stagnation => "stagnation",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepCounts {
    pub orthogonal: usize,
    pub oblique: usize,
    pub skipped: usize,
}

/// One point of the convergence history: the relative solution error when
/// the solution is known, otherwise the relative residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryPoint {
    pub k: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub termination: Termination,
    pub iterations: usize,
    pub x: Vec<f64>,
    pub final_rse: Option<f64>,
    pub final_residual: f64,
    pub counts: StepCounts,
    pub history: Vec<HistoryPoint>,
    pub wall_time: Duration,
}

impl RunReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

struct Precomputed {
    d: Vec<f64>,
    h: Vec<f64>,
    dirs: Vec<DirBuf>,
}

/// Shared stepping engine behind [`solve`] and [`iterate_stream`].
struct Engine<'a> {
    mat: &'a RowMatrix,
    b: &'a [f64],
    x_true: Option<&'a [f64]>,
    x_true_norm_sq: f64,
    b_norm: f64,
    config: &'a SolverConfig,
    state: SolverState,
    rng: SolverRng,
    selector: Selector,
    dir: DirBuf,
    pre: Option<Precomputed>,
    counts: StepCounts,
    quiet_steps: usize,
    last_residual_check: Option<f64>,
    termination: Option<Termination>,
}

impl<'a> Engine<'a> {
    fn new(problem: &'a Problem, config: &'a SolverConfig) -> Result<Self> {
        config.validate()?;
        let mat = &problem.mat;
        mat.ensure_valid()?;
        check_len(&problem.b, mat.nrows())?;
        if matches!(config.stop, StopRule::RelativeSolutionError(_)) && problem.x_true.is_none() {
            return Err(Error::MissingSolution);
        }
        let x = match &config.x0 {
            Some(x0) => {
                check_len(x0, mat.ncols())?;
                x0.clone()
            }
            None => vec![0.0; mat.ncols()],
        };
        let selector = Selector::new(config.selection, config.projection, mat)?;
        let pre = (config.mode == Mode::Preprocessing).then(|| {
            let m = mat.nrows();
            let mut pre = Precomputed {
                d: Vec::with_capacity(m),
                h: Vec::with_capacity(m),
                dirs: Vec::with_capacity(m),
            };
            for i in 0..m {
                let mut buf = DirBuf::new(mat);
                let (d, h) = if m > 1 {
                    build_direction(mat, i, (i + 1) % m, &mut buf)
                } else {
                    (0.0, 0.0)
                };
                pre.d.push(d);
                pre.h.push(h);
                pre.dirs.push(buf);
            }
            pre
        });
        let x_true = problem.x_true.as_deref();
        Ok(Engine {
            mat,
            b: &problem.b,
            x_true,
            x_true_norm_sq: x_true.map_or(0.0, norm_sq),
            b_norm: norm_sq(&problem.b).sqrt(),
            config,
            state: SolverState::new(x),
            rng: SolverRng::seed_from_u64(config.seed),
            selector,
            dir: DirBuf::new(mat),
            pre,
            counts: StepCounts::default(),
            quiet_steps: 0,
            last_residual_check: None,
            termination: None,
        })
    }

    fn rse(&self) -> Option<f64> {
        self.x_true.map(|xt| {
            let e = dist_sq(&self.state.x, xt);
            if self.x_true_norm_sq > 0.0 {
                e / self.x_true_norm_sq
            } else {
                e
            }
        })
    }

    fn relative_residual(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.mat.nrows() {
            let r = self.b[i] - self.mat.row(i).dot(&self.state.x);
            acc += r * r;
        }
        let r = acc.sqrt();
        if self.b_norm > 0.0 {
            r / self.b_norm
        } else {
            r
        }
    }

    /// Evaluate the stop rule at the current iterate; sets and returns the
    /// termination reason when the run is over.
    fn check_stop(&mut self) -> Option<Termination> {
        if self.termination.is_some() {
            return self.termination;
        }
        let converged = match self.config.stop {
            StopRule::RelativeSolutionError(tol) => self.rse().is_some_and(|e| e < tol),
            StopRule::RelativeResidual(tol) => {
                if self.state.k.is_multiple_of(self.mat.nrows()) {
                    let r = self.relative_residual();
                    self.last_residual_check = Some(r);
                    r <= tol
                } else {
                    false
                }
            }
        };
        self.termination = if converged {
            Some(Termination::Converged)
        } else if self.quiet_steps >= self.config.stagnation_window {
            Some(Termination::Stagnation)
        } else if self.state.k >= self.config.max_iters {
            Some(Termination::IterationCap)
        } else {
            None
        };
        self.termination
    }

    /// Apply one update. Builds a [`StepRecord`] only when asked.
    fn step(&mut self, record: bool) -> Option<StepRecord> {
        let next = self.selector.next(&self.state, self.mat, self.b, &mut self.rng);
        let x_before = record.then(|| self.state.x.clone());
        let prev = self.state.last_index;

        let oblique_prev = match (self.config.projection, prev) {
            (Projection::Oblique, Some(p)) if p != next => Some(p),
            _ => None,
        };

        let (kind, residual, step_len, geometry) = match oblique_prev {
            None => {
                let (r, len) = apply_orthogonal(self.mat, self.b, next, &mut self.state.x);
                (StepKind::Orthogonal, r, len, None)
            }
            Some(p) => {
                let (d, h, dir) = match &self.pre {
                    Some(pre) => (pre.d[p], pre.h[p], &pre.dirs[p]),
                    None => {
                        let (d, h) = build_direction(self.mat, p, next, &mut self.dir);
                        (d, h, &self.dir)
                    }
                };
                let out = apply_oblique(
                    self.mat,
                    self.b,
                    next,
                    d,
                    h,
                    dir,
                    self.config.epsilon_rel,
                    self.config.degenerate,
                    &mut self.state.x,
                );
                let geometry = record.then(|| ObliqueGeometry {
                    d: out.d,
                    w: dir.to_dense(self.mat.ncols()),
                    h: out.h,
                    r: out.r,
                    alpha: out.alpha,
                    sin2_theta: out.h / self.mat.row_norm_sq(next),
                });
                (out.kind, out.r, out.step_len, geometry)
            }
        };

        match kind {
            StepKind::Orthogonal => self.counts.orthogonal += 1,
            StepKind::Oblique => self.counts.oblique += 1,
            StepKind::SkippedDegenerate => self.counts.skipped += 1,
        }
        let xnorm = norm_sq(&self.state.x).sqrt();
        if step_len <= STAGNATION_STEP_TOL * xnorm {
            self.quiet_steps += 1;
        } else {
            self.quiet_steps = 0;
        }

        self.state.k += 1;
        self.state.prev_index = self.state.last_index;
        self.state.last_index = Some(next);

        x_before.map(|x_before| {
            let err = |x: &[f64]| self.x_true.map(|xt| dist_sq(x, xt));
            StepRecord {
                k: self.state.k,
                index: next,
                previous_index: oblique_prev,
                kind,
                geometry,
                residual,
                error_sq_before: err(&x_before),
                error_sq_after: err(&self.state.x),
                membership: membership(self.mat, self.b, next, &self.state.x),
                previous_membership: oblique_prev.map(|p| membership(self.mat, self.b, p, &self.state.x)),
                x_before,
                x_after: self.state.x.clone(),
            }
        })
    }

    fn history_point(&self) -> HistoryPoint {
        HistoryPoint {
            k: self.state.k,
            value: self.rse().unwrap_or_else(|| self.relative_residual()),
        }
    }
}

/// Seed for one trial of a labelled run: a splitmix64 chain over the base
/// seed, the label bytes and the trial index. Independent of scheduling.
pub fn derive_seed(base: u64, label: &str, trial: u64) -> u64 {
    let mut h = crate::linalg::splitmix64(base);
    for byte in label.bytes() {
        h = crate::linalg::splitmix64(h ^ u64::from(byte));
    }
    crate::linalg::splitmix64(h ^ trial)
}

/// Applies single steps from arbitrary states; used to probe the one-step
/// behaviour of a method without running it.
pub(crate) struct Stepper<'a> {
    mat: &'a RowMatrix,
    b: &'a [f64],
    config: &'a SolverConfig,
    selector: Selector,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a Problem, config: &'a SolverConfig) -> Result<Self> {
        config.validate()?;
        problem.mat.ensure_valid()?;
        Ok(Stepper {
            mat: &problem.mat,
            b: &problem.b,
            config,
            selector: Selector::new(config.selection, config.projection, &problem.mat)?,
        })
    }

    /// Iterate after one step from `state`, drawing the row from `rng`.
    pub fn step(&self, state: &SolverState, rng: &mut SolverRng) -> Vec<f64> {
        let next = self.selector.next(state, self.mat, self.b, rng);
        let mut x = state.x.clone();
        match (self.config.projection, state.last_index) {
            (Projection::Oblique, Some(p)) if p != next => {
                let mut dir = DirBuf::new(self.mat);
                let (d, h) = build_direction(self.mat, p, next, &mut dir);
                apply_oblique(
                    self.mat,
                    self.b,
                    next,
                    d,
                    h,
                    &dir,
                    self.config.epsilon_rel,
                    self.config.degenerate,
                    &mut x,
                );
            }
            _ => {
                apply_orthogonal(self.mat, self.b, next, &mut x);
            }
        }
        x
    }
}

/// Run a solver to termination.
pub fn solve(problem: &Problem, config: &SolverConfig) -> Result<RunReport> {
    let mut engine = Engine::new(problem, config)?;
    let mut history = Vec::new();
    let start = Instant::now();
    loop {
        if config.history_stride > 0 && engine.state.k % config.history_stride == 0 {
            history.push(engine.history_point());
        }
        if engine.check_stop().is_some() {
            break;
        }
        engine.step(false);
    }
    let wall_time = start.elapsed();
    let final_rse = engine.rse();
    let final_residual = engine.relative_residual();
    Ok(RunReport {
        termination: engine.termination.expect("loop exits on termination"),
        iterations: engine.state.k,
        final_rse,
        final_residual,
        counts: engine.counts,
        history,
        wall_time,
        x: engine.state.x,
    })
}

/// Check that `config` can run on `problem` without running it.
pub fn preflight(problem: &Problem, config: &SolverConfig) -> Result<()> {
    Engine::new(problem, config).map(drop)
}

/// Lazily yields the steps [`solve`] would take with the same problem and
/// configuration, one [`StepRecord`] per update.
pub struct StepStream<'a> {
    engine: Engine<'a>,
}

impl StepStream<'_> {
    /// Termination reason once the stream is exhausted.
    pub fn termination(&self) -> Option<Termination> {
        self.engine.termination
    }

    pub fn state(&self) -> &SolverState {
        &self.engine.state
    }

    pub fn counts(&self) -> StepCounts {
        self.engine.counts
    }
}

impl Iterator for StepStream<'_> {
    type Item = StepRecord;

    fn next(&mut self) -> Option<StepRecord> {
        if self.engine.check_stop().is_some() {
            return None;
        }
        self.engine.step(true)
    }
}

pub fn iterate_stream<'a>(problem: &'a Problem, config: &'a SolverConfig) -> Result<StepStream<'a>> {
    Ok(StepStream {
        engine: Engine::new(problem, config)?,
    })
}
