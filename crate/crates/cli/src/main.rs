use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use oblique_kaczmarz::bench::{emit, load_plans, run_plan, ExperimentPlan, Format, SolverReport};
use oblique_kaczmarz::diagnostics::{check_solver_run, InvariantReport};
use oblique_kaczmarz::problems::{
    fixture_two_equation, generate, load_matrix_market, write_matrix_market, write_vector, Family,
    GeneratorSpec, Problem, RhsMode,
};
use oblique_kaczmarz::solver::{solve, DegeneratePolicy, DEFAULT_RESIDUAL_TOL, Method, Mode, SolverConfig, StopRule};
use oblique_kaczmarz::Error;

/// Exit status when an invariant check fails.
const EXIT_INVARIANT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "kobench", version, about = "Kaczmarz solvers with oblique projection: solve, benchmark, check")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one problem with one solver and print a summary.
    Solve(SolveArgs),
    /// Run the experiments of a configuration file and emit a report.
    Bench(BenchArgs),
    /// Run the per-step invariant checks on the experiments of a
    /// configuration file.
    Check(CheckArgs),
    /// Write a generated problem as a Matrix Market file plus an `_rhs`
    /// sidecar.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    K,
    Rk,
    Ko,
    Rko,
    Mr,
    Md,
}

impl From<SolverArg> for Method {
    fn from(s: SolverArg) -> Method {
        match s {
            SolverArg::K => Method::K,
            SolverArg::Rk => Method::Rk,
            SolverArg::Ko => Method::Ko,
            SolverArg::Rko => Method::Rko,
            SolverArg::Mr => Method::Mr,
            SolverArg::Md => Method::Md,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Online,
    Preprocess,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DegenerateArg {
    Fallback,
    Skip,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    UniformDense,
    UniformInterval,
    SparseUniform,
}

/// Options shared by every run: stop rule, cap and guards.
#[derive(Debug, Args)]
struct RunOpts {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Stop when ||x - x*||^2 / ||x*||^2 drops below this.
    #[arg(long, conflicts_with = "residual_tol")]
    rse_tol: Option<f64>,
    /// Stop when ||b - Ax|| / ||b|| drops to this (checked every m steps).
    #[arg(long)]
    residual_tol: Option<f64>,
    #[arg(long)]
    epsilon_rel: Option<f64>,
}

impl RunOpts {
    fn stop(&self) -> Option<StopRule> {
        match (self.rse_tol, self.residual_tol) {
            (Some(t), _) => Some(StopRule::RelativeSolutionError(t)),
            (None, Some(t)) => Some(StopRule::RelativeResidual(t)),
            (None, None) => None,
        }
    }

    fn apply_to_plan(&self, plan: &mut ExperimentPlan) {
        if let Some(seed) = self.seed {
            plan.base_seed = seed;
        }
        if let Some(cap) = self.max_iters {
            plan.max_iters = cap;
        }
        if let Some(stop) = self.stop() {
            plan.stop = stop;
        }
        if let Some(eps) = self.epsilon_rel {
            for s in &mut plan.solvers {
                s.config.epsilon_rel = eps;
            }
        }
    }
}

#[derive(Debug, Args)]
struct GenOpts {
    #[arg(long, value_enum, default_value = "uniform-dense")]
    family: FamilyArg,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// Seed of the generated matrix.
    #[arg(long, default_value_t = 0)]
    matrix_seed: u64,
}

impl GenOpts {
    fn spec(&self) -> Result<GeneratorSpec, Error> {
        let (m, n) = match (self.m, self.n) {
            (Some(m), Some(n)) => (m, n),
            _ => return Err(Error::InvalidConfig("generated problems need both --m and --n".into())),
        };
        Ok(GeneratorSpec {
            family: match self.family {
                FamilyArg::UniformDense => Family::UniformDense,
                FamilyArg::UniformInterval => Family::UniformInterval,
                FamilyArg::SparseUniform => Family::SparseUniform,
            },
            m,
            n,
            c: self.c,
            density: self.density,
            seed: self.matrix_seed,
        })
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    solver: SolverArg,
    /// Use one of the two-equation fixtures (1 or 2).
    #[arg(long, conflicts_with = "matrix")]
    fixture: Option<u8>,
    /// Matrix Market file to solve.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Right-hand side file; defaults to b = A * ones.
    #[arg(long, requires = "matrix")]
    rhs: Option<PathBuf>,
    #[command(flatten)]
    gen: GenOpts,
    #[command(flatten)]
    run: RunOpts,
    #[arg(long, value_enum, default_value = "online")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "fallback")]
    degenerate: DegenerateArg,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Experiment configuration file.
    config: PathBuf,
    #[command(flatten)]
    run: RunOpts,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Write the report here instead of the configured output or stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    config: PathBuf,
    #[command(flatten)]
    run: RunOpts,
    /// Check at most this many trials per experiment.
    #[arg(long, default_value_t = 5)]
    trials: usize,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    gen: GenOpts,
    /// Matrix output path; the right-hand side goes next to it with an
    /// `_rhs` suffix.
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Error(Error),
    Invariant,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Check(args) => cmd_check(args),
        Command::Gen(args) => cmd_gen(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
        Err(Failure::Invariant) => ExitCode::from(EXIT_INVARIANT),
    }
}

fn solve_problem(args: &SolveArgs) -> Result<Problem, Error> {
    if let Some(which) = args.fixture {
        return fixture_two_equation(which);
    }
    if let Some(matrix) = &args.matrix {
        let rhs = args.rhs.clone().map_or(RhsMode::AllOnes, RhsMode::FromFile);
        return load_matrix_market(matrix, rhs);
    }
    generate(&args.gen.spec()?)
}

fn cmd_solve(args: SolveArgs) -> Result<(), Failure> {
    let method = Method::from(args.solver);
    let problem = solve_problem(&args)?;
    let mut cfg = SolverConfig::new(method);
    cfg.seed = args.run.seed.unwrap_or(0);
    if let Some(cap) = args.run.max_iters {
        cfg.max_iters = cap;
    }
    if let Some(eps) = args.run.epsilon_rel {
        cfg.epsilon_rel = eps;
    }
    cfg.stop = match args.run.stop() {
        Some(stop) => stop,
        None if problem.x_true.is_none() => StopRule::RelativeResidual(DEFAULT_RESIDUAL_TOL),
        None => cfg.stop,
    };
    cfg.mode = match args.mode {
        ModeArg::Online => Mode::Online,
        ModeArg::Preprocess => Mode::Preprocessing,
    };
    cfg.degenerate = match args.degenerate {
        DegenerateArg::Fallback => DegeneratePolicy::Fallback,
        DegenerateArg::Skip => DegeneratePolicy::Skip,
    };

    let rep = solve(&problem, &cfg)?;
    println!("solver      {}", method.name());
    println!("problem     {}x{}", problem.nrows(), problem.ncols());
    println!("status      {}", rep.termination);
    println!("iterations  {}", rep.iterations);
    println!(
        "steps       {} orthogonal, {} oblique, {} skipped",
        rep.counts.orthogonal, rep.counts.oblique, rep.counts.skipped
    );
    if let Some(rse) = rep.final_rse {
        println!("rse         {rse:e}");
    }
    println!("residual    {:e}", rep.final_residual);
    println!("seconds     {:.6}", rep.wall_time.as_secs_f64());
    if problem.ncols() <= 10 {
        let xs: Vec<String> = rep.x.iter().map(|v| format!("{v}")).collect();
        println!("x           [{}]", xs.join(", "));
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<Vec<ExperimentPlan>, Failure> {
    if !path.is_file() {
        return Err(Failure::Usage(format!("configuration file {} not found", path.display())));
    }
    Ok(load_plans(path)?)
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let mut plans = load_config(&args.config)?;
    for plan in &mut plans {
        args.run.apply_to_plan(plan);
        if let Some(t) = args.trials {
            plan.trials = t;
        }
        if let Some(threads) = args.threads {
            plan.threads = threads;
        }
        plan.validate()?;
    }
    let format = match args.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Table => Format::Table,
    };

    // Destination -> reports, in plan order. `None` is stdout.
    let mut outputs: BTreeMap<Option<PathBuf>, Vec<SolverReport>> = BTreeMap::new();
    let mut order: Vec<Option<PathBuf>> = Vec::new();
    for plan in &plans {
        let reports = run_plan(plan)?;
        let dest = args.out.clone().or_else(|| plan.output.clone());
        if !order.contains(&dest) {
            order.push(dest.clone());
        }
        outputs.entry(dest).or_default().extend(reports);
    }
    for dest in order {
        let text = emit(&outputs[&dest], format);
        match dest {
            Some(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(Error::from)?;
                }
                fs::write(&path, text).map_err(Error::from)?;
                eprintln!("wrote {}", path.display());
            }
            None => print!("{text}"),
        }
    }
    Ok(())
}

fn print_report(id: &str, label: &str, rep: &InvariantReport) {
    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    let at = |k: Option<usize>| k.map_or("-".to_string(), |k| k.to_string());
    println!(
        "{id} {label}: {} steps, {} oblique",
        rep.steps, rep.oblique_steps
    );
    println!(
        "  orthogonality      {:>10.3e} at step {:<8} {}",
        rep.orthogonality.value,
        at(rep.orthogonality.k),
        mark(rep.orthogonality_ok())
    );
    println!(
        "  decrease identity  {:>10.3e} at step {:<8} {}",
        rep.decrease_identity.value,
        at(rep.decrease_identity.k),
        mark(rep.decrease_ok())
    );
    println!(
        "  membership         {:>10.3e} at step {:<8} {}",
        rep.membership.value,
        at(rep.membership.k),
        mark(rep.membership_ok())
    );
    println!(
        "  monotonicity       {:>10.3e} at step {:<8} {}",
        rep.monotonicity.value,
        at(rep.monotonicity.k),
        mark(rep.monotonicity_ok())
    );
}

fn cmd_check(args: CheckArgs) -> Result<(), Failure> {
    let mut plans = load_config(&args.config)?;
    let mut all_ok = true;
    for plan in &mut plans {
        args.run.apply_to_plan(plan);
        plan.validate()?;
        let trials = plan.trials.min(args.trials).max(1);
        let problems: Vec<Problem> = (0..trials).map(|t| plan.trial_problem(t)).collect::<Result<_, _>>()?;
        if problems[0].x_true.is_none() {
            return Err(Failure::Error(Error::MissingSolution));
        }
        for solver in &plan.solvers {
            let mut total = InvariantReport::default();
            for (t, problem) in problems.iter().enumerate() {
                total.merge(&check_solver_run(problem, &plan.trial_config(solver, t))?);
            }
            print_report(&plan.id, &solver.label, &total);
            all_ok &= total.passed();
        }
    }
    if all_ok {
        println!("all invariants hold");
        Ok(())
    } else {
        println!("invariant violations found");
        Err(Failure::Invariant)
    }
}

fn rhs_sidecar(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "mtx".into());
    path.with_file_name(format!("{stem}_rhs.{ext}"))
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let problem = generate(&args.gen.spec()?)?;
    write_matrix_market(&problem.mat, &args.out)?;
    let rhs = rhs_sidecar(&args.out);
    write_vector(&problem.b, &rhs)?;
    println!("wrote {} and {}", args.out.display(), rhs.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        assert_eq!(rhs_sidecar(Path::new("out/foo.mtx")), PathBuf::from("out/foo_rhs.mtx"));
        assert_eq!(rhs_sidecar(Path::new("foo")), PathBuf::from("foo_rhs.mtx"));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
