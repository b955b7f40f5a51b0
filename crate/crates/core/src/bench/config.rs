//! Plain-text experiment configuration.
//!
//! ```text
//! # Lines are `key = value`; `#` starts a comment.
//! id = coherent
//! family = uniform-interval
//! m = 1000
//! n = 100
//! c = 0.9
//! trials = 10
//!
//! [solver]
//! name = k
//!
//! [solver]
//! name = ko
//! mode = preprocess
//! ```
//!
//! `[experiment]` starts another experiment in the same file. Keys before
//! the first section header belong to the first experiment. Relative paths
//! resolve against the configuration file's directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{ExperimentPlan, ProblemSource, SolverSpec};
use crate::error::{Error, Result};
use crate::problems::{Family, GeneratorSpec, RhsMode};
use crate::solver::{DegeneratePolicy, Method, Mode, StopRule};

const EXPERIMENT_KEYS: &[&str] = &[
    "id",
    "source",
    "family",
    "m",
    "n",
    "c",
    "density",
    "seed",
    "trials",
    "max_iters",
    "rse_tol",
    "residual_tol",
    "threads",
    "output",
    "matrix",
    "rhs",
    "fixture",
    "resample",
];

const SOLVER_KEYS: &[&str] = &["name", "label", "mode", "epsilon_rel", "degenerate"];

/// Key-value pairs of one section, with the line each came from.
#[derive(Default)]
struct Section {
    line: usize,
    values: HashMap<String, (String, usize)>,
}

struct RawExperiment {
    head: Section,
    solvers: Vec<Section>,
}

struct Ctx<'a> {
    path: &'a Path,
}

impl Ctx<'_> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    fn get<T: FromStr>(&self, sec: &Section, key: &str) -> Result<Option<T>> {
        match sec.values.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(*line, format!("invalid value `{v}` for `{key}`"))),
        }
    }

    fn require<T: FromStr>(&self, sec: &Section, key: &str) -> Result<T> {
        self.get(sec, key)?
            .ok_or_else(|| self.err(sec.line, format!("missing required key `{key}`")))
    }

    fn line_of(&self, sec: &Section, key: &str) -> usize {
        sec.values.get(key).map_or(sec.line, |(_, l)| *l)
    }

    fn resolve(&self, p: &str) -> PathBuf {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            self.path.parent().unwrap_or(Path::new("")).join(p)
        }
    }
}

fn tokenize(text: &str, ctx: &Ctx) -> Result<Vec<RawExperiment>> {
    let mut experiments: Vec<RawExperiment> = Vec::new();
    // Where the next key goes: the experiment head or its latest solver.
    let mut in_solver = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            match line {
                "[experiment]" => {
                    experiments.push(RawExperiment {
                        head: Section {
                            line: line_no,
                            ..Section::default()
                        },
                        solvers: Vec::new(),
                    });
                    in_solver = false;
                }
                "[solver]" => {
                    if experiments.is_empty() {
                        experiments.push(RawExperiment {
                            head: Section {
                                line: line_no,
                                ..Section::default()
                            },
                            solvers: Vec::new(),
                        });
                    }
                    experiments.last_mut().expect("just ensured").solvers.push(Section {
                        line: line_no,
                        ..Section::default()
                    });
                    in_solver = true;
                }
                other => return Err(ctx.err(line_no, format!("unknown section `{other}`"))),
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ctx.err(line_no, format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(ctx.err(line_no, format!("empty value for `{key}`")));
        }
        if experiments.is_empty() {
            experiments.push(RawExperiment {
                head: Section {
                    line: line_no,
                    ..Section::default()
                },
                solvers: Vec::new(),
            });
        }
        let exp = experiments.last_mut().expect("just ensured");
        let (section, allowed) = if in_solver {
            (exp.solvers.last_mut().expect("in a solver section"), SOLVER_KEYS)
        } else {
            (&mut exp.head, EXPERIMENT_KEYS)
        };
        if !allowed.contains(&key) {
            return Err(ctx.err(line_no, format!("unknown key `{key}`")));
        }
        if section.values.insert(key.to_string(), (value.to_string(), line_no)).is_some() {
            return Err(ctx.err(line_no, format!("duplicate key `{key}`")));
        }
    }
    Ok(experiments)
}

fn build_solver(sec: &Section, ctx: &Ctx) -> Result<SolverSpec> {
    let name: String = ctx.require(sec, "name")?;
    let method = Method::from_str(&name).map_err(|e| ctx.err(ctx.line_of(sec, "name"), e.to_string()))?;
    let mut spec = SolverSpec::new(method);
    if let Some(label) = ctx.get::<String>(sec, "label")? {
        spec.label = label;
    }
    if let Some(mode) = ctx.get::<String>(sec, "mode")? {
        spec.config.mode = match mode.as_str() {
            "online" => Mode::Online,
            "preprocess" | "preprocessing" => Mode::Preprocessing,
            other => return Err(ctx.err(ctx.line_of(sec, "mode"), format!("unknown mode `{other}`"))),
        };
    }
    if let Some(eps) = ctx.get(sec, "epsilon_rel")? {
        spec.config.epsilon_rel = eps;
    }
    if let Some(policy) = ctx.get::<String>(sec, "degenerate")? {
        spec.config.degenerate = match policy.as_str() {
            "fallback" => DegeneratePolicy::Fallback,
            "skip" => DegeneratePolicy::Skip,
            other => {
                return Err(ctx.err(
                    ctx.line_of(sec, "degenerate"),
                    format!("unknown degenerate policy `{other}`"),
                ))
            }
        };
    }
    Ok(spec)
}

fn build_source(head: &Section, ctx: &Ctx) -> Result<ProblemSource> {
    let source: String = match ctx.get(head, "source")? {
        Some(s) => s,
        None if head.values.contains_key("matrix") => "file".into(),
        None if head.values.contains_key("fixture") => "fixture".into(),
        None => "generated".into(),
    };
    match source.as_str() {
        "generated" => {
            let family: String = ctx.get(head, "family")?.unwrap_or_else(|| "uniform-dense".into());
            let family =
                Family::from_str(&family).map_err(|e| ctx.err(ctx.line_of(head, "family"), e.to_string()))?;
            let spec = GeneratorSpec {
                family,
                m: ctx.require(head, "m")?,
                n: ctx.require(head, "n")?,
                c: ctx.get(head, "c")?.unwrap_or(0.0),
                density: ctx.get(head, "density")?.unwrap_or(1.0),
                seed: ctx.get(head, "seed")?.unwrap_or(0),
            };
            spec.validate().map_err(|e| ctx.err(head.line, e.to_string()))?;
            Ok(ProblemSource::Generated(spec))
        }
        "file" => {
            let matrix: String = ctx.require(head, "matrix")?;
            let rhs = match ctx.get::<String>(head, "rhs")?.as_deref() {
                None | Some("ones") => RhsMode::AllOnes,
                Some(p) => RhsMode::FromFile(ctx.resolve(p)),
            };
            Ok(ProblemSource::File {
                matrix: ctx.resolve(&matrix),
                rhs,
            })
        }
        "fixture" => {
            let which: u8 = ctx.require(head, "fixture")?;
            if !(1..=2).contains(&which) {
                return Err(ctx.err(ctx.line_of(head, "fixture"), "fixture must be 1 or 2"));
            }
            Ok(ProblemSource::Fixture(which))
        }
        other => Err(ctx.err(ctx.line_of(head, "source"), format!("unknown source `{other}`"))),
    }
}

fn build_plan(raw: &RawExperiment, index: usize, ctx: &Ctx) -> Result<ExperimentPlan> {
    let head = &raw.head;
    let id = ctx.get(head, "id")?.unwrap_or_else(|| format!("experiment-{}", index + 1));
    let mut plan = ExperimentPlan::new(id, build_source(head, ctx)?);
    plan.solvers = raw
        .solvers
        .iter()
        .map(|s| build_solver(s, ctx))
        .collect::<Result<_>>()?;
    if plan.solvers.is_empty() {
        return Err(ctx.err(head.line, format!("experiment `{}` has no [solver] blocks", plan.id)));
    }
    if let Some(t) = ctx.get(head, "trials")? {
        plan.trials = t;
    }
    if let Some(seed) = ctx.get(head, "seed")? {
        plan.base_seed = seed;
    }
    if let Some(cap) = ctx.get(head, "max_iters")? {
        plan.max_iters = cap;
    }
    plan.stop = match (ctx.get(head, "rse_tol")?, ctx.get(head, "residual_tol")?) {
        (Some(_), Some(_)) => {
            return Err(ctx.err(
                ctx.line_of(head, "residual_tol"),
                "set either rse_tol or residual_tol, not both",
            ))
        }
        (Some(t), None) => StopRule::RelativeSolutionError(t),
        (None, Some(t)) => StopRule::RelativeResidual(t),
        (None, None) => plan.stop,
    };
    if let Some(threads) = ctx.get(head, "threads")? {
        plan.threads = threads;
    }
    if let Some(resample) = ctx.get(head, "resample")? {
        plan.resample = resample;
    }
    if let Some(out) = ctx.get::<String>(head, "output")? {
        plan.output = Some(ctx.resolve(&out));
    }
    plan.validate().map_err(|e| ctx.err(head.line, e.to_string()))?;
    Ok(plan)
}

/// Parse every experiment in `text`; `path` is used for error messages and
/// to resolve relative paths.
pub fn parse_plans(text: &str, path: &Path) -> Result<Vec<ExperimentPlan>> {
    let ctx = Ctx { path };
    let raw = tokenize(text, &ctx)?;
    if raw.is_empty() {
        return Err(ctx.err(0, "no experiments defined"));
    }
    raw.iter().enumerate().map(|(i, r)| build_plan(r, i, &ctx)).collect()
}

pub fn load_plans(path: &Path) -> Result<Vec<ExperimentPlan>> {
    parse_plans(&std::fs::read_to_string(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<ExperimentPlan>> {
        parse_plans(text, Path::new("/cfg/plan.conf"))
    }

    #[test]
    fn full_example() {
        let plans = parse(
            "# coherent family\n\
             id = coherent\n\
             family = uniform-interval\n\
             m = 1000   # rows\n\
             n = 100\n\
             c = 0.9\n\
             seed = 42\n\
             trials = 10\n\
             threads = 2\n\
             output = out/coherent.csv\n\
             \n\
             [solver]\n\
             name = k\n\
             [solver]\n\
             name = ko\n\
             label = KO-pre\n\
             mode = preprocess\n\
             epsilon_rel = 1e-10\n\
             degenerate = skip\n",
        )
        .unwrap();
        assert_eq!(plans.len(), 1);
        let p = &plans[0];
        assert_eq!(p.id, "coherent");
        assert_eq!(p.trials, 10);
        assert_eq!(p.base_seed, 42);
        assert_eq!(p.threads, 2);
        assert_eq!(p.output.as_deref(), Some(Path::new("/cfg/out/coherent.csv")));
        match &p.source {
            ProblemSource::Generated(g) => {
                assert_eq!((g.family, g.m, g.n, g.c), (Family::UniformInterval, 1000, 100, 0.9))
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(p.solvers[0].label, "K");
        let ko = &p.solvers[1];
        assert_eq!(ko.label, "KO-pre");
        assert_eq!(ko.config.mode, Mode::Preprocessing);
        assert_eq!(ko.config.epsilon_rel, 1e-10);
        assert_eq!(ko.config.degenerate, DegeneratePolicy::Skip);
        assert_eq!(p.stop, StopRule::RelativeSolutionError(0.5e-6));
    }

    #[test]
    fn multiple_experiments_and_sources() {
        let plans = parse(
            "[experiment]\nfixture = 2\n[solver]\nname = ko\n\
             [experiment]\nid = file\nmatrix = a.mtx\nrhs = b.mtx\nresidual_tol = 1e-8\n[solver]\nname = rk\n",
        )
        .unwrap();
        assert_eq!(plans.len(), 2);
        assert_eq!(plans[0].id, "experiment-1");
        assert_eq!(plans[0].source, ProblemSource::Fixture(2));
        assert_eq!(
            plans[1].source,
            ProblemSource::File {
                matrix: "/cfg/a.mtx".into(),
                rhs: RhsMode::FromFile("/cfg/b.mtx".into())
            }
        );
        assert_eq!(plans[1].stop, StopRule::RelativeResidual(1e-8));
    }

    fn line_of(err: Error) -> usize {
        match err {
            Error::Config { line, .. } => line,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(line_of(parse("m = 3\nn = 2\nbogus = 1\n").unwrap_err()), 3);
        assert_eq!(line_of(parse("m = 3\nm = 4\n").unwrap_err()), 2);
        assert_eq!(line_of(parse("m = x\nn = 2\n[solver]\nname = k\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("m = 3\nn = 2\n[solver]\nname = grk\n").unwrap_err()), 4);
        assert_eq!(line_of(parse("m = 3\nn = 2\n[solver]\nname = k\nmode = fast\n").unwrap_err()), 5);
        assert_eq!(line_of(parse("[weird]\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("just text\n").unwrap_err()), 1);
    }

    #[test]
    fn semantic_errors() {
        assert!(parse("").is_err());
        assert!(parse("m = 3\nn = 2\n").is_err(), "no solvers");
        assert!(parse("n = 2\n[solver]\nname = k\n").is_err(), "missing m");
        assert!(parse("m = 3\nn = 2\nrse_tol = 1e-6\nresidual_tol = 1e-6\n[solver]\nname = k\n").is_err());
        assert!(parse("m = 3\nn = 2\nc = 1.5\nfamily = uniform-interval\n[solver]\nname = k\n").is_err());
        assert!(parse("fixture = 3\n[solver]\nname = k\n").is_err());
        assert!(parse("m = 3\nn = 2\ntrials = 0\n[solver]\nname = k\n").is_err());
        assert!(parse("m = 3\nn = 2\n[solver]\nname = k\nmode = preprocess\n").is_err());
    }
}
