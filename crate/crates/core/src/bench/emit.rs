use std::str::FromStr;

use super::SolverReport;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "experiment-id",
    "solver",
    "m",
    "n",
    "c/density",
    "trials",
    "mean-IT",
    "mean-CPU-seconds",
    "converged-fraction",
];

/// Marker for a mean taken over trials that did not all converge.
const NOT_CONVERGED: &str = "-";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    /// One row per experiment, an `IT CPU` column pair per solver.
    Table,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "table" => Ok(Format::Table),
            other => Err(Error::InvalidConfig(format!("unknown format `{other}` (expected csv or table)"))),
        }
    }
}

fn it_cell(r: &SolverReport) -> String {
    if r.all_converged() {
        format!("{}", r.mean_iterations())
    } else {
        NOT_CONVERGED.into()
    }
}

fn cpu_cell(r: &SolverReport) -> String {
    if r.all_converged() {
        format!("{:.6}", r.mean_cpu_seconds())
    } else {
        NOT_CONVERGED.into()
    }
}

pub fn emit(reports: &[SolverReport], format: Format) -> String {
    match format {
        Format::Csv => csv(reports),
        Format::Table => table(reports),
    }
}

fn csv(reports: &[SolverReport]) -> String {
    let mut w = ::csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("writing to memory");
    for r in reports {
        w.write_record([
            r.experiment_id.clone(),
            r.label.clone(),
            r.m.to_string(),
            r.n.to_string(),
            r.c_density.clone(),
            r.trials.len().to_string(),
            it_cell(r),
            cpu_cell(r),
            format!("{}", r.converged_fraction()),
        ])
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

fn table(reports: &[SolverReport]) -> String {
    // Solver labels and experiments in first-appearance order.
    let mut labels: Vec<&str> = Vec::new();
    let mut experiments: Vec<&SolverReport> = Vec::new();
    for r in reports {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
        if !experiments.iter().any(|e| e.experiment_id == r.experiment_id) {
            experiments.push(r);
        }
    }

    let mut top = vec![String::new(); 3];
    let mut header = vec!["experiment".to_string(), "m x n".into(), "c/density".into()];
    for l in &labels {
        top.push(l.to_string());
        top.push(String::new());
        header.push("IT".into());
        header.push("CPU".into());
    }
    let mut rows = vec![top, header];
    for e in &experiments {
        let mut row = vec![e.experiment_id.clone(), format!("{}x{}", e.m, e.n), e.c_density.clone()];
        for l in &labels {
            match reports.iter().find(|r| r.experiment_id == e.experiment_id && r.label == *l) {
                Some(r) => {
                    row.push(it_cell(r));
                    row.push(cpu_cell(r));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        rows.push(row);
    }

    let ncols = rows[1].len();
    let mut widths = vec![0; ncols];
    for row in &rows[1..] {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    // A method label spans its IT and CPU columns.
    for (j, l) in labels.iter().enumerate() {
        let (a, b) = (3 + 2 * j, 4 + 2 * j);
        let span = widths[a] + 1 + widths[b];
        if l.len() > span {
            widths[b] += l.len() - span;
        }
    }

    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let mut line = String::new();
        let mut j = 0;
        while j < ncols {
            if j > 0 {
                line.push_str(if j >= 3 && (j - 3) % 2 == 0 { " | " } else { " " });
            }
            if i == 0 && j >= 3 {
                let span = widths[j] + 1 + widths[j + 1];
                line.push_str(&format!("{:<span$}", row[j]));
                j += 2;
                continue;
            }
            if j < 3 {
                line.push_str(&format!("{:<w$}", row[j], w = widths[j]));
            } else {
                line.push_str(&format!("{:>w$}", row[j], w = widths[j]));
            }
            j += 1;
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::TrialResult;
    use crate::solver::{Method, Termination};
    use std::time::Duration;

    fn report(id: &str, label: &str, its: &[(usize, Termination)]) -> SolverReport {
        SolverReport {
            experiment_id: id.into(),
            label: label.into(),
            method: label.to_lowercase().parse().unwrap_or(Method::K),
            m: 100,
            n: 10,
            c_density: "0.5".into(),
            trials: its
                .iter()
                .enumerate()
                .map(|(t, &(iterations, termination))| TrialResult {
                    trial: t,
                    iterations,
                    termination,
                    wall_time: Duration::from_millis(2),
                })
                .collect(),
        }
    }

    #[test]
    fn empty_csv_is_header_only() {
        assert_eq!(
            emit(&[], Format::Csv),
            "experiment-id,solver,m,n,c/density,trials,mean-IT,mean-CPU-seconds,converged-fraction\n"
        );
    }

    #[test]
    fn csv_rows_in_order() {
        let reps = [
            report("e1", "K", &[(10, Termination::Converged), (13, Termination::Converged)]),
            report("e1", "KO", &[(4, Termination::Converged), (4, Termination::Converged)]),
        ];
        let out = emit(&reps, Format::Csv);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "e1,K,100,10,0.5,2,11.5,0.002000,1");
        assert_eq!(lines[2], "e1,KO,100,10,0.5,2,4,0.002000,1");
    }

    #[test]
    fn cap_rendered_as_dash() {
        let reps = [report(
            "e",
            "K",
            &[(100_000, Termination::IterationCap), (50, Termination::Converged)],
        )];
        let out = emit(&reps, Format::Csv);
        assert_eq!(out.lines().nth(1).unwrap(), "e,K,100,10,0.5,2,-,-,0.5");
        let table = emit(&reps, Format::Table);
        let cells: Vec<&str> = table.lines().nth(2).unwrap().split_whitespace().collect();
        assert_eq!(cells[cells.len() - 2..], ["-", "-"], "{table}");
    }

    #[test]
    fn table_groups_it_and_cpu_per_method() {
        let reps = [
            report("a", "K", &[(10, Termination::Converged)]),
            report("a", "KO", &[(4, Termination::Converged)]),
            report("b", "K", &[(20, Termination::Converged)]),
        ];
        let t = emit(&reps, Format::Table);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4, "{t}");
        assert!(lines[0].contains("K") && lines[0].contains("KO"));
        assert!(lines[1].contains("IT") && lines[1].contains("CPU"));
        assert!(lines[2].starts_with("a "));
        assert!(lines[3].starts_with("b "));
        // Experiment b has no KO entry: its cells stay blank.
        assert_eq!(lines[3].matches('|').count(), 2);
    }

    #[test]
    fn format_parses() {
        assert_eq!("csv".parse::<Format>().unwrap(), Format::Csv);
        assert_eq!("table".parse::<Format>().unwrap(), Format::Table);
        assert!("json".parse::<Format>().is_err());
    }
}
