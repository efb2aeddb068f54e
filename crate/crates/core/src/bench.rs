//! Batch runs over a problem set, failure tallies, result tables and
//! Dolan-Moré performance profiles.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::driver::{outer_solve, DriverConfig, SolveStatus};
use crate::model::MpccProblem;
use crate::regularize::Scheme;

pub const CSV_HEADER: [&str; 10] = ["name", "n", "m", "p", "q", "scheme", "f_star", "it_int", "it_ext", "status"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    pub driver: DriverConfig,
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            driver: DriverConfig::default(),
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub scheme: Scheme,
    /// `None` for runs that did not converge.
    pub f_star: Option<f64>,
    pub it_int: usize,
    pub it_ext: usize,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureSummary {
    pub scheme: Scheme,
    pub failures: usize,
    pub total: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub schemes: Vec<Scheme>,
    pub problem_count: usize,
    pub failures: Vec<FailureSummary>,
    pub config: BenchConfig,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("nothing to run: the scheme list is empty")]
    NoSchemes,
    #[error("nothing to run: the problem list is empty")]
    NoProblems,
    #[error("results file has no '{0}' column")]
    MissingColumn(String),
    #[error("results file, record {record}: {message}")]
    Parse { record: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("could not build the worker pool: {0}")]
    Pool(String),
}

/// `100 * failures / total` rounded half-up to one decimal.
pub fn failure_percentage(failures: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let (f, t) = (failures as u128, total as u128);
    let tenths = (2000 * f + t) / (2 * t);
    tenths as f64 / 10.0
}

/// Scientific notation with six decimals and a signed two-digit exponent,
/// e.g. `1.700000E+01`.
pub fn format_sci(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.6E}");
    let (mantissa, exp) = s.split_once('E').expect("E in exponent format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}E{sign}{:02}", exp.abs())
}

pub fn run_bench(problems: &[MpccProblem], schemes: &[Scheme], config: &BenchConfig) -> Result<BenchReport, BenchError> {
    if schemes.is_empty() {
        return Err(BenchError::NoSchemes);
    }
    if problems.is_empty() {
        return Err(BenchError::NoProblems);
    }
    let jobs: Vec<(usize, Scheme)> = (0..problems.len())
        .flat_map(|i| schemes.iter().map(move |&s| (i, s)))
        .collect();
    let run = || -> Vec<(usize, BenchRow)> {
        jobs.par_iter()
            .map(|&(i, scheme)| {
                let p = &problems[i];
                let r = outer_solve(p, scheme, &config.driver);
                let row = BenchRow {
                    name: p.name.clone(),
                    n: p.n(),
                    m: p.m(),
                    p: p.p(),
                    q: p.q(),
                    scheme,
                    f_star: r.converged().then_some(r.f),
                    it_int: r.it_int,
                    it_ext: r.it_ext,
                    status: r.status,
                };
                (i, row)
            })
            .collect()
    };
    let mut rows = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| BenchError::Pool(e.to_string()))?
            .install(run),
        None => run(),
    };
    rows.sort_by(|(ia, a), (ib, b)| a.name.cmp(&b.name).then(ia.cmp(ib)).then(a.scheme.cmp(&b.scheme)));
    let rows: Vec<BenchRow> = rows.into_iter().map(|(_, r)| r).collect();

    let failures = schemes
        .iter()
        .map(|&scheme| {
            let failures = rows
                .iter()
                .filter(|r| r.scheme == scheme && r.status != SolveStatus::Converged)
                .count();
            FailureSummary {
                scheme,
                failures,
                total: problems.len(),
                percent: failure_percentage(failures, problems.len()),
            }
        })
        .collect();
    Ok(BenchReport {
        rows,
        schemes: schemes.to_vec(),
        problem_count: problems.len(),
        failures,
        config: config.clone(),
    })
}

pub fn to_csv(report: &BenchReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in &report.rows {
        let f = r.f_star.map_or_else(|| "NC".to_string(), format_sci);
        w.write_record([
            r.name.clone(),
            r.n.to_string(),
            r.m.to_string(),
            r.p.to_string(),
            r.q.to_string(),
            r.scheme.to_string(),
            f,
            r.it_int.to_string(),
            r.it_ext.to_string(),
            r.status.as_str().to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Failure tally block: one line per scheme with count and percentage.
pub fn failure_summary(report: &BenchReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12}{:>10}{:>8}", "scheme", "failures", "%");
    for f in &report.failures {
        let _ = writeln!(out, "{:<12}{:>10}{:>8.1}", f.scheme.as_str(), f.failures, f.percent);
    }
    out
}

/// Fixed-width table: one line per problem, one column group per scheme.
pub fn to_text_table(report: &BenchReport, timestamp: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(ts) = timestamp {
        let _ = writeln!(out, "# generated {ts}");
    }
    let mut header = format!("{:<12}{:>4}{:>4}{:>4}{:>4}", "problem", "n", "m", "p", "q");
    for s in &report.schemes {
        header += &format!(" | {:>13}{:>7}{:>7}", format!("f* ({s})"), "it_int", "it_ext");
    }
    let _ = writeln!(out, "{header}");
    let _ = writeln!(out, "{}", "-".repeat(header.len()));

    let mut by_problem: Vec<(&str, Vec<&BenchRow>)> = Vec::new();
    for r in &report.rows {
        match by_problem.last_mut() {
            Some((name, group)) if *name == r.name && group.len() < report.schemes.len() => group.push(r),
            _ => by_problem.push((&r.name, vec![r])),
        }
    }
    for (name, group) in by_problem {
        let first = group[0];
        let mut line = format!("{:<12}{:>4}{:>4}{:>4}{:>4}", name, first.n, first.m, first.p, first.q);
        for s in &report.schemes {
            match group.iter().find(|r| r.scheme == *s) {
                Some(r) => {
                    let f = r.f_star.map_or_else(|| "NC".to_string(), format_sci);
                    line += &format!(" | {:>13}{:>7}{:>7}", f, r.it_int, r.it_ext);
                }
                None => line += &format!(" | {:>13}{:>7}{:>7}", "-", "-", "-"),
            }
        }
        let _ = writeln!(out, "{line}");
    }
    out.push('\n');
    out += &failure_summary(report);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    ItInt,
    ItExt,
}

impl Metric {
    pub fn column(self) -> &'static str {
        match self {
            Metric::ItInt => "it_int",
            Metric::ItExt => "it_ext",
        }
    }
}

/// One parsed record of a results CSV, kept loose so that profiles can be
/// built from files with extra columns or unknown solver names.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub name: String,
    pub solver: String,
    pub solved: bool,
    pub metric: f64,
}

pub fn read_results(text: &str, metric: Metric) -> Result<Vec<ResultRecord>, BenchError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BenchError::MissingColumn(name.to_string()))
    };
    let (ci, cs, cm, cst) = (col("name")?, col("scheme")?, col(metric.column())?, col("status")?);
    let mut out = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let solved = field(cst) == SolveStatus::Converged.as_str();
        let metric = field(cm).parse::<f64>().map_err(|e| BenchError::Parse {
            record: k + 1,
            message: format!("bad {} value '{}': {e}", metric.column(), field(cm)),
        })?;
        out.push(ResultRecord {
            name: field(ci).to_string(),
            solver: field(cs).to_string(),
            solved,
            metric,
        });
    }
    Ok(out)
}

/// Problems (sorted), solvers (first-appearance order) and the metric matrix
/// with `None` for unsolved cells.
pub fn metric_matrix(records: &[ResultRecord]) -> (Vec<String>, Vec<String>, Vec<Vec<Option<f64>>>) {
    let mut solvers: Vec<String> = Vec::new();
    for r in records {
        if !solvers.contains(&r.solver) {
            solvers.push(r.solver.clone());
        }
    }
    let mut cells: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    for r in records {
        let row = cells.entry(&r.name).or_insert_with(|| vec![None; solvers.len()]);
        let s = solvers.iter().position(|v| *v == r.solver).unwrap();
        row[s] = r.solved.then_some(r.metric);
    }
    let problems = cells.keys().map(|k| k.to_string()).collect();
    (problems, solvers, cells.into_values().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileCurve {
    pub solver: String,
    /// `(tau, rho(tau))` on the grid `tau = 2^(i/10)`.
    pub points: Vec<(f64, f64)>,
}

impl ProfileCurve {
    pub fn rho(&self, tau: f64) -> f64 {
        self.points
            .iter()
            .take_while(|(t, _)| *t <= tau * (1.0 + 1e-12))
            .last()
            .map_or(0.0, |p| p.1)
    }
}

const RATIO_SLACK: f64 = 1e-12;

/// Dolan-Moré profiles. Metrics are floored at 1; unsolved cells and rows
/// unsolved by every solver count as ratio `+inf` and stay in the denominator.
pub fn performance_profile(metrics: &[Vec<Option<f64>>], solvers: &[String]) -> Vec<ProfileCurve> {
    let np = metrics.len();
    let ratios: Vec<Vec<f64>> = metrics
        .iter()
        .map(|row| {
            let best = row.iter().flatten().map(|v| v.max(1.0)).fold(f64::INFINITY, f64::min);
            row.iter()
                .map(|c| match c {
                    Some(v) if best.is_finite() => v.max(1.0) / best,
                    _ => f64::INFINITY,
                })
                .collect()
        })
        .collect();
    let max_ratio = ratios
        .iter()
        .flatten()
        .copied()
        .filter(|r| r.is_finite())
        .fold(1.0, f64::max);
    let mut grid = vec![1.0];
    let mut i = 0;
    while *grid.last().unwrap() < max_ratio * (1.0 - RATIO_SLACK) {
        i += 1;
        grid.push(2f64.powf(i as f64 / 10.0));
    }
    solvers
        .iter()
        .enumerate()
        .map(|(s, name)| {
            let points = grid
                .iter()
                .map(|&tau| {
                    let hits = ratios.iter().filter(|r| r[s] <= tau * (1.0 + RATIO_SLACK)).count();
                    let rho = if np == 0 { 0.0 } else { hits as f64 / np as f64 };
                    (tau, rho)
                })
                .collect();
            ProfileCurve {
                solver: name.clone(),
                points,
            }
        })
        .collect()
}

pub fn profile_to_csv(curves: &[ProfileCurve]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["tau".to_string()];
    header.extend(curves.iter().map(|c| c.solver.clone()));
    w.write_record(&header).expect("in-memory write");
    let len = curves.first().map_or(0, |c| c.points.len());
    for k in 0..len {
        let mut rec = vec![format!("{:.6}", curves[0].points[k].0)];
        rec.extend(curves.iter().map(|c| format!("{:.6}", c.points[k].1)));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::builtin_suite;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tally_arithmetic() {
        let got: Vec<f64> = [3, 1, 54, 29].iter().map(|&f| failure_percentage(f, 95)).collect();
        assert_eq!(got, vec![3.2, 1.1, 56.8, 30.5]);
        assert_eq!(failure_percentage(1, 16), 6.3);
        assert_eq!(failure_percentage(0, 12), 0.0);
        assert_eq!(failure_percentage(12, 12), 100.0);
    }

    #[test]
    fn sci_format() {
        assert_eq!(format_sci(17.0), "1.700000E+01");
        assert_eq!(format_sci(0.0), "0.000000E+00");
        assert_eq!(format_sci(-2.0), "-2.000000E+00");
        assert_eq!(format_sci(5e-1), "5.000000E-01");
        assert_eq!(format_sci(1.5e-120), "1.500000E-120");
    }

    #[test]
    fn two_solver_profile() {
        let m = vec![vec![Some(2.0), Some(4.0)], vec![Some(3.0), Some(3.0)]];
        let c = performance_profile(&m, &names(&["A", "B"]));
        assert_eq!(c[0].rho(1.0), 1.0);
        assert_eq!(c[1].rho(1.0), 0.5);
        assert_eq!(c[1].rho(2.0), 1.0);
    }

    #[test]
    fn degenerate_profiles() {
        let single = performance_profile(&[vec![Some(5.0)], vec![None], vec![Some(1.0)]], &names(&["A"]));
        assert!(single[0].points.iter().all(|p| (p.1 - 2.0 / 3.0).abs() < 1e-15));
        let c = performance_profile(&[vec![Some(2.0), None], vec![Some(3.0), None]], &names(&["A", "B"]));
        assert!(c[1].points.iter().all(|p| p.1 == 0.0));
    }

    #[test]
    fn empty_inputs_are_errors() {
        let p: Vec<_> = builtin_suite().into_iter().map(|s| s.problem).collect();
        assert!(matches!(run_bench(&p, &[], &BenchConfig::default()), Err(BenchError::NoSchemes)));
        assert!(matches!(
            run_bench(&[], &[Scheme::Reg], &BenchConfig::default()),
            Err(BenchError::NoProblems)
        ));
    }

    #[test]
    fn csv_rows_and_nc_marker() {
        let p: Vec<_> = builtin_suite()
            .into_iter()
            .map(|s| s.problem)
            .filter(|p| p.name == "pairs3")
            .collect();
        let report = run_bench(&p, &[Scheme::Reg, Scheme::RegEq], &BenchConfig::default()).unwrap();
        let csv = to_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split(',').count(), 10);
        assert!(lines[1].starts_with("pairs3,0,0,1,3,reg,3.000000E+00,"));
        assert!(lines[2].starts_with("pairs3,0,0,1,3,reg-eq,NC,"));
        assert!(lines[2].ends_with(",NC"));
        let table = to_text_table(&report, None);
        assert!(table.contains("reg-eq") && table.contains(" NC "));
    }

    #[test]
    fn results_round_trip_through_csv() {
        let text = "name,n,m,p,q,scheme,f_star,it_int,it_ext,status\n\
                    a,0,0,0,1,reg,0.0E+00,4,2,converged\n\
                    a,0,0,0,1,reg-eq,NC,9,3,NC\n";
        let rec = read_results(text, Metric::ItInt).unwrap();
        let (probs, solvers, m) = metric_matrix(&rec);
        assert_eq!(probs, vec!["a"]);
        assert_eq!(solvers, vec!["reg", "reg-eq"]);
        assert_eq!(m, vec![vec![Some(4.0), None]]);
        assert!(matches!(
            read_results("name,scheme,status\n", Metric::ItExt),
            Err(BenchError::MissingColumn(c)) if c == "it_ext"
        ));
    }
}
