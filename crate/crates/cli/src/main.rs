use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::debug;

use mpcc_core::bench::{
    failure_summary, metric_matrix, performance_profile, profile_to_csv, read_results, run_bench, to_csv,
    to_text_table, format_sci, BenchConfig, Metric,
};
use mpcc_core::driver::{outer_solve, DriverConfig};
use mpcc_core::model::{load_problem, MpccProblem};
use mpcc_core::stationarity::{check_strong_stationarity, estimate_multipliers, MpccMultipliers};
use mpcc_core::suite::{builtin_suite, enumerate_branches};
use mpcc_core::{Scheme, SqpConfig};

#[derive(Parser)]
#[command(name = "mpcc", version, about = "Regularization solver for MPCCs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem file with the outer regularization loop.
    Solve(SolveArgs),
    /// Run several schemes over a problem set and write a results CSV.
    Bench(BenchArgs),
    /// Build a performance profile from a results CSV.
    Profile(ProfileArgs),
    /// Check strong stationarity of a point.
    Check(CheckArgs),
    /// Solve every branch of a problem and report the best one.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct DriverArgs {
    /// Initial regularization parameter.
    #[arg(long)]
    t0: Option<f64>,
    /// Factor applied to t after each outer iteration, in (0, 1).
    #[arg(long)]
    rho2: Option<f64>,
    #[arg(long)]
    tmin: Option<f64>,
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long)]
    eps1: Option<f64>,
    #[arg(long)]
    eps2: Option<f64>,
}

impl DriverArgs {
    fn config(&self) -> Result<DriverConfig, Usage> {
        let mut c = DriverConfig::default();
        if let Some(v) = self.t0 {
            c.t0 = v;
        }
        if let Some(v) = self.rho2 {
            c.rho2 = v;
        }
        if let Some(v) = self.tmin {
            c.t_min = v;
        }
        if let Some(v) = self.kmax {
            c.k_max = v;
        }
        if let Some(v) = self.eps1 {
            c.eps1 = v;
        }
        if let Some(v) = self.eps2 {
            c.eps2 = v;
        }
        c.validate().map_err(|e| Usage(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Args)]
struct SolveArgs {
    file: PathBuf,
    #[arg(long, default_value = "reg")]
    scheme: Scheme,
    #[command(flatten)]
    driver: DriverArgs,
    /// Print one line per outer iteration.
    #[arg(long)]
    trace: bool,
    /// Print the full result as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteName {
    Builtin,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Table,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, conflicts_with = "dir")]
    suite: Option<SuiteName>,
    /// Directory of `.mpcc` problem files.
    #[arg(long)]
    dir: Option<PathBuf>,
    /// Comma-separated scheme list, or `all`.
    #[arg(long, default_value = "all")]
    schemes: String,
    /// Output file (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: TableFormat,
    /// Omit the timestamp from table output.
    #[arg(long)]
    deterministic: bool,
    #[command(flatten)]
    driver: DriverArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    #[value(alias = "it_int")]
    ItInt,
    #[value(alias = "it_ext")]
    ItExt,
}

#[derive(Args)]
struct ProfileArgs {
    results: PathBuf,
    #[arg(long, value_enum, default_value = "it-int")]
    metric: MetricArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    file: PathBuf,
    /// Comma-separated coordinates in variable order.
    #[arg(long, allow_hyphen_values = true)]
    point: String,
    /// File with `lambda_eq:`, `lambda_in:`, `nu1:`, `nu2:` and `bounds:` lines.
    /// Multipliers are estimated by least squares when omitted.
    #[arg(long)]
    multipliers: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OracleArgs {
    file: PathBuf,
    #[arg(long)]
    json: bool,
}

/// Error that maps to exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

fn read_problem(path: &Path) -> Result<MpccProblem> {
    let text = fs::read_to_string(path).map_err(|e| Usage(format!("{}: {e}", path.display())))?;
    load_problem(&text).map_err(|e| Usage(format!("{}: {e}", path.display())).into())
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_solve(a: &SolveArgs) -> Result<bool> {
    let config = a.driver.config()?;
    let problem = read_problem(&a.file)?;
    let r = outer_solve(&problem, a.scheme, &config);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
        return Ok(r.converged());
    }
    println!("problem: {}", problem.name);
    println!("scheme: {}", a.scheme);
    println!("f*: {}", format_sci(r.f));
    let xs: Vec<String> = problem
        .names()
        .iter()
        .zip(&r.x)
        .map(|(n, v)| format!("{n}={}", format_sci(*v)))
        .collect();
    println!("x*: {}", xs.join(" "));
    println!("it_int: {}", r.it_int);
    println!("it_ext: {}", r.it_ext);
    println!("status: {}", r.status.as_str());
    println!("stop: {}", r.stop_reason.as_str());
    if a.trace {
        println!("{:>3} {:>10} {:>6} {:>12} {:>12} {:>12}  inner status", "k", "t", "inner", "rel_step", "grad", "comp");
        for e in &r.trace {
            println!(
                "{:>3} {:>10.3e} {:>6} {:>12.4e} {:>12.4e} {:>12.4e}  {:?}",
                e.k, e.t, e.inner_iterations, e.relative_step, e.lagrangian_grad_norm, e.complementarity, e.inner_status
            );
        }
    }
    Ok(r.converged())
}

fn parse_schemes(list: &str) -> Result<Vec<Scheme>> {
    if list.trim() == "all" {
        return Ok(Scheme::ALL.to_vec());
    }
    let mut out = Vec::new();
    for s in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let scheme: Scheme = s.parse().map_err(|e| Usage(format!("{e}")))?;
        if !out.contains(&scheme) {
            out.push(scheme);
        }
    }
    if out.is_empty() {
        return usage("no schemes given");
    }
    Ok(out)
}

fn load_dir(dir: &Path) -> Result<Vec<MpccProblem>> {
    let entries = fs::read_dir(dir).map_err(|e| Usage(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mpcc"))
        .collect();
    files.sort();
    let mut problems = Vec::new();
    for f in files {
        match read_problem(&f) {
            Ok(p) => problems.push(p),
            Err(e) => eprintln!("skipping {e}"),
        }
    }
    Ok(problems)
}

fn cmd_bench(a: &BenchArgs) -> Result<bool> {
    let schemes = parse_schemes(&a.schemes)?;
    let problems = match &a.dir {
        Some(d) => load_dir(d)?,
        None => builtin_suite().into_iter().map(|s| s.problem).collect(),
    };
    if problems.is_empty() {
        return usage("no problems to run");
    }
    let config = BenchConfig {
        driver: a.driver.config()?,
        workers: a.workers,
    };
    debug!("bench: {} problems x {} schemes", problems.len(), schemes.len());
    let report = run_bench(&problems, &schemes, &config)?;
    match a.format {
        TableFormat::Csv => {
            write_output(a.out.as_deref(), &to_csv(&report))?;
            if a.out.is_some() {
                print!("{}", failure_summary(&report));
            }
        }
        TableFormat::Table => {
            let ts = (!a.deterministic).then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
            write_output(a.out.as_deref(), &to_text_table(&report, ts.as_deref()))?;
        }
    }
    Ok(true)
}

fn cmd_profile(a: &ProfileArgs) -> Result<bool> {
    let text = fs::read_to_string(&a.results).map_err(|e| Usage(format!("{}: {e}", a.results.display())))?;
    let metric = match a.metric {
        MetricArg::ItInt => Metric::ItInt,
        MetricArg::ItExt => Metric::ItExt,
    };
    let records = read_results(&text, metric).map_err(|e| Usage(e.to_string()))?;
    if records.is_empty() {
        return usage("results file has no records");
    }
    let (_, solvers, matrix) = metric_matrix(&records);
    let curves = performance_profile(&matrix, &solvers);
    write_output(a.out.as_deref(), &profile_to_csv(&curves))?;
    Ok(true)
}

fn parse_numbers(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Usage(format!("malformed {what} entry '{s}'")).into())
        })
        .collect()
}

fn read_multipliers(path: &Path, problem: &MpccProblem) -> Result<MpccMultipliers> {
    let text = fs::read_to_string(path).map_err(|e| Usage(format!("{}: {e}", path.display())))?;
    let mut m = MpccMultipliers::zeros(problem);
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, values)) = line.split_once(':') else {
            return usage(format!("multipliers: expected 'name: values', got '{line}'"));
        };
        let values = parse_numbers(values, "multiplier")?;
        let slot = match key.trim() {
            "lambda_eq" => &mut m.lambda_eq,
            "lambda_in" => &mut m.lambda_in,
            "nu1" => &mut m.nu1,
            "nu2" => &mut m.nu2,
            "bounds" => &mut m.bounds,
            other => return usage(format!("multipliers: unknown entry '{other}'")),
        };
        if values.len() != slot.len() {
            return usage(format!(
                "multipliers: '{}' needs {} values, got {}",
                key.trim(),
                slot.len(),
                values.len()
            ));
        }
        *slot = values;
    }
    Ok(m)
}

fn cmd_check(a: &CheckArgs) -> Result<bool> {
    let problem = read_problem(&a.file)?;
    let x = parse_numbers(&a.point, "point")?;
    if x.len() != problem.num_vars() {
        return usage(format!("point has {} coordinates, problem has {} variables", x.len(), problem.num_vars()));
    }
    let m = match &a.multipliers {
        Some(p) => read_multipliers(p, &problem)?,
        None => estimate_multipliers(&problem, &x, a.tol).map_err(|e| Usage(e.to_string()))?,
    };
    let report = check_strong_stationarity(&problem, &x, &m, a.tol).map_err(|e| Usage(e.to_string()))?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("feasible: {}", report.is_feasible);
        println!("strongly stationary: {}", report.is_strongly_stationary);
        println!("mpcc-licq: {}", report.licq_holds);
        println!("stationarity: {:.3e}", report.stationarity);
        println!("feasibility: {:.3e}", report.feasibility);
        println!("sign: {:.3e}", report.sign);
        println!("slackness: {:.3e}", report.slackness);
        println!("degenerate sign: {:.3e}", report.degenerate_sign);
    }
    Ok(report.is_strongly_stationary)
}

fn cmd_oracle(a: &OracleArgs) -> Result<bool> {
    let problem = read_problem(&a.file)?;
    let o = enumerate_branches(&problem, &SqpConfig::default()).map_err(|e| Usage(e.to_string()))?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&o)?);
        return Ok(o.best.is_some());
    }
    for b in &o.branches {
        println!("branch {:0width$b}: {:?} f = {}", b.mask, b.status, format_sci(b.f), width = problem.q().max(1));
    }
    match o.best_f() {
        Some(f) => {
            println!("best f*: {}", format_sci(f));
            Ok(true)
        }
        None => {
            println!("oracle unavailable: every branch failed");
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("MPCC_LOG")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Profile(a) => cmd_profile(a),
        Command::Check(a) => cmd_check(a),
        Command::Oracle(a) => cmd_oracle(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
