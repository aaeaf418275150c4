//! Library side of the `chainplace` binary, split out so tests can drive the
//! commands without spawning a process.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chainplace_core::{
    generate_scenario, solve, system_average_time, Algorithm, EvalMode, GeneratorConfig, Problem,
    Scenario, SchemeFile, ServiceOrder, SolverConfig, SolverResult,
};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

/// Exit status: success.
pub const EXIT_OK: i32 = 0;
/// Exit status: the scheme or scenario is infeasible.
pub const EXIT_INFEASIBLE: i32 = 1;
/// Exit status: unreadable, invalid or out-of-range input.
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "chainplace",
    version,
    about = "Microservice placement under call dependencies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random scenario.
    Generate(GenerateArgs),
    /// Solve a scenario with one algorithm.
    Solve(SolveArgs),
    /// Score a given deployment scheme.
    Evaluate(EvaluateArgs),
    /// Run several algorithms over many scenarios and write a CSV.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator config as JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub servers: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub services: Option<u64>,
    /// Number of functions users call directly.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub requirements: Option<u64>,
    /// Total user request rate.
    #[arg(long)]
    pub users: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    #[arg(long)]
    pub improve: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random baseline trials.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value = "pseudocode", value_parser = parse_order)]
    pub service_order: ServiceOrder,
    /// State-space limit of the exhaustive optimum.
    #[arg(long, default_value_t = chainplace_core::solvers::DEFAULT_GUARD)]
    pub guard: u128,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            service_order: self.service_order,
            improve: self.improve,
            seed: self.seed,
            trials: self.trials as usize,
            guard: self.guard,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub scenario: PathBuf,
    #[arg(long, short, default_value = "bd-qsrfp", value_parser = parse_algorithm)]
    pub algorithm: Algorithm,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Also write the scheme file here.
    #[arg(long)]
    pub scheme_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub scenario: PathBuf,
    pub scheme: PathBuf,
    #[arg(long, default_value = "qsrfp", value_parser = parse_mode)]
    pub mode: EvalMode,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Scenario files or glob patterns.
    #[arg(required = true)]
    pub scenarios: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "b-qsrfp,d-qsrfp,bd-qsrfp,random", value_parser = parse_algorithm)]
    pub algorithms: Vec<Algorithm>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// CSV destination; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Leave `wall_ms` empty so repeated runs produce identical files.
    #[arg(long)]
    pub no_timing: bool,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

fn parse_order(s: &str) -> Result<ServiceOrder, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<EvalMode, String> {
    s.parse()
}

/// A failed command: message plus exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::input(format!("stdout: {e}"))),
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_problem(path: &Path) -> Result<Problem, Failure> {
    let scenario = Scenario::from_json(&read(path)?)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    Problem::new(scenario).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Runs a parsed command line. Returns the exit status.
pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let outcome = match cli.command {
        Command::Generate(a) => cmd_generate(&a, stdout, stderr),
        Command::Solve(a) => cmd_solve(&a, stdout, stderr),
        Command::Evaluate(a) => cmd_evaluate(&a, stdout),
        Command::Compare(a) => cmd_compare(&a, stdout, stderr),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

pub fn generator_config(args: &GenerateArgs) -> Result<GeneratorConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => serde_json::from_str(&read(path)?)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?,
        None => GeneratorConfig::default(),
    };
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.servers {
        config.servers = v as usize;
    }
    if let Some(v) = args.services {
        config.services = v as usize;
    }
    if let Some(v) = args.requirements {
        config.user_requirements = v as usize;
    }
    if let Some(v) = args.users {
        config.user_count = v;
    }
    Ok(config)
}

pub fn cmd_generate(
    args: &GenerateArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let config = generator_config(args)?;
    let scenario = generate_scenario(&config).map_err(|e| Failure::input(e.to_string()))?;
    write_output(args.out.as_deref(), &scenario.to_json(), stdout)?;
    let _ = writeln!(
        stderr,
        "generated seed {}: {} servers, {} services, {} functions, {} dependencies, {} demand entries",
        config.seed,
        scenario.servers.len(),
        scenario.services.len(),
        scenario.function_count(),
        scenario.dependencies.len(),
        scenario.demand.len()
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    #[serde(flatten)]
    result: &'a SolverResult,
    servers: Vec<&'a str>,
    services: Vec<&'a str>,
}

pub fn cmd_solve(
    args: &SolveArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let problem = load_problem(&args.scenario)?;
    let result = match solve(&problem, args.algorithm, &args.solver.config()) {
        Ok(r) => r,
        Err(e @ chainplace_core::Error::StateSpaceTooLarge { .. }) => {
            return Err(Failure::input(e.to_string()))
        }
        Err(e) => {
            let report = serde_json::json!({
                "algorithm": args.algorithm,
                "feasible": false,
                "error": e.to_string(),
            });
            let _ = writeln!(
                stdout,
                "{}",
                serde_json::to_string_pretty(&report).expect("json")
            );
            let _ = writeln!(stderr, "infeasible: {e}");
            return Ok(EXIT_INFEASIBLE);
        }
    };
    let scenario = problem.scenario();
    let output = SolveOutput {
        result: &result,
        servers: scenario.servers.iter().map(|s| s.id.as_str()).collect(),
        services: scenario.services.iter().map(|s| s.id.as_str()).collect(),
    };
    let _ = writeln!(
        stdout,
        "{}",
        serde_json::to_string_pretty(&output).expect("json")
    );
    if let Some(path) = &args.scheme_out {
        let file = SchemeFile::from_scheme(&result.scheme, scenario);
        write_output(Some(path), &file.to_json(), stdout)?;
    }
    if result.feasible {
        Ok(EXIT_OK)
    } else {
        for v in &result.violations {
            let _ = writeln!(
                stderr,
                "violation: {} at {} (margin {})",
                v.constraint, v.entity, v.margin
            );
        }
        Ok(EXIT_INFEASIBLE)
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let problem = load_problem(&args.scenario)?;
    let file = SchemeFile::from_json(&read(&args.scheme)?)
        .map_err(|e| Failure::input(format!("{}: {e}", args.scheme.display())))?;
    let scheme = file
        .to_scheme(problem.scenario())
        .map_err(|e| Failure::input(e.to_string()))?;
    let report = system_average_time(&scheme, &problem, args.mode)
        .map_err(|e| Failure::input(e.to_string()))?;
    let _ = writeln!(
        stdout,
        "{}",
        serde_json::to_string_pretty(&report).expect("json")
    );
    Ok(if report.constraints_ok {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    })
}

/// One line of the comparison CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub seed: String,
    pub algorithm: String,
    pub t_ms: Option<f64>,
    pub wall_ms: Option<f64>,
    pub feasible: bool,
    pub instances: Option<u64>,
}

impl ExperimentRow {
    pub fn from_result(seed: &str, result: &SolverResult, timing: bool) -> Self {
        ExperimentRow {
            seed: seed.to_string(),
            algorithm: result.algorithm.to_string(),
            t_ms: Some(result.t_system_ms),
            wall_ms: timing.then_some(result.wall_time_ms),
            feasible: result.feasible,
            instances: Some(result.scheme.total_instances()),
        }
    }

    fn failed(seed: &str, algorithm: Algorithm) -> Self {
        ExperimentRow {
            seed: seed.to_string(),
            algorithm: algorithm.to_string(),
            t_ms: None,
            wall_ms: None,
            feasible: false,
            instances: None,
        }
    }
}

/// Expands files and glob patterns into a sorted, de-duplicated list.
pub fn expand_scenarios(patterns: &[String]) -> Result<Vec<PathBuf>, Failure> {
    let mut paths = Vec::new();
    for pattern in patterns {
        let matches = glob::glob(pattern).map_err(|e| Failure::input(format!("{pattern}: {e}")))?;
        let before = paths.len();
        for entry in matches {
            paths.push(entry.map_err(|e| Failure::input(e.to_string()))?);
        }
        if paths.len() == before {
            return Err(Failure::input(format!(
                "{pattern}: no scenario files match"
            )));
        }
    }
    paths.sort();
    paths.dedup();
    Ok(paths)
}

fn scenario_label(path: &Path, problem: Option<&Problem>) -> String {
    problem
        .and_then(|p| p.scenario().seed)
        .map(|s| s.to_string())
        .unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
}

/// Runs every algorithm on every scenario. Rows come back in scenario order,
/// then algorithm order; failures become rows with empty measurements and a
/// message in the second vector.
pub fn compare_rows(
    paths: &[PathBuf],
    algorithms: &[Algorithm],
    config: &SolverConfig,
    timing: bool,
) -> (Vec<ExperimentRow>, Vec<String>) {
    let per_scenario: Vec<(Vec<ExperimentRow>, Vec<String>)> = paths
        .par_iter()
        .map(|path| {
            let mut rows = Vec::new();
            let mut errors = Vec::new();
            match load_problem(path) {
                Err(f) => {
                    let label = scenario_label(path, None);
                    for &a in algorithms {
                        rows.push(ExperimentRow::failed(&label, a));
                    }
                    errors.push(f.message);
                }
                Ok(problem) => {
                    let label = scenario_label(path, Some(&problem));
                    for &a in algorithms {
                        match solve(&problem, a, config) {
                            Ok(r) => rows.push(ExperimentRow::from_result(&label, &r, timing)),
                            Err(e) => {
                                rows.push(ExperimentRow::failed(&label, a));
                                errors.push(format!("{} {a}: {e}", path.display()));
                            }
                        }
                    }
                }
            }
            (rows, errors)
        })
        .collect();
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (r, e) in per_scenario {
        rows.extend(r);
        errors.extend(e);
    }
    (rows, errors)
}

pub fn write_csv(rows: &[ExperimentRow], out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record([
            "seed",
            "algorithm",
            "t_ms",
            "wall_ms",
            "feasible",
            "instances",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_compare(
    args: &CompareArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let paths = expand_scenarios(&args.scenarios)?;
    let (rows, errors) = compare_rows(
        &paths,
        &args.algorithms,
        &args.solver.config(),
        !args.no_timing,
    );
    for e in &errors {
        let _ = writeln!(stderr, "failed: {e}");
    }
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).map_err(|e| Failure::input(e.to_string()))?;
    write_output(
        args.output.as_deref(),
        &String::from_utf8(buf).expect("utf-8 csv"),
        stdout,
    )?;
    let _ = writeln!(
        stderr,
        "{} rows from {} scenarios, {} failed",
        rows.len(),
        paths.len(),
        errors.len()
    );
    Ok(EXIT_OK)
}
