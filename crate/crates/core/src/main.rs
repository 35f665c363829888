//! Batch front end: run property suites, solve problems described by JSON
//! documents, and drive refinement studies, writing JSON/CSV reports and a
//! run manifest alongside every output.
//!
//! Exit codes are a stable contract: 0 on success, 1 on numerical failure
//! (a failing suite, a stalled continuation), 2 on usage or input errors.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sigmak::conformal::BoundaryData;
use sigmak::grid::{write_box_csv, write_radial_csv, BoxGrid, Field, RadialGrid};
use sigmak::solver::{solve, Domain, Problem, SolveReport, SolverConfig};
use sigmak::verify::{
    check_boundary_identities, check_concavity, check_condition_a, check_euler_and_gradsum,
    check_ft_structure, check_newton_maclaurin, check_newton_tensor_gradient, check_s3,
    check_sigma_ratio, newton_maclaurin_pairs, SuiteReport, T_GRID,
};
use sigmak::{Error, Result};

/// Environment variable consulted for the default seed when no `--seed`
/// flag is given.
const SEED_ENV_VAR: &str = "SIGMAK_SEED";

/// Fallback seed when neither the flag nor the environment provides one.
const DEFAULT_SEED: u64 = 7;

/// Grid sizes of the built-in boundary-identity refinement study.
const BOUNDARY_GRIDS: [usize; 3] = [33, 65, 129];

#[derive(Parser)]
#[command(
    name = "sigmak",
    version,
    about = "Property suites and continuation solves for sigma-k curvature boundary problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run property suites and write their JSON reports.
    Verify(VerifyArgs),
    /// Solve one problem described by a JSON document.
    Solve(SolveArgs),
    /// Solve a referenced problem across refinements and report the
    /// observed order of the error against its reference field.
    Convergence(ConvergenceArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Run every suite (the default when no --suite is given).
    #[arg(long, conflicts_with = "suite")]
    all: bool,
    /// Run a single suite: euler-and-gradsum, newton-maclaurin,
    /// sigma-ratio, condition-a, s3, concavity, newton-tensor-gradient,
    /// ft-structure, or boundary-identities.
    #[arg(long)]
    suite: Option<String>,
    /// Dimension, or inclusive dimension range such as 3..5.
    #[arg(long, default_value = "3..5")]
    n: String,
    /// Cone order, or inclusive range; defaults to every order up to n.
    #[arg(long)]
    k: Option<String>,
    /// Comma-separated deformation values for the suites that sweep one.
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    /// Samples per suite instance.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// RNG seed; falls back to SIGMAK_SEED, then 7.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for reports and the run manifest.
    #[arg(long, default_value = "sigmak-out")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Problem document (JSON).
    #[arg(long)]
    problem: PathBuf,
    /// Optional solver configuration (JSON) overriding the one embedded
    /// in the problem document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the report, the solution CSV, and the run manifest.
    #[arg(long, default_value = "sigmak-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ConvergenceArgs {
    /// Base problem document (JSON); must carry a reference field.
    #[arg(long)]
    problem: PathBuf,
    /// Per-axis grid points of each refinement level, e.g. 33,65,129.
    #[arg(long, value_delimiter = ',')]
    levels: Vec<usize>,
    /// Directory for the CSV, the per-level reports, and the manifest.
    #[arg(long, default_value = "sigmak-out")]
    out: PathBuf,
}

/// Written alongside every command's outputs.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    inputs: Vec<String>,
    seed: Option<u64>,
    output_directory: String,
    tool_version: String,
    wall_clock_seconds: f64,
}

/// One suite instance in a verify run, labeled with the parameters that
/// produced it.
#[derive(Serialize)]
struct VerifyRecord {
    n: Option<usize>,
    k: Option<usize>,
    t: Option<f64>,
    report: SuiteReport,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    };
    std::process::exit(code);
}

fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Verify(args) => run_verify(args),
        Command::Solve(args) => run_solve(args),
        Command::Convergence(args) => run_convergence(args),
    }
}

// ---------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq)]
enum Suite {
    EulerAndGradsum,
    NewtonMaclaurin,
    SigmaRatio,
    ConditionA,
    S3,
    Concavity,
    NewtonTensorGradient,
    FtStructure,
    BoundaryIdentities,
}

const ALL_SUITES: [Suite; 9] = [
    Suite::EulerAndGradsum,
    Suite::NewtonMaclaurin,
    Suite::SigmaRatio,
    Suite::ConditionA,
    Suite::S3,
    Suite::Concavity,
    Suite::NewtonTensorGradient,
    Suite::FtStructure,
    Suite::BoundaryIdentities,
];

impl Suite {
    fn from_name(name: &str) -> Result<Suite> {
        Ok(match name {
            "euler-and-gradsum" => Suite::EulerAndGradsum,
            "newton-maclaurin" => Suite::NewtonMaclaurin,
            "sigma-ratio" => Suite::SigmaRatio,
            "condition-a" => Suite::ConditionA,
            "s3" => Suite::S3,
            "concavity" => Suite::Concavity,
            "newton-tensor-gradient" => Suite::NewtonTensorGradient,
            "ft-structure" => Suite::FtStructure,
            "boundary-identities" => Suite::BoundaryIdentities,
            other => {
                return Err(Error::Parameter(format!(
                    "unknown suite '{other}'; see --help for the list"
                )))
            }
        })
    }
}

fn run_verify(args: &VerifyArgs) -> Result<i32> {
    let started = Instant::now();
    let seed = resolve_seed(args.seed)?;
    let ns = parse_inclusive_range(&args.n)?;
    let explicit_k = match &args.k {
        Some(text) => Some(parse_inclusive_range(text)?),
        None => None,
    };
    let t_values: Vec<f64> = args.t.clone().unwrap_or_else(|| T_GRID.to_vec());
    let suites: Vec<Suite> = match &args.suite {
        Some(name) => vec![Suite::from_name(name)?],
        None => ALL_SUITES.to_vec(),
    };

    let mut records: Vec<VerifyRecord> = Vec::new();
    for &suite in &suites {
        for &n in &ns {
            let ks: Vec<usize> = match &explicit_k {
                Some(range) => range.clone(),
                None => {
                    let cap = if suite == Suite::ConditionA { n - 1 } else { n };
                    (1..=cap).collect()
                }
            };
            match suite {
                Suite::EulerAndGradsum | Suite::S3 | Suite::Concavity => {
                    for &k in &ks {
                        for &t in &t_values {
                            let report = match suite {
                                Suite::EulerAndGradsum => {
                                    check_euler_and_gradsum(n, k, t, args.samples, seed)?
                                }
                                Suite::S3 => check_s3(n, k, t, args.samples, seed)?,
                                _ => check_concavity(n, k, t, args.samples, seed)?,
                            };
                            records.push(VerifyRecord {
                                n: Some(n),
                                k: Some(k),
                                t: Some(t),
                                report,
                            });
                        }
                    }
                }
                Suite::NewtonMaclaurin => {
                    let mut pairs = newton_maclaurin_pairs(n);
                    if let Some(range) = &explicit_k {
                        pairs.retain(|(_, k)| range.contains(k));
                        if pairs.is_empty() {
                            return Err(Error::Parameter(format!(
                                "no interlacing pairs with the requested k in dimension {n}"
                            )));
                        }
                    }
                    let report = check_newton_maclaurin(n, &pairs, args.samples, seed)?;
                    records.push(VerifyRecord {
                        n: Some(n),
                        k: None,
                        t: None,
                        report,
                    });
                }
                Suite::SigmaRatio | Suite::ConditionA | Suite::NewtonTensorGradient
                | Suite::FtStructure => {
                    for &k in &ks {
                        let report = match suite {
                            Suite::SigmaRatio => check_sigma_ratio(n, k, args.samples, seed)?,
                            Suite::ConditionA => check_condition_a(n, k, args.samples, seed)?,
                            Suite::NewtonTensorGradient => {
                                check_newton_tensor_gradient(n, k, args.samples, seed)?
                            }
                            _ => check_ft_structure(n, k, &t_values, args.samples, seed)?,
                        };
                        records.push(VerifyRecord {
                            n: Some(n),
                            k: Some(k),
                            t: None,
                            report,
                        });
                    }
                }
                Suite::BoundaryIdentities => {}
            }
        }
        if suite == Suite::BoundaryIdentities {
            let cases = [BoundaryData::new(0.0, 0.0)?, BoundaryData::new(0.0, 1.0)?];
            let report = check_boundary_identities(&BOUNDARY_GRIDS, &cases, seed)?;
            records.push(VerifyRecord {
                n: None,
                k: None,
                t: None,
                report,
            });
        }
    }

    let mut all_passed = true;
    for record in &records {
        let r = &record.report;
        all_passed &= r.passed;
        println!(
            "{} {} n={} k={} t={} tested={} worst_slack={:.3e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.suite,
            label(record.n),
            label(record.k),
            record.t.map_or_else(|| "-".to_string(), |t| t.to_string()),
            r.samples_tested,
            r.worst_slack,
        );
    }

    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("verify_reports.json"), &records)?;
    write_manifest(
        &args.out,
        RunManifest {
            command: "verify".into(),
            inputs: Vec::new(),
            seed: Some(seed),
            output_directory: args.out.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    )?;
    println!(
        "{} suite instances, {}",
        records.len(),
        if all_passed { "all passed" } else { "FAILURES RECORDED" }
    );
    Ok(if all_passed { 0 } else { 1 })
}

fn label(v: Option<usize>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

// ---------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------

fn run_solve(args: &SolveArgs) -> Result<i32> {
    let started = Instant::now();
    let mut problem = read_problem(&args.problem)?;
    let mut inputs = vec![args.problem.display().to_string()];
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)?;
        let config: SolverConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Parameter(format!("config document: {e}")))?;
        problem.config = config;
        inputs.push(path.display().to_string());
    }
    fs::create_dir_all(&args.out)?;

    let outcome = solve(&problem);
    let manifest = RunManifest {
        command: "solve".into(),
        inputs,
        seed: None,
        output_directory: args.out.display().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    match outcome {
        Ok(report) => {
            write_json(&args.out.join("solve_report.json"), &report)?;
            write_solution_csv(&args.out.join("solution.csv"), &problem, &report)?;
            write_manifest(&args.out, manifest)?;
            println!(
                "solved: {} continuation steps, final residual {:.3e}, min cone margin {:.3e}",
                report.steps.len(),
                report.final_residual,
                report.min_margin
            );
            if let Some(err) = report.reference_sup_error {
                println!("sup error against the reference field: {err:.6e}");
            }
            if report.negative_target_curvature {
                println!(
                    "note: negative target boundary curvature; outside the supported \
                     existence theory, results are best-effort"
                );
            }
            Ok(0)
        }
        Err(e) if !e.is_usage() => {
            write_json(
                &args.out.join("solve_error.json"),
                &serde_json::json!({ "error": e.to_string() }),
            )?;
            write_manifest(&args.out, manifest)?;
            eprintln!("solve failed: {e}");
            Ok(1)
        }
        Err(e) => Err(e),
    }
}

// ---------------------------------------------------------------------
// convergence
// ---------------------------------------------------------------------

fn run_convergence(args: &ConvergenceArgs) -> Result<i32> {
    let started = Instant::now();
    if args.levels.len() < 2 {
        return Err(Error::Parameter(
            "a refinement study needs at least two levels".into(),
        ));
    }
    for pair in args.levels.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::Parameter("levels must be strictly increasing".into()));
        }
    }
    let base = read_problem(&args.problem)?;
    if base.reference.is_none() {
        return Err(Error::Parameter(
            "a refinement study needs a problem with a reference field".into(),
        ));
    }
    fs::create_dir_all(&args.out)?;

    let mut spacings = Vec::new();
    let mut errors = Vec::new();
    let mut reports = Vec::new();
    for &m in &args.levels {
        let mut problem = base.clone();
        let h = match &mut problem.domain {
            Domain::Radial { r_max, points } => {
                *points = m;
                *r_max / (m - 1) as f64
            }
            Domain::Box { points } => {
                *points = vec![m; base.n];
                1.0 / (m - 1) as f64
            }
        };
        match solve(&problem) {
            Ok(report) => {
                let err = report.reference_sup_error.ok_or_else(|| {
                    Error::Parameter("reference error missing from the report".into())
                })?;
                println!("level {m}: h = {h:.6e}, sup error = {err:.6e}");
                spacings.push(h);
                errors.push(err);
                reports.push(report);
            }
            Err(e) if !e.is_usage() => {
                write_json(
                    &args.out.join("convergence_error.json"),
                    &serde_json::json!({ "error": e.to_string(), "level": m }),
                )?;
                eprintln!("solve failed at level {m}: {e}");
                return Ok(1);
            }
            Err(e) => return Err(e),
        }
    }

    let mut csv = String::from("h,sup_error,observed_order\n");
    for i in 0..spacings.len() {
        let order = if i == 0 {
            String::new()
        } else {
            let value = (errors[i - 1] / errors[i]).ln()
                / (spacings[i - 1] / spacings[i]).ln();
            println!(
                "observed order between levels {} and {}: {value:.3}",
                args.levels[i - 1],
                args.levels[i]
            );
            format!("{value}")
        };
        csv.push_str(&format!("{},{},{}\n", spacings[i], errors[i], order));
    }
    let csv_path = args.out.join("convergence.csv");
    fs::File::create(&csv_path)?.write_all(csv.as_bytes())?;
    write_json(&args.out.join("convergence_reports.json"), &reports)?;
    write_manifest(
        &args.out,
        RunManifest {
            command: "convergence".into(),
            inputs: vec![args.problem.display().to_string()],
            seed: None,
            output_directory: args.out.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    )?;
    println!("wrote {}", csv_path.display());
    Ok(0)
}

// ---------------------------------------------------------------------
// shared plumbing
// ---------------------------------------------------------------------

fn read_problem(path: &Path) -> Result<Problem> {
    let text = fs::read_to_string(path)?;
    let problem: Problem = serde_json::from_str(&text)
        .map_err(|e| Error::Parameter(format!("problem document: {e}")))?;
    problem.validate()?;
    Ok(problem)
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV_VAR) {
        Ok(text) => text.trim().parse().map_err(|_| {
            Error::Parameter(format!("{SEED_ENV_VAR} must hold an unsigned integer"))
        }),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

/// Parses "4" or an inclusive range "3..5".
fn parse_inclusive_range(text: &str) -> Result<Vec<usize>> {
    let bad = |_| Error::Parameter(format!("cannot parse '{text}' as a number or range"));
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(bad)?;
        let hi: usize = hi.trim().trim_start_matches('=').parse().map_err(bad)?;
        if lo > hi {
            return Err(Error::Parameter(format!("empty range '{text}'")));
        }
        Ok((lo..=hi).collect())
    } else {
        Ok(vec![text.trim().parse().map_err(bad)?])
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parameter(format!("serialization: {e}")))?;
    fs::File::create(path)?.write_all(text.as_bytes())?;
    Ok(())
}

fn write_manifest(out: &Path, manifest: RunManifest) -> Result<()> {
    write_json(&out.join("manifest.json"), &manifest)
}

fn write_solution_csv(path: &Path, problem: &Problem, report: &SolveReport) -> Result<()> {
    let field = Field::from_values(report.solution.clone());
    let mut file = fs::File::create(path)?;
    match &problem.domain {
        Domain::Box { points } => {
            let grid = BoxGrid::chart(points)?;
            write_box_csv(&mut file, &grid, &[("u", &field)])?;
        }
        Domain::Radial { r_max, points } => {
            let grid = RadialGrid::new(*r_max, *points)?;
            write_radial_csv(&mut file, &grid, &[("u", &field)])?;
        }
    }
    Ok(())
}
