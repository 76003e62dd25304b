//! Command-line harness: `verify` runs the identity registry, `run` drives a
//! filter over a simulated scenario, `compare` tabulates filters against
//! each other.
//!
//! Exit codes: 0 success / all checks pass, 1 verification failure, 2
//! usage or configuration error, 3 numerical divergence.

mod cases;
mod comparecmd;
mod runcmd;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use cases::{coverage_gaps, registry, CaseResult, VerifyReport};
use comparecmd::{compare, render_csv};
use runcmd::{run_continuous, run_grid, write_outputs, FilterKind};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Divergence(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Divergence(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "udrfs",
    about = "Detected/undetected multi-object filtering harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the identity verification suite.
    Verify {
        /// Run a single named case instead of the whole registry.
        #[arg(long)]
        case: Option<String>,
        /// Write the machine-readable report to this path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Simulate a scenario and drive one filter over it.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Defaults to the `filter.kind` embedded in the scenario file.
        #[arg(long, value_enum)]
        filter: Option<FilterKind>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed embedded in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        /// Replay a recorded measurement stream (JSON lines) instead of
        /// simulating; truth columns are empty in this mode.
        #[arg(long)]
        measurements: Option<PathBuf>,
    },
    /// Run several filters on one scenario and tabulate their errors.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated filter list.
        #[arg(long, value_delimiter = ',', value_enum)]
        filters: Vec<FilterKind>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Re-run the table at each of these detection probabilities.
        #[arg(long, value_delimiter = ',')]
        sweep_p_d: Vec<f64>,
    },
}

fn thread_pool() -> rayon::ThreadPool {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("UDRFS_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            builder = builder.num_threads(n.max(1));
        }
    }
    builder.build().expect("thread pool")
}

fn cmd_verify(case: Option<String>, json: Option<PathBuf>) -> Result<bool, CliError> {
    let gaps = coverage_gaps();
    if !gaps.is_empty() {
        return Err(CliError::Config(format!(
            "coverage manifest names unregistered cases: {gaps:?}"
        )));
    }
    let reg = registry();
    let selected: Vec<_> = match &case {
        Some(name) => {
            let hit: Vec<_> = reg.into_iter().filter(|c| c.name == name).collect();
            if hit.is_empty() {
                return Err(CliError::Usage(format!("unknown case '{name}'")));
            }
            hit
        }
        None => reg,
    };

    let pool = thread_pool();
    let results: Vec<CaseResult> = pool.install(|| {
        use rayon::prelude::*;
        selected
            .par_iter()
            .map(|spec| {
                let started = Instant::now();
                let max_abs_error = (spec.runner)();
                let pass = max_abs_error <= spec.tolerance;
                eprintln!("case {} finished in {:?}", spec.name, started.elapsed());
                CaseResult {
                    name: spec.name.into(),
                    identity: spec.identity.into(),
                    tolerance: spec.tolerance,
                    scale: spec.scale.into(),
                    max_abs_error,
                    pass,
                }
            })
            .collect()
    });

    let mut all_pass = true;
    for r in &results {
        println!(
            "{:<32} max_err={:.3e} tol={:.1e} {}",
            r.name,
            r.max_abs_error,
            r.tolerance,
            if r.pass { "PASS" } else { "FAIL" }
        );
        all_pass &= r.pass;
    }
    let report = VerifyReport {
        all_pass,
        cases: results,
    };
    if let Some(path) = json {
        let body = serde_json::to_string_pretty(&report).unwrap() + "\n";
        std::fs::write(&path, body).map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(all_pass)
}

fn load_scenario(path: &PathBuf) -> Result<(Vec<u8>, serde_json::Value), CliError> {
    let raw = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_slice(&raw)
        .map_err(|e| CliError::Config(format!("malformed scenario JSON: {e}")))?;
    Ok((raw, value))
}

fn cmd_run(
    scenario: PathBuf,
    filter: Option<FilterKind>,
    out: PathBuf,
    seed: Option<u64>,
    measurements: Option<PathBuf>,
) -> Result<(), CliError> {
    let started = Instant::now();
    let (raw, value) = load_scenario(&scenario)?;
    let replay = match &measurements {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            Some(
                udrfs::bayes::read_measurement_stream(&text)
                    .map_err(|e| CliError::Config(e.to_string()))?,
            )
        }
        None => None,
    };
    let output = if value.get("state_points").is_some() {
        if replay.is_some() {
            return Err(CliError::Config(
                "measurement replay drives continuous scenarios only".into(),
            ));
        }
        let file: udrfs::model::FiniteScenarioFile = serde_json::from_value(value)
            .map_err(|e| CliError::Config(format!("finite scenario: {e}")))?;
        let kind = filter.unwrap_or(FilterKind::GridDud);
        let seed = seed.unwrap_or(file.seed);
        run_grid(&raw, &file, kind, seed)?
    } else {
        let file: udrfs::model::ScenarioFile = serde_json::from_value(value)
            .map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        let kind = match filter {
            Some(k) => k,
            None => file
                .filter
                .as_ref()
                .and_then(|f| FilterKind::parse(&f.kind))
                .ok_or_else(|| {
                    CliError::Usage(
                        "no --filter given and the scenario embeds no known filter kind".into(),
                    )
                })?,
        };
        let seed = seed.unwrap_or(file.seed);
        run_continuous(&raw, &file, kind, seed, replay.as_deref())?
    };
    write_outputs(&out, &output)?;
    eprintln!(
        "run {} finished in {:?}, outputs in {}",
        output.report.filter,
        started.elapsed(),
        out.display()
    );
    Ok(())
}

fn cmd_compare(
    scenario: PathBuf,
    filters: Vec<FilterKind>,
    out: PathBuf,
    seed: Option<u64>,
    sweep_p_d: Vec<f64>,
) -> Result<(), CliError> {
    let (raw, value) = load_scenario(&scenario)?;
    let file: udrfs::model::ScenarioFile =
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("scenario: {e}")))?;
    let seed = seed.unwrap_or(file.seed);
    let rows = compare(&raw, &file, &filters, seed, &sweep_p_d)?;
    std::fs::write(&out, render_csv(&rows)).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Verify { case, json } => match cmd_verify(case, json) {
            Ok(true) => 0,
            Ok(false) => 1,
            Err(e) => {
                eprintln!("error: {}", e.message());
                e.exit_code()
            }
        },
        Command::Run {
            scenario,
            filter,
            out,
            seed,
            measurements,
        } => match cmd_run(scenario, filter, out, seed, measurements) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {}", e.message());
                e.exit_code()
            }
        },
        Command::Compare {
            scenario,
            filters,
            out,
            seed,
            sweep_p_d,
        } => match cmd_compare(scenario, filters, out, seed, sweep_p_d) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {}", e.message());
                e.exit_code()
            }
        },
    };
    std::process::exit(outcome);
}
