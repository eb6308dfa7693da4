use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use concmark::grid::RGrid;
use concmark::scenario::{run_scenario, Report, Scenario, Stage, Status};

/// Lyapunov-certified concentration envelopes checked against exact and
/// simulated tails.
#[derive(Parser)]
#[command(name = "concmark", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify (a, b, V) and write certificate.json.
    Certify(RunArgs),
    /// Also compute the inequality constant and write envelope.csv.
    Envelope(RunArgs),
    /// Compare the envelope with the truth and write tails.csv.
    Tails(RunArgs),
    /// Run every stage and write all artifacts.
    Scenario(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario files; several run concurrently.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifacts go to <out-dir>/<scenario name>/.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override the deviation grid, as r0:r1:steps.
    #[arg(long)]
    grid: Option<RGrid>,
}

const EXIT_USAGE: u8 = 1;
const EXIT_CHECK_FAILED: u8 = 2;

fn summary(report: &Report) -> String {
    match report.status {
        Status::Pass => format!("{}: pass", report.name),
        Status::CertificationFailed => format!(
            "{}: certification failed: {}",
            report.name,
            report.failure.as_deref().unwrap_or("unknown")
        ),
        Status::DominanceFailed => match &report.first_violation {
            Some(p) => format!(
                "{}: dominance failed at r = {} (truth [{}, {}], bound {})",
                report.name, p.r, p.truth_lo, p.truth_hi, p.bound
            ),
            None => format!("{}: dominance failed", report.name),
        },
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("CONCMARK_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("CONCMARK_THREADS must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    let (stage, args) = match cli.command {
        Command::Certify(a) => (Stage::Certify, a),
        Command::Envelope(a) => (Stage::Envelope, a),
        Command::Tails(a) => (Stage::Tails, a),
        Command::Scenario(a) => (Stage::Scenario, a),
    };

    let mut scenarios = Vec::with_capacity(args.files.len());
    for path in &args.files {
        match Scenario::from_path(path) {
            Ok(mut s) => {
                if let Some(seed) = args.seed {
                    s.seed = seed;
                }
                if let Some(grid) = args.grid {
                    s.grid = grid;
                }
                scenarios.push(s);
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(EXIT_USAGE);
            }
        }
    }

    let results: Vec<_> = scenarios
        .par_iter()
        .map(|s| run_scenario(s, stage, &args.out_dir))
        .collect();
    let mut code = 0;
    for (s, result) in scenarios.iter().zip(results) {
        match result {
            Ok(report) => {
                println!("{}", summary(&report));
                if report.status != Status::Pass && code == 0 {
                    code = EXIT_CHECK_FAILED;
                }
            }
            Err(e) => {
                eprintln!("error: {}: {e}", s.name);
                code = EXIT_USAGE;
            }
        }
    }
    ExitCode::from(code)
}
