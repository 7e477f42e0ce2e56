use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thermoshift::experiment::{run, schemas, verify, SUITES};
use thermoshift::io::{to_canonical_json, write_text};
use thermoshift::Error;

/// Exit status for failed invariant checks.
const CHECK_FAILURE: u8 = 2;
/// Exit status for malformed input.
const INPUT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "thermoshift", version, about = "Transfer operators, Perron complements and metastable splitting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment config; writes a CSV table and a JSON summary.
    Run {
        config: PathBuf,
        /// Directory for the artifacts instead of the config's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run a randomized property suite.
    Verify {
        /// One of: complement-identities, coupling-identities, pressure-oracles, interval-checks.
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full suite report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the JSON schemas of the accepted inputs.
    Schema,
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Input(_)
        | Error::UnknownState(_)
        | Error::Inadmissible { .. }
        | Error::TruncationTooSmall { .. }
        | Error::Construction { .. }
        | Error::Json(_)
        | Error::Io(_) => INPUT_ERROR,
        _ => CHECK_FAILURE,
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("THERMOSHIFT_THREADS") else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| format!("THERMOSHIFT_THREADS must be a positive integer, got {value:?}"))?;
    if n == 0 {
        return Err("THERMOSHIFT_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(INPUT_ERROR);
    }
    match cli.command {
        Command::Run { config, out_dir } => match run(&config, out_dir.as_deref()) {
            Ok(outcome) => {
                println!("summary: {}", outcome.json_path.display());
                if let Some(csv) = &outcome.csv_path {
                    println!("table: {}", csv.display());
                }
                if outcome.all_passed {
                    println!("all checks passed");
                    ExitCode::SUCCESS
                } else {
                    eprintln!("failed checks: {}", outcome.failed_checks.join(", "));
                    ExitCode::from(CHECK_FAILURE)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_for(&e))
            }
        },
        Command::Verify { suite, seed, out } => {
            if !SUITES.contains(&suite.as_str()) {
                eprintln!("error: unknown suite {suite:?}; expected one of {}", SUITES.join(", "));
                return ExitCode::from(INPUT_ERROR);
            }
            let report = match verify(&suite, seed) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(exit_for(&e));
                }
            };
            for p in &report.properties {
                let status = if p.passed { "PASS" } else { "FAIL" };
                println!("{status} {}: {}/{} (worst {:.3e}, tol {:.1e})", p.name, p.passes, p.total, p.worst, p.tol);
            }
            if let Some(path) = out {
                let written = to_canonical_json(&report).and_then(|text| write_text(&path, &text));
                if let Err(e) = written {
                    eprintln!("error: {e}");
                    return ExitCode::from(INPUT_ERROR);
                }
            }
            if report.all_passed {
                ExitCode::SUCCESS
            } else {
                for p in report.properties.iter().filter(|p| !p.passed) {
                    if let Some(inst) = &p.failing {
                        eprintln!("failing instance for {}: {}", p.name, serde_json::to_string(inst).unwrap_or_default());
                    }
                }
                ExitCode::from(CHECK_FAILURE)
            }
        }
        Command::Schema => match to_canonical_json(&schemas()) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(CHECK_FAILURE)
            }
        },
    }
}
