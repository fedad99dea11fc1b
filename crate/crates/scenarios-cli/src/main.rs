//! Command-line front end: validate and run scenario files, emit per-packet
//! CSV and a structured summary.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use netsim::config::{LoadError, ScenarioConfig};
use netsim::{builtin, stats};

#[derive(Parser)]
#[command(name = "scenarios-cli", about = "Run FRER failure and latency scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or builtin name) and write results
    Run {
        /// Path to a scenario file, or a builtin scenario name
        scenario: String,
        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (created if missing)
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Both)]
        format: Format,
    },
    /// Parse and validate a scenario file without running it
    Validate { scenario: String },
    /// List the builtin scenarios
    ListBuiltin,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Summary,
    Both,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Load(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

enum CliError {
    Load(LoadError),
    Runtime(String),
}

/// Resolve a CLI scenario argument: an existing file path wins, otherwise a
/// builtin name.
fn load(scenario: &str) -> Result<(String, ScenarioConfig), LoadError> {
    let path = Path::new(scenario);
    if path.exists() {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".to_owned());
        return Ok((stem, netsim::load_scenario(path)?));
    }
    if let Some(text) = builtin::get(scenario) {
        return Ok((scenario.to_owned(), ScenarioConfig::from_json(text)?));
    }
    Err(LoadError::Io {
        path: scenario.to_owned(),
        source: std::io::Error::new(
            std::io::ErrorKind::NotFound,
            "no such file or builtin scenario",
        ),
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::ListBuiltin => {
            for name in builtin::NAMES {
                println!("{name}");
            }
            Ok(())
        }
        Command::Validate { scenario } => {
            let (name, _) = load(&scenario).map_err(CliError::Load)?;
            println!("{name}: valid");
            Ok(())
        }
        Command::Run {
            scenario,
            seed,
            out,
            format,
        } => {
            let (name, config) = load(&scenario).map_err(CliError::Load)?;
            let (records, summary) =
                netsim::run(&config, seed).map_err(|e| CliError::Runtime(e.to_string()))?;
            std::fs::create_dir_all(&out)
                .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
            if format != Format::Summary {
                let path = out.join(format!("{name}.csv"));
                stats::write_file(&path, &netsim::records_to_csv(&records))
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            if format != Format::Csv {
                let path = out.join(format!("{name}-summary.json"));
                stats::write_file(&path, &summary.to_json())
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            println!(
                "{name}: sent {} received {} lost {}",
                summary.sent, summary.received, summary.lost
            );
            Ok(())
        }
    }
}
