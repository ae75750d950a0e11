use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use genfun::Registry;
use genfun_cli::config::ScenarioConfig;
use genfun_cli::{commands, emit, runner};

/// Exit status for configuration errors.
const CONFIG_ERROR: u8 = 3;

#[derive(Parser)]
#[command(
    name = "genfun",
    version,
    about = "Checks convexity conditions of generating functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks of a scenario and write report.json, margins.csv and timings.json.
    Check { config: PathBuf },
    /// Sample the dual generating function and write dual_samples.csv.
    Dualize { config: PathBuf },
    /// Compute the g-transform of a sampled function and write transform.csv.
    Transform { config: PathBuf, input: PathBuf },
    /// List the built-in generating functions.
    List,
}

fn init_threads() {
    let Ok(s) = std::env::var("GENFUN_THREADS") else {
        return;
    };
    match s.parse::<usize>() {
        Ok(n) if n > 0 => {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
        _ => eprintln!("warning: ignoring GENFUN_THREADS={s}"),
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, ExitCode> {
    ScenarioConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(CONFIG_ERROR)
    })
}

fn run(cli: Cli) -> Result<ExitCode, ExitCode> {
    let registry = Registry::default();
    let fail = |e: anyhow::Error| {
        eprintln!("error: {e:#}");
        ExitCode::from(CONFIG_ERROR)
    };
    match cli.command {
        Command::Check { config } => {
            let cfg = load(&config)?;
            let outcome = runner::run_scenario(&cfg, &registry).map_err(|e| fail(e.into()))?;
            emit::emit_report(&cfg.output_dir, &outcome).map_err(fail)?;
            for c in &outcome.report.checks {
                println!(
                    "{:<12} {:<14} margin={:e}",
                    c.condition_id,
                    c.verdict.as_str(),
                    c.margin
                );
            }
            println!("overall: {}", outcome.report.overall.as_str());
            Ok(ExitCode::from(outcome.report.exit_code as u8))
        }
        Command::Dualize { config } => {
            let cfg = load(&config)?;
            let path = commands::dualize(&cfg, &registry).map_err(fail)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Transform { config, input } => {
            let cfg = load(&config)?;
            let path = commands::transform(&cfg, &registry, &input).map_err(fail)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::List => {
            print!("{}", commands::list(&registry));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    run(Cli::parse()).unwrap_or_else(|code| code)
}
