use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levyreg::scenario::{list_scenarios, parse_config, run_scenario, ScenarioConfig, ScenarioError};

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_IO: u8 = 3;
/// Largest tolerated fraction of failed replicas.
const FAILURE_FRACTION_LIMIT: f64 = 0.01;

#[derive(Parser, Debug)]
#[command(name = "levyreg", version, about = "Monte Carlo scenarios for Lévy-driven SDEs with drift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write samples.csv, summary.json and plot scripts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the config's `output` key).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicas: Option<usize>,
        /// Worker threads (default: available parallelism).
        #[arg(long, env = "LEVYREG_THREADS")]
        threads: Option<usize>,
    },
    /// Print the built-in scenarios.
    ListScenarios,
    /// Parse and check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, (u8, String)> {
    let text = fs::read_to_string(path).map_err(|e| (EXIT_IO, format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| (EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn exit_code(e: &ScenarioError) -> u8 {
    match e {
        ScenarioError::Config(_) | ScenarioError::Setup(_) => EXIT_CONFIG,
        ScenarioError::Io { .. } | ScenarioError::ThreadPool(_) => EXIT_IO,
    }
}

fn execute(cli: Cli) -> Result<(), (u8, String)> {
    match cli.command {
        Command::ListScenarios => {
            print!("{}", list_scenarios());
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            cfg.sampler().map_err(|e| (EXIT_CONFIG, format!("{}: {e}", config.display())))?;
            println!("{}: ok ({}, {} replicas)", config.display(), cfg.scenario, cfg.replicas);
            Ok(())
        }
        Command::Run { config, out, seed, replicas, threads } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = replicas {
                cfg.replicas = r;
            }
            let out = out
                .or_else(|| cfg.output.clone())
                .ok_or((EXIT_CONFIG, "no output directory: pass --out or set `output`".to_string()))?;
            let threads = threads
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let summary = run_scenario(&cfg, threads, &out).map_err(|e| (exit_code(&e), e.to_string()))?;
            let diagnostics = serde_json::to_string(&summary.diagnostics).unwrap_or_default();
            println!(
                "{} seed={} replicas={} failures={} wall={:.2}s",
                summary.scenario, summary.seed, summary.replicas, summary.failures, summary.wall_time_seconds
            );
            println!("{diagnostics}");
            if summary.failure_fraction() > FAILURE_FRACTION_LIMIT {
                return Err((
                    EXIT_NUMERIC,
                    format!(
                        "{} of {} replicas failed numerically (limit {}%)",
                        summary.failures,
                        summary.replicas,
                        FAILURE_FRACTION_LIMIT * 100.0
                    ),
                ));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
