//! `satflow` command-line runner.
//!
//! Exit status: 0 when every assertion passes, 2 when a numerical assertion
//! fails, 3 on solver failure, 4 on configuration or I/O errors. Whenever the
//! status is nonzero a JSON failure report is printed to stdout.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use satflow::config::{build_config, RawConfig, RunConfig};
use satflow::scenario::{self, ScenarioError, ScenarioOutcome, SCENARIOS};
use serde_json::json;

#[derive(Parser)]
#[command(name = "satflow", version, about = "Saturated-mobility gradient flow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the configured problem to `time.t_end` or steady detection.
    Run(ConfigArgs),
    /// Run a shipped scenario and check its assertions.
    Scenario {
        /// One of the names printed by `--list`.
        #[arg(required_unless_present = "list")]
        name: Option<String>,
        /// Print the scenario names and exit.
        #[arg(long)]
        list: bool,
        /// Print the scenario's config file and exit.
        #[arg(long)]
        print_config: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Compute the steady profile carrying the initial mass.
    Steady(ConfigArgs),
    /// Contraction, comparison and energy audits for the configured problem.
    Audit(ConfigArgs),
}

#[derive(clap::Args)]
struct ConfigArgs {
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(clap::Args)]
struct Common {
    /// Override a config entry, e.g. `--set grid.n_cells=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set output.directory=DIR`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Do not write any files.
    #[arg(long)]
    dry_run: bool,
}

impl Common {
    fn all_overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if let Some(dir) = &self.out {
            o.push(format!("output.directory={}", dir.display()));
        }
        o
    }
}

enum Failure {
    Config(String),
    Solver(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Solver(msg) => Failure::Solver(msg),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(|e| Failure::Config(format!("{e:#}")))?;
    let mut raw = RawConfig::parse(&text).map_err(|e| Failure::Config(e.to_string()))?;
    for o in overrides {
        raw.set(o).map_err(|e| Failure::Config(e.to_string()))?;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    build_config(&raw, base).map_err(|e| Failure::Config(e.to_string()))
}

fn execute(cmd: &Command) -> Result<ScenarioOutcome, Failure> {
    match cmd {
        Command::Scenario { name, common, .. } => {
            let name = name.as_deref().unwrap_or_default();
            Ok(scenario::run_scenario(name, &common.all_overrides())?)
        }
        Command::Run(a) => Ok(scenario::run_config(&load(&a.config, &a.common.all_overrides())?)?),
        Command::Steady(a) => Ok(scenario::run_steady(&load(&a.config, &a.common.all_overrides())?)?),
        Command::Audit(a) => Ok(scenario::run_audit(&load(&a.config, &a.common.all_overrides())?)?),
    }
}

fn label(cmd: &Command) -> String {
    match cmd {
        Command::Scenario { name, .. } => name.clone().unwrap_or_default(),
        Command::Run(_) => "run".into(),
        Command::Steady(_) => "steady".into(),
        Command::Audit(_) => "audit".into(),
    }
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Scenario { common, .. } => common,
        Command::Run(a) | Command::Steady(a) | Command::Audit(a) => &a.common,
    }
}

fn failure_report(run: &str, status: &str, code: u8, errors: Vec<String>) -> String {
    serde_json::to_string_pretty(&json!({
        "run": run,
        "status": status,
        "exit_code": code,
        "errors": errors,
    }))
    .expect("report serializes")
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Command::Scenario { list: true, .. } = &cli.command {
        for name in SCENARIOS {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    if let Command::Scenario { name: Some(name), print_config: true, .. } = &cli.command {
        return match scenario::scenario_config_text(name) {
            Some(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            None => {
                eprintln!("unknown scenario `{name}`; known: {}", SCENARIOS.join(", "));
                ExitCode::from(4)
            }
        };
    }

    let run = label(&cli.command);
    let mut outcome = match execute(&cli.command) {
        Ok(o) => o,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            println!("{}", failure_report(&run, "config_error", 4, vec![msg]));
            return ExitCode::from(4);
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            println!("{}", failure_report(&run, "solver_failure", 3, vec![msg]));
            return ExitCode::from(3);
        }
    };

    println!("{outcome}");
    if !common(&cli.command).dry_run {
        match outcome.emit(true) {
            Ok(files) => eprintln!("wrote {} files under {}", files.len(), outcome.output_dir.display()),
            Err(e) => {
                let msg = format!("cannot write results to {}: {e}", outcome.output_dir.display());
                eprintln!("error: {msg}");
                println!("{}", failure_report(&run, "io_error", 4, vec![msg]));
                return ExitCode::from(4);
            }
        }
    }
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        let errors = outcome.failures().map(|a| format!("{}: {}", a.name, a.detail)).collect();
        println!("{}", failure_report(&run, "assertion_failed", 2, errors));
        ExitCode::from(2)
    }
}
