use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spadsim::error::{ConfigError, ScenarioError};
use spadsim::scenarios::{fmt_g9, parse_config_for, run_to_dir, to_text, Config, ScenarioName};

/// Monte Carlo simulator of SPAD photon counters.
#[derive(Parser)]
#[command(name = "spadsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write <scenario>.csv and run.meta
    Run {
        scenario: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides [scenario] seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides [scenario] workers
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List scenario names
    List,
    /// Parse a configuration and print it fully resolved
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Config(String),
    Sim(String),
}

fn load(path: Option<&PathBuf>, name: Option<ScenarioName>) -> Result<Config, Failure> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_config_for(&text, name).map_err(|e: ConfigError| Failure::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::List => {
            for n in ScenarioName::ALL {
                println!("{:<28} {}", n.as_str(), n.description());
            }
            Ok(())
        }
        Command::Validate { config } => load(Some(&config), None).map(|c| print!("{}", to_text(&c))),
        Command::Run { scenario, config, seed, out, workers } => (|| {
            let name: ScenarioName = scenario.parse().map_err(|e: ConfigError| Failure::Config(e.to_string()))?;
            let mut cfg = load(config.as_ref(), Some(name))?;
            if let Some(s) = seed {
                cfg.scenario.seed = s;
            }
            if let Some(w) = workers {
                cfg.scenario.workers = w;
            }
            let (output, path) = run_to_dir(&cfg, &out).map_err(|e| match e {
                ScenarioError::Config(c) => Failure::Config(c.to_string()),
                other => Failure::Sim(other.to_string()),
            })?;
            eprintln!("wrote {} ({} rows)", path.display(), output.table.len());
            for (k, v) in &output.summary {
                eprintln!("  {k} = {}", fmt_g9(*v));
            }
            Ok(())
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Sim(m)) => {
            eprintln!("simulation failed: {m}");
            ExitCode::from(2)
        }
    }
}
