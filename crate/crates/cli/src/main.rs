mod config;
mod pipelines;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use srbkit::dynsys::{builtin, BUILTIN_NAMES};

use config::ExperimentConfig;
use report::Report;

#[derive(Parser)]
#[command(name = "srbkit", version, about = "Run SRB-measure experiments from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the pipeline named in a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the built-in systems with their parameters and known exponents.
    ListSystems,
}

const CONFIG_INVALID: u8 = 2;
const ASSERTION_FAILED: u8 = 1;

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::ListSystems => {
            let table: Vec<serde_json::Value> = BUILTIN_NAMES
                .iter()
                .map(|n| builtin(n, None).expect("built-in constructs").metadata())
                .collect();
            println!("{}", serde_json::to_string_pretty(&table).expect("metadata serializes"));
            ExitCode::SUCCESS
        }
        Command::Run { config, out, seed } => run(config, out, seed),
    }
}

fn run(path: PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> ExitCode {
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(CONFIG_INVALID);
        }
    };
    let mut cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid config: {e}");
            return ExitCode::from(CONFIG_INVALID);
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = &out {
        cfg.output = o.display().to_string();
    }
    let sys = match cfg.system.as_ref().map(|s| s.build()).transpose() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: invalid system: {e}");
            return ExitCode::from(CONFIG_INVALID);
        }
    };
    let system_meta = sys.as_ref().map(|s| s.metadata()).unwrap_or(serde_json::Value::Null);
    let outcome = pipelines::run(sys.as_ref(), cfg.seed, &cfg.pipeline);
    let (report, error) = match outcome {
        Ok(r) => (r, None),
        Err(e) => (Report::default(), Some(e.to_string())),
    };
    let dir = PathBuf::from(&cfg.output);
    if let Err(e) = report::write_all(&dir, &cfg, cfg.pipeline.name(), &system_meta, cfg.seed, &report, error.as_deref()) {
        eprintln!("error: cannot write {}: {e}", dir.display());
        return ExitCode::from(ASSERTION_FAILED);
    }
    for a in &report.assertions {
        println!(
            "{} {} [{}]: {} {} {}",
            if a.pass { "PASS" } else { "FAIL" },
            a.name,
            a.anchor,
            a.value,
            a.relation,
            a.bound
        );
    }
    if let Some(e) = &error {
        println!("FAIL pipeline error: {e}");
    }
    if error.is_none() && report.pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(ASSERTION_FAILED)
    }
}
