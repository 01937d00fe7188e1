use clap::{Parser, Subcommand};
use dyadic_wave::lab::{experiments, run_experiment, thread_override, validate_config, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dyadic-wave", version, about = "Run scaling experiments on frequency-localized waves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write <out>/<name>.csv and <out>/<name>.json.
    Run {
        experiment: String,
        /// JSON config; defaults are used for anything it leaves out.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (DYADIC_WAVE_THREADS takes precedence).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List registered experiments and their CSV columns.
    List,
    /// Check a config against its experiment's schema and print it resolved.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> dyadic_wave::Result<bool> {
    match cli.command {
        Command::List => {
            for e in experiments() {
                println!("{:<22} {}", e.name, e.summary);
                println!("{:<22} columns: {}", "", e.columns.join(","));
            }
            Ok(true)
        }
        Command::Validate { config } => {
            let resolved = validate_config(&ExperimentConfig::load(&config)?)?;
            println!("{}", serde_json::to_string_pretty(&resolved)?);
            Ok(true)
        }
        Command::Run { experiment, config, out, seed, threads } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::new(&experiment),
            };
            if cfg.experiment.is_empty() {
                cfg.experiment = experiment.clone();
            } else if cfg.experiment != experiment {
                return Err(dyadic_wave::Error::Config(format!(
                    "config is for '{}' but '{experiment}' was requested",
                    cfg.experiment
                )));
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.threads = thread_override(threads.or(cfg.threads))?;
            cfg.out_dir = Some(out);
            let report = run_experiment(&cfg)?;
            for c in &report.checks {
                println!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.describe());
            }
            println!("{}: {}", report.experiment, if report.pass { "pass" } else { "fail" });
            Ok(report.pass)
        }
    }
}
