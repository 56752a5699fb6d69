use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nroy::cli::{self, RunOverrides};

/// Level-set estimation for stochastic building simulators by history matching.
#[derive(Parser)]
#[command(name = "nroy", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run or resume the waves described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_waves: Option<usize>,
    },
    /// Score each wave's emulators on a fresh validation design.
    Validate {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        n: usize,
    },
    /// Write projection grids and NROY histograms for the latest wave.
    Report {
        #[arg(long)]
        state: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let code = match args.command {
        Command::Run { config, out, seed, max_waves } => {
            cli::cmd_run(&config, &out, RunOverrides { seed, max_waves }).map(|o| {
                println!("{}", serde_json::to_string_pretty(&o.summary).expect("summary serializes"));
                if let Some(d) = o.selections.iter().find_map(|s| s.design.as_ref()) {
                    log::info!("selected candidate {}", d.candidate_id);
                }
                log::info!("{}", o.summary.message);
                o.exit_code()
            })
        }
        Command::Validate { state, n } => cli::cmd_validate(&state, n).map(|r| {
            println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
            cli::EXIT_OK
        }),
        Command::Report { state } => cli::cmd_report(&state).map(|r| {
            println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
            cli::EXIT_OK
        }),
    };
    match code {
        Ok(c) => ExitCode::from(c as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
