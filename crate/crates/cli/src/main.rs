use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use parkmpc_cli::{CliError, Override, RunConfig};

#[derive(Parser)]
#[command(name = "parkmpc", version, about = "Run and validate MPC path-tracking scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario (or a directory of scenarios) and write the results.
    Run {
        scenario: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write path.svg, steering.svg and speed.svg.
        #[arg(long)]
        plots: bool,
        /// Dotted-path override, e.g. `mpc.r_w=5.0`. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<Override>,
    },
    /// Check a scenario without running it and print the effective configuration.
    Validate {
        scenario: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<Override>,
    },
}

fn fail(e: &CliError) -> ExitCode {
    match e {
        CliError::Invalid(problems) => {
            for p in problems {
                eprintln!("invalid: {p}");
            }
        }
        other => eprintln!("error: {other}"),
    }
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, out, plots, overrides } => {
            let config = RunConfig {
                scenario_path: scenario,
                output_dir: out,
                emit_plots: plots,
                overrides,
            };
            let mut status = ExitCode::SUCCESS;
            for outcome in parkmpc_cli::run(&config) {
                match outcome {
                    Ok(s) => {
                        let m = &s.metrics;
                        println!(
                            "{}: {:?} after {:.2} s, max cross-track {:.4} m, final error {:.4} m -> {}",
                            s.scenario_path.display(),
                            s.result.termination,
                            s.result.samples.last().map_or(0.0, |x| x.t),
                            m.max_cross_track,
                            m.final_position_error,
                            s.output_dir.display()
                        );
                    }
                    Err(e) => status = fail(&e),
                }
            }
            status
        }
        Command::Validate { scenario, overrides } => match parkmpc_cli::validate(&scenario, &overrides) {
            Ok(echo) => {
                println!("{echo}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}
