use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pebo::harness;
use pebo::mappings::{self, MappingRegistry};
use pebo::plant::PlantRegistry;
use pebo::{load_scenario, Error, Execution};

/// Adaptive state observer for overparametrized LTI plants.
///
/// Exit status: 0 on success, 1 when a checked threshold is violated,
/// 2 on configuration or runtime errors.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trajectory, regressor and metrics files.
    Run {
        /// Scenario file, or the name of a built-in scenario.
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Compare the run against the scenario's convergence thresholds.
        #[arg(long)]
        check: bool,
        /// Integration step (overrides `integrator.h`).
        #[arg(long)]
        h: Option<f64>,
        /// Final time (overrides `integrator.t_end`).
        #[arg(long = "t-end")]
        t_end: Option<f64>,
    },
    /// Run the property suite of a registered mapping set.
    VerifyMappings {
        plant: String,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evaluate samples on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Excitation level of the recorded regressor over a time window.
    Excitation {
        /// A regressor CSV, or a trajectory CSV with one next to it.
        csv: PathBuf,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        /// Exit with status 1 when the level is below this value.
        #[arg(long)]
        min_alpha: Option<f64>,
    },
}

enum Outcome {
    Pass,
    Violation,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Violation) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<Outcome, Error> {
    match command {
        Command::Run {
            config,
            out,
            check,
            h,
            t_end,
        } => {
            let mut cfg = load_scenario(&config)?;
            if let Some(dir) = out {
                cfg.out_dir = dir;
            }
            if let Some(h) = h {
                cfg.integrator.h = h;
            }
            if let Some(t) = t_end {
                cfg.integrator.t_end = t;
            }
            cfg.validate()?;
            let artifacts = harness::run(&cfg)?;
            println!("wrote {}", artifacts.dir.display());
            print!("{}", artifacts.metrics);
            if !check {
                return Ok(Outcome::Pass);
            }
            let outcomes = artifacts.check();
            for o in &outcomes {
                println!("{o}");
            }
            Ok(if outcomes.iter().all(|o| o.passed) {
                Outcome::Pass
            } else {
                Outcome::Violation
            })
        }
        Command::VerifyMappings {
            plant,
            samples,
            seed,
            sequential,
        } => {
            let plants = PlantRegistry::default();
            let maps = MappingRegistry::default();
            let p = plants
                .get(&plant)
                .ok_or_else(|| Error::Config(format!("unknown plant `{plant}`")))?;
            let set = maps
                .get(&plant)
                .ok_or_else(|| Error::Config(format!("no mapping set for `{plant}`")))?;
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let report = mappings::verify_mappings(p, set, samples, seed, exec)?;
            println!("{report}");
            Ok(if report.passed() {
                Outcome::Pass
            } else {
                Outcome::Violation
            })
        }
        Command::Excitation {
            csv,
            from,
            to,
            min_alpha,
        } => {
            let (times, phi) = harness::load_regressor(&csv)?;
            let alpha = harness::excitation_level(&times, &phi, from, to)?;
            println!("alpha = {}", harness::format_number(alpha));
            Ok(match min_alpha {
                Some(min) if alpha < min => Outcome::Violation,
                _ => Outcome::Pass,
            })
        }
    }
}
