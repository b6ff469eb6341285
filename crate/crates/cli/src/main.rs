//! `orbitgrasp`: plan and simulate capture and detumbling of a tumbling
//! satellite from a scenario file.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "orbitgrasp", version, about = "Capture and time-optimal detumbling of a tumbling satellite")]
struct Cli {
    /// Also write a gnuplot script next to every CSV.
    #[arg(long, global = true)]
    gnuplot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan the optimal intercept of the grapple fixture.
    PlanPrecapture {
        config: PathBuf,
        /// Start the plan this many seconds after the configured target state.
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Plan the time-optimal detumbling maneuver of the configured target.
    PlanDetumble {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the full capture-then-detumble simulation.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Check a scenario file without running it.
    Validate { config: PathBuf },
    /// Simulate several scenarios in parallel, one subdirectory each.
    Batch {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ORBITGRASP_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::PlanPrecapture { config, t0, out } => commands::plan_precapture(&config, t0, &out, cli.gnuplot),
        Command::PlanDetumble { config, out } => commands::plan_detumble(&config, &out, cli.gnuplot),
        Command::Simulate { config, out_dir } => commands::simulate(&config, &out_dir, cli.gnuplot).map(|_| ()),
        Command::Validate { config } => commands::validate(&config),
        Command::Batch { configs, out_dir } => commands::batch(&configs, &out_dir, cli.gnuplot),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.message);
            ExitCode::from(e.code)
        }
    }
}
