//! Argument parsing and subcommand dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use refqueue::Thresholds;

use crate::commands::{self, DimensionOptions, Limit, Overrides, Settings, SimOptions};
use crate::{scenario_file, CliError};

/// Queue-length and waiting-time dimensioning for a probe-train reflector's out-queue.
#[derive(Debug, Parser)]
#[command(name = "refqueue", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file with [config] and [session] sections.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Arrivals simulated in total, warmup included.
    #[arg(long, default_value_t = 1_010_000)]
    arrivals: usize,
    /// Leading arrivals discarded [default: min(10000, arrivals/10)].
    #[arg(long)]
    warmup: Option<usize>,
    /// Write one row per recorded arrival to samples.csv.
    #[arg(long)]
    samples: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Queue-length and waiting-time distributions with a quantile report.
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// Discrete-event simulation of the same queue.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Analysis checked against simulation.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
        /// Threshold for the occupancy total-variation distance.
        #[arg(long, default_value_t = 0.02)]
        tv_threshold: f64,
        /// Threshold for the Kolmogorov-Smirnov distances.
        #[arg(long, default_value_t = 0.02)]
        ks_threshold: f64,
        /// Allowed deviation of simulated means in standard errors.
        #[arg(long, default_value_t = 3.0)]
        std_errors: f64,
        /// Shift this much probability from pi_0 to pi_1 (negative control).
        #[arg(long, hide = true)]
        corrupt_occupancy: Option<f64>,
    },
    /// Largest total arrival rate meeting quantile limits.
    Dimension {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda_min: f64,
        #[arg(long)]
        lambda_max: f64,
        /// Sweep points, both ends included.
        #[arg(long, default_value_t = 11)]
        lambda_steps: usize,
        /// Waiting-time limit as P:TIME, e.g. 0.95:3.3ms. Repeatable.
        #[arg(long, value_parser = Limit::parse_wait)]
        wait_limit: Vec<Limit>,
        /// Queue-length limit as P:N, e.g. 0.99:24. Repeatable.
        #[arg(long, value_parser = Limit::parse_queue)]
        queue_limit: Vec<Limit>,
        /// Bisection steps after the sweep.
        #[arg(long, default_value_t = 0)]
        refine: usize,
    },
}

fn load(common: &Common) -> Result<(scenario_file::ScenarioFile, Settings, PathBuf), CliError> {
    let file = scenario_file::load(&common.scenario)?;
    let settings = Settings::resolve(&file, &common.overrides)?;
    let out = common.out.clone().unwrap_or_else(commands::default_out);
    Ok((file, settings, out))
}

fn sim_options(sim: &SimArgs) -> SimOptions {
    SimOptions { arrivals: sim.arrivals, warmup: sim.warmup, samples: sim.samples }
}

/// Runs one subcommand, printing its report to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { common } => {
            let (file, settings, out) = load(&common)?;
            let result = commands::analyze(&file, &settings, &out)?;
            print!("{}", result.text);
        }
        Command::Simulate { common, sim } => {
            let (file, settings, out) = load(&common)?;
            if file.scenario.traffic_intensity() >= 1.0 {
                eprintln!("{}", commands::UNSTABLE_BANNER);
            }
            let (_, text) = commands::simulate(&file, &settings, &sim_options(&sim), &out)?;
            print!("{text}");
        }
        Command::Compare { common, sim, tv_threshold, ks_threshold, std_errors, corrupt_occupancy } => {
            let (file, settings, out) = load(&common)?;
            let thresholds = Thresholds { tv: tv_threshold, ks: ks_threshold, std_errors };
            let (_, text) =
                commands::compare(&file, &settings, &sim_options(&sim), &thresholds, corrupt_occupancy, &out)?;
            print!("{text}");
        }
        Command::Dimension { common, lambda_min, lambda_max, lambda_steps, wait_limit, queue_limit, refine } => {
            let (file, settings, out) = load(&common)?;
            let opts = DimensionOptions {
                lambda_min,
                lambda_max,
                lambda_points: lambda_steps,
                wait_limits: wait_limit,
                queue_limits: queue_limit,
                refine,
            };
            let outcome = commands::dimension(&file, &settings, &opts, Some(&out))?;
            print!("{}", outcome.text);
            if outcome.hit_range_end {
                println!("note: the whole sweep met the limits; widen --lambda-max for the true maximum");
            }
        }
    }
    Ok(())
}

/// Parses a full argument list, program name first.
pub fn parse<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(args)
}
