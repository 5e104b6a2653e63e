use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aoi_cli::commands::{self, parse_range, DumpView, FuzzArgs, MdpArgs, Outcome, TailArgs};
use aoi_cli::config::{ExperimentConfig, FULL_SCALE_USERS};
use aoi_cli::simulate::{resolve_out_dir, simulate, write_files};
use aoi_cli::table::write_atomic;
use aoi_cli::{CliError, Result, OUT_DIR_ENV};
use aoi_core::fuzz::FuzzSpec;
use aoi_core::oracle::OracleBudget;
use aoi_core::policies::PolicyKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Age-of-Information scheduling experiments for mobile users in cellular
/// networks. Every command prints a CSV table whose `#` header records the
/// resolved inputs and seed.
#[derive(Parser)]
#[command(name = "aoi", version)]
struct Cli {
    /// Write the table to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Running average and peak age of each policy on a configured network.
    Simulate(SimulateArgs),
    /// Closed-form bounds for given success probabilities.
    Bounds {
        /// Comma-separated success probabilities, one per user.
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        cells: usize,
        /// Expected number of occupied cells; uniform occupancy if omitted.
        #[arg(long)]
        g: Option<f64>,
    },
    /// Competitive-ratio experiments.
    Ratio {
        #[command(subcommand)]
        mode: RatioMode,
    },
    /// Relative value iteration for the single-cell peak-age MDP.
    Mdp {
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, default_value_t = 80)]
        h_cap: u64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 200_000)]
        max_iters: usize,
        /// Allowed relative gap between the gain and sum 1/p_i.
        #[arg(long, default_value_t = 0.01)]
        rel_tol: f64,
    },
    /// Tail of the stationary maximum age in one cell.
    Tail {
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, default_value = "cma")]
        policy: PolicyKind,
        #[arg(long, default_value_t = 5_000_000)]
        horizon: u64,
        /// Fit range `lo..hi`; chosen from the data if omitted.
        #[arg(long, value_parser = parse_range::<u64>)]
        k_range: Option<std::ops::RangeInclusive<u64>>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print a saved trace file as CSV.
    TraceDump {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = View::Slots)]
        view: View,
        /// Slots skipped by the stats view; min(T/10, 10^4) if omitted.
        #[arg(long)]
        burn_in: Option<u64>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config (TOML). Defaults to the desk-scale grid experiment.
    config: Option<PathBuf>,
    /// Start from a shipped config: grid_avg, grid_peak or full_scale.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Override one key, e.g. `--set sim.users=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Simulate the full population of 3000 users.
    #[arg(long)]
    full_scale: bool,
    /// Directory for the per-policy CSVs and traces.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum RatioMode {
    /// Max-age against the exact offline optimum on random small instances.
    Fuzz {
        #[arg(long, default_value = "2..3", value_parser = parse_range::<usize>)]
        users: std::ops::RangeInclusive<usize>,
        #[arg(long, default_value = "1..2", value_parser = parse_range::<usize>)]
        cells: std::ops::RangeInclusive<usize>,
        #[arg(long, default_value = "1..10", value_parser = parse_range::<u64>)]
        horizon: std::ops::RangeInclusive<u64>,
        #[arg(long, default_value_t = 500)]
        instances: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = OracleBudget::default().max_states)]
        max_states: u64,
        #[arg(long, default_value_t = OracleBudget::default().max_horizon)]
        max_horizon: usize,
    },
    /// Max-age against the comparison schedule on fixed-length super-intervals.
    Tightness {
        #[arg(long, default_value_t = 3)]
        users: usize,
        #[arg(long, value_delimiter = ',', default_value = "11,101,501")]
        delta: Vec<u64>,
        #[arg(long, default_value_t = 100)]
        intervals: u64,
    },
    /// Online policies against the adversary that fails every scheduled user.
    Duel {
        #[arg(long, default_value_t = 100)]
        horizon: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum View {
    Slots,
    Intervals,
    Stats,
}

fn emit(out: Option<&Path>, csv: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn run_simulate(args: SimulateArgs, out: Option<&Path>) -> Result<Option<CliError>> {
    let text = match (&args.config, &args.preset) {
        (Some(path), _) => std::fs::read_to_string(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?.to_string(),
        (None, None) => String::new(),
    };
    let mut overrides = args.overrides;
    if args.full_scale {
        overrides.push(format!("sim.users={FULL_SCALE_USERS}"));
    }
    let config = ExperimentConfig::with_overrides(&text, &overrides)?;
    if args.print_config {
        config.validate()?;
        emit(out, &config.to_toml())?;
        return Ok(None);
    }
    let env = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let dir = resolve_out_dir(args.out_dir.as_deref(), &config, env);
    let result = simulate(&config, &dir)?;
    write_files(&result)?;
    for (path, _) in &result.files {
        eprintln!("wrote {}", path.display());
    }
    emit(out, &result.summary)?;
    Ok(None)
}

fn run(cli: Cli) -> Result<Option<CliError>> {
    let out = cli.out.as_deref();
    let outcome: Outcome = match cli.command {
        Command::Simulate(args) => return run_simulate(args, out),
        Command::Bounds { p, cells, g } => commands::bounds(&p, cells, g)?,
        Command::Ratio { mode } => match mode {
            RatioMode::Fuzz {
                users,
                cells,
                horizon,
                instances,
                seed,
                max_states,
                max_horizon,
            } => commands::ratio_fuzz(&FuzzArgs {
                spec: FuzzSpec { users, cells, horizon },
                instances,
                seed,
                budget: OracleBudget {
                    max_states,
                    max_horizon,
                },
            })?,
            RatioMode::Tightness { users, delta, intervals } => commands::ratio_tightness(users, &delta, intervals)?,
            RatioMode::Duel { horizon, seed } => commands::ratio_duel(horizon, seed)?,
        },
        Command::Mdp {
            p,
            h_cap,
            tol,
            max_iters,
            rel_tol,
        } => commands::mdp(&MdpArgs {
            p,
            h_cap,
            tol,
            max_iters,
            rel_tol,
        })?,
        Command::Tail {
            p,
            policy,
            horizon,
            k_range,
            seed,
        } => commands::tail(&TailArgs {
            p,
            policy,
            horizon,
            k_range: k_range.map(|r| (*r.start(), *r.end())),
            seed,
        })?,
        Command::TraceDump { file, view, burn_in } => {
            let view = match view {
                View::Slots => DumpView::Slots,
                View::Intervals => DumpView::Intervals,
                View::Stats => DumpView::Stats,
            };
            commands::trace_dump(&file, view, burn_in)?
        }
    };
    emit(out, &outcome.csv)?;
    Ok(outcome.failure)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(e)) | Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
