mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use critfield::census::Level;

use config::parse_level;

#[derive(Debug, Parser)]
#[command(name = "critfield", version, about = "Critical points of stationary Gaussian random fields")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Model / experiment TOML.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `master_seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print a JSON summary on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the model assumptions (exit 2 if any fails).
    CheckModel,
    /// Draw one realization and dump its atoms.
    Simulate {
        #[arg(long)]
        atoms: Option<usize>,
        /// Also write field values on a grid with this many points per axis.
        #[arg(long)]
        grid: Option<usize>,
        /// Half-width of the grid box.
        #[arg(long, default_value_t = 10.0)]
        t: f64,
    },
    /// Critical-point census of one realization on [-T, T]^d.
    Census {
        #[arg(long)]
        t: Option<f64>,
        /// Comma-separated levels, `-inf` allowed.
        #[arg(long, value_delimiter = ',', value_parser = parse_level, allow_hyphen_values = true)]
        levels: Vec<Level>,
    },
    /// Kac-Rice expectations.
    Kacrice {
        #[arg(long, default_value_t = 10.0)]
        t: f64,
        #[arg(long, default_value = "-inf", value_parser = parse_level, allow_hyphen_values = true)]
        level: Level,
        /// Morse index, or `all`.
        #[arg(long, default_value = "all")]
        index: String,
        #[arg(long, default_value_t = critfield::kac_rice::DEFAULT_MC_FIRST)]
        n_mc: usize,
        /// Gradient value `v` for the second factorial moment (comma-separated).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        second_v: Option<Vec<f64>>,
        /// Box side lengths for the second factorial moment.
        #[arg(long = "box", value_delimiter = ',')]
        box_sides: Option<Vec<f64>>,
        #[arg(long, default_value_t = critfield::kac_rice::DEFAULT_MC_PER_LAG)]
        n_mc_lag: usize,
        #[arg(long, default_value_t = 24)]
        n_quad: usize,
    },
    /// Hermite coefficients and chaotic variances.
    Chaos {
        #[arg(long, default_value = "0", value_parser = parse_level, allow_hyphen_values = true)]
        level: Level,
        #[arg(long, default_value_t = 4)]
        q_max: usize,
        #[arg(long, default_value_t = critfield::chaos::DEFAULT_COEFF_MC)]
        n_mc: usize,
        /// Index weights, `d + 1` comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        alpha: Option<Vec<f64>>,
    },
    /// Replicated experiment with CLT diagnostics.
    Clt {
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Euler characteristic audit over many seeds (exit 3 on any failure).
    EulerAudit {
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// Half-widths; defaults to the config ladder.
        #[arg(long, value_delimiter = ',')]
        t: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    match commands::run(&cli.global, &cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
