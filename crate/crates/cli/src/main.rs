//! `nbia`: train, evaluate and exercise the neighbor-aided initial access
//! bandit from the command line.

mod commands;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "nbia",
    version,
    about = "Neighbor-aided mmWave initial access simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct Common {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of awake neighbors feeding the context.
    #[arg(long)]
    pub paps: Option<usize>,
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one or more rounds; writes training_log.csv and agent.json.
    Train {
        #[command(flatten)]
        common: Common,
        /// Worker threads across rounds.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Also write SVG regret charts.
        #[arg(long)]
        plot: bool,
    },
    /// Greedy evaluation of a trained agent on fresh episodes; writes eval.json.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        agent: PathBuf,
        #[arg(long, value_enum, default_value_t = Policy::Agent)]
        policy: Policy,
    },
    /// Dynamic-demand timeline for the four systems; writes scenario_trace.csv.
    Scenario {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        plot: bool,
    },
    /// Dumps AP-user channels as JSON Lines (channels.jsonl).
    GenChannels {
        #[command(flatten)]
        common: Common,
        /// Number of grid points to dump; all when omitted.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Exhaustive beam sweep on a channel set; writes baseline.json.
    SweepBaseline {
        #[command(flatten)]
        common: Common,
        /// Channel dump to sweep; the configured site channels otherwise.
        #[arg(long)]
        channels: Option<PathBuf>,
    },
    /// Prints the default configuration.
    DefaultConfig {
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Policy {
    Agent,
    Oracle,
    UniformRandom,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { common, jobs, plot } => commands::train(&common, jobs, plot),
        Command::Eval {
            common,
            agent,
            policy,
        } => commands::eval(&common, &agent, policy),
        Command::Scenario {
            common,
            agent,
            plot,
        } => commands::scenario(&common, &agent, plot),
        Command::GenChannels { common, points } => commands::gen_channels(&common, points),
        Command::SweepBaseline { common, channels } => {
            commands::sweep_baseline(&common, channels.as_deref())
        }
        Command::DefaultConfig { out } => commands::default_config(out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
