use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stratsynth::{
    cmd_eval, cmd_features, cmd_report, cmd_select, cmd_stage1, cmd_stage2, cmd_synth, CliError, Format, Overrides,
    Session,
};

/// Synthesizes SMT solver strategies by tree search.
#[derive(Debug, Parser)]
#[command(name = "stratsynth", version)]
struct Cli {
    /// Override the config's random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the number of parallel evaluation workers.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run both stages and write all artifacts.
    Synth {
        #[arg(long)]
        config: PathBuf,
    },
    /// Search linear strategies; writes pool.txt.
    Stage1 {
        #[arg(long)]
        config: PathBuf,
    },
    /// Pick a portfolio from a pool file; writes portfolio.txt.
    Select {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        pool: PathBuf,
    },
    /// Search combined strategies over a portfolio file.
    Stage2 {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        portfolio: PathBuf,
    },
    /// Evaluate one strategy on the configured benchmarks.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long)]
        timeout_ms: Option<u64>,
    },
    /// Print the probe features of an SMT-LIB file.
    Features {
        #[arg(long)]
        instance: PathBuf,
        /// Accepted for symmetry with the other commands; unused.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score the records of a cache file.
    Report {
        #[arg(long)]
        cache: PathBuf,
        /// Supplies expected statuses for the instances.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    let ov = Overrides { seed: cli.seed, workers: cli.workers, out: cli.out };
    match cli.command {
        Command::Synth { config } => cmd_synth(&Session::open(&config, &ov)?, cli.format),
        Command::Stage1 { config } => cmd_stage1(&Session::open(&config, &ov)?),
        Command::Select { config, pool } => cmd_select(&Session::open(&config, &ov)?, &pool),
        Command::Stage2 { config, portfolio } => cmd_stage2(&Session::open(&config, &ov)?, &portfolio, cli.format),
        Command::Eval { config, strategy, timeout_ms } => {
            cmd_eval(&Session::open(&config, &ov)?, &strategy, timeout_ms, cli.format)
        }
        Command::Features { instance, .. } => cmd_features(&instance),
        Command::Report { cache, config } => {
            let session = config.map(|c| Session::open(&c, &ov)).transpose()?;
            cmd_report(&cache, session.as_ref(), cli.format)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
