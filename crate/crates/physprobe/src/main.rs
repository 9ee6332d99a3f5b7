use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use physprobe::commands::{self, OracleName};
use physprobe::{Error, RunConfig};

#[derive(Parser)]
#[command(name = "physprobe", version = physprobe::VERSION, about = "Train and probe agents on interactive physics questions")]
struct Cli {
    /// JSON run config; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Rollout worker threads; 1 is the reference mode.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Scan,
    Elimination,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent; writes agent.ckpt and learning_curve.csv.
    Train,
    /// Evaluate a trained agent; writes records.ndjson and summary.csv.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        randomized: bool,
    },
    /// Evaluate a scripted Heavier baseline.
    Oracle {
        #[arg(value_enum)]
        policy: OracleArg,
        #[arg(long)]
        randomized: bool,
    },
    /// Evaluate a Towers agent across control time steps; writes fig5.csv.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Mass-gap CDFs for several beta values; writes fig1_right.csv.
    Gapdist {
        #[arg(long, value_delimiter = ',', default_values_t = [3.0, 5.0, 10.0])]
        betas: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = base.resolve(cli.seed, cli.out.clone())?;
    if cli.threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    match cli.command {
        Command::Train => {
            let out = commands::train(&cfg, cli.threads)?;
            if let Some(last) = out.curve.last() {
                println!("episodes {} ema_success {:.4}", last.episode_index, last.ema_success);
            }
        }
        Command::Eval { checkpoint, randomized } => {
            cfg.eval.randomized |= randomized;
            let r = commands::eval(&cfg, &checkpoint)?;
            println!("episodes {} p_correct {:.4}", r.summary.n_episodes, r.summary.p_correct);
        }
        Command::Oracle { policy, randomized } => {
            cfg.eval.randomized |= randomized;
            let name = match policy {
                OracleArg::Scan => OracleName::Scan,
                OracleArg::Elimination => OracleName::Elimination,
            };
            let r = commands::oracle(&cfg, name)?;
            println!("episodes {} p_correct {:.4}", r.summary.n_episodes, r.summary.p_correct);
        }
        Command::Sweep { checkpoint } => {
            for row in commands::sweep(&cfg, &checkpoint)? {
                println!("dt {} p_correct {:.4} median_seconds {:.3}", row.dt, row.p_correct, row.median_sim_seconds);
            }
        }
        Command::Gapdist { betas, samples } => {
            commands::gapdist(&cfg, &betas, samples)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.json_line());
            ExitCode::FAILURE
        }
    }
}
