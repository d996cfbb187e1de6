mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use twohop::evaluation::TestMode;
use twohop::training::Phase;

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "twohop", version, about = "Relation extraction with table-expanded 2-hop sentence bags")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum 2-hop bag size.
    #[arg(long, global = true)]
    cap: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Pretrain,
    Finetune,
}

impl From<PhaseArg> for Phase {
    fn from(p: PhaseArg) -> Self {
        match p {
            PhaseArg::Pretrain => Phase::Pretrain,
            PhaseArg::Finetune => Phase::Finetune,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Overall,
    Single,
    One,
    Two,
    All,
    EmptyOnehop,
}

impl ModeArg {
    fn to_mode(self, seed: u64) -> TestMode {
        match self {
            ModeArg::Overall => TestMode::Overall,
            ModeArg::Single => TestMode::Single,
            ModeArg::One => TestMode::One { seed },
            ModeArg::Two => TestMode::Two { seed },
            ModeArg::All => TestMode::All,
            ModeArg::EmptyOnehop => TestMode::EmptyOnehop,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the anchor-pair index from the tables.
    BuildIndex,
    /// Report 1-hop and 2-hop bag sizes per pair and overall.
    Expand,
    /// Train one phase, or both when no phase is given.
    Train {
        #[arg(long, value_enum)]
        phase: Option<PhaseArg>,
    },
    /// Evaluate a checkpoint on the test pairs.
    Eval {
        #[arg(long, value_enum, default_value = "overall")]
        mode: ModeArg,
        /// Checkpoint to evaluate.
        #[arg(long, value_enum, default_value = "finetune")]
        phase: PhaseArg,
    },
    /// Score arbitrary entity pairs.
    Predict {
        /// JSONL of `{"head", "tail"}`; overrides the config.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "finetune")]
        phase: PhaseArg,
    },
    /// Generate a synthetic corpus with tables.
    Synth,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        cap: cli.cap,
        out: cli.out.clone(),
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::BuildIndex => commands::build_index(&cfg),
        Command::Expand => commands::expand(&cfg),
        Command::Train { phase } => match phase {
            Some(p) => commands::train(&cfg, p.into()),
            None => {
                commands::train(&cfg, Phase::Pretrain)?;
                commands::train(&cfg, Phase::Finetune)
            }
        },
        Command::Eval { mode, phase } => commands::eval(&cfg, mode.to_mode(cfg.seed), phase.into()),
        Command::Predict { pairs, phase } => commands::predict(&cfg, pairs, phase.into()),
        // `--out` names the data directory for generated files.
        Command::Synth => commands::synth(&cfg, cli.out.as_deref()),
    }
}

fn main() -> ExitCode {
    // Clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
