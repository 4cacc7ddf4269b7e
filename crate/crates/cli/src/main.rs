//! `ihanas` command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 runtime or backend error.

mod artifacts;
mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn input(e: impl Into<anyhow::Error>) -> Self {
        Self::Input(e.into())
    }

    pub fn runtime(e: impl Into<anyhow::Error>) -> Self {
        Self::Runtime(e.into())
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

#[derive(Parser, Debug)]
#[command(
    name = "ihanas",
    version,
    about = "Hardware-aware architecture search over per-layer attention shapes"
)]
struct Cli {
    /// More progress output on stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an NSGA-II search from a TOML config.
    Search(SearchArgs),
    /// Sweep the ring chip grid for one genome.
    Pack(PackArgs),
    /// Train, evaluate or sample the encoder surrogate.
    #[command(subcommand)]
    Surrogate(SurrogateCmd),
    /// Count attention configurations in the search space.
    Count(CountArgs),
    /// Run the attention reference-kernel property suite.
    CheckIha(CheckIhaArgs),
    /// Write a synthetic labeled corpus (JSONL).
    Corpus(CorpusArgs),
}

#[derive(Args, Debug)]
pub struct OutArgs {
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite an existing run in `--out`.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `analytic:NAME` or `ring`; overrides the config.
    #[arg(long)]
    pub backend: Option<String>,
    /// `surrogate` or `oracle`; overrides the config.
    #[arg(long)]
    pub evaluator: Option<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct PackArgs {
    /// Genome JSON document.
    #[arg(long)]
    pub genome: PathBuf,
    /// Ring config TOML (grid and chip constants); built-in grid if omitted.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    pub prefill: u64,
    #[arg(long, default_value_t = 256)]
    pub decode: u64,
    /// Where to write the plan CSVs; nothing is written if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Subcommand, Debug)]
pub enum SurrogateCmd {
    /// Train an encoder surrogate on a labeled corpus.
    Train(TrainArgs),
    /// Ranking metrics on the held-out split.
    Eval(EvalArgs),
    /// MC-dropout mean and spread for a list of genomes.
    Mc(McArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Train the flat MLP baseline as well and report both.
    #[arg(long)]
    pub with_mlp: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split seed; defaults to the one stored in the checkpoint.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Args, Debug)]
pub struct McArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// JSONL: one genome or corpus record per line.
    #[arg(long)]
    pub genomes: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub n_mc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct CountArgs {
    #[arg(long, default_value_t = 768)]
    pub d_model: u32,
    #[arg(long, default_value_t = 16)]
    pub n_h_max: u32,
    #[arg(long, default_value_t = 16)]
    pub n_kv_max: u32,
    #[arg(long, default_value_t = 64)]
    pub d_min: u32,
    #[arg(long, default_value_t = 512)]
    pub d_max: u32,
    #[arg(long, default_value_t = 32)]
    pub d_step: u32,
}

#[derive(Args, Debug)]
pub struct CheckIhaArgs {
    #[arg(long, default_value_t = 100)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct CorpusArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.02)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 40)]
    pub max_layers: u32,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = cli.verbose;
    let result = match cli.command {
        Command::Search(a) => commands::search(a, verbose),
        Command::Pack(a) => commands::pack(a),
        Command::Surrogate(SurrogateCmd::Train(a)) => commands::surrogate_train(a, verbose),
        Command::Surrogate(SurrogateCmd::Eval(a)) => commands::surrogate_eval(a),
        Command::Surrogate(SurrogateCmd::Mc(a)) => commands::surrogate_mc(a),
        Command::Count(a) => commands::count(a),
        Command::CheckIha(a) => commands::check_iha(a),
        Command::Corpus(a) => commands::corpus(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
