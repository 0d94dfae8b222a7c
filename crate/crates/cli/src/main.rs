use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use v6forge_cli::commands;
use v6forge_cli::config::PipelineConfig;
use v6forge_cli::CliError;

#[derive(Parser)]
#[command(name = "v6forge", version, about = "IPv6 target generation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file (flat key=value with include support).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's global rng_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Split seeds into addressing-scheme categories.
    Classify(RunArgs),
    /// Cluster per-prefix entropy fingerprints.
    Cluster(RunArgs),
    /// Train a generative model on a seed set.
    Train(RunArgs),
    /// Sample candidate addresses from a trained model.
    Generate(RunArgs),
    /// Score a candidate file against an activity oracle.
    Evaluate(RunArgs),
    /// End-to-end synthetic-universe benchmark.
    Bench(RunArgs),
}

fn run(command: &Command) -> Result<(), CliError> {
    let (args, f): (&RunArgs, fn(&PipelineConfig, &std::path::Path) -> Result<(), CliError>) =
        match command {
            Command::Classify(a) => (a, commands::cmd_classify),
            Command::Cluster(a) => (a, commands::cmd_cluster),
            Command::Train(a) => (a, commands::cmd_train),
            Command::Generate(a) => (a, commands::cmd_generate),
            Command::Evaluate(a) => (a, commands::cmd_evaluate),
            Command::Bench(a) => (a, commands::cmd_bench),
        };
    let mut cfg = PipelineConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    if let Some(workers) = cfg.workers {
        // a second init in the same process is fine: the first pool wins
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    f(&cfg, &args.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
