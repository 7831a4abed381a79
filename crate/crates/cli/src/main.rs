mod cmd;
mod config;
mod io;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

/// Exit statuses.
const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

/// Thread-count override for the worker pool.
const THREADS_ENV: &str = "SENTIMUSIC_THREADS";

/// A bad invocation detected after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "sentimusic", version, about = "Sentiment-aware symbolic music modelling toolkit")]
struct Cli {
    /// JSON run configuration; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic step (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log more (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the vocabulary, one word per line (the end-of-piece word as `\n`).
    Vocab,
    /// Encode MIDI files into a token file, one piece per line.
    Encode(cmd::corpus::EncodeArgs),
    /// Decode a token file into MIDI files.
    Decode(cmd::corpus::DecodeArgs),
    /// Transpose and time-stretch every piece of a token file.
    Augment(cmd::corpus::AugmentArgs),
    /// Split a token corpus into byte-balanced training shards and a test shard.
    Shard(cmd::corpus::ShardArgs),
    /// Train the language model on a shard directory.
    TrainLm(cmd::lm::TrainArgs),
    /// Average next-word cross-entropy of a checkpoint on a token file.
    EvalLm(cmd::lm::EvalArgs),
    /// Annotation processing.
    #[command(subcommand)]
    Annotations(AnnotationsCommand),
    /// Cell-state features of labelled phrases.
    EncodePhrases(cmd::sentiment::EncodePhrasesArgs),
    /// Fit the sparse logistic-regression sentiment probe.
    TrainClf(cmd::sentiment::TrainClfArgs),
    /// Cross-validated accuracy of the probe or the supervised baseline.
    Xval(cmd::sentiment::XvalArgs),
    /// Positive-sentiment probability of each piece in a token file.
    Classify(cmd::sentiment::ClassifyArgs),
    /// Search neuron offsets that steer generation toward a sentiment.
    Steer(cmd::generate::SteerArgs),
    /// Sample pieces, optionally steered, as token and MIDI files.
    Generate(cmd::generate::GenerateArgs),
    /// Write CSV data for weight, per-measure probability and loss plots.
    ExportPlots(cmd::generate::ExportArgs),
}

#[derive(Subcommand)]
enum AnnotationsCommand {
    /// Turn valence annotations into labelled phrases.
    Process(cmd::sentiment::AnnotationsArgs),
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    let cfg = RunConfig::load(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Vocab => cmd::corpus::vocab(),
        Command::Encode(a) => cmd::corpus::encode(a, &cfg),
        Command::Decode(a) => cmd::corpus::decode(a),
        Command::Augment(a) => cmd::corpus::augment(a, &cfg),
        Command::Shard(a) => cmd::corpus::shard(a, &cfg),
        Command::TrainLm(a) => cmd::lm::train(a, cfg),
        Command::EvalLm(a) => cmd::lm::eval(a, &cfg),
        Command::Annotations(AnnotationsCommand::Process(a)) => cmd::sentiment::annotations(a, &cfg),
        Command::EncodePhrases(a) => cmd::sentiment::encode_phrases_cmd(a),
        Command::TrainClf(a) => cmd::sentiment::train_clf(a, &cfg),
        Command::Xval(a) => cmd::sentiment::xval(a, &cfg),
        Command::Classify(a) => cmd::sentiment::classify(a),
        Command::Steer(a) => cmd::generate::steer(a, cfg),
        Command::Generate(a) => cmd::generate::generate(a, &cfg),
        Command::ExportPlots(a) => cmd::generate::export_plots(a),
    }
}

/// Maps an error to its exit status: usage 1, numeric failure 3, anything
/// else (bad or missing data) 2.
fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<sentimusic_core::Error>() {
            return if e.is_numeric() { EXIT_NUMERIC } else { EXIT_DATA };
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
