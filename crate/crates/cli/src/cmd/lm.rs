use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use sentimusic_core::mlstm::save_checkpoint;
use sentimusic_core::trainer::{evaluate, train as train_model, write_loss_csv, LrSchedule};
use sentimusic_core::{MlstmParams, Vocab};
use serde::Serialize;

use super::corpus::{token_stream, train_shard_files};
use crate::config::RunConfig;
use crate::io::{ensure_dir, load_model, required, to_json, write_file};
use crate::UsageError;

#[derive(Clone, Copy, ValueEnum)]
pub enum Schedule {
    Linear,
    Constant,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Shard directory written by `shard` (defaults to paths.shards).
    #[arg(long)]
    shards: Option<PathBuf>,
    /// Checkpoint directory (defaults to paths.checkpoints).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    embed: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    schedule: Option<Schedule>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Serialize)]
struct EvalReport {
    test_loss: f64,
    test_tokens: usize,
}

pub fn train(args: TrainArgs, mut cfg: RunConfig) -> Result<()> {
    let shard_dir = required(args.shards, &cfg.paths.shards, "shard directory (--shards or paths.shards)")?;
    let out = required(args.out, &cfg.paths.checkpoints, "checkpoint directory (-o or paths.checkpoints)")?;
    let t = &mut cfg.train;
    t.epochs = args.epochs.unwrap_or(t.epochs);
    t.hidden = args.hidden.unwrap_or(t.hidden);
    t.embed = args.embed.unwrap_or(t.embed);
    t.lr0 = args.lr.unwrap_or(t.lr0);
    t.seq_len = args.seq_len.unwrap_or(t.seq_len);
    t.batch = args.batch.unwrap_or(t.batch);
    if let Some(s) = args.schedule {
        t.schedule = match s {
            Schedule::Linear => LrSchedule::Linear,
            Schedule::Constant => LrSchedule::Constant,
        };
    }
    let mut params = match &args.init {
        Some(path) => {
            let p = load_model(path)?;
            if p.dims.outputs != p.dims.vocab {
                return Err(UsageError(format!("{} is not a language-model checkpoint", path.display())).into());
            }
            t.embed = p.dims.embed;
            t.hidden = p.dims.hidden;
            p
        }
        None => MlstmParams::<f32>::init(t.dims(), t.seed),
    };
    t.validate()?;
    let shards: Vec<Vec<usize>> = train_shard_files(&shard_dir)?.iter().map(|p| token_stream(p)).collect::<Result<_>>()?;
    ensure_dir(&out)?;
    let hash = Vocab::build().hash();
    let hyper = serde_json::to_value(&cfg.train)?;
    let log = train_model(&mut params, &cfg.train, &shards, |epoch, p| {
        let path = out.join(format!("epoch_{}.ckpt", epoch + 1));
        std::fs::write(&path, save_checkpoint(p, &hash, &hyper))?;
        log::info!("wrote {}", path.display());
        Ok(())
    })?;
    write_file(&out.join("model.ckpt"), &save_checkpoint(&params, &hash, &hyper))?;
    let mut csv = Vec::new();
    write_loss_csv(&log, &mut csv)?;
    write_file(&out.join("loss.csv"), &csv)?;

    let test = shard_dir.join("test.txt");
    if test.exists() {
        let stream = token_stream(&test)?;
        let test_loss = evaluate(&params, &stream, cfg.train.batch, cfg.train.seq_len)?;
        write_file(&out.join("eval.json"), &to_json(&EvalReport { test_loss, test_tokens: stream.len() })?)?;
        println!("test_loss\t{test_loss:.6}");
    }
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Token file to evaluate on.
    #[arg(long)]
    shard: PathBuf,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
}

pub fn eval(args: EvalArgs, cfg: &RunConfig) -> Result<()> {
    let params = load_model(&args.ckpt)?;
    let stream = token_stream(&args.shard)?;
    let batch = args.batch.unwrap_or(cfg.train.batch);
    let seq_len = args.seq_len.unwrap_or(cfg.train.seq_len);
    if batch == 0 || seq_len == 0 {
        return Err(UsageError("--batch and --seq-len must be positive".into()).into());
    }
    println!("{:.6}", evaluate(&params, &stream, batch, seq_len)?);
    Ok(())
}
