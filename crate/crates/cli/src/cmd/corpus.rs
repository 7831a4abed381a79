use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use sentimusic_core::midi::text::{format_pieces, format_words};
use sentimusic_core::midi::{
    augment as augment_piece, augment_grid, decode as decode_words, encode as encode_piece, parse_midi_report, write_midi,
};
use sentimusic_core::trainer::make_shards;
use sentimusic_core::{Vocab, Word};
use serde::Serialize;

use crate::config::RunConfig;
use crate::io::{ensure_dir, list_files, read_bytes, read_token_file, required, to_json, write_file, write_output};
use crate::UsageError;

pub fn vocab() -> Result<()> {
    let mut out = String::new();
    for w in Vocab::build().words() {
        out.push_str(if w == "\n" { "\\n" } else { w });
        out.push('\n');
    }
    write_output(None, out.as_bytes())
}

#[derive(Args)]
pub struct EncodeArgs {
    /// MIDI files (`-` for standard input); defaults to every MIDI file of the configured corpus directory.
    inputs: Vec<PathBuf>,
    /// Token file to write (standard output when omitted).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

pub fn encode(args: EncodeArgs, cfg: &RunConfig) -> Result<()> {
    let inputs = if args.inputs.is_empty() {
        let dir = required(None, &cfg.paths.corpus, "MIDI inputs (pass files or set paths.corpus)")?;
        list_files(&dir, &["mid", "midi"])?
    } else {
        args.inputs
    };
    let mut pieces = Vec::with_capacity(inputs.len());
    for path in &inputs {
        let report = parse_midi_report(&read_bytes(path)?).with_context(|| format!("parsing {}", path.display()))?;
        for w in &report.warnings {
            log::warn!("{}: {w}", path.display());
        }
        pieces.push(encode_piece(&report.piece, &cfg.quantizer));
    }
    write_output(args.out.as_deref(), format_pieces(pieces.iter().map(Vec::as_slice)).as_bytes())
}

#[derive(Args)]
pub struct DecodeArgs {
    /// Token file (`-` for standard input).
    input: PathBuf,
    /// Directory for `piece_NNNN.mid` files. Without it a single piece is
    /// written to standard output.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

pub fn decode(args: DecodeArgs) -> Result<()> {
    let pieces = read_token_file(&args.input)?;
    match args.out {
        Some(dir) => {
            ensure_dir(&dir)?;
            for (i, words) in pieces.iter().enumerate() {
                write_file(&dir.join(format!("piece_{i:04}.mid")), &write_midi(&decode_words(words)))?;
            }
            Ok(())
        }
        None if pieces.len() == 1 => write_output(None, &write_midi(&decode_words(&pieces[0]))),
        None => Err(UsageError(format!("{} pieces need an output directory (-o)", pieces.len())).into()),
    }
}

#[derive(Args)]
pub struct AugmentArgs {
    /// Token file (`-` for standard input).
    input: PathBuf,
    /// Emit all 45 stretch and transposition variants of every piece.
    #[arg(long, conflicts_with_all = ["stretch", "transpose"])]
    grid: bool,
    /// Tempo multiplier.
    #[arg(long)]
    stretch: Option<f64>,
    /// Semitone shift.
    #[arg(long, allow_hyphen_values = true)]
    transpose: Option<i32>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

pub fn augment(args: AugmentArgs, cfg: &RunConfig) -> Result<()> {
    if !args.grid && args.stretch.is_none() && args.transpose.is_none() {
        return Err(UsageError("pass --grid or at least one of --stretch / --transpose".into()).into());
    }
    let stretch = args.stretch.unwrap_or(1.0);
    if !(stretch.is_finite() && stretch > 0.0) {
        return Err(UsageError("--stretch must be positive".into()).into());
    }
    let mut out = Vec::new();
    let mut dropped = 0;
    for words in read_token_file(&args.input)? {
        let piece = decode_words(&words);
        let variants = if args.grid { augment_grid(&piece) } else { vec![augment_piece(&piece, stretch, args.transpose.unwrap_or(0))] };
        for v in variants {
            dropped += v.dropped;
            out.push(encode_piece(&v.piece, &cfg.quantizer));
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} notes left the pitch range and were dropped");
    }
    write_output(args.out.as_deref(), format_pieces(out.iter().map(Vec::as_slice)).as_bytes())
}

#[derive(Args)]
pub struct ShardArgs {
    /// Token files making up the corpus.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory (defaults to paths.shards).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Fraction of pieces used for training.
    #[arg(long)]
    ratio: Option<f64>,
    /// Number of training shards.
    #[arg(long)]
    train_shards: Option<usize>,
}

#[derive(Serialize)]
struct ShardManifest {
    seed: u64,
    train_ratio: f64,
    sources: Vec<PathBuf>,
    train: Vec<Vec<usize>>,
    test: Vec<usize>,
    train_bytes: Vec<usize>,
    test_bytes: usize,
}

pub fn shard(args: ShardArgs, cfg: &RunConfig) -> Result<()> {
    let out = required(args.out, &cfg.paths.shards, "output directory (-o or paths.shards)")?;
    let ratio = args.ratio.unwrap_or(cfg.shards.train_ratio);
    let k = args.train_shards.unwrap_or(cfg.shards.train_shards);
    if !(ratio > 0.0 && ratio < 1.0) || k == 0 {
        return Err(UsageError("--ratio must lie in (0, 1) and --train-shards be positive".into()).into());
    }
    let mut lines: Vec<String> = Vec::new();
    for path in &args.inputs {
        lines.extend(read_token_file(path)?.iter().map(|p| format_words(p)));
    }
    let sizes: Vec<usize> = lines.iter().map(String::len).collect();
    let set = make_shards(&sizes, ratio, k, cfg.seed)?;
    ensure_dir(&out)?;
    let join = |members: &[usize]| members.iter().map(|&i| lines[i].as_str()).collect::<String>();
    for (j, members) in set.train.iter().enumerate() {
        write_file(&out.join(format!("train_{j}.txt")), join(members).as_bytes())?;
    }
    write_file(&out.join("test.txt"), join(&set.test).as_bytes())?;
    let manifest = ShardManifest {
        seed: cfg.seed,
        train_ratio: ratio,
        sources: args.inputs,
        train_bytes: set.train_sizes(&sizes),
        test_bytes: set.test.iter().map(|&i| sizes[i]).sum(),
        train: set.train,
        test: set.test,
    };
    write_file(&out.join("manifest.json"), &to_json(&manifest)?)?;
    eprintln!("{} pieces: {} training shards of {:?} bytes, {} test pieces", lines.len(), k, manifest.train_bytes, manifest.test.len());
    Ok(())
}

/// Training shard files of a shard directory, in shard order.
pub fn train_shard_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(usize, PathBuf)> = list_files(dir, &["txt"])?
        .into_iter()
        .filter_map(|p| {
            let stem = p.file_stem()?.to_str()?;
            let j = stem.strip_prefix("train_")?.parse().ok()?;
            Some((j, p))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no train_N.txt shards in {}", dir.display());
    }
    Ok(files.into_iter().map(|(_, p)| p).collect())
}

/// Token ids of a token file, all pieces concatenated.
pub fn token_stream(path: &Path) -> Result<Vec<usize>> {
    Ok(read_token_file(path)?.iter().flatten().map(|w: &Word| w.id()).collect())
}
