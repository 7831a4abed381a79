use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use sentimusic_core::annotation::{extract_phrases, ValenceSegment};
use sentimusic_core::midi::text::format_words;
use sentimusic_core::midi::{decode, write_midi, STEPS_PER_BAR};
use sentimusic_core::mlstm::SampleConfig;
use sentimusic_core::sentiment::encode_phrase;
use sentimusic_core::steering::{run_ga, steered_generate, write_ga_log_csv, GenesFile, ModelFitness, Steering, SteeringStrategy};
use sentimusic_core::trainer::{read_loss_csv, write_loss_csv};
use sentimusic_core::Word;
use serde::Serialize;

use crate::config::RunConfig;
use crate::io::{
    ensure_dir, list_files, load_classifier, load_model, read_bytes, read_text, read_token_file, required, to_json, write_file,
};
use crate::UsageError;

#[derive(Clone, Copy, ValueEnum)]
pub enum Sentiment {
    Pos,
    Neg,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Strategy {
    /// Add the genes to the support neurons' cell values after every update.
    CellState,
    /// Add the genes to the support neurons' candidate biases.
    CandidateBias,
}

#[derive(Args)]
pub struct SteerArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    clf: PathBuf,
    #[arg(long, value_enum)]
    sentiment: Sentiment,
    /// Genes JSON to write.
    #[arg(short, long)]
    out: PathBuf,
    /// Per-generation CSV log (defaults to the output path with a `.ga.csv` extension).
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    /// Pieces sampled per fitness evaluation.
    #[arg(long)]
    pieces: Option<usize>,
    /// Words per sampled piece.
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, value_enum)]
    strategy: Option<Strategy>,
}

pub fn steer(args: SteerArgs, mut cfg: RunConfig) -> Result<()> {
    let params = load_model(&args.ckpt)?;
    let clf = load_classifier(&args.clf)?;
    let ga = &mut cfg.ga;
    ga.target = match args.sentiment {
        Sentiment::Pos => 1,
        Sentiment::Neg => 0,
    };
    ga.population = args.population.unwrap_or(ga.population);
    ga.generations = args.generations.unwrap_or(ga.generations);
    ga.pieces = args.pieces.unwrap_or(ga.pieces);
    ga.piece_length = args.length.unwrap_or(ga.piece_length);
    ga.temperature = args.temperature.unwrap_or(ga.temperature);
    if let Some(s) = args.strategy {
        ga.strategy = match s {
            Strategy::CellState => SteeringStrategy::CellState,
            Strategy::CandidateBias => SteeringStrategy::CandidateBias,
        };
    }
    ga.validate().map_err(|e| UsageError(e.to_string()))?;
    let fitness = ModelFitness::new(&params, &clf, ga.clone())?;
    let outcome = run_ga(&fitness, fitness.support.len(), ga)?;
    let best = outcome.best.fitness.expect("best individual is evaluated");
    let genes =
        GenesFile { support: fitness.support.clone(), genes: outcome.best.genes, fitness: best, target: ga.target, strategy: ga.strategy };
    write_file(&args.out, &to_json(&genes)?)?;
    let mut csv = Vec::new();
    write_ga_log_csv(&outcome.log, &mut csv)?;
    write_file(&args.log.unwrap_or_else(|| args.out.with_extension("ga.csv")), &csv)?;
    eprintln!("best fitness {best:.4} over {} genes", genes.genes.len());
    Ok(())
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Genes JSON from `steer`; unsteered sampling when omitted.
    #[arg(long)]
    genes: Option<PathBuf>,
    /// Classifier used to score every piece.
    #[arg(long)]
    clf: Option<PathBuf>,
    /// Number of pieces.
    #[arg(long)]
    n: Option<usize>,
    /// Maximum words per piece.
    #[arg(long)]
    len: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Output directory (defaults to paths.outputs).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PieceRow {
    piece: String,
    words: usize,
    notes: usize,
    steps: u32,
    probability: Option<f64>,
}

pub fn generate(args: GenerateArgs, cfg: &RunConfig) -> Result<()> {
    let out = required(args.out, &cfg.paths.outputs, "output directory (-o or paths.outputs)")?;
    let params = load_model(&args.ckpt)?;
    let clf = args.clf.as_deref().map(load_classifier).transpose()?;
    let steering = match &args.genes {
        Some(path) => {
            let g: GenesFile = serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
            if g.support.iter().any(|&j| j >= params.dims.hidden) {
                bail!("genes refer to neurons beyond the model's {} cells", params.dims.hidden);
            }
            Some(Steering::new(g.support, g.genes, g.strategy)?)
        }
        None => None,
    };
    let count = args.n.unwrap_or(cfg.generate.count);
    let sample = SampleConfig {
        length: args.len.unwrap_or(cfg.generate.length),
        temperature: args.temperature.unwrap_or(cfg.generate.temperature),
        seed: cfg.seed,
    };
    if count == 0 || sample.length == 0 || sample.temperature.is_nan() || sample.temperature < 0.0 {
        return Err(UsageError("--n and --len must be positive and --temperature non-negative".into()).into());
    }
    let pieces = steered_generate(&params, steering.as_ref(), clf.as_ref(), count, &sample);
    ensure_dir(&out)?;
    let mut table = csv::Writer::from_writer(Vec::new());
    for (i, p) in pieces.iter().enumerate() {
        let name = format!("piece_{i:03}");
        let mut text = format_words(&p.words);
        if !text.ends_with('\n') {
            text.push('\n');
        }
        write_file(&out.join(format!("{name}.txt")), text.as_bytes())?;
        write_file(&out.join(format!("{name}.mid")), &write_midi(&p.midi))?;
        table.serialize(PieceRow {
            piece: name,
            words: p.words.len(),
            notes: p.midi.notes.len(),
            steps: p.midi.end_step,
            probability: p.probability,
        })?;
    }
    write_file(&out.join("pieces.csv"), &table.into_inner()?)?;
    if clf.is_some() {
        let mean = pieces.iter().filter_map(|p| p.probability).sum::<f64>() / pieces.len() as f64;
        println!("mean_probability\t{mean:.6}");
    }
    Ok(())
}

#[derive(Args)]
pub struct ExportArgs {
    /// Output directory for the CSV bundle.
    #[arg(short, long)]
    out: PathBuf,
    /// Classifier JSON: writes `weights.csv`.
    #[arg(long)]
    clf: Option<PathBuf>,
    /// Directory of generated `piece_NNN.txt` files: writes `measures.csv` (needs --clf and --ckpt).
    #[arg(long)]
    generated: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Training loss log: rewritten as `loss.csv`.
    #[arg(long)]
    loss: Option<PathBuf>,
}

#[derive(Serialize)]
struct MeasureRow {
    piece: String,
    measure: u32,
    probability: f64,
}

pub fn export_plots(args: ExportArgs) -> Result<()> {
    if args.clf.is_none() && args.generated.is_none() && args.loss.is_none() {
        return Err(UsageError("nothing to export: pass --clf, --generated or --loss".into()).into());
    }
    for path in [&args.clf, &args.generated, &args.ckpt, &args.loss].into_iter().flatten() {
        if !path.exists() {
            bail!("missing artifact {}", path.display());
        }
    }
    ensure_dir(&args.out)?;
    let clf = args.clf.as_deref().map(load_classifier).transpose()?;
    if let Some(clf) = &clf {
        let mut csv = Vec::new();
        clf.write_support_csv(&mut csv)?;
        write_file(&args.out.join("weights.csv"), &csv)?;
    }
    if let Some(dir) = &args.generated {
        let (Some(clf), Some(ckpt)) = (&clf, &args.ckpt) else {
            return Err(UsageError("--generated needs --clf and --ckpt".into()).into());
        };
        let params = load_model(ckpt)?;
        let mut table = csv::Writer::from_writer(Vec::new());
        let files = list_files(dir, &["txt"])?;
        if files.is_empty() {
            bail!("missing artifact: no generated token files in {}", dir.display());
        }
        for path in files {
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            for words in read_token_file(&path)? {
                let piece = decode(&words);
                let bars: Vec<ValenceSegment> = (0..piece.end_step.div_ceil(STEPS_PER_BAR))
                    .map(|m| ValenceSegment {
                        start: m * STEPS_PER_BAR,
                        end: ((m + 1) * STEPS_PER_BAR).min(piece.end_step),
                        sentiment: 0,
                        mean_valence: 0.0,
                    })
                    .collect();
                for (m, phrase) in extract_phrases(&words, &bars, &name).iter().enumerate() {
                    let ids: Vec<usize> = phrase.tokens.iter().filter(|&&w| w != Word::PieceEnd).map(|w| w.id()).collect();
                    let probability = clf.predict(encode_phrase(&params, &ids).view());
                    table.serialize(MeasureRow { piece: name.clone(), measure: m as u32, probability })?;
                }
            }
        }
        write_file(&args.out.join("measures.csv"), &table.into_inner()?)?;
    }
    if let Some(path) = &args.loss {
        let records = read_loss_csv(read_bytes(path)?.as_slice())?;
        let mut csv = Vec::new();
        write_loss_csv(&records, &mut csv)?;
        write_file(&args.out.join("loss.csv"), &csv)?;
    }
    Ok(())
}
