use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sentimusic_core::annotation::{process_all, read_annotations_csv};
use sentimusic_core::midi::parse_midi;
use sentimusic_core::sentiment::{
    crossval, crossval_logreg, encode_phrase, encode_phrases, fit_l1_logreg, fit_supervised, predict_supervised, read_features_csv,
    read_phrases_tsv, select_lambda, write_features_csv, write_phrases_tsv, CrossvalReport, LabeledPhrase,
};
use sentimusic_core::Word;

use crate::config::RunConfig;
use crate::io::{list_files, load_classifier, load_model, read_bytes, read_token_file, to_json, write_file, write_output};
use crate::UsageError;

#[derive(Args)]
pub struct AnnotationsArgs {
    /// Annotation CSV (`piece_id,annotator_id,time_s,valence,arousal`).
    #[arg(long)]
    csv: PathBuf,
    /// Directory of MIDI files named `<piece_id>.mid`.
    #[arg(long)]
    midi: PathBuf,
    /// Labelled-phrase TSV to write.
    #[arg(short, long)]
    out: PathBuf,
    /// Diagnostics JSON (defaults to the output path with a `.diagnostics.json` extension).
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    /// Keep raw sign-change boundaries instead of snapping them to bar lines.
    #[arg(long)]
    no_snap: bool,
    /// Split phrases longer than this many bars (0 disables splitting).
    #[arg(long)]
    max_bars: Option<u32>,
}

pub fn annotations(args: AnnotationsArgs, cfg: &RunConfig) -> Result<()> {
    let mut pipeline = cfg.pipeline;
    if args.no_snap {
        pipeline.segment.snap_to_bars = false;
    }
    if let Some(b) = args.max_bars {
        pipeline.segment.max_bars = (b > 0).then_some(b);
    }
    let series = read_annotations_csv(read_bytes(&args.csv)?.as_slice()).with_context(|| format!("reading {}", args.csv.display()))?;
    let wanted: std::collections::BTreeSet<&str> = series.iter().map(|s| s.piece_id.as_str()).collect();
    let mut pieces = BTreeMap::new();
    for path in list_files(&args.midi, &["mid", "midi"])? {
        let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if wanted.contains(id) {
            let piece = parse_midi(&read_bytes(&path)?).with_context(|| format!("parsing {}", path.display()))?;
            pieces.insert(id.to_string(), piece);
        }
    }
    let results = process_all(&series, &pieces, &cfg.quantizer, &pipeline)?;
    let phrases: Vec<LabeledPhrase> = results.iter().flat_map(|r| r.phrases.iter().cloned()).collect();
    let mut tsv = Vec::new();
    write_phrases_tsv(&phrases, &mut tsv)?;
    write_file(&args.out, &tsv)?;
    let diagnostics: Vec<_> = results.iter().map(|r| &r.diagnostics).collect();
    let diag_path = args.diagnostics.unwrap_or_else(|| args.out.with_extension("diagnostics.json"));
    write_file(&diag_path, &to_json(&diagnostics)?)?;
    let positive = phrases.iter().filter(|p| p.label == 1).count();
    eprintln!("{} pieces: {} phrases ({positive} positive, {} negative)", results.len(), phrases.len(), phrases.len() - positive);
    Ok(())
}

#[derive(Args)]
pub struct EncodePhrasesArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Labelled-phrase TSV.
    #[arg(long)]
    phrases: PathBuf,
    /// Feature CSV to write (`label,c0,c1,...`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

pub fn encode_phrases_cmd(args: EncodePhrasesArgs) -> Result<()> {
    let params = load_model(&args.ckpt)?;
    let phrases = read_phrases_tsv(read_bytes(&args.phrases)?.as_slice())?;
    let ids: Vec<Vec<usize>> = phrases.iter().map(LabeledPhrase::ids).collect();
    let labels: Vec<u8> = phrases.iter().map(|p| p.label).collect();
    let x = encode_phrases(&params, &ids);
    let mut csv = Vec::new();
    write_features_csv(&x, &labels, &mut csv)?;
    write_output(args.out.as_deref(), &csv)
}

#[derive(Args)]
pub struct TrainClfArgs {
    /// Feature CSV from `encode-phrases`.
    #[arg(long)]
    features: PathBuf,
    /// Classifier JSON to write.
    #[arg(short, long)]
    out: PathBuf,
    /// Fixed regularization strength; chosen by inner cross-validation when omitted.
    #[arg(long)]
    lambda: Option<f64>,
    /// Also write the support as `index,weight` CSV.
    #[arg(long)]
    support_csv: Option<PathBuf>,
}

pub fn train_clf(args: TrainClfArgs, cfg: &RunConfig) -> Result<()> {
    let (x, labels) = read_features_csv(read_bytes(&args.features)?.as_slice())?;
    let c = &cfg.classifier;
    let opts = c.fit_options();
    let lambda = match args.lambda {
        Some(l) if l >= 0.0 && l.is_finite() => l,
        Some(_) => return Err(UsageError("--lambda must be non-negative".into()).into()),
        None => select_lambda(x.view(), &labels, &c.lambda_grid, c.inner_folds, cfg.seed, &opts)?,
    };
    let clf = fit_l1_logreg(x.view(), &labels, lambda, &opts)?;
    if !clf.converged {
        log::warn!("classifier stopped after {} iterations without converging", clf.iterations);
    }
    write_file(&args.out, format!("{}\n", clf.to_json()?).as_bytes())?;
    if let Some(path) = args.support_csv {
        let mut csv = Vec::new();
        clf.write_support_csv(&mut csv)?;
        write_file(&path, &csv)?;
    }
    let train_acc = sentimusic_core::sentiment::logreg::accuracy(&clf, x.view(), &labels);
    eprintln!("lambda {lambda:e}: support {} of {}, training accuracy {train_acc:.4}", clf.support().len(), x.ncols());
    Ok(())
}

#[derive(Args)]
pub struct XvalArgs {
    /// Feature CSV; needed for the probe.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Phrase TSV aligned with the features; token-identical phrases are
    /// then kept on one side of every split. Required with --supervised.
    #[arg(long)]
    phrases: Option<PathBuf>,
    /// Cross-validate the fully supervised mLSTM instead of the probe.
    #[arg(long)]
    supervised: bool,
    #[arg(long)]
    folds: Option<usize>,
    /// Permute the labels first (chance-level control).
    #[arg(long)]
    shuffle_labels: bool,
    /// JSON report to write.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

pub fn xval(args: XvalArgs, cfg: &RunConfig) -> Result<()> {
    let c = &cfg.classifier;
    let k = args.folds.unwrap_or(c.folds);
    if k < 2 {
        return Err(UsageError("--folds must be at least 2".into()).into());
    }
    let phrases = match &args.phrases {
        Some(p) => Some(read_phrases_tsv(read_bytes(p)?.as_slice())?),
        None => None,
    };
    let shuffle = |labels: &mut Vec<u8>| {
        if args.shuffle_labels {
            labels.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37));
        }
    };
    let report: CrossvalReport = if args.supervised {
        let phrases = phrases.ok_or_else(|| UsageError("--supervised needs --phrases".into()))?;
        let ids: Vec<Vec<usize>> = phrases.iter().map(LabeledPhrase::ids).collect();
        let mut labels: Vec<u8> = phrases.iter().map(|p| p.label).collect();
        shuffle(&mut labels);
        crossval(&ids, &labels, k, cfg.seed, |train, test| {
            let tp: Vec<Vec<usize>> = train.iter().map(|&i| ids[i].clone()).collect();
            let tl: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
            let (model, _) = fit_supervised(&tp, &tl, &cfg.train)?;
            let correct = test.iter().filter(|&&i| (predict_supervised(&model, &ids[i]) > 0.5) == (labels[i] == 1)).count();
            Ok((correct as f64 / test.len() as f64, None))
        })?
    } else {
        let path = args.features.ok_or_else(|| UsageError("the probe needs --features".into()))?;
        let (x, mut labels) = read_features_csv(read_bytes(&path)?.as_slice())?;
        shuffle(&mut labels);
        let keys: Vec<String> = match &phrases {
            Some(p) if p.len() != labels.len() => {
                bail!("{} phrases for {} feature rows", p.len(), labels.len())
            }
            Some(p) => p.iter().map(|p| p.tokens.iter().map(Word::to_string).collect::<Vec<_>>().join(" ")).collect(),
            None => (0..labels.len()).map(|i| i.to_string()).collect(),
        };
        crossval_logreg(x.view(), &keys, &labels, &c.lambda_grid, k, c.inner_folds, cfg.seed, &c.fit_options())?
    };
    println!("accuracy {:.4} ± {:.4} over {k} folds", report.mean, report.std);
    if let Some(out) = args.out {
        write_file(&out, &to_json(&report)?)?;
    }
    Ok(())
}

#[derive(Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    clf: PathBuf,
    /// Token file, one piece per line (`-` for standard input).
    input: PathBuf,
}

pub fn classify(args: ClassifyArgs) -> Result<()> {
    let params = load_model(&args.ckpt)?;
    let clf = load_classifier(&args.clf)?;
    if clf.weights.len() != params.dims.hidden {
        bail!("classifier has {} weights but the model {} cells", clf.weights.len(), params.dims.hidden);
    }
    let pieces = read_token_file(&args.input)?;
    let mut out = String::new();
    for words in pieces {
        let ids: Vec<usize> = words.iter().filter(|&&w| w != Word::PieceEnd).map(|w| w.id()).collect();
        let x = encode_phrase(&params, &ids);
        out.push_str(&format!("{:.6}\n", clf.predict(x.view())));
    }
    write_output(None, out.as_bytes())
}
