//! From crowd valence annotations to labelled phrases: resample, smooth,
//! cluster under DTW, reject the noisiest cluster, average the largest
//! remaining one, cut at sign changes and slice the token stream.

pub mod pam;
pub mod segment;
pub mod series;
pub mod summarize;

use std::collections::BTreeMap;
use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::midi::{encode, MidiPiece, QuantizerConfig};
use crate::sentiment::LabeledPhrase;

pub use pam::{pam, Clustering};
pub use segment::{extract_phrases, segment, SegmentConfig, ValenceSegment};
pub use series::{dtw, dtw_matrix, grid_times, resample, smooth};
pub use summarize::{cluster_variance, summarize, Summary};

/// One annotator's valence trace for one piece.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSeries {
    pub piece_id: String,
    pub annotator_id: String,
    /// `(seconds, valence)` with strictly increasing times.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
struct AnnotationRow {
    piece_id: String,
    annotator_id: String,
    time_s: f64,
    valence: f64,
    #[allow(dead_code)]
    arousal: Option<f64>,
}

/// Reads `piece_id,annotator_id,time_s,valence,arousal` rows. Rows may come
/// in any order; they are grouped per (piece, annotator) and sorted by time.
pub fn read_annotations_csv(input: impl Read) -> Result<Vec<AnnotationSeries>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut groups: BTreeMap<(String, String), Vec<(f64, f64)>> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: AnnotationRow = row?;
        if !(-1.0..=1.0).contains(&row.valence) {
            return Err(Error::invalid(format!("valence {} outside [-1, 1] ({} / {})", row.valence, row.piece_id, row.annotator_id)));
        }
        if !row.time_s.is_finite() || row.time_s < 0.0 {
            return Err(Error::invalid(format!("bad time {} ({} / {})", row.time_s, row.piece_id, row.annotator_id)));
        }
        groups.entry((row.piece_id, row.annotator_id)).or_default().push((row.time_s, row.valence));
    }
    groups
        .into_iter()
        .map(|((piece_id, annotator_id), mut samples)| {
            samples.sort_by(|a, b| a.0.total_cmp(&b.0));
            if samples.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::invalid(format!("{piece_id} / {annotator_id}: repeated sample time")));
            }
            Ok(AnnotationSeries { piece_id, annotator_id, samples })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Resampling rate in samples per second.
    pub rate: f64,
    /// Moving-average window in samples (odd).
    pub window: usize,
    pub clusters: usize,
    /// Random PAM starts in addition to the greedy one.
    pub restarts: usize,
    pub seed: u64,
    pub segment: SegmentConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { rate: 1.0, window: 5, clusters: 3, restarts: 4, seed: 0, segment: SegmentConfig::default() }
    }
}

/// Per-piece record of what the pipeline decided.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PieceDiagnostics {
    pub piece_id: String,
    pub annotators: Vec<String>,
    pub assignment: Vec<usize>,
    pub medoids: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
    pub cluster_variances: Vec<f64>,
    pub noise_cluster: usize,
    pub kept_cluster: usize,
    pub mean_valence: Vec<f64>,
    pub segments: Vec<ValenceSegment>,
}

#[derive(Debug, Clone)]
pub struct PieceResult {
    pub phrases: Vec<LabeledPhrase>,
    pub diagnostics: PieceDiagnostics,
}

/// Runs the whole pipeline for one piece.
pub fn process_piece(
    annotations: &[AnnotationSeries],
    piece: &MidiPiece,
    qcfg: &QuantizerConfig,
    cfg: &PipelineConfig,
) -> Result<PieceResult> {
    let piece_id = annotations.first().map(|a| a.piece_id.clone()).ok_or_else(|| Error::invalid("no annotations"))?;
    if annotations.iter().any(|a| a.piece_id != piece_id) {
        return Err(Error::invalid("annotations of several pieces passed together"));
    }
    if cfg.clusters < 2 {
        return Err(Error::invalid("need at least two clusters to reject one as noise"));
    }
    let duration = *piece.step_times(qcfg).last().expect("step_times is never empty");
    let times = grid_times(duration, cfg.rate);
    let smoothed: Vec<Vec<f64>> = annotations
        .iter()
        .map(|a| {
            resample(&a.samples, duration, cfg.rate)
                .and_then(|r| smooth(&r, cfg.window))
                .map_err(|e| Error::invalid(format!("{piece_id} / {}: {e}", a.annotator_id)))
        })
        .collect::<Result<_>>()?;
    let dist = dtw_matrix(&smoothed);
    let clustering = pam(&dist, cfg.clusters, cfg.seed, cfg.restarts)?;
    let summary = summarize(&clustering, &smoothed, &dist)?;
    let segments = segment(&summary.mean, &times, piece, qcfg, &cfg.segment);
    let phrases = extract_phrases(&encode(piece, qcfg), &segments, &piece_id);
    Ok(PieceResult {
        phrases,
        diagnostics: PieceDiagnostics {
            piece_id,
            annotators: annotations.iter().map(|a| a.annotator_id.clone()).collect(),
            assignment: clustering.assignment,
            medoids: clustering.medoids,
            cluster_sizes: summary.sizes,
            cluster_variances: summary.variances,
            noise_cluster: summary.noise_cluster,
            kept_cluster: summary.kept_cluster,
            mean_valence: summary.mean,
            segments,
        },
    })
}

/// Processes every annotated piece found in `pieces`, in piece-id order.
/// Annotated pieces without MIDI are an error.
pub fn process_all(
    annotations: &[AnnotationSeries],
    pieces: &BTreeMap<String, MidiPiece>,
    qcfg: &QuantizerConfig,
    cfg: &PipelineConfig,
) -> Result<Vec<PieceResult>> {
    let mut by_piece: BTreeMap<&str, Vec<AnnotationSeries>> = BTreeMap::new();
    for a in annotations {
        by_piece.entry(a.piece_id.as_str()).or_default().push(a.clone());
    }
    let jobs: Vec<(&str, Vec<AnnotationSeries>)> = by_piece.into_iter().collect();
    jobs.into_par_iter()
        .map(|(id, series)| {
            let piece = pieces.get(id).ok_or_else(|| Error::invalid(format!("no MIDI for annotated piece {id}")))?;
            process_piece(&series, piece, qcfg, cfg)
        })
        .collect()
}
