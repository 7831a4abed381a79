use serde::{Deserialize, Serialize};

use crate::midi::{MidiPiece, QuantizerConfig, STEPS_PER_BAR};
use crate::sentiment::LabeledPhrase;
use crate::vocab::Word;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    /// Move every boundary to the nearest bar line.
    pub snap_to_bars: bool,
    /// Split longer segments every this many bars, counted from their start.
    pub max_bars: Option<u32>,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self { snap_to_bars: true, max_bars: Some(4) }
    }
}

/// A span `[start, end)` of sixteenth steps with one sentiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValenceSegment {
    pub start: u32,
    pub end: u32,
    pub sentiment: u8,
    pub mean_valence: f64,
}

/// Times at which the valence changes sign. A run of exact zeros belongs to
/// the segment that follows it, so the boundary sits at its first zero.
fn crossings(mean: &[f64], times: &[f64]) -> Vec<f64> {
    let n = mean.len();
    let mut effective = vec![false; n];
    let mut next = None;
    for i in (0..n).rev() {
        if mean[i] != 0.0 {
            next = Some(mean[i] > 0.0);
        }
        effective[i] = next.unwrap_or(false);
    }
    if next.is_none() {
        return Vec::new();
    }
    // trailing zeros have no following segment; they join the previous one
    if let Some(last) = (0..n).rev().find(|&i| mean[i] != 0.0) {
        for e in effective.iter_mut().skip(last + 1) {
            *e = mean[last] > 0.0;
        }
    }
    (1..n)
        .filter(|&i| effective[i] != effective[i - 1])
        .map(|i| {
            if mean[i] == 0.0 {
                times[i]
            } else {
                let (a, b) = (mean[i - 1], mean[i]);
                times[i - 1] + (times[i] - times[i - 1]) * a / (a - b)
            }
        })
        .collect()
}

fn nearest_step(step_times: &[f64], t: f64) -> u32 {
    let i = step_times.partition_point(|&s| s < t);
    let pick = if i == 0 {
        0
    } else if i == step_times.len() || t - step_times[i - 1] <= step_times[i] - t {
        i - 1
    } else {
        i
    };
    pick as u32
}

/// Mean of the grid samples falling in `[t0, t1)`, or the interpolated value
/// at the midpoint when none does.
fn span_mean(mean: &[f64], times: &[f64], t0: f64, t1: f64) -> f64 {
    let inside: Vec<f64> = times.iter().zip(mean).filter(|(&t, _)| t >= t0 && t < t1).map(|(_, &v)| v).collect();
    if !inside.is_empty() {
        return inside.iter().sum::<f64>() / inside.len() as f64;
    }
    let mid = 0.5 * (t0 + t1);
    let i = times.partition_point(|&t| t < mid).clamp(1, times.len().max(2) - 1);
    if times.len() < 2 {
        return mean.first().copied().unwrap_or(0.0);
    }
    let (ta, tb) = (times[i - 1], times[i]);
    let w = if tb > ta { ((mid - ta) / (tb - ta)).clamp(0.0, 1.0) } else { 0.0 };
    mean[i - 1] + w * (mean[i] - mean[i - 1])
}

/// Cuts the piece where the mean valence changes sign, maps the cut times to
/// steps through the piece's quantized tempo map and labels each span by
/// the sign of its mean valence. Spans without note onsets are dropped.
pub fn segment(mean: &[f64], times: &[f64], piece: &MidiPiece, qcfg: &QuantizerConfig, cfg: &SegmentConfig) -> Vec<ValenceSegment> {
    let end = piece.end_step;
    if end == 0 || mean.is_empty() {
        return Vec::new();
    }
    let step_times = piece.step_times(qcfg);
    let mut cuts: Vec<u32> = crossings(mean, times)
        .into_iter()
        .map(|t| {
            let s = nearest_step(&step_times, t);
            if cfg.snap_to_bars {
                ((s + STEPS_PER_BAR / 2) / STEPS_PER_BAR * STEPS_PER_BAR).min(end)
            } else {
                s
            }
        })
        .filter(|&s| s > 0 && s < end)
        .collect();
    cuts.sort_unstable();
    cuts.dedup();

    let label = |start: u32, stop: u32| {
        let v = span_mean(mean, times, step_times[start as usize], step_times[stop as usize]);
        ValenceSegment { start, end: stop, sentiment: u8::from(v > 0.0), mean_valence: v }
    };
    let bounds: Vec<u32> = std::iter::once(0).chain(cuts).chain(std::iter::once(end)).collect();
    let mut merged: Vec<ValenceSegment> = Vec::new();
    for w in bounds.windows(2) {
        let seg = label(w[0], w[1]);
        match merged.last_mut() {
            Some(prev) if prev.sentiment == seg.sentiment => *prev = label(prev.start, seg.end),
            _ => merged.push(seg),
        }
    }

    let mut out = Vec::new();
    for seg in merged {
        let step = cfg.max_bars.map_or(seg.end - seg.start, |b| (b * STEPS_PER_BAR).max(1));
        let mut s = seg.start;
        while s < seg.end {
            let e = (s + step).min(seg.end);
            if piece.has_onset_in(s, e) {
                let mut part = label(s, e);
                // the parent's label stands even if a sub-span's mean dips across zero
                part.sentiment = seg.sentiment;
                out.push(part);
            }
            s = e;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct RunningState {
    tempo: Option<Word>,
    velocity: Option<Word>,
    duration: Option<Word>,
}

impl RunningState {
    fn slot(&mut self, w: Word) -> Option<&mut Option<Word>> {
        match w {
            Word::Tempo(_) => Some(&mut self.tempo),
            Word::Velocity(_) => Some(&mut self.velocity),
            Word::Duration(_) => Some(&mut self.duration),
            _ => None,
        }
    }
}

/// Slices `words` at segment boundaries. Each phrase opens with the tempo,
/// velocity and duration in effect at its first step, so it decodes on its
/// own; state words that repeat the current value are dropped.
pub fn extract_phrases(words: &[Word], segments: &[ValenceSegment], piece_id: &str) -> Vec<LabeledPhrase> {
    let body_end = words.iter().position(|&w| w == Word::PieceEnd).unwrap_or(words.len());
    let words = &words[..body_end];
    let mut starts = vec![0usize];
    let mut states = vec![RunningState::default()];
    let mut state = RunningState::default();
    for (i, &w) in words.iter().enumerate() {
        if let Some(slot) = state.slot(w) {
            *slot = Some(w);
        }
        if w == Word::StepEnd {
            starts.push(i + 1);
            states.push(state);
        }
    }
    let at = |step: u32| starts.get(step as usize).copied().unwrap_or(words.len());

    segments
        .iter()
        .enumerate()
        .map(|(k, seg)| {
            let mut current = states.get(seg.start as usize).copied().unwrap_or(state);
            let mut tokens: Vec<Word> = [current.tempo, current.velocity, current.duration].into_iter().flatten().collect();
            for &w in &words[at(seg.start)..at(seg.end)] {
                match current.slot(w) {
                    Some(slot) if *slot == Some(w) => continue,
                    Some(slot) => *slot = Some(w),
                    None => {}
                }
                tokens.push(w);
            }
            LabeledPhrase { id: format!("{piece_id}_{k}"), label: seg.sentiment, tokens }
        })
        .collect()
}
