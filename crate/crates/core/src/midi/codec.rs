use super::quantize::{quantize_duration, quantize_tempo, quantize_velocity, QuantizerConfig};
use super::{MidiPiece, Note, TempoChange};
use crate::vocab::{DurationKind, NoteValue, Word};

/// Tempo assumed when a stream has no tempo word.
pub const DEFAULT_TEMPO: u32 = 120;
/// Velocity applied to notes that precede any velocity word.
pub const DEFAULT_VELOCITY: u32 = 64;
/// Duration applied to notes that precede any duration word.
pub const DEFAULT_DURATION: NoteValue = NoteValue { kind: DurationKind::Quarter, dots: 0 };

/// Encodes a piece as words. State words (`t_`, `v_`, `d_`) are emitted only
/// when the running value changes; every step ends with `.` and the piece
/// ends with `\n`.
pub fn encode(piece: &MidiPiece, cfg: &QuantizerConfig) -> Vec<Word> {
    let mut out = Vec::with_capacity(piece.notes.len() * 2 + piece.end_step as usize + 1);
    let mut tempo = None;
    let mut velocity = None;
    let mut duration = None;
    let mut notes = piece.notes.iter().peekable();
    let mut tempi = piece.tempo_changes.iter().peekable();

    for step in 0..piece.end_step {
        let mut step_tempo = None;
        while let Some(t) = tempi.next_if(|t| t.onset <= step) {
            step_tempo = Some(t.bpm);
        }
        if let Some(bpm) = step_tempo {
            let q = quantize_tempo(bpm, cfg);
            if tempo != Some(q) {
                tempo = Some(q);
                out.push(Word::Tempo(q as u8));
            }
        }
        while let Some(n) = notes.next_if(|n| n.onset <= step) {
            let v = quantize_velocity(n.velocity as u32, cfg);
            if velocity != Some(v) {
                velocity = Some(v);
                out.push(Word::Velocity(v as u8));
            }
            let d = quantize_duration(n.duration as f64);
            if duration != Some(d) {
                duration = Some(d);
                out.push(Word::Duration(d));
            }
            out.push(Word::Note(n.pitch));
        }
        out.push(Word::StepEnd);
    }
    out.push(Word::PieceEnd);
    out
}

/// Rebuilds a piece from words, stopping at the first `\n`. Notes that appear
/// before any state word take the decoder defaults.
pub fn decode(words: &[Word]) -> MidiPiece {
    let mut step = 0u32;
    let mut tempo: Option<u8> = None;
    let mut velocity = DEFAULT_VELOCITY;
    let mut duration = DEFAULT_DURATION;
    let mut notes = Vec::new();
    let mut tempo_changes = Vec::new();

    for &w in words {
        match w {
            Word::Tempo(t) => {
                if tempo != Some(t) {
                    tempo = Some(t);
                    tempo_changes.push(TempoChange { onset: step, bpm: t as f64 });
                }
            }
            Word::Velocity(v) => velocity = v as u32,
            Word::Duration(d) => duration = d,
            Word::Note(pitch) => notes.push(Note {
                onset: step,
                pitch,
                velocity: velocity.min(127) as u8,
                duration: (duration.length().round() as u32).max(1),
            }),
            Word::StepEnd => step += 1,
            Word::PieceEnd => break,
        }
    }
    MidiPiece::new(notes, tempo_changes, step)
}
