use super::{MidiPiece, TempoChange};
use crate::midi::codec::DEFAULT_TEMPO;

/// Tempo multipliers of the augmentation grid (up to 5% slower or faster).
pub const STRETCH_FACTORS: [f64; 5] = [0.95, 0.975, 1.0, 1.025, 1.05];
/// Semitone shifts of the augmentation grid (up to a major third).
pub const TRANSPOSITIONS: [i32; 9] = [-4, -3, -2, -1, 0, 1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub piece: MidiPiece,
    /// Notes dropped because the shifted pitch left 0..=127.
    pub dropped: usize,
}

/// Transposes every note and scales every tempo by `stretch`. A piece
/// without tempo changes gets one at step 0 when `stretch != 1`.
pub fn augment(piece: &MidiPiece, stretch: f64, transpose: i32) -> Augmented {
    let mut dropped = 0;
    let notes = piece
        .notes
        .iter()
        .filter_map(|n| {
            let pitch = n.pitch as i32 + transpose;
            if (0..128).contains(&pitch) {
                Some(super::Note { pitch: pitch as u8, ..*n })
            } else {
                dropped += 1;
                None
            }
        })
        .collect();
    let mut tempo_changes: Vec<TempoChange> =
        piece.tempo_changes.iter().map(|t| TempoChange { onset: t.onset, bpm: t.bpm * stretch }).collect();
    if stretch != 1.0 && tempo_changes.first().is_none_or(|t| t.onset > 0) {
        tempo_changes.insert(0, TempoChange { onset: 0, bpm: DEFAULT_TEMPO as f64 * stretch });
    }
    Augmented { piece: MidiPiece::new(notes, tempo_changes, piece.end_step), dropped }
}

/// All 45 stretch × transposition variants, identity included once.
pub fn augment_grid(piece: &MidiPiece) -> Vec<Augmented> {
    STRETCH_FACTORS.iter().flat_map(|&s| TRANSPOSITIONS.iter().map(move |&t| augment(piece, s, t))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::{encode, quantize_tempo, Note, QuantizerConfig};

    fn piece() -> MidiPiece {
        MidiPiece::new(
            vec![Note { onset: 0, pitch: 60, velocity: 64, duration: 8 }, Note { onset: 1, pitch: 126, velocity: 64, duration: 8 }],
            vec![TempoChange { onset: 0, bpm: 120.0 }],
            4,
        )
    }

    #[test]
    fn major_third_up() {
        let a = augment(&piece(), 1.0, 4);
        assert_eq!(a.piece.notes[0].pitch, 64);
        assert_eq!(a.dropped, 1);
    }

    #[test]
    fn identity() {
        let a = augment(&piece(), 1.0, 0);
        assert_eq!(a.piece, piece());
        assert_eq!(a.dropped, 0);
        assert_eq!(augment(&MidiPiece::default(), 1.0, 0).piece, MidiPiece::default());
    }

    #[test]
    fn stretch_scales_tempo() {
        let a = augment(&piece(), 1.05, 0);
        assert!((a.piece.tempo_changes[0].bpm - 126.0).abs() < 1e-9);
        assert_eq!(quantize_tempo(a.piece.tempo_changes[0].bpm, &QuantizerConfig::default()), 128);
    }

    #[test]
    fn transpositions_compose() {
        let p = MidiPiece::new(vec![Note { onset: 0, pitch: 60, velocity: 64, duration: 8 }], vec![], 2);
        let back = augment(&augment(&p, 1.0, 2).piece, 1.0, -2);
        assert_eq!(back.piece, p);
    }

    #[test]
    fn grid_has_45_distinct_variants() {
        let cfg = QuantizerConfig::default();
        let variants = augment_grid(&piece());
        assert_eq!(variants.len(), 45);
        let identity = variants.iter().filter(|a| a.piece == piece()).count();
        assert_eq!(identity, 1);
        let mut encoded: Vec<_> = variants.iter().map(|a| encode(&a.piece, &cfg)).collect();
        encoded.sort_by_key(|w| format!("{w:?}"));
        encoded.dedup();
        // 0.975 and 1.025 land in the same tempo bins as their neighbours at 120 bpm
        assert!(encoded.len() >= 27);
    }
}
