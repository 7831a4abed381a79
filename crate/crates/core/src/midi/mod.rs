//! Quantized note/tempo model of a piece and its conversion to and from
//! Standard MIDI Files and vocabulary words.

mod augment;
mod codec;
mod quantize;
mod smf;
pub mod text;

pub use augment::{augment, augment_grid, Augmented, STRETCH_FACTORS, TRANSPOSITIONS};
pub use codec::{decode, encode, DEFAULT_DURATION, DEFAULT_TEMPO, DEFAULT_VELOCITY};
pub use quantize::{quantize_duration, quantize_tempo, quantize_velocity, QuantizerConfig};
pub use smf::{parse_midi, parse_midi_report, write_midi, MidiReport, OUTPUT_TICKS_PER_QUARTER};

/// Sixteenth steps per 4/4 bar.
pub const STEPS_PER_BAR: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Note {
    /// Sixteenth-step index of the onset.
    pub onset: u32,
    pub pitch: u8,
    /// Raw MIDI velocity, 1..=127.
    pub velocity: u8,
    /// Length in 32nd notes, at least 1.
    pub duration: u32,
}

impl Note {
    /// End position in 32nd notes.
    fn end_32nds(&self) -> u32 {
        self.onset * 2 + self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TempoChange {
    pub onset: u32,
    pub bpm: f64,
}

/// A single-stream piece on the sixteenth-note grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MidiPiece {
    pub notes: Vec<Note>,
    pub tempo_changes: Vec<TempoChange>,
    pub end_step: u32,
}

impl MidiPiece {
    /// Builds a piece and restores the ordering invariants.
    pub fn new(notes: Vec<Note>, tempo_changes: Vec<TempoChange>, end_step: u32) -> Self {
        let mut piece = Self { notes, tempo_changes, end_step };
        piece.normalize();
        piece
    }

    /// Sorts notes by `(onset, pitch)`, drops duplicate onsets of one pitch
    /// (keeping the longest), truncates a note that overlaps a later onset of
    /// the same pitch, keeps one tempo change per onset (the last one) and
    /// extends `end_step` past the last onset.
    pub fn normalize(&mut self) {
        self.notes.sort_by_key(|a| (a.onset, a.pitch, std::cmp::Reverse(a.duration)));
        self.notes.dedup_by(|later, first| later.onset == first.onset && later.pitch == first.pitch);
        for n in &mut self.notes {
            n.duration = n.duration.max(1);
            n.velocity = n.velocity.clamp(1, 127);
        }

        let mut last_of_pitch: [Option<usize>; 128] = [None; 128];
        for i in 0..self.notes.len() {
            let pitch = self.notes[i].pitch as usize;
            if let Some(prev) = last_of_pitch[pitch] {
                let gap = (self.notes[i].onset - self.notes[prev].onset) * 2;
                if self.notes[prev].end_32nds() > self.notes[i].onset * 2 {
                    self.notes[prev].duration = gap;
                }
            }
            last_of_pitch[pitch] = Some(i);
        }

        self.tempo_changes.sort_by_key(|t| t.onset);
        let mut dedup: Vec<TempoChange> = Vec::with_capacity(self.tempo_changes.len());
        for t in self.tempo_changes.drain(..) {
            match dedup.last_mut() {
                Some(last) if last.onset == t.onset => *last = t,
                _ => dedup.push(t),
            }
        }
        self.tempo_changes = dedup;

        if let Some(last) = self.notes.iter().map(|n| n.onset).max() {
            self.end_step = self.end_step.max(last + 1);
        }
    }

    /// Raw tempo in effect at `step`, falling back to the decoder default.
    pub fn tempo_at(&self, step: u32) -> f64 {
        self.tempo_changes.iter().take_while(|t| t.onset <= step).last().map_or(DEFAULT_TEMPO as f64, |t| t.bpm)
    }

    /// Start time in seconds of every step `0..=end_step`, integrating the
    /// quantized tempo map one step at a time.
    pub fn step_times(&self, cfg: &QuantizerConfig) -> Vec<f64> {
        let mut times = Vec::with_capacity(self.end_step as usize + 1);
        let mut t = 0.0;
        let mut changes = self.tempo_changes.iter().peekable();
        let mut bpm = DEFAULT_TEMPO as f64;
        for step in 0..=self.end_step {
            times.push(t);
            while let Some(c) = changes.next_if(|c| c.onset <= step) {
                bpm = quantize_tempo(c.bpm, cfg) as f64;
            }
            t += 60.0 / bpm / 4.0;
        }
        times
    }

    /// True when some note starts in `[start, end)`.
    pub fn has_onset_in(&self, start: u32, end: u32) -> bool {
        self.notes.iter().any(|n| n.onset >= start && n.onset < end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_orders_and_truncates() {
        let p = MidiPiece::new(
            vec![
                Note { onset: 4, pitch: 60, velocity: 64, duration: 8 },
                Note { onset: 0, pitch: 64, velocity: 64, duration: 8 },
                Note { onset: 0, pitch: 60, velocity: 64, duration: 32 },
            ],
            vec![TempoChange { onset: 0, bpm: 100.0 }, TempoChange { onset: 0, bpm: 120.0 }],
            0,
        );
        assert_eq!(p.notes[0], Note { onset: 0, pitch: 60, velocity: 64, duration: 8 });
        assert_eq!(p.notes[1].pitch, 64);
        assert_eq!(p.notes[2].onset, 4);
        assert_eq!(p.tempo_changes, vec![TempoChange { onset: 0, bpm: 120.0 }]);
        assert_eq!(p.end_step, 5);
    }

    #[test]
    fn step_times_follow_tempo_map() {
        let p = MidiPiece::new(vec![], vec![TempoChange { onset: 2, bpm: 60.0 }], 4);
        let times = p.step_times(&QuantizerConfig::default());
        // 120 bpm: 0.125 s per step; 60 bpm: 0.25 s per step
        assert_eq!(times, vec![0.0, 0.125, 0.25, 0.5, 0.75]);
    }
}
