use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{NoteValue, TEMPO_BIN, TEMPO_MAX, TEMPO_MIN, VELOCITY_BIN, VELOCITY_MAX, VELOCITY_MIN};

/// Bin sizes and ranges for velocity and tempo words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantizerConfig {
    pub velocity_bin: u32,
    pub velocity_range: [u32; 2],
    pub tempo_bin: u32,
    pub tempo_range: [u32; 2],
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self {
            velocity_bin: VELOCITY_BIN,
            velocity_range: [VELOCITY_MIN, VELOCITY_MAX],
            tempo_bin: TEMPO_BIN,
            tempo_range: [TEMPO_MIN, TEMPO_MAX],
        }
    }
}

impl QuantizerConfig {
    /// The vocabulary is fixed, so only the default grid is accepted.
    pub fn validate(&self) -> Result<()> {
        let divides = |bin: u32, [lo, hi]: [u32; 2]| bin > 0 && lo <= hi && lo % bin == 0 && (hi - lo) % bin == 0;
        if !divides(self.velocity_bin, self.velocity_range) || !divides(self.tempo_bin, self.tempo_range) {
            return Err(Error::invalid("quantizer bins must divide their ranges"));
        }
        if *self != Self::default() {
            return Err(Error::invalid("quantizer grid must match the vocabulary (velocity 4..=128 step 4, tempo 24..=160 step 4)"));
        }
        Ok(())
    }
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Velocity bin: `clamp(round_half_up(v / bin) * bin, lo, hi)`.
pub fn quantize_velocity(velocity: u32, cfg: &QuantizerConfig) -> u32 {
    let bin = cfg.velocity_bin;
    let binned = (velocity + bin / 2) / bin * bin;
    binned.clamp(cfg.velocity_range[0], cfg.velocity_range[1])
}

/// Tempo bin: `clamp(round_half_up(bpm / bin) * bin, lo, hi)`.
pub fn quantize_tempo(bpm: f64, cfg: &QuantizerConfig) -> u32 {
    let bin = cfg.tempo_bin as f64;
    let binned = round_half_up(bpm / bin) * bin;
    binned.clamp(cfg.tempo_range[0] as f64, cfg.tempo_range[1] as f64) as u32
}

/// Note value whose length is nearest to `length` (in 32nd notes). Ties go
/// to fewer dots, then to the longer base type.
pub fn quantize_duration(length: f64) -> NoteValue {
    NoteValue::all()
        .min_by(|a, b| {
            let da = (a.length() - length).abs();
            let db = (b.length() - length).abs();
            da.total_cmp(&db).then(a.dots.cmp(&b.dots)).then(b.kind.base_length().cmp(&a.kind.base_length()))
        })
        .expect("vocabulary has note values")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::DurationKind;

    #[test]
    fn velocity_examples() {
        let cfg = QuantizerConfig::default();
        assert_eq!(quantize_velocity(76, &cfg), 76);
        assert_eq!(quantize_velocity(2, &cfg), 4);
        assert_eq!(quantize_velocity(1, &cfg), 4);
        assert_eq!(quantize_velocity(77, &cfg), 76);
        assert_eq!(quantize_velocity(78, &cfg), 80);
        assert_eq!(quantize_velocity(127, &cfg), 128);
    }

    #[test]
    fn tempo_examples() {
        let cfg = QuantizerConfig::default();
        assert_eq!(quantize_tempo(120.0, &cfg), 120);
        assert_eq!(quantize_tempo(300.0, &cfg), 160);
        assert_eq!(quantize_tempo(126.0, &cfg), 128);
        assert_eq!(quantize_tempo(5.0, &cfg), 24);
        assert_eq!(quantize_tempo(120.0 * 1.05, &cfg), 128);
    }

    /// Brute force over the 28 lengths with the tie rule spelled out as a
    /// sort key.
    fn nearest_by_enumeration(d: f64) -> NoteValue {
        let mut all: Vec<NoteValue> = NoteValue::all().collect();
        all.sort_by(|a, b| {
            let ka = ((a.length() - d).abs(), a.dots, u32::MAX - a.kind.base_length());
            let kb = ((b.length() - d).abs(), b.dots, u32::MAX - b.kind.base_length());
            ka.partial_cmp(&kb).unwrap()
        });
        all[0]
    }

    #[test]
    fn duration_examples() {
        assert_eq!(quantize_duration(12.0), NoteValue::new(DurationKind::Quarter, 1));
        assert_eq!(quantize_duration(32.0), NoteValue::new(DurationKind::Whole, 0));
        assert_eq!(quantize_duration(3.0), NoteValue::new(DurationKind::Sixteenth, 1));
        // 5 is equidistant from 4 (eighth) and 6 (dotted eighth)
        assert_eq!(quantize_duration(5.0), NoteValue::new(DurationKind::Eighth, 0));
        for d in 1..=200 {
            assert_eq!(quantize_duration(d as f64), nearest_by_enumeration(d as f64), "d = {d}");
        }
    }

    #[test]
    fn every_note_value_is_a_fixed_point() {
        for nv in NoteValue::all() {
            assert_eq!(quantize_duration(nv.length()), nv);
        }
    }

    #[test]
    fn only_default_grid_validates() {
        assert!(QuantizerConfig::default().validate().is_ok());
        let cfg = QuantizerConfig { tempo_bin: 5, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
