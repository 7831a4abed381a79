//! The 225-word music vocabulary.
//!
//! A piece is a stream of words: note onsets (`n_60`), running-state changes
//! for duration (`d_quarter_1`), velocity (`v_76`) and tempo (`t_120`), the
//! end-of-step marker `.` and the end-of-piece marker `\n`. Ids are assigned
//! in a fixed canonical order so checkpoints are portable between builds.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const NUM_PITCHES: usize = 128;
pub const NUM_DOTS: usize = 4;
pub const VELOCITY_BIN: u32 = 4;
pub const VELOCITY_MIN: u32 = 4;
pub const VELOCITY_MAX: u32 = 128;
pub const TEMPO_BIN: u32 = 4;
pub const TEMPO_MIN: u32 = 24;
pub const TEMPO_MAX: u32 = 160;

const NUM_VELOCITIES: usize = ((VELOCITY_MAX - VELOCITY_MIN) / VELOCITY_BIN + 1) as usize;
const NUM_TEMPI: usize = ((TEMPO_MAX - TEMPO_MIN) / TEMPO_BIN + 1) as usize;
const NUM_DURATIONS: usize = DurationKind::ALL.len() * NUM_DOTS;

const DURATION_BASE: usize = NUM_PITCHES;
const VELOCITY_BASE: usize = DURATION_BASE + NUM_DURATIONS;
const TEMPO_BASE: usize = VELOCITY_BASE + NUM_VELOCITIES;
const STEP_END_ID: usize = TEMPO_BASE + NUM_TEMPI;
const PIECE_END_ID: usize = STEP_END_ID + 1;

/// Number of words in the vocabulary.
pub const VOCAB_SIZE: usize = PIECE_END_ID + 1;

/// Note value of a duration word, longest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DurationKind {
    Breve,
    Whole,
    Half,
    Quarter,
    Eighth,
    Sixteenth,
    ThirtySecond,
}

impl DurationKind {
    pub const ALL: [DurationKind; 7] = [
        DurationKind::Breve,
        DurationKind::Whole,
        DurationKind::Half,
        DurationKind::Quarter,
        DurationKind::Eighth,
        DurationKind::Sixteenth,
        DurationKind::ThirtySecond,
    ];

    /// Undotted length in 32nd notes.
    pub fn base_length(self) -> u32 {
        match self {
            DurationKind::Breve => 64,
            DurationKind::Whole => 32,
            DurationKind::Half => 16,
            DurationKind::Quarter => 8,
            DurationKind::Eighth => 4,
            DurationKind::Sixteenth => 2,
            DurationKind::ThirtySecond => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DurationKind::Breve => "breve",
            DurationKind::Whole => "whole",
            DurationKind::Half => "half",
            DurationKind::Quarter => "quarter",
            DurationKind::Eighth => "eighth",
            DurationKind::Sixteenth => "16th",
            DurationKind::ThirtySecond => "32nd",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// A duration type plus a dot count in `0..=3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoteValue {
    pub kind: DurationKind,
    pub dots: u8,
}

impl NoteValue {
    pub fn new(kind: DurationKind, dots: u8) -> Self {
        debug_assert!((dots as usize) < NUM_DOTS);
        Self { kind, dots }
    }

    /// Length in 32nd notes: `base * (2 - 2^-dots)`.
    pub fn length(self) -> f64 {
        self.kind.base_length() as f64 * (2.0 - 0.5f64.powi(self.dots as i32))
    }

    /// Every representable note value in canonical order.
    pub fn all() -> impl Iterator<Item = NoteValue> {
        DurationKind::ALL.into_iter().flat_map(|k| (0..NUM_DOTS as u8).map(move |d| NoteValue::new(k, d)))
    }
}

/// One vocabulary word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Word {
    /// Play a note with this MIDI pitch.
    Note(u8),
    /// Set the duration of the following notes.
    Duration(NoteValue),
    /// Set the (binned) velocity of the following notes.
    Velocity(u8),
    /// Set the (binned) tempo in bpm.
    Tempo(u8),
    /// End of a sixteenth-note time step.
    StepEnd,
    /// End of the piece.
    PieceEnd,
}

impl Word {
    /// Canonical id of this word.
    pub fn id(self) -> usize {
        match self {
            Word::Note(p) => p as usize,
            Word::Duration(nv) => DURATION_BASE + nv.kind.index() * NUM_DOTS + nv.dots as usize,
            Word::Velocity(v) => VELOCITY_BASE + ((v as u32 - VELOCITY_MIN) / VELOCITY_BIN) as usize,
            Word::Tempo(t) => TEMPO_BASE + ((t as u32 - TEMPO_MIN) / TEMPO_BIN) as usize,
            Word::StepEnd => STEP_END_ID,
            Word::PieceEnd => PIECE_END_ID,
        }
    }

    /// Inverse of [`Word::id`]; `None` when `id >= VOCAB_SIZE`.
    pub fn from_id(id: usize) -> Option<Word> {
        Some(match id {
            _ if id < DURATION_BASE => Word::Note(id as u8),
            _ if id < VELOCITY_BASE => {
                let off = id - DURATION_BASE;
                Word::Duration(NoteValue::new(DurationKind::ALL[off / NUM_DOTS], (off % NUM_DOTS) as u8))
            }
            _ if id < TEMPO_BASE => Word::Velocity((VELOCITY_MIN + (id - VELOCITY_BASE) as u32 * VELOCITY_BIN) as u8),
            _ if id < STEP_END_ID => Word::Tempo((TEMPO_MIN + (id - TEMPO_BASE) as u32 * TEMPO_BIN) as u8),
            STEP_END_ID => Word::StepEnd,
            PIECE_END_ID => Word::PieceEnd,
            _ => return None,
        })
    }

    pub fn is_state(self) -> bool {
        matches!(self, Word::Duration(_) | Word::Velocity(_) | Word::Tempo(_))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Word::Note(p) => write!(f, "n_{p}"),
            Word::Duration(nv) => write!(f, "d_{}_{}", nv.kind.name(), nv.dots),
            Word::Velocity(v) => write!(f, "v_{v}"),
            Word::Tempo(t) => write!(f, "t_{t}"),
            Word::StepEnd => f.write_str("."),
            Word::PieceEnd => f.write_str("\n"),
        }
    }
}

impl FromStr for Word {
    type Err = Error;

    /// Accepts the canonical spelling plus the dotless duration form
    /// (`d_eighth` reads as `d_eighth_0`).
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownWord(s.to_string());
        match s {
            "." => return Ok(Word::StepEnd),
            "\n" | "\\n" => return Ok(Word::PieceEnd),
            _ => {}
        }
        let (prefix, rest) = s.split_once('_').ok_or_else(unknown)?;
        let number = |txt: &str| -> Result<u32> {
            if txt.is_empty() || !txt.bytes().all(|b| b.is_ascii_digit()) {
                return Err(unknown());
            }
            txt.parse().map_err(|_| unknown())
        };
        match prefix {
            "n" => {
                let p = number(rest)?;
                if p as usize >= NUM_PITCHES {
                    return Err(unknown());
                }
                Ok(Word::Note(p as u8))
            }
            "v" => {
                let v = number(rest)?;
                if !(VELOCITY_MIN..=VELOCITY_MAX).contains(&v) || v % VELOCITY_BIN != 0 {
                    return Err(unknown());
                }
                Ok(Word::Velocity(v as u8))
            }
            "t" => {
                let t = number(rest)?;
                if !(TEMPO_MIN..=TEMPO_MAX).contains(&t) || t % TEMPO_BIN != 0 {
                    return Err(unknown());
                }
                Ok(Word::Tempo(t as u8))
            }
            "d" => {
                let (name, dots) = match rest.rsplit_once('_') {
                    Some((name, dots)) if DurationKind::from_name(name).is_some() => (name, number(dots)?),
                    _ => (rest, 0),
                };
                let kind = DurationKind::from_name(name).ok_or_else(unknown)?;
                if dots as usize >= NUM_DOTS {
                    return Err(unknown());
                }
                Ok(Word::Duration(NoteValue::new(kind, dots as u8)))
            }
            _ => Err(unknown()),
        }
    }
}

/// The ordered vocabulary with string lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn build() -> Self {
        let words: Vec<String> = (0..VOCAB_SIZE).map(|id| Word::from_id(id).expect("id in range").to_string()).collect();
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word_to_id(&self, word: &str) -> Result<usize> {
        if let Some(&id) = self.index.get(word) {
            return Ok(id);
        }
        // non-canonical spellings such as "d_eighth"
        word.parse::<Word>().map(Word::id)
    }

    pub fn id_to_word(&self, id: usize) -> Result<&str> {
        self.words.get(id).map(String::as_str).ok_or(Error::IdOutOfRange(id))
    }

    /// SHA-256 over the canonical word list, hex encoded. Stored in checkpoints.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for w in &self.words {
            hasher.update(w.as_bytes());
            hasher.update([0u8]);
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Self::build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition() {
        let v = Vocab::build();
        assert_eq!(v.len(), 225);
        let count = |p: &str| v.words().iter().filter(|w| w.starts_with(p)).count();
        assert_eq!(count("n_"), 128);
        assert_eq!(count("d_"), 28);
        assert_eq!(count("v_"), 32);
        assert_eq!(count("t_"), 35);
        assert_eq!(v.words()[223], ".");
        assert_eq!(v.words()[224], "\n");
    }

    #[test]
    fn canonical_order_edges() {
        let v = Vocab::build();
        assert_eq!(v.words()[0], "n_0");
        assert_eq!(v.words()[127], "n_127");
        assert_eq!(v.words()[128], "d_breve_0");
        assert_eq!(v.words()[155], "d_32nd_3");
        assert_eq!(v.words()[156], "v_4");
        assert_eq!(v.words()[187], "v_128");
        assert_eq!(v.words()[188], "t_24");
        assert_eq!(v.words()[222], "t_160");
    }

    #[test]
    fn bijection() {
        let v = Vocab::build();
        for (i, w) in v.words().iter().enumerate() {
            assert_eq!(v.word_to_id(w).unwrap(), i);
            assert_eq!(v.id_to_word(i).unwrap(), w);
            assert_eq!(Word::from_id(i).unwrap().id(), i);
        }
        assert!(Word::from_id(225).is_none());
    }

    #[test]
    fn unknown_words() {
        let v = Vocab::build();
        for bad in ["n_128", "v_2", "v_132", "t_20", "t_162", "d_quarter_4", "d_minim_0", "x", "n_", "n_-1"] {
            match v.word_to_id(bad) {
                Err(Error::UnknownWord(w)) => assert_eq!(w, bad),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }

    #[test]
    fn dotless_duration_reads_as_zero_dots() {
        let v = Vocab::build();
        assert_eq!(v.word_to_id("d_eighth").unwrap(), v.word_to_id("d_eighth_0").unwrap());
        assert_eq!(v.word_to_id("d_16th").unwrap(), v.word_to_id("d_16th_0").unwrap());
    }

    #[test]
    fn independent_builds_agree() {
        assert_eq!(Vocab::build(), Vocab::build());
        assert_eq!(Vocab::build().hash(), Vocab::build().hash());
    }

    #[test]
    fn dotted_lengths() {
        assert_eq!(NoteValue::new(DurationKind::Quarter, 1).length(), 12.0);
        assert_eq!(NoteValue::new(DurationKind::Whole, 0).length(), 32.0);
        assert_eq!(NoteValue::new(DurationKind::ThirtySecond, 3).length(), 1.875);
    }
}
