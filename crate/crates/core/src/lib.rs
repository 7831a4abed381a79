//! Music as a word language: MIDI tokenization, a multiplicative-LSTM
//! next-word model, a sparse sentiment probe over its cell states, genetic
//! steering of generation, and the crowd-annotation labelling pipeline.

pub mod annotation;
pub mod error;
pub mod midi;
pub mod mlstm;
pub mod sentiment;
pub mod steering;
pub mod synth;
pub mod trainer;
pub mod vocab;

pub use error::{Error, Result};
pub use midi::{MidiPiece, Note, QuantizerConfig, TempoChange};
pub use mlstm::{MlstmDims, MlstmParams, MlstmState};
pub use vocab::{Vocab, Word, VOCAB_SIZE};
