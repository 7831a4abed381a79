//! Token text files: one piece per line, words separated by single spaces,
//! the end-of-piece word written as the line terminator itself.

use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::vocab::Word;

/// Joins words with spaces; a `\n` word becomes the line terminator and ends
/// the output.
pub fn format_words(words: &[Word]) -> String {
    let mut out = String::new();
    for &w in words {
        if w == Word::PieceEnd {
            out.push('\n');
            return out;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&w.to_string());
    }
    out
}

/// Parses space-separated words. A trailing line break reads as `\n`.
pub fn parse_words(text: &str) -> Result<Vec<Word>> {
    let mut words = text.split_whitespace().map(str::parse).collect::<Result<Vec<Word>>>()?;
    if text.ends_with('\n') {
        words.push(Word::PieceEnd);
    }
    Ok(words)
}

/// Parses a whole token file; every non-blank line is one piece ending in `\n`.
pub fn parse_pieces(text: &str) -> Result<Vec<Vec<Word>>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let mut words = parse_words(line)?;
            words.push(Word::PieceEnd);
            Ok(words)
        })
        .collect()
}

pub fn read_pieces(path: impl AsRef<Path>) -> Result<Vec<Vec<Word>>> {
    parse_pieces(&fs::read_to_string(path)?)
}

/// Formats pieces one per line. Pieces lacking a final `\n` get one.
pub fn format_pieces<'a>(pieces: impl IntoIterator<Item = &'a [Word]>) -> String {
    let mut out = String::new();
    for p in pieces {
        let line = format_words(p);
        out.push_str(&line);
        if !line.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}
