//! Sentiment probing: cell-state features of labelled phrases, a sparse
//! logistic-regression classifier over them, cross-validation, and a fully
//! supervised mLSTM baseline.

pub mod crossval;
pub mod logreg;
pub mod supervised;

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::midi::text::parse_words;
use crate::mlstm::{MlstmParams, Real};
use crate::vocab::Word;

pub use crossval::{crossval, crossval_logreg, select_lambda, stratified_folds, CrossvalReport};
pub use logreg::{default_lambda_grid, fit_l1_logreg, fit_path, FitOptions, SentimentClassifier};
pub use supervised::{fit_supervised, predict_supervised};

/// A token span with a binary sentiment label (0 negative, 1 positive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPhrase {
    pub id: String,
    pub label: u8,
    pub tokens: Vec<Word>,
}

impl LabeledPhrase {
    pub fn ids(&self) -> Vec<usize> {
        self.tokens.iter().map(|w| w.id()).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct PhraseRow {
    phrase_id: String,
    label: u8,
    tokens: String,
}

/// Reads the tab-separated `phrase_id, label, tokens` format.
pub fn read_phrases_tsv(input: impl Read) -> Result<Vec<LabeledPhrase>> {
    let mut reader = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(input);
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let row: PhraseRow = row?;
        if row.label > 1 {
            return Err(Error::invalid(format!("phrase {}: label must be 0 or 1", row.phrase_id)));
        }
        let tokens = parse_words(row.tokens.trim_end())?;
        if tokens.is_empty() {
            return Err(Error::invalid(format!("phrase {} has no tokens", row.phrase_id)));
        }
        out.push(LabeledPhrase { id: row.phrase_id, label: row.label, tokens });
    }
    Ok(out)
}

/// Writes phrases as TSV; end-of-piece words are left out.
pub fn write_phrases_tsv(phrases: &[LabeledPhrase], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    for p in phrases {
        let tokens: Vec<String> = p.tokens.iter().filter(|&&t| t != Word::PieceEnd).map(Word::to_string).collect();
        w.serialize(PhraseRow { phrase_id: p.id.clone(), label: p.label, tokens: tokens.join(" ") })?;
    }
    w.flush()?;
    Ok(())
}

/// Cell state after reading `ids` word by word from the zero state.
pub fn encode_phrase<F: Real>(params: &MlstmParams<F>, ids: &[usize]) -> Array1<f64> {
    params.run(ids, None).c.row(0).mapv(|v| v.to_f64().unwrap_or(f64::NAN))
}

/// One feature row per phrase.
pub fn encode_phrases<F: Real + Send + Sync>(params: &MlstmParams<F>, phrases: &[Vec<usize>]) -> Array2<f64> {
    let rows: Vec<Array1<f64>> = phrases.par_iter().map(|p| encode_phrase(params, p)).collect();
    let mut x = Array2::zeros((rows.len(), params.dims.hidden));
    for (mut dst, row) in x.rows_mut().into_iter().zip(rows) {
        dst.assign(&row);
    }
    x
}

pub fn write_features_csv(x: &Array2<f64>, labels: &[u8], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["label".to_string()];
    header.extend((0..x.ncols()).map(|j| format!("c{j}")));
    w.write_record(&header)?;
    for (row, &label) in x.rows().into_iter().zip(labels) {
        let mut rec = vec![label.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv(input: impl Read) -> Result<(Array2<f64>, Vec<u8>)> {
    let mut reader = csv::Reader::from_reader(input);
    let width = reader.headers()?.len().saturating_sub(1);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = labels.len() + 1;
        let bad = |e: String| Error::invalid(format!("feature row {row}: {e}"));
        labels.push(rec[0].parse::<u8>().map_err(|e| bad(e.to_string()))?);
        for v in rec.iter().skip(1) {
            values.push(v.parse::<f64>().map_err(|e| bad(e.to_string()))?);
        }
    }
    let x = Array2::from_shape_vec((labels.len(), width), values).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((x, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlstm::{MlstmDims, MlstmState};
    use crate::vocab::VOCAB_SIZE;

    #[test]
    fn phrase_features_match_manual_steps() {
        let p = MlstmParams::<f64>::init(MlstmDims::language_model(VOCAB_SIZE, 4, 6), 9);
        let ids = [188, 160, 140, 60, 223, 64, 223];
        let mut s = MlstmState::zeros(1, 6);
        for &id in &ids {
            s = p.forward_step(s, id).0;
        }
        let f = encode_phrase(&p, &ids);
        assert_eq!(f, s.c.row(0));
        let x = encode_phrases(&p, &[ids.to_vec(), vec![223], ids.to_vec()]);
        assert_eq!(x.row(0), x.row(2));
        assert_eq!(x.row(1), encode_phrase(&p, &[223]));
    }

    #[test]
    fn tsv_round_trip() {
        let phrases = vec![
            LabeledPhrase { id: "a_0".into(), label: 1, tokens: parse_words("t_120 v_64 d_quarter_0 n_60 . .").unwrap() },
            LabeledPhrase { id: "a_1".into(), label: 0, tokens: parse_words("n_62 .").unwrap() },
        ];
        let mut buf = Vec::new();
        write_phrases_tsv(&phrases, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("phrase_id\tlabel\ttokens\na_0\t1\tt_120 v_64"));
        assert_eq!(read_phrases_tsv(&buf[..]).unwrap(), phrases);
        assert!(read_phrases_tsv("phrase_id\tlabel\ttokens\nx\t2\tn_60\n".as_bytes()).is_err());
        assert!(read_phrases_tsv("phrase_id\tlabel\ttokens\nx\t1\t\n".as_bytes()).is_err());
    }

    #[test]
    fn features_csv_round_trip() {
        let x = ndarray::array![[0.5, -1.25], [2.0, 0.0]];
        let mut buf = Vec::new();
        write_features_csv(&x, &[1, 0], &mut buf).unwrap();
        let (y, labels) = read_features_csv(&buf[..]).unwrap();
        assert_eq!(y, x);
        assert_eq!(labels, vec![1, 0]);
    }
}
