//! The fully supervised baseline: the same embedding + mLSTM trunk with a
//! two-way head read at the last word of each phrase.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mlstm::{AdamState, MlstmDims, MlstmParams, MlstmState, Objective, Real};
use crate::trainer::{LossRecord, TrainConfig};
use crate::vocab::{Word, VOCAB_SIZE};

/// Right-pads every phrase with `.` to the longest one.
pub fn pad_batch(phrases: &[&[usize]]) -> Vec<Vec<usize>> {
    let max = phrases.iter().map(|p| p.len()).max().unwrap_or(0);
    phrases
        .iter()
        .map(|p| {
            let mut v = p.to_vec();
            v.resize(max, Word::StepEnd.id());
            v
        })
        .collect()
}

/// Trains from `init_params(cfg.seed)` with a 2-way head. Each epoch shuffles
/// the phrases and walks them in mini-batches of `cfg.batch`, padded per
/// batch; `seq_len` is unused.
pub fn fit_supervised(phrases: &[Vec<usize>], labels: &[u8], cfg: &TrainConfig) -> Result<(MlstmParams<f32>, Vec<LossRecord>)> {
    cfg.validate()?;
    if phrases.len() != labels.len() || phrases.len() < 2 {
        return Err(Error::invalid("need at least two labelled phrases"));
    }
    if phrases.iter().any(Vec::is_empty) {
        return Err(Error::invalid("empty phrase"));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::SingleClass);
    }
    let dims = MlstmDims { vocab: VOCAB_SIZE, embed: cfg.embed, hidden: cfg.hidden, outputs: 2 };
    let mut params = MlstmParams::<f32>::init(dims, cfg.seed);
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..phrases.len()).collect();
    let mut log = Vec::new();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        for (window, chunk) in order.chunks(cfg.batch).enumerate() {
            let batch: Vec<&[usize]> = chunk.iter().map(|&i| phrases[i].as_slice()).collect();
            let padded = pad_batch(&batch);
            let inputs: Vec<&[usize]> = padded.iter().map(Vec::as_slice).collect();
            let targets: Vec<usize> = chunk.iter().map(|&i| labels[i] as usize).collect();
            let pass = params
                .forward_backward(&MlstmState::zeros(chunk.len(), dims.hidden), &inputs, Objective::FinalClass(&targets))
                .map_err(|e| match e {
                    Error::NonFinite { context, tensor } => {
                        Error::NonFinite { context: format!("epoch {epoch}, batch {window}, {context}"), tensor }
                    }
                    other => other,
                })?;
            adam.update(&mut params, &pass.grads, lr);
            log.push(LossRecord { epoch, shard: 0, window, lr, loss: pass.loss as f64 });
        }
    }
    Ok((params, log))
}

/// Probability of the positive class for one unpadded phrase.
pub fn predict_supervised<F: Real>(params: &MlstmParams<F>, ids: &[usize]) -> f64 {
    let state = params.run(ids, None);
    let logits = params.head(&state.h);
    let a = logits[[0, 0]].to_f64().unwrap_or(0.0);
    let b = logits[[0, 1]].to_f64().unwrap_or(0.0);
    super::logreg::sigmoid(b - a)
}
