//! Language-model training: byte-balanced shards, stateful multi-lane
//! streaming with truncated BPTT, stepwise learning-rate decay and held-out
//! evaluation.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlstm::{AdamState, MlstmDims, MlstmParams, MlstmState, Objective, Real};
use crate::vocab::VOCAB_SIZE;

/// Piece indices grouped into training shards and one test shard.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardSet {
    pub train: Vec<Vec<usize>>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl ShardSet {
    /// Total size of each training shard under `sizes`.
    pub fn train_sizes(&self, sizes: &[usize]) -> Vec<usize> {
        self.train.iter().map(|s| s.iter().map(|&i| sizes[i]).sum()).collect()
    }
}

/// Shuffles piece indices with `seed`, holds out `round(N * (1 - train_ratio))`
/// pieces (at least one) for testing and spreads the rest over `k` shards,
/// largest piece first onto the currently lightest shard. `sizes` are the
/// pieces' byte sizes.
pub fn make_shards(sizes: &[usize], train_ratio: f64, k: usize, seed: u64) -> Result<ShardSet> {
    if !(0.0..=1.0).contains(&train_ratio) || k == 0 {
        return Err(Error::invalid("train ratio must lie in [0, 1] and the shard count must be positive"));
    }
    let n = sizes.len();
    if n < k + 1 {
        return Err(Error::TooFewPieces { needed: k + 1, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64 * (1.0 - train_ratio)).round() as usize).clamp(1, n - k);
    let (test, train) = order.split_at(n_test);

    let mut by_size = train.to_vec();
    // stable sort keeps the shuffled order among equal sizes
    by_size.sort_by_key(|&i| std::cmp::Reverse(sizes[i]));
    let mut shards = vec![Vec::new(); k];
    let mut load = vec![0usize; k];
    for i in by_size {
        let lightest = (0..k).min_by_key(|&s| (load[s], shards[s].len())).expect("k > 0");
        load[lightest] += sizes[i];
        shards[lightest].push(i);
    }
    for s in &mut shards {
        s.sort_unstable();
    }
    let mut test = test.to_vec();
    test.sort_unstable();
    Ok(ShardSet { train: shards, test, seed })
}

/// Concatenates the member pieces' token ids in index order.
pub fn shard_stream(pieces: &[Vec<usize>], members: &[usize]) -> Vec<usize> {
    members.iter().flat_map(|&i| pieces[i].iter().copied()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// `lr0 * (1 - epoch / epochs)`, changed once per epoch.
    Linear,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seq_len: usize,
    pub batch: usize,
    pub lr0: f64,
    pub schedule: LrSchedule,
    pub embed: usize,
    pub hidden: usize,
    /// Seeds parameter initialization.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 4, seq_len: 256, batch: 32, lr0: 5e-6, schedule: LrSchedule::Linear, embed: 64, hidden: 4096, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.seq_len == 0 || self.batch == 0 || self.embed == 0 || self.hidden == 0 {
            return Err(Error::invalid("epochs, seq_len, batch, embed and hidden must be positive"));
        }
        if !(self.lr0.is_finite() && self.lr0 >= 0.0) {
            return Err(Error::invalid("lr0 must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn dims(&self) -> MlstmDims {
        MlstmDims::language_model(VOCAB_SIZE, self.embed, self.hidden)
    }

    /// Learning rate used throughout epoch `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.lr0,
            LrSchedule::Linear => self.lr0 * (1.0 - epoch as f64 / self.epochs as f64).max(0.0),
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub shard: usize,
    pub window: usize,
    pub lr: f64,
    pub loss: f64,
}

pub fn write_loss_csv(records: &[LossRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_csv(input: impl std::io::Read) -> Result<Vec<LossRecord>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// A token stream cut into equal contiguous lanes, each providing inputs
/// `seg[..len-1]` and next-token targets `seg[1..]`.
struct Lanes<'a> {
    lanes: Vec<&'a [usize]>,
}

impl<'a> Lanes<'a> {
    fn new(stream: &'a [usize], batch: usize) -> Result<Self> {
        if stream.len() < 2 {
            return Err(Error::invalid("token stream needs at least two tokens"));
        }
        let count = batch.min(stream.len() / 2);
        if count < batch {
            log::warn!("stream of {} tokens supports only {count} of {batch} lanes", stream.len());
        }
        let seg = stream.len() / count;
        Ok(Self { lanes: stream.chunks_exact(seg).take(count).collect() })
    }

    fn positions(&self) -> usize {
        self.lanes[0].len() - 1
    }

    fn windows(&self, seq_len: usize) -> impl Iterator<Item = (Vec<&'a [usize]>, Vec<&'a [usize]>)> + '_ {
        let total = self.positions();
        (0..total.div_ceil(seq_len)).map(move |w| {
            let start = w * seq_len;
            let end = (start + seq_len).min(total);
            let inputs = self.lanes.iter().map(|l| &l[start..end]).collect();
            let targets = self.lanes.iter().map(|l| &l[start + 1..end + 1]).collect();
            (inputs, targets)
        })
    }
}

fn locate(e: Error, epoch: usize, shard: usize, window: usize) -> Error {
    match e {
        Error::NonFinite { context, tensor } => {
            Error::NonFinite { context: format!("epoch {epoch}, shard {shard}, window {window}, {context}"), tensor }
        }
        other => other,
    }
}

/// Trains `params` in place over `shards` (token-id streams). Lane states
/// start at zero for every shard and carry across its windows. After each
/// epoch `on_epoch(epoch, params)` is called, e.g. to write a checkpoint.
pub fn train<F: Real>(
    params: &mut MlstmParams<F>,
    cfg: &TrainConfig,
    shards: &[Vec<usize>],
    mut on_epoch: impl FnMut(usize, &MlstmParams<F>) -> Result<()>,
) -> Result<Vec<LossRecord>> {
    cfg.validate()?;
    let lanes: Vec<Lanes<'_>> = shards.iter().map(|s| Lanes::new(s, cfg.batch)).collect::<Result<_>>()?;
    let mut adam = AdamState::new(params);
    let mut log = Vec::new();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        for (shard, lanes) in lanes.iter().enumerate() {
            let mut state = MlstmState::zeros(lanes.lanes.len(), params.dims.hidden);
            for (window, (inputs, targets)) in lanes.windows(cfg.seq_len).enumerate() {
                let pass = params
                    .forward_backward(&state, &inputs, Objective::NextToken(&targets))
                    .map_err(|e| locate(e, epoch, shard, window))?;
                adam.update(params, &pass.grads, lr);
                if let Some(tensor) = params.first_non_finite() {
                    return Err(Error::NonFinite {
                        context: format!("update after epoch {epoch}, shard {shard}, window {window}"),
                        tensor: tensor.to_string(),
                    });
                }
                let loss = pass.loss.to_f64().unwrap_or(f64::NAN);
                log::debug!("epoch {epoch} shard {shard} window {window} loss {loss:.4}");
                log.push(LossRecord { epoch, shard, window, lr, loss });
                state = pass.final_state;
            }
        }
        on_epoch(epoch, params)?;
    }
    Ok(log)
}

/// Mean of per-window losses over `stream`, lanes laid out as in training.
pub fn evaluate<F: Real>(params: &MlstmParams<F>, stream: &[usize], batch: usize, seq_len: usize) -> Result<f64> {
    if batch == 0 || seq_len == 0 {
        return Err(Error::invalid("batch and seq_len must be positive"));
    }
    let lanes = Lanes::new(stream, batch)?;
    let mut state = MlstmState::zeros(lanes.lanes.len(), params.dims.hidden);
    let mut total = 0.0;
    let mut count = 0usize;
    for (window, (inputs, targets)) in lanes.windows(seq_len).enumerate() {
        let (loss, next) = params.forward_loss(&state, &inputs, Objective::NextToken(&targets)).map_err(|e| locate(e, 0, 0, window))?;
        total += loss.to_f64().unwrap_or(f64::NAN);
        count += 1;
        state = next;
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_pieces_split_evenly() {
        let set = make_shards(&[100; 40], 0.9, 3, 7).unwrap();
        assert_eq!(set.test.len(), 4);
        assert_eq!(set.train.iter().map(Vec::len).collect::<Vec<_>>(), vec![12, 12, 12]);
        assert_eq!(set, make_shards(&[100; 40], 0.9, 3, 7).unwrap());
        assert_ne!(set, make_shards(&[100; 40], 0.9, 3, 8).unwrap());
    }

    #[test]
    fn too_few_pieces() {
        assert!(matches!(make_shards(&[1, 2, 3], 0.9, 3, 0), Err(Error::TooFewPieces { needed: 4, got: 3 })));
        let set = make_shards(&[1, 2, 3, 4], 0.9, 3, 0).unwrap();
        assert_eq!(set.test.len(), 1);
    }

    #[test]
    fn linear_schedule_steps_per_epoch() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(0), 5e-6);
        assert!((cfg.lr_at(1) - 3.75e-6).abs() < 1e-18);
        assert_eq!(cfg.lr_at(4), 0.0);
        let c = TrainConfig { schedule: LrSchedule::Constant, ..cfg };
        assert_eq!(c.lr_at(3), 5e-6);
    }

    #[test]
    fn lanes_cover_contiguous_segments() {
        let stream: Vec<usize> = (0..103).collect();
        let lanes = Lanes::new(&stream, 4).unwrap();
        assert_eq!(lanes.lanes.len(), 4);
        assert_eq!(lanes.lanes[1][0], 25);
        let windows: Vec<_> = lanes.windows(10).collect();
        assert_eq!(windows.len(), 3);
        assert_eq!(windows[2].0[0], &[20, 21, 22, 23][..]);
        assert_eq!(windows[2].1[3], &[96, 97, 98, 99][..]);
        assert_eq!(Lanes::new(&stream[..5], 4).unwrap().lanes.len(), 2);
    }

    #[test]
    fn config_json_defaults_and_unknown_fields() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"hidden": 128}"#).unwrap();
        assert_eq!(cfg.batch, 32);
        assert_eq!(cfg.hidden, 128);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"hiden": 128}"#).is_err());
    }

    #[test]
    fn zero_head_evaluates_to_ln_vocab() {
        let params = MlstmParams::<f32>::init(MlstmDims::language_model(VOCAB_SIZE, 8, 16), 3);
        let stream: Vec<usize> = (0..900).map(|i| (i * 37) % VOCAB_SIZE).collect();
        let loss = evaluate(&params, &stream, 4, 50).unwrap();
        assert!((loss - (VOCAB_SIZE as f64).ln()).abs() < 1e-3);
    }

    #[test]
    fn zero_lr_leaves_params_identical_and_runs_repeat() {
        let cfg = TrainConfig { epochs: 2, seq_len: 16, batch: 2, lr0: 0.0, embed: 4, hidden: 8, ..Default::default() };
        let init = MlstmParams::<f32>::init(cfg.dims(), 1);
        let shards = vec![(0..120).map(|i| i % 50).collect::<Vec<_>>(), (0..80).map(|i| (i * 3) % 90).collect()];
        let mut p = init.clone();
        let mut epochs = Vec::new();
        let log = train(&mut p, &cfg, &shards, |e, _| {
            epochs.push(e);
            Ok(())
        })
        .unwrap();
        assert_eq!(p, init);
        assert_eq!(epochs, vec![0, 1]);
        assert_eq!(log.len(), 2 * (4 + 3));

        let trained = TrainConfig { lr0: 1e-2, ..cfg };
        let run = || {
            let mut p = init.clone();
            let log = train(&mut p, &trained, &shards, |_, _| Ok(())).unwrap();
            (p, log)
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_ne!(a, init);
        assert_eq!(la[la.len() - 1].lr, 5e-3);
    }

    #[test]
    fn evaluate_is_read_only() {
        let p = MlstmParams::<f32>::init(MlstmDims::language_model(VOCAB_SIZE, 4, 8), 2);
        let before = p.clone();
        let stream: Vec<usize> = (0..200).map(|i| i % VOCAB_SIZE).collect();
        evaluate(&p, &stream, 3, 20).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn loss_log_round_trips_through_csv() {
        let log = vec![LossRecord { epoch: 0, shard: 2, window: 5, lr: 5e-6, loss: 5.41 }];
        let mut buf = Vec::new();
        write_loss_csv(&log, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("epoch,shard,window,lr,loss\n"));
        assert_eq!(read_loss_csv(&buf[..]).unwrap(), log);
    }

    proptest! {
        #[test]
        fn shards_are_disjoint_and_balanced(
            sizes in prop::collection::vec(200usize..2000, 60..200),
            seed in 0u64..1000,
        ) {
            let set = make_shards(&sizes, 0.9, 3, seed).unwrap();
            let mut all: Vec<usize> = set.train.iter().flatten().chain(&set.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..sizes.len()).collect::<Vec<_>>());
            let loads = set.train_sizes(&sizes);
            let (lo, hi) = (*loads.iter().min().unwrap() as f64, *loads.iter().max().unwrap() as f64);
            prop_assert!((hi - lo) / hi <= 0.10, "loads {:?}", loads);
        }
    }
}
