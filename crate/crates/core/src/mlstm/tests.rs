use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::*;
use crate::vocab::{Vocab, Word, VOCAB_SIZE};

/// Overwrites every tensor with uniform noise in `[-scale, scale]`.
fn randomize(p: &mut MlstmParams<f64>, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, mut t) in p.tensors_mut() {
        t.mapv_inplace(|_| rng.gen_range(-scale..scale));
    }
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Scalar-loop evaluation of one step, written against the equations only.
fn scalar_step(p: &MlstmParams<f64>, h: &[f64], c: &[f64], id: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = p.dims.hidden;
    let de = p.dims.embed;
    let x: Vec<f64> = (0..de).map(|k| p.embedding[[id, k]]).collect();
    let mv = |w: &Array2<f64>, v: &[f64], r: usize| -> f64 { (0..v.len()).map(|k| w[[r, k]] * v[k]).sum() };
    let m: Vec<f64> = (0..n).map(|r| mv(&p.w_mx, &x, r) * mv(&p.w_mh, h, r)).collect();
    let gate = |g: &GateParams<f64>, r: usize| mv(&g.w_x, &x, r) + mv(&g.w_m, &m, r) + g.b[r];
    let mut c2 = vec![0.0; n];
    let mut h2 = vec![0.0; n];
    for r in 0..n {
        let cand = gate(&p.candidate, r).tanh();
        let i = sig(gate(&p.input, r));
        let o = sig(gate(&p.output, r));
        let f = sig(gate(&p.forget, r));
        c2[r] = f * c[r] + i * cand;
        h2[r] = o * c2[r].tanh();
    }
    let y = (0..p.dims.outputs).map(|r| mv(&p.w_y, &h2, r) + p.b_y[r]).collect();
    (h2, c2, y)
}

#[test]
fn zero_params_zero_state() {
    let dims = MlstmDims::language_model(VOCAB_SIZE, 4, 6);
    let p = MlstmParams::<f64>::zeros(dims);
    let (s, y) = p.forward_step(MlstmState::zeros(1, 6), 17);
    assert!(s.h.iter().all(|&v| v == 0.0));
    assert!(s.c.iter().all(|&v| v == 0.0));
    assert!(y.iter().all(|&v| v == 0.0));
}

#[test]
fn matches_scalar_oracle() {
    let dims = MlstmDims::language_model(5, 1, 2);
    let mut p = MlstmParams::<f64>::zeros(dims);
    randomize(&mut p, 3, 1.5);
    let mut state = MlstmState::zeros(1, 2);
    let (mut h, mut c) = (vec![0.0; 2], vec![0.0; 2]);
    for id in [0, 3, 4, 1, 1, 2] {
        let (next, y) = p.forward_step(state, id);
        let (h2, c2, y2) = scalar_step(&p, &h, &c, id);
        for r in 0..2 {
            assert!((next.h[[0, r]] - h2[r]).abs() < 1e-12);
            assert!((next.c[[0, r]] - c2[r]).abs() < 1e-12);
        }
        for (a, b) in y.iter().zip(&y2) {
            assert!((a - b).abs() < 1e-12);
        }
        state = next;
        (h, c) = (h2, c2);
    }
}

#[test]
fn init_is_deterministic_with_uniform_head() {
    let dims = MlstmDims::language_model(VOCAB_SIZE, 8, 16);
    let a = MlstmParams::<f32>::init(dims, 11);
    assert_eq!(a, MlstmParams::<f32>::init(dims, 11));
    assert_ne!(a, MlstmParams::<f32>::init(dims, 12));
    assert!(a.forget.b.iter().all(|&v| v == 1.0));
    assert!(a.candidate.b.iter().all(|&v| v == 0.0));
    let (_, y) = a.forward_step(MlstmState::zeros(1, 16), 60);
    assert!(y.iter().all(|&v| v == 0.0));
    let s = 1.0 / (16f32).sqrt();
    assert!(a.w_mh.iter().all(|v| v.abs() <= s));
}

#[test]
fn loss_at_zero_head_is_ln_vocab() {
    let dims = MlstmDims::language_model(VOCAB_SIZE, 4, 8);
    let mut p = MlstmParams::<f64>::init(dims, 5);
    randomize(&mut p, 9, 0.7);
    p.w_y.fill(0.0);
    p.b_y.fill(0.0);
    let inputs: Vec<usize> = vec![3, 200, 223, 57, 99];
    let targets: Vec<usize> = vec![200, 223, 57, 99, 224];
    let pass = p.forward_backward(&MlstmState::zeros(1, 8), &[&inputs], Objective::NextToken(&[&targets])).unwrap();
    assert!((pass.loss - (VOCAB_SIZE as f64).ln()).abs() < 1e-12);
    assert!((pass.loss - 5.4161).abs() < 1e-4);
    assert!(pass.grads.w_y.iter().any(|&v| v != 0.0));
}

#[test]
fn single_step_toward_argmax_beats_uniform() {
    let dims = MlstmDims::language_model(VOCAB_SIZE, 4, 8);
    let mut p = MlstmParams::<f64>::init(dims, 1);
    randomize(&mut p, 2, 0.5);
    let (_, y) = p.forward_step(MlstmState::zeros(1, 8), 10);
    let best = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let (loss, _) = p.forward_loss(&MlstmState::zeros(1, 8), &[&[10]], Objective::NextToken(&[&[best]])).unwrap();
    assert!(loss < (VOCAB_SIZE as f64).ln());
}

/// Central finite differences on every parameter component.
pub(crate) fn gradient_check(seed: u64, objective_kind: u8) -> f64 {
    let dims = MlstmDims { vocab: 12, embed: 4, hidden: 8, outputs: if objective_kind == 0 { 12 } else { 2 } };
    let mut p = MlstmParams::<f64>::zeros(dims);
    randomize(&mut p, seed, 0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let lanes = 2;
    let len = 5;
    let inputs: Vec<Vec<usize>> = (0..lanes).map(|_| (0..len).map(|_| rng.gen_range(0..12)).collect()).collect();
    let targets: Vec<Vec<usize>> = (0..lanes).map(|_| (0..len).map(|_| rng.gen_range(0..dims.outputs)).collect()).collect();
    let labels: Vec<usize> = (0..lanes).map(|_| rng.gen_range(0..2)).collect();
    let mut init = MlstmState::zeros(lanes, 8);
    init.h.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
    init.c.mapv_inplace(|_| rng.gen_range(-0.5..0.5));

    let in_refs: Vec<&[usize]> = inputs.iter().map(Vec::as_slice).collect();
    let tg_refs: Vec<&[usize]> = targets.iter().map(Vec::as_slice).collect();
    let objective = if objective_kind == 0 { Objective::NextToken(&tg_refs) } else { Objective::FinalClass(&labels) };
    let analytic = p.forward_backward(&init, &in_refs, objective).unwrap().grads;

    let delta = 1e-4;
    let mut worst: f64 = 0.0;
    let names = TENSOR_NAMES;
    for (ti, name) in names.iter().enumerate() {
        let len = p.tensors()[ti].1.len();
        for k in 0..len {
            let eval = |shift: f64| {
                let mut q = p.clone();
                {
                    let mut tensors = q.tensors_mut();
                    let t = &mut tensors[ti].1;
                    let v = t.iter_mut().nth(k).unwrap();
                    *v += shift;
                }
                q.forward_loss(&init, &in_refs, objective).unwrap().0
            };
            let numeric = (eval(delta) - eval(-delta)) / (2.0 * delta);
            let a = *analytic.tensors()[ti].1.iter().nth(k).unwrap();
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
            assert!(rel < 1e-4, "{name}[{k}]: analytic {a} numeric {numeric} rel {rel}");
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..5 {
        gradient_check(seed, 0);
    }
}

#[test]
fn classification_gradients_match_finite_differences() {
    gradient_check(42, 1);
}

#[test]
fn adam_matches_hand_trace() {
    let dims = MlstmDims { vocab: 1, embed: 1, hidden: 1, outputs: 1 };
    let mut p = MlstmParams::<f64>::zeros(dims);
    let mut grads = MlstmParams::<f64>::zeros(dims);
    for (_, mut t) in grads.tensors_mut() {
        t.fill(1.0);
    }
    let mut adam = AdamState::new(&p);
    adam.update(&mut p, &grads, 0.1);
    adam.update(&mut p, &grads, 0.1);

    // by hand: m1 = 0.1, v1 = 0.001 -> m̂ = v̂ = 1; m2 = 0.19, v2 = 0.001999 -> m̂ = v̂ = 1
    let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.0f64);
    for t in 1..=2 {
        m = 0.9 * m + 0.1;
        v = 0.999 * v + 0.001;
        let mh = m / (1.0 - 0.9f64.powi(t));
        let vh = v / (1.0 - 0.999f64.powi(t));
        x -= 0.1 * mh / (vh.sqrt() + 1e-8);
    }
    assert!((x + 0.2).abs() < 1e-7);
    for (_, t) in p.tensors() {
        assert!((t.iter().next().unwrap() - x).abs() < 1e-12);
    }
    assert_eq!(adam.step, 2);
}

#[test]
fn adam_zero_lr_and_zero_grad_leave_params() {
    let dims = MlstmDims::language_model(12, 4, 8);
    let mut p = MlstmParams::<f64>::init(dims, 3);
    let before = p.clone();
    let zero = MlstmParams::<f64>::zeros(dims);
    let mut adam = AdamState::new(&p);
    adam.update(&mut p, &zero, 0.1);
    assert_eq!(p, before);

    let mut ones = MlstmParams::<f64>::zeros(dims);
    for (_, mut t) in ones.tensors_mut() {
        t.fill(0.5);
    }
    adam.update(&mut p, &ones, 0.0);
    assert_eq!(p, before);
    assert!(adam.first.w_mh.iter().all(|&v| v != 0.0));
}

#[test]
fn argmax_sampling_is_deterministic() {
    let dims = MlstmDims::language_model(VOCAB_SIZE, 4, 8);
    let mut p = MlstmParams::<f64>::init(dims, 1);
    randomize(&mut p, 4, 0.6);
    let cfg = SampleConfig { length: 50, temperature: 0.0, seed: 1 };
    let a = sample(&p, &[Word::StepEnd.id()], &cfg, None);
    let b = sample(&p, &[Word::StepEnd.id()], &SampleConfig { seed: 99, ..cfg }, None);
    assert_eq!(a, b);
    let t1 = SampleConfig { length: 50, temperature: 1.0, seed: 8 };
    assert_eq!(sample(&p, &[Word::StepEnd.id()], &t1, None), sample(&p, &[Word::StepEnd.id()], &t1, None));
}

#[test]
fn zero_offsets_do_not_change_samples() {
    let dims = MlstmDims::language_model(VOCAB_SIZE, 4, 8);
    let mut p = MlstmParams::<f64>::init(dims, 1);
    randomize(&mut p, 4, 0.6);
    let cfg = SampleConfig { length: 64, temperature: 1.0, seed: 5 };
    let zeros: CellOffsets = vec![(1, 0.0), (5, 0.0)];
    assert_eq!(sample(&p, &[223], &cfg, None), sample(&p, &[223], &cfg, Some(&zeros)));
    let big: CellOffsets = vec![(1, 3.0), (5, -3.0)];
    assert_ne!(sample(&p, &[223], &cfg, None), sample(&p, &[223], &cfg, Some(&big)));
}

#[test]
fn zero_head_samples_are_uniform() {
    let dims = MlstmDims::language_model(VOCAB_SIZE, 4, 8);
    let p = MlstmParams::<f32>::init(dims, 2);
    let mut counts = vec![0u64; VOCAB_SIZE];
    let mut total = 0usize;
    let mut seed = 0;
    while total < 100_000 {
        let out = sample(&p, &[223], &SampleConfig { length: 100_000 - total, temperature: 1.0, seed }, None);
        for id in &out {
            counts[*id] += 1;
        }
        total += out.len();
        seed += 1;
    }
    let expected = total as f64 / VOCAB_SIZE as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p_value = ChiSquared::new((VOCAB_SIZE - 1) as f64).unwrap().sf(stat);
    assert!(p_value > 0.01, "chi2 {stat}, p {p_value}");
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let vocab = Vocab::build();
    let dims = MlstmDims::language_model(VOCAB_SIZE, 6, 10);
    let mut p = MlstmParams::<f32>::init(dims, 8);
    p.w_y.mapv_inplace(|_| 0.123_456_79);
    let bytes = save_checkpoint(&p, &vocab.hash(), &serde_json::json!({"lr": 5e-6}));
    assert_eq!(&bytes[..8], b"VMLSTM01");
    let ck = load_checkpoint(&bytes, &vocab.hash()).unwrap();
    for ((_, a), (_, b)) in ck.params.tensors().into_iter().zip(p.tensors()) {
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert_eq!(ck.hyperparams["lr"], 5e-6);
}

#[test]
fn checkpoint_errors() {
    let vocab = Vocab::build();
    let dims = MlstmDims::language_model(VOCAB_SIZE, 64, 128);
    let p = MlstmParams::<f32>::init(dims, 1);
    let bytes = save_checkpoint(&p, &vocab.hash(), &serde_json::Value::Null);
    let ck = load_checkpoint(&bytes, &vocab.hash()).unwrap();
    assert_eq!((ck.params.dims.embed, ck.params.dims.hidden), (64, 128));

    let truncated = &bytes[..bytes.len() - 10];
    assert!(matches!(load_checkpoint(truncated, &vocab.hash()), Err(crate::Error::CorruptCheckpoint(_))));
    assert!(matches!(load_checkpoint(&bytes[..12], &vocab.hash()), Err(crate::Error::CorruptCheckpoint(_))));
    assert!(matches!(load_checkpoint(&bytes, "other"), Err(crate::Error::VocabMismatch { .. })));
    let mut v2 = bytes.clone();
    v2[6..8].copy_from_slice(b"02");
    assert!(matches!(load_checkpoint(&v2, &vocab.hash()), Err(crate::Error::CheckpointVersion { found: 2, .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn hidden_state_stays_in_open_unit_interval(seed in 0u64..1000, ids in prop::collection::vec(0usize..VOCAB_SIZE, 1..40)) {
        let dims = MlstmDims::language_model(VOCAB_SIZE, 4, 8);
        let mut p = MlstmParams::<f64>::init(dims, seed);
        randomize(&mut p, seed, 3.0);
        let s = p.run(&ids, None);
        prop_assert!(s.h.iter().all(|v| v.abs() < 1.0));
    }
}
