use ndarray::ArrayView1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MlstmParams, MlstmState, Real};
use crate::vocab::Word;

/// Sparse additive perturbation of cell dimensions: `(neuron, delta)`.
pub type CellOffsets = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    /// Maximum number of generated tokens.
    pub length: usize,
    /// Softmax temperature; values at or below `1e-6` select the argmax.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { length: 1000, temperature: 1.0, seed: 0 }
    }
}

pub(crate) fn draw(logits: ArrayView1<'_, f64>, temperature: f64, rng: &mut impl Rng) -> usize {
    if temperature <= 1e-6 {
        return logits.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best }).0;
    }
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let weights: Vec<f64> = logits.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Feeds `seed_ids` then draws up to `cfg.length` tokens from
/// `softmax(logits / temperature)`, stopping after an end-of-piece token.
/// With `offsets`, each listed cell dimension is shifted after every cell
/// update (seed tokens included). The seed is not part of the output.
pub fn sample<F: Real>(params: &MlstmParams<F>, seed_ids: &[usize], cfg: &SampleConfig, offsets: Option<&[(usize, f64)]>) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let offsets: Option<Vec<(usize, F)>> = offsets.map(|o| o.iter().map(|&(j, d)| (j, F::from_f64(d).expect("offset"))).collect());
    let offsets = offsets.as_deref();
    let piece_end = Word::PieceEnd.id();

    let mut state = MlstmState::zeros(1, params.dims.hidden);
    let mut logits = params.b_y.mapv(|v| v.to_f64().unwrap_or(0.0));
    for &id in seed_ids {
        let (next, y) = params.step(state, &[id], offsets);
        state = next;
        logits = y.row(0).mapv(|v| v.to_f64().unwrap_or(f64::NAN));
    }

    let mut out = Vec::with_capacity(cfg.length);
    while out.len() < cfg.length {
        let id = draw(logits.view(), cfg.temperature, &mut rng);
        out.push(id);
        if id == piece_end || out.len() == cfg.length {
            break;
        }
        let (next, y) = params.step(state, &[id], offsets);
        state = next;
        logits = y.row(0).mapv(|v| v.to_f64().unwrap_or(f64::NAN));
    }
    out
}
