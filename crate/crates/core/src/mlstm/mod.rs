//! Single-layer multiplicative LSTM with a token embedding and a linear
//! output head.
//!
//! One step, for input token `id`, previous hidden `h` and cell `c`:
//!
//! ```text
//! x  = E[id]
//! m  = (W_mx x) ⊙ (W_mh h)
//! ĥ  = tanh(W_hx x + W_hm m + b_h)
//! i  = σ(W_ix x + W_im m + b_i)
//! o  = σ(W_ox x + W_om m + b_o)
//! f  = σ(W_fx x + W_fm m + b_f)
//! c' = f ⊙ c + i ⊙ ĥ
//! h' = o ⊙ tanh(c')
//! y  = W_y h' + b_y
//! ```
//!
//! All computations run on `lanes × width` matrices so a mini-batch of
//! independent sequences advances in one set of matrix products. A single
//! sequence is the one-lane case.

mod adam;
mod bptt;
mod checkpoint;
mod sample;
mod step;

use std::fmt::Debug;

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, NdFloat};
use num_traits::FromPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::AdamState;
pub use bptt::{Objective, Pass};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use sample::{sample, CellOffsets, SampleConfig};

/// Floating-point type the model can run in.
pub trait Real: NdFloat + FromPrimitive + Default {}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn real<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("representable constant")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlstmDims {
    /// Rows of the embedding table.
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    /// Width of the output head: the vocabulary for language modelling, 2
    /// for the supervised sentiment classifier.
    pub outputs: usize,
}

impl MlstmDims {
    pub fn language_model(vocab: usize, embed: usize, hidden: usize) -> Self {
        Self { vocab, embed, hidden, outputs: vocab }
    }
}

/// The affine maps feeding one gate (or the candidate) from `x` and `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams<F> {
    pub w_x: Array2<F>,
    pub w_m: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Real> GateParams<F> {
    fn zeros(d: &MlstmDims) -> Self {
        Self { w_x: Array2::zeros((d.hidden, d.embed)), w_m: Array2::zeros((d.hidden, d.hidden)), b: Array1::zeros(d.hidden) }
    }
}

/// Every trainable tensor of embedding + mLSTM + head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlstmParams<F> {
    pub dims: MlstmDims,
    pub embedding: Array2<F>,
    pub w_mx: Array2<F>,
    pub w_mh: Array2<F>,
    pub candidate: GateParams<F>,
    pub input: GateParams<F>,
    pub output: GateParams<F>,
    pub forget: GateParams<F>,
    pub w_y: Array2<F>,
    pub b_y: Array1<F>,
}

/// Tensor names in storage order.
pub const TENSOR_NAMES: [&str; 17] =
    ["E", "W_mx", "W_mh", "W_hx", "W_hm", "b_h", "W_ix", "W_im", "b_i", "W_ox", "W_om", "b_o", "W_fx", "W_fm", "b_f", "W_y", "b_y"];

impl<F: Real> MlstmParams<F> {
    pub fn zeros(dims: MlstmDims) -> Self {
        Self {
            dims,
            embedding: Array2::zeros((dims.vocab, dims.embed)),
            w_mx: Array2::zeros((dims.hidden, dims.embed)),
            w_mh: Array2::zeros((dims.hidden, dims.hidden)),
            candidate: GateParams::zeros(&dims),
            input: GateParams::zeros(&dims),
            output: GateParams::zeros(&dims),
            forget: GateParams::zeros(&dims),
            w_y: Array2::zeros((dims.outputs, dims.hidden)),
            b_y: Array1::zeros(dims.outputs),
        }
    }

    /// Uniform `[-s, s]` weights with `s = 1/sqrt(fan_in)` (the embedding is
    /// a map from a one-hot input, fan-in 1), forget bias 1, other biases 0
    /// and a zero output head.
    pub fn init(dims: MlstmDims, seed: u64) -> Self {
        assert!(dims.embed >= 1 && dims.hidden >= 1 && dims.vocab >= 1 && dims.outputs >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(dims);
        let mut fill = |a: &mut Array2<F>, fan_in: usize| {
            let s = 1.0 / (fan_in as f64).sqrt();
            a.mapv_inplace(|_| real(rng.gen_range(-s..=s)));
        };
        fill(&mut p.embedding, 1);
        fill(&mut p.w_mx, dims.embed);
        fill(&mut p.w_mh, dims.hidden);
        for g in [&mut p.candidate, &mut p.input, &mut p.output, &mut p.forget] {
            fill(&mut g.w_x, dims.embed);
            fill(&mut g.w_m, dims.hidden);
        }
        p.forget.b.fill(F::one());
        p
    }

    pub fn tensors(&self) -> [(&'static str, ArrayViewD<'_, F>); 17] {
        fn g<F>(g: &GateParams<F>) -> [ArrayViewD<'_, F>; 3] {
            [g.w_x.view().into_dyn(), g.w_m.view().into_dyn(), g.b.view().into_dyn()]
        }
        let [hx, hm, bh] = g(&self.candidate);
        let [ix, im, bi] = g(&self.input);
        let [ox, om, bo] = g(&self.output);
        let [fx, fm, bf] = g(&self.forget);
        let views = [
            self.embedding.view().into_dyn(),
            self.w_mx.view().into_dyn(),
            self.w_mh.view().into_dyn(),
            hx,
            hm,
            bh,
            ix,
            im,
            bi,
            ox,
            om,
            bo,
            fx,
            fm,
            bf,
            self.w_y.view().into_dyn(),
            self.b_y.view().into_dyn(),
        ];
        let mut i = 0;
        views.map(|v| {
            i += 1;
            (TENSOR_NAMES[i - 1], v)
        })
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, ArrayViewMutD<'_, F>); 17] {
        fn g<F>(g: &mut GateParams<F>) -> [ArrayViewMutD<'_, F>; 3] {
            [g.w_x.view_mut().into_dyn(), g.w_m.view_mut().into_dyn(), g.b.view_mut().into_dyn()]
        }
        let [hx, hm, bh] = g(&mut self.candidate);
        let [ix, im, bi] = g(&mut self.input);
        let [ox, om, bo] = g(&mut self.output);
        let [fx, fm, bf] = g(&mut self.forget);
        let views = [
            self.embedding.view_mut().into_dyn(),
            self.w_mx.view_mut().into_dyn(),
            self.w_mh.view_mut().into_dyn(),
            hx,
            hm,
            bh,
            ix,
            im,
            bi,
            ox,
            om,
            bo,
            fx,
            fm,
            bf,
            self.w_y.view_mut().into_dyn(),
            self.b_y.view_mut().into_dyn(),
        ];
        let mut i = 0;
        views.map(|v| {
            i += 1;
            (TENSOR_NAMES[i - 1], v)
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.tensors().into_iter().find(|(_, t)| t.iter().any(|v| !v.is_finite())).map(|(n, _)| n)
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn scaled_add(&mut self, scale: F, other: &Self) {
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, &b);
        }
    }

    pub fn cast<G: Real>(&self) -> MlstmParams<G> {
        let mut out = MlstmParams::<G>::zeros(self.dims);
        for ((_, mut dst), (_, src)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            dst.zip_mut_with(&src, |d, s| *d = G::from_f64(s.to_f64().expect("finite cast")).expect("cast"));
        }
        out
    }
}

/// Hidden and cell vectors, one row per lane.
#[derive(Debug, Clone, PartialEq)]
pub struct MlstmState<F> {
    pub h: Array2<F>,
    pub c: Array2<F>,
}

impl<F: Real> MlstmState<F> {
    pub fn zeros(lanes: usize, hidden: usize) -> Self {
        Self { h: Array2::zeros((lanes, hidden)), c: Array2::zeros((lanes, hidden)) }
    }

    pub fn lanes(&self) -> usize {
        self.h.nrows()
    }
}

#[cfg(test)]
mod tests;
