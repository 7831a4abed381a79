use ndarray::{Array1, Array2, Axis};

use super::{GateParams, MlstmParams, MlstmState, Real};

/// Everything one batched step produces, kept for the backward pass.
pub(crate) struct StepCache<F> {
    pub ids: Vec<usize>,
    pub x: Array2<F>,
    pub h_prev: Array2<F>,
    pub c_prev: Array2<F>,
    pub mx: Array2<F>,
    pub mh: Array2<F>,
    pub m: Array2<F>,
    pub cand: Array2<F>,
    pub ig: Array2<F>,
    pub og: Array2<F>,
    pub fg: Array2<F>,
    pub c: Array2<F>,
    pub tc: Array2<F>,
    pub h: Array2<F>,
}

pub(crate) fn sigmoid<F: Real>(v: F) -> F {
    F::one() / (F::one() + (-v).exp())
}

fn affine<F: Real>(g: &GateParams<F>, x: &Array2<F>, m: &Array2<F>) -> Array2<F> {
    let mut a = x.dot(&g.w_x.t());
    a += &m.dot(&g.w_m.t());
    a += &g.b;
    a
}

impl<F: Real> MlstmParams<F> {
    /// Advances every lane by one token. `offsets` are added to the listed
    /// cell dimensions right after the cell update, before `h'` is formed.
    pub(crate) fn step_cached(&self, ids: &[usize], h_prev: Array2<F>, c_prev: Array2<F>, offsets: Option<&[(usize, F)]>) -> StepCache<F> {
        debug_assert_eq!(ids.len(), h_prev.nrows());
        let x = self.embedding.select(Axis(0), ids);
        let mx = x.dot(&self.w_mx.t());
        let mh = h_prev.dot(&self.w_mh.t());
        let m = &mx * &mh;
        let cand = affine(&self.candidate, &x, &m).mapv_into(F::tanh);
        let ig = affine(&self.input, &x, &m).mapv_into(sigmoid);
        let og = affine(&self.output, &x, &m).mapv_into(sigmoid);
        let fg = affine(&self.forget, &x, &m).mapv_into(sigmoid);
        let mut c = &fg * &c_prev + &ig * &cand;
        if let Some(offsets) = offsets {
            for &(j, delta) in offsets {
                c.column_mut(j).mapv_inplace(|v| v + delta);
            }
        }
        let tc = c.mapv(F::tanh);
        let h = &og * &tc;
        StepCache { ids: ids.to_vec(), x, h_prev, c_prev, mx, mh, m, cand, ig, og, fg, c, tc, h }
    }

    pub(crate) fn head(&self, h: &Array2<F>) -> Array2<F> {
        let mut y = h.dot(&self.w_y.t());
        y += &self.b_y;
        y
    }

    /// Batched step without caching: returns the new state and the logits.
    pub fn step(&self, state: MlstmState<F>, ids: &[usize], offsets: Option<&[(usize, F)]>) -> (MlstmState<F>, Array2<F>) {
        let cache = self.step_cached(ids, state.h, state.c, offsets);
        let logits = self.head(&cache.h);
        (MlstmState { h: cache.h, c: cache.c }, logits)
    }

    /// One token for a single sequence.
    pub fn forward_step(&self, state: MlstmState<F>, id: usize) -> (MlstmState<F>, Array1<F>) {
        let (next, logits) = self.step(state, &[id], None);
        (next, logits.row(0).to_owned())
    }

    /// Runs a whole sequence from the zero state and returns the final state.
    pub fn run(&self, ids: &[usize], offsets: Option<&[(usize, F)]>) -> MlstmState<F> {
        let mut state = MlstmState::zeros(1, self.dims.hidden);
        for &id in ids {
            let cache = self.step_cached(&[id], state.h, state.c, offsets);
            state = MlstmState { h: cache.h, c: cache.c };
        }
        state
    }
}
