use ndarray::{linalg::general_mat_mul, Array2, Axis};

use super::step::StepCache;
use super::{real, MlstmParams, MlstmState, Real};
use crate::error::{Error, Result};

/// What the window is scored against.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Next-token targets, one row per lane, aligned with the inputs.
    NextToken(&'a [&'a [usize]]),
    /// One class label per lane, scored from the head at the last step only.
    FinalClass(&'a [usize]),
}

/// Result of one forward/backward pass over a window.
#[derive(Debug, Clone)]
pub struct Pass<F> {
    /// Mean cross-entropy in nats.
    pub loss: F,
    pub grads: MlstmParams<F>,
    pub final_state: MlstmState<F>,
}

/// Sum of cross-entropies of each row and `scale * (softmax - onehot)`.
pub(crate) fn softmax_xent<F: Real>(logits: &Array2<F>, targets: &[usize], scale: F) -> (F, Array2<F>) {
    let mut grad = logits.clone();
    let mut total = F::zero();
    for ((mut row, logit_row), &target) in grad.axis_iter_mut(Axis(0)).zip(logits.axis_iter(Axis(0))).zip(targets) {
        let max = logit_row.fold(F::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        total += sum.ln() + max - logit_row[target];
        row.mapv_inplace(|v| v / sum * scale);
        row[target] -= scale;
    }
    (total, grad)
}

impl<F: Real> MlstmParams<F> {
    fn check_window(&self, init: &MlstmState<F>, inputs: &[&[usize]], objective: &Objective<'_>) -> Result<usize> {
        let lanes = inputs.len();
        let len = inputs.first().map_or(0, |l| l.len());
        if lanes == 0 || len == 0 || inputs.iter().any(|l| l.len() != len) {
            return Err(Error::invalid("window needs at least one lane and equal, nonzero lane lengths"));
        }
        if init.lanes() != lanes || init.h.ncols() != self.dims.hidden {
            return Err(Error::invalid("initial state does not match lanes × hidden"));
        }
        if inputs.iter().flat_map(|l| l.iter()).any(|&id| id >= self.dims.vocab) {
            return Err(Error::invalid("input id outside the embedding table"));
        }
        match objective {
            Objective::NextToken(targets) => {
                if targets.len() != lanes || targets.iter().any(|t| t.len() != len) {
                    return Err(Error::invalid("targets must match inputs"));
                }
                if targets.iter().flat_map(|l| l.iter()).any(|&id| id >= self.dims.outputs) {
                    return Err(Error::invalid("target id outside the output head"));
                }
            }
            Objective::FinalClass(labels) => {
                if labels.len() != lanes || labels.iter().any(|&c| c >= self.dims.outputs) {
                    return Err(Error::invalid("one in-range label per lane required"));
                }
            }
        }
        Ok(len)
    }

    fn non_finite(&self, position: usize) -> Error {
        Error::NonFinite { context: format!("token position {position}"), tensor: self.first_non_finite().unwrap_or("logits").to_string() }
    }

    /// Mean loss over the window without building gradients.
    pub fn forward_loss(&self, init: &MlstmState<F>, inputs: &[&[usize]], objective: Objective<'_>) -> Result<(F, MlstmState<F>)> {
        let len = self.check_window(init, inputs, &objective)?;
        let lanes = inputs.len();
        let mut state = init.clone();
        let mut total = F::zero();
        for t in 0..len {
            let ids: Vec<usize> = inputs.iter().map(|l| l[t]).collect();
            let (next, logits) = self.step(state, &ids, None);
            state = next;
            let targets: Option<Vec<usize>> = match objective {
                Objective::NextToken(tg) => Some(tg.iter().map(|l| l[t]).collect()),
                Objective::FinalClass(labels) if t + 1 == len => Some(labels.to_vec()),
                Objective::FinalClass(_) => None,
            };
            if let Some(targets) = targets {
                let (loss, _) = softmax_xent(&logits, &targets, F::zero());
                if !loss.is_finite() {
                    return Err(self.non_finite(t));
                }
                total += loss;
            }
        }
        let count = match objective {
            Objective::NextToken(_) => lanes * len,
            Objective::FinalClass(_) => lanes,
        };
        Ok((total / real(count as f64), state))
    }

    /// Mean cross-entropy over the window and its exact gradient with respect
    /// to every tensor. Gradients do not flow into `init`; the final state is
    /// returned so the caller can carry it into the next window.
    pub fn forward_backward(&self, init: &MlstmState<F>, inputs: &[&[usize]], objective: Objective<'_>) -> Result<Pass<F>> {
        let len = self.check_window(init, inputs, &objective)?;
        let lanes = inputs.len();
        let n = self.dims.hidden;
        let count = match objective {
            Objective::NextToken(_) => lanes * len,
            Objective::FinalClass(_) => lanes,
        };
        let scale: F = real(1.0 / count as f64);

        let mut caches: Vec<StepCache<F>> = Vec::with_capacity(len);
        let mut dlogits: Vec<Option<Array2<F>>> = Vec::with_capacity(len);
        let mut total = F::zero();
        let (mut h, mut c) = (init.h.clone(), init.c.clone());
        for t in 0..len {
            let ids: Vec<usize> = inputs.iter().map(|l| l[t]).collect();
            let cache = self.step_cached(&ids, h, c, None);
            let targets: Option<Vec<usize>> = match objective {
                Objective::NextToken(tg) => Some(tg.iter().map(|l| l[t]).collect()),
                Objective::FinalClass(labels) if t + 1 == len => Some(labels.to_vec()),
                Objective::FinalClass(_) => None,
            };
            let dl = targets.map(|targets| {
                let (loss, grad) = softmax_xent(&self.head(&cache.h), &targets, scale);
                total += loss;
                grad
            });
            if !total.is_finite() {
                return Err(self.non_finite(t));
            }
            dlogits.push(dl);
            h = cache.h.clone();
            c = cache.c.clone();
            caches.push(cache);
        }
        let final_state = MlstmState { h, c };

        let one = F::one();
        let mut g = MlstmParams::zeros(self.dims);
        let mut dh_next = Array2::<F>::zeros((lanes, n));
        let mut dc_next = Array2::<F>::zeros((lanes, n));
        for (cache, dl) in caches.iter().zip(&dlogits).rev() {
            let mut dh = dh_next;
            if let Some(dl) = dl {
                general_mat_mul(one, &dl.t(), &cache.h, one, &mut g.w_y);
                g.b_y += &dl.sum_axis(Axis(0));
                general_mat_mul(one, dl, &self.w_y, one, &mut dh);
            }
            let d_og = &dh * &cache.tc;
            let mut dc = &dh * &cache.og;
            dc.zip_mut_with(&cache.tc, |d, &tc| *d *= one - tc * tc);
            dc += &dc_next;

            let d_fg = &dc * &cache.c_prev;
            let d_ig = &dc * &cache.cand;
            let d_cand = &dc * &cache.ig;
            let dc_prev = &dc * &cache.fg;

            let da_cand = d_cand * &cache.cand.mapv(|v| one - v * v);
            let da_i = d_ig * &cache.ig.mapv(|v| v * (one - v));
            let da_o = d_og * &cache.og.mapv(|v| v * (one - v));
            let da_f = d_fg * &cache.fg.mapv(|v| v * (one - v));

            let mut dm = Array2::<F>::zeros((lanes, n));
            let mut dx = Array2::<F>::zeros((lanes, self.dims.embed));
            for (da, params, grads) in [
                (&da_cand, &self.candidate, &mut g.candidate),
                (&da_i, &self.input, &mut g.input),
                (&da_o, &self.output, &mut g.output),
                (&da_f, &self.forget, &mut g.forget),
            ] {
                general_mat_mul(one, &da.t(), &cache.x, one, &mut grads.w_x);
                general_mat_mul(one, &da.t(), &cache.m, one, &mut grads.w_m);
                grads.b += &da.sum_axis(Axis(0));
                general_mat_mul(one, da, &params.w_m, one, &mut dm);
                general_mat_mul(one, da, &params.w_x, one, &mut dx);
            }

            let d_mx = &dm * &cache.mh;
            let d_mh = &dm * &cache.mx;
            general_mat_mul(one, &d_mx.t(), &cache.x, one, &mut g.w_mx);
            general_mat_mul(one, &d_mx, &self.w_mx, one, &mut dx);
            general_mat_mul(one, &d_mh.t(), &cache.h_prev, one, &mut g.w_mh);
            let dh_prev = d_mh.dot(&self.w_mh);

            for (lane, &id) in cache.ids.iter().enumerate() {
                let mut row = g.embedding.row_mut(id);
                row += &dx.row(lane);
            }
            dh_next = dh_prev;
            dc_next = dc_prev;
        }

        Ok(Pass { loss: total * scale, grads: g, final_state })
    }
}
