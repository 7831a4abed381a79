use super::{real, MlstmParams, Real};

/// Bias-corrected Adam moments for every tensor of an [`MlstmParams`].
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub first: MlstmParams<F>,
    pub second: MlstmParams<F>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &MlstmParams<F>) -> Self {
        Self {
            first: MlstmParams::zeros(params.dims),
            second: MlstmParams::zeros(params.dims),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One Adam step: moments always advance, parameters move by
    /// `lr * m̂ / (sqrt(v̂) + eps)`.
    pub fn update(&mut self, params: &mut MlstmParams<F>, grads: &MlstmParams<F>, lr: f64) {
        self.step += 1;
        let (b1, b2): (F, F) = (real(self.beta1), real(self.beta2));
        let corr1: F = real(1.0 - self.beta1.powi(self.step as i32));
        let corr2: F = real(1.0 - self.beta2.powi(self.step as i32));
        let eps: F = real(self.eps);
        let lr: F = real(lr);
        let one = F::one();
        let tensors = params.tensors_mut().into_iter().zip(grads.tensors()).zip(self.first.tensors_mut()).zip(self.second.tensors_mut());
        for ((((_, mut p), (_, g)), (_, mut m)), (_, mut v)) in tensors {
            ndarray::Zip::from(&mut p).and(&g).and(&mut m).and(&mut v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / corr1;
                let v_hat = *v / corr2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
    }
}
