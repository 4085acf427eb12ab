use super::TrainConfig;
use crate::model::ModelParams;

/// First and second moment estimates, one pair per trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(like: &ModelParams) -> Self {
        let mut m = like.clone();
        m.scale(0.0);
        AdamState {
            v: m.clone(),
            m,
            step: 0,
        }
    }

    /// One bias-corrected Adam update of `params` along `grad`.
    pub fn update(&mut self, params: &mut ModelParams, grad: &ModelParams, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
                let m_hat = m.data[i] / c1;
                let v_hat = v.data[i] / c2;
                p.data[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        }
    }
}
