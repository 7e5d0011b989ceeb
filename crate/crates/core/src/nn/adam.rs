use serde::{Deserialize, Serialize};

use crate::error::{CpaError, Result};
use crate::nn::model::{Gradients, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected ADAM update. Tensors for which `frozen` returns true
/// (and non-learnable running statistics) are left untouched, moments
/// included. The step counter advances regardless.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    cfg: &AdamConfig,
    frozen: impl Fn(usize) -> bool,
) -> Result<()> {
    if grads.0.len() != params.tensors.len()
        || grads.0.iter().zip(&params.tensors).any(|(g, t)| g.len() != t.values.len())
    {
        return Err(CpaError::ShapeMismatch("gradient set does not match parameters".into()));
    }
    params.step += 1;
    let t = params.step as i32;
    let correct1 = 1.0 - cfg.beta1.powi(t);
    let correct2 = 1.0 - cfg.beta2.powi(t);
    for (i, tensor) in params.tensors.iter_mut().enumerate() {
        if !tensor.kind.learnable() || frozen(i) {
            continue;
        }
        let m = &mut params.adam_m[i];
        let v = &mut params.adam_v[i];
        for ((w, g), (mi, vi)) in tensor.values.iter_mut().zip(&grads.0[i]).zip(m.iter_mut().zip(v.iter_mut())) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
            let m_hat = *mi / correct1;
            let v_hat = *vi / correct2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
