//! Task losses and their gradients.

use crate::error::{CpaError, Result};

/// Probability clip applied before the logarithm.
pub const PROB_EPS: f64 = 1e-7;

/// Categorical focal loss averaged over the batch.
///
/// `targets` and `probs` are `[batch, classes]` row-major; target rows are
/// one-hot.
pub fn focal_loss(targets: &[f64], probs: &[f64], classes: usize, gamma: f64) -> f64 {
    let batch = targets.len() / classes;
    if batch == 0 {
        return 0.0;
    }
    let total: f64 = targets
        .iter()
        .zip(probs)
        .filter(|(&q, _)| q != 0.0)
        .map(|(&q, &p)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -q * (1.0 - p).powf(gamma) * p.ln()
        })
        .sum();
    total / batch as f64
}

/// Gradient of [`focal_loss`] with respect to the softmax logits.
pub fn focal_loss_grad_logits(targets: &[f64], probs: &[f64], classes: usize, gamma: f64) -> Vec<f64> {
    let batch = targets.len() / classes;
    let mut grad = vec![0.0; targets.len()];
    for b in 0..batch {
        let q = &targets[b * classes..(b + 1) * classes];
        let p = &probs[b * classes..(b + 1) * classes];
        // dL/dp_c for each class, zero where the clip is active
        let dldp: Vec<f64> = (0..classes)
            .map(|c| {
                if q[c] == 0.0 || p[c] < PROB_EPS || p[c] > 1.0 - PROB_EPS {
                    return 0.0;
                }
                let one_minus = 1.0 - p[c];
                let focal_term = if gamma == 0.0 {
                    0.0
                } else {
                    gamma * one_minus.powf(gamma - 1.0) * p[c].ln()
                };
                q[c] * (focal_term - one_minus.powf(gamma) / p[c]) / batch as f64
            })
            .collect();
        let weighted: f64 = dldp.iter().zip(p).map(|(d, pc)| d * pc).sum();
        for j in 0..classes {
            grad[b * classes + j] = p[j] * (dldp[j] - weighted);
        }
    }
    grad
}

/// Mean squared error between capability labels and predictions.
pub fn mse_log_ber(rho: &[f64], rho_hat: &[f64]) -> Result<f64> {
    if rho.len() != rho_hat.len() {
        return Err(CpaError::InputSize {
            expected: rho.len(),
            got: rho_hat.len(),
        });
    }
    if rho.is_empty() {
        return Ok(0.0);
    }
    Ok(rho.iter().zip(rho_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / rho.len() as f64)
}

pub fn mse_grad(rho: &[f64], rho_hat: &[f64]) -> Vec<f64> {
    let n = rho.len() as f64;
    rho.iter().zip(rho_hat).map(|(r, p)| 2.0 * (p - r) / n).collect()
}

/// Weight `1 / (amplification * variance)` applied to the regression loss.
pub fn regression_weight(amplification: f64, reg_variance: f64) -> Result<f64> {
    let denom = amplification * reg_variance;
    if !(denom > 0.0 && denom.is_finite()) || amplification <= 0.0 {
        return Err(CpaError::InvalidConfig(format!(
            "regression weighting needs amplification * variance > 0, got {amplification} * {reg_variance}"
        )));
    }
    Ok(1.0 / denom)
}

/// `L_cl + L_reg / (amplification * variance) + l2_penalty`.
pub fn total_loss(
    l_cls: f64,
    l_reg: f64,
    amplification: f64,
    reg_variance: f64,
    l2_penalty: f64,
) -> Result<f64> {
    Ok(l_cls + regression_weight(amplification, reg_variance)? * l_reg + l2_penalty)
}
