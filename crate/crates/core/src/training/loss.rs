//! Joint CTR + intention log-loss.

use crate::error::{Error, Result};
use crate::models::ForwardTrace;

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Binary cross-entropy of one prediction.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = clamp(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// `∂bce/∂p`; zero where the clamp is active.
pub fn bce_grad(p: f64, y: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        0.0
    } else {
        -y / p + (1.0 - y) / (1.0 - p)
    }
}

fn check_labels(name: &str, labels: &[f64], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Validation(format!("{name}: {} labels for {n} rows", labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Validation(format!("{name}: label {bad} not in {{0,1}}")));
    }
    Ok(())
}

/// Loss and its gradients w.r.t. `y_hat` and (if present) `y_int`.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub d_y_hat: Vec<f64>,
    pub d_y_int: Option<Vec<f64>>,
}

/// `mean_rows[ BCE(y_hat, y) + α·BCE(y_int, y_int_true) ]`.
///
/// The intention term exists only for the full model; `NO_INTENT_LOSS` forces
/// α to zero and variants without an intention net have no such term.
pub fn multitask_loss(trace: &ForwardTrace, clicks: &[f64], intents: &[f64], alpha: f64) -> Result<f64> {
    multitask_loss_grad(trace, clicks, intents, alpha).map(|lg| lg.loss)
}

pub fn multitask_loss_grad(trace: &ForwardTrace, clicks: &[f64], intents: &[f64], alpha: f64) -> Result<LossGrad> {
    let n = trace.y_hat.len();
    if n == 0 {
        return Err(Error::Validation("empty batch".into()));
    }
    if alpha < 0.0 {
        return Err(Error::Validation("alpha must be >= 0".into()));
    }
    check_labels("click", clicks, n)?;
    let alpha = trace.variant.intent_loss_weight(alpha);
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut d_y_hat = Vec::with_capacity(n);
    for (&p, &y) in trace.y_hat.iter().zip(clicks) {
        loss += bce(p, y);
        d_y_hat.push(bce_grad(p, y) * scale);
    }
    let mut d_y_int = None;
    if let Some(y_int) = &trace.y_int {
        check_labels("intent", intents, n)?;
        if alpha > 0.0 {
            let mut g = Vec::with_capacity(n);
            for (&p, &y) in y_int.iter().zip(intents) {
                loss += alpha * bce(p, y);
                g.push(alpha * bce_grad(p, y) * scale);
            }
            d_y_int = Some(g);
        }
    }
    Ok(LossGrad {
        loss: loss * scale,
        d_y_hat,
        d_y_int,
    })
}

/// Mean BCE of CTR predictions alone.
pub fn log_loss(scores: &[f64], labels: &[f64]) -> f64 {
    scores.iter().zip(labels).map(|(&p, &y)| bce(p, y)).sum::<f64>() / scores.len().max(1) as f64
}
