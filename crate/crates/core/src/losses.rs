//! Losses paired with each transform.
//!
//! Every loss returns its value together with the closed-form gradient
//! `σ(z) − e_y`, where σ is the paired transform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transforms::{self, check_alpha, check_label, check_logits, TransformConfig, TransformKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossResult {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// Tsallis α-entropy `(1/(α(α−1))) Σ_j (p_j − p_j^α)`.
pub fn tsallis_entropy(p: &[f64], alpha: f64) -> Result<f64> {
    if alpha == 1.0 || !alpha.is_finite() {
        return Err(Error::config(format!("tsallis entropy needs a finite alpha != 1, got {alpha}")));
    }
    if let Some(index) = p.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::NonFinite { index, value: p[index] });
    }
    let s: f64 = p.iter().map(|&x| x - x.powf(alpha)).sum();
    Ok(s / (alpha * (alpha - 1.0)))
}

/// The entropy written as `(1 − Σ p_j^α)/(α(α−1))`.
///
/// Equal to [`tsallis_entropy`] on the simplex. Off the simplex this is the
/// form whose chain rule through α-ReLU cancels the Jacobian terms, so the
/// α-ReLU loss uses it.
fn tsallis_simplex_form(p: &[f64], alpha: f64) -> f64 {
    let s: f64 = p.iter().map(|&x| if x > 0.0 { x.powf(alpha) } else { 0.0 }).sum();
    (1.0 - s) / (alpha * (alpha - 1.0))
}

fn residual(p: &[f64], y: usize) -> Vec<f64> {
    let mut g = p.to_vec();
    g[y] -= 1.0;
    g
}

/// α-ReLU loss
///
/// ```text
/// ℓ(z, y) = (p − e_y)ᵀ(z − τ/(α−1)·1) + (1 − Σ p_j^α)/(α(α−1)),   p = arelu(z)
/// ```
///
/// with gradient `p − e_y` for every τ. The value is nonnegative and zero
/// exactly when `p = e_y`.
pub fn arelu_loss(z: &[f64], y: usize, cfg: &TransformConfig) -> Result<LossResult> {
    let p = transforms::arelu(z, cfg)?;
    check_label(y, z.len())?;
    let (alpha, tau) = (cfg.alpha, cfg.tau);
    let shift = tau / (alpha - 1.0);
    let p = p.values();
    let linear: f64 = p.iter().zip(z).map(|(pi, zi)| pi * (zi - shift)).sum::<f64>() - (z[y] - shift);
    let value = linear + tsallis_simplex_form(p, alpha);
    Ok(LossResult { value: value.max(0.0), gradient: residual(p, y) })
}

/// α-entmax loss `(p* − e_y)ᵀz + H_α[p*]` with `p* = entmax(z, α)`.
pub fn entmax_loss(z: &[f64], y: usize, alpha: f64) -> Result<LossResult> {
    check_alpha(alpha)?;
    let p = transforms::entmax(z, alpha)?.weights;
    simplex_loss(p.values(), z, y, alpha)
}

fn simplex_loss(p: &[f64], z: &[f64], y: usize, alpha: f64) -> Result<LossResult> {
    check_label(y, z.len())?;
    let linear: f64 = p.iter().zip(z).map(|(pi, zi)| pi * zi).sum::<f64>() - z[y];
    let value = linear + tsallis_entropy(p, alpha)?;
    Ok(LossResult { value: value.max(0.0), gradient: residual(p, y) })
}

/// Sparsemax loss: the entmax loss at α = 2.
pub fn sparsemax_loss(z: &[f64], y: usize) -> Result<LossResult> {
    entmax_loss(z, y, 2.0)
}

/// Cross-entropy `log Σ exp(z_j) − z_y` with gradient `softmax(z) − e_y`.
pub fn cross_entropy(z: &[f64], y: usize) -> Result<LossResult> {
    check_logits(z)?;
    check_label(y, z.len())?;
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    let p = transforms::softmax(z)?;
    Ok(LossResult { value: (lse - z[y]).max(0.0), gradient: residual(p.values(), y) })
}

/// The loss paired with `cfg`'s transform.
pub fn paired_loss(cfg: &TransformConfig, z: &[f64], y: usize) -> Result<LossResult> {
    match cfg.kind {
        TransformKind::Softmax => cross_entropy(z, y),
        TransformKind::Sparsemax => sparsemax_loss(z, y),
        TransformKind::Entmax15Sorted => {
            cfg.validate()?;
            entmax_loss(z, y, 1.5)
        }
        TransformKind::EntmaxBisect => {
            let p = transforms::entmax_bisect(z, cfg.alpha)?.weights;
            simplex_loss(p.values(), z, y, cfg.alpha)
        }
        TransformKind::Arelu => arelu_loss(z, y, cfg),
    }
}

/// Arithmetic mean of the paired loss over a batch; gradients are per row
/// and already divided by the batch size.
pub fn mean_loss<'a, I>(cfg: &TransformConfig, rows: I) -> Result<(f64, Vec<Vec<f64>>)>
where
    I: IntoIterator<Item = (&'a [f64], usize)>,
{
    let mut total = 0.0;
    let mut grads = Vec::new();
    for (z, y) in rows {
        let r = paired_loss(cfg, z, y)?;
        total += r.value;
        grads.push(r.gradient);
    }
    if grads.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = grads.len() as f64;
    for g in &mut grads {
        g.iter_mut().for_each(|x| *x /= n);
    }
    Ok((total / n, grads))
}
