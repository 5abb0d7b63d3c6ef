//! Feature contrastive loss against the memory pool.
//!
//! For an anchor embedding `e` of ID class `c` with pooled positives `P = K(c)`
//! and pooled negatives `U(c)` (every other class, unknown included):
//!
//! ```text
//! l(e) = -(1/|P|) * sum_{k in P} log( exp(e.e_k / tau) / sum_{u in D} exp(e.e_u / tau) )
//! ```
//!
//! with `D = P ∪ U(c)`, or `D = U(c)` when `literal_denominator` is set.
//! Anchors are rows with IoU > 0.5 and an ID label; unknown-labeled rows have
//! no positives and never anchor. The batch loss is the mean over anchors.

use super::{log_sum_exp, ProposalBatch};
use crate::error::{CflError, Result};
use crate::labels::LabelSpace;
use crate::pool::PoolSnapshot;

pub const ANCHOR_MIN_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcConfig {
    pub tau: f64,
    pub literal_denominator: bool,
}

impl Default for FcConfig {
    fn default() -> Self {
        Self { tau: 0.2, literal_denominator: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcOutput {
    pub loss: f64,
    /// Same layout as `ProposalBatch::embeddings`.
    pub grad: Vec<f64>,
    pub anchors: usize,
    /// True when no row contributed.
    pub skipped: bool,
}

pub fn feature_contrastive_loss(
    batch: &ProposalBatch,
    pool: &PoolSnapshot,
    space: &LabelSpace,
    cfg: &FcConfig,
) -> Result<FcOutput> {
    if !(cfg.tau > 0.0 && cfg.tau.is_finite()) {
        return Err(CflError::Config(format!("temperature must be positive, got {}", cfg.tau)));
    }
    batch.check_shapes(space)?;
    let dim = batch.dim;
    if pool.dim != dim && pool.classes.iter().any(|c| !c.is_empty()) {
        return Err(CflError::Shape(format!("pool dim {} != embedding dim {dim}", pool.dim)));
    }
    if pool.classes.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CflError::NonFinite("pool embeddings"));
    }

    let mut grad = vec![0.0; batch.embeddings.len()];
    let mut total = 0.0;
    let mut anchors = 0usize;
    let mut sims: Vec<(usize, usize, f64)> = Vec::new();

    for i in 0..batch.len() {
        let label = batch.assigned_label[i];
        if !(batch.assigned_iou[i] > ANCHOR_MIN_IOU && space.is_id(label)) {
            continue;
        }
        let positives = pool.rows(label);
        if positives == 0 {
            continue;
        }
        let e = batch.embedding(i);
        sims.clear();
        for c in 0..pool.classes.len() {
            if cfg.literal_denominator && c == label {
                continue;
            }
            for r in 0..pool.rows(c) {
                let z = dot(e, pool.row(c, r)) / cfg.tau;
                sims.push((c, r, z));
            }
        }
        if sims.is_empty() {
            continue;
        }
        let lse = log_sum_exp(sims.iter().map(|s| s.2));
        let inv_p = 1.0 / positives as f64;
        let mut pos_mean = 0.0;
        for r in 0..positives {
            pos_mean += dot(e, pool.row(label, r)) / cfg.tau;
        }
        pos_mean *= inv_p;
        total += lse - pos_mean;
        anchors += 1;

        // d/de = (1/tau) * (sum_u softmax_u e_u - mean_k e_k)
        let g = &mut grad[i * dim..(i + 1) * dim];
        for &(c, r, z) in &sims {
            let w = (z - lse).exp() / cfg.tau;
            for (gj, vj) in g.iter_mut().zip(pool.row(c, r)) {
                *gj += w * vj;
            }
        }
        for r in 0..positives {
            for (gj, vj) in g.iter_mut().zip(pool.row(label, r)) {
                *gj -= inv_p / cfg.tau * vj;
            }
        }
    }

    if anchors == 0 {
        return Ok(FcOutput { loss: 0.0, grad, anchors, skipped: true });
    }
    let scale = 1.0 / anchors as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(FcOutput { loss: total * scale, grad, anchors, skipped: false })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
