//! Detector scaffolding losses: proposal objectness, box regression and
//! the closed-set ROI cross-entropy used when the uncertainty loss is off.

use super::{log_sum_exp, ProposalBatch};
use crate::error::Result;
use crate::labels::LabelSpace;

#[derive(Debug, Clone, PartialEq)]
pub struct CeOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Mean binary cross-entropy over rows whose target is `Some`.
pub fn binary_cross_entropy_with_logits(logits: &[f64], targets: &[Option<bool>]) -> CeOutput {
    let count = targets.iter().filter(|t| t.is_some()).count();
    let mut grad = vec![0.0; logits.len()];
    if count == 0 {
        return CeOutput { loss: 0.0, grad };
    }
    let inv = 1.0 / count as f64;
    let mut loss = 0.0;
    for ((x, t), g) in logits.iter().zip(targets).zip(grad.iter_mut()) {
        let Some(t) = t else { continue };
        let y = if *t { 1.0 } else { 0.0 };
        // max(x, 0) - x*y + log(1 + exp(-|x|))
        loss += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
        let p = 1.0 / (1.0 + (-x).exp());
        *g = (p - y) * inv;
    }
    CeOutput { loss: loss * inv, grad }
}

/// Smooth-L1 summed over elements and divided by `normalizer`.
pub fn smooth_l1(pred: &[f64], target: &[f64], beta: f64, normalizer: f64) -> CeOutput {
    let inv = 1.0 / normalizer.max(1.0);
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            if d.abs() < beta {
                loss += 0.5 * d * d / beta;
                d / beta * inv
            } else {
                loss += d.abs() - 0.5 * beta;
                d.signum() * inv
            }
        })
        .collect();
    CeOutput { loss: loss * inv, grad }
}

/// Cross-entropy over ID classes and background with the unknown logit
/// removed from the model. Unknown-labeled rows are skipped. Normalized like
/// the uncertainty loss, by the count of non-background rows.
pub fn closed_set_cross_entropy(batch: &ProposalBatch, space: &LabelSpace) -> Result<CeOutput> {
    batch.check_shapes(space)?;
    let width = space.total_logits();
    let unknown = space.unknown_id();
    let classes: Vec<usize> = (0..width).filter(|&c| c != unknown).collect();
    let normalizer = batch
        .assigned_label
        .iter()
        .filter(|&&l| l != space.background_id())
        .count()
        .max(1) as f64;
    let mut grad = vec![0.0; batch.logits.len()];
    let mut loss = 0.0;
    for i in 0..batch.len() {
        let label = batch.assigned_label[i];
        if label == unknown {
            continue;
        }
        let row = batch.logits_row(i, width);
        let lse = log_sum_exp(classes.iter().map(|&c| row[c]));
        loss += lse - row[label];
        let g = &mut grad[i * width..(i + 1) * width];
        for &c in &classes {
            g[c] = ((row[c] - lse).exp() - if c == label { 1.0 } else { 0.0 }) / normalizer;
        }
    }
    Ok(CeOutput { loss: loss / normalizer, grad })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_known_values() {
        let out = binary_cross_entropy_with_logits(&[0.0, 100.0, 3.0], &[Some(true), Some(true), None]);
        assert!((out.loss - 2f64.ln() / 2.0).abs() < 1e-12);
        assert_eq!(out.grad[2], 0.0);
        assert!((out.grad[0] + 0.25).abs() < 1e-12);
    }

    #[test]
    fn smooth_l1_regions() {
        let out = smooth_l1(&[0.05, 2.0], &[0.0, 0.0], 0.1, 1.0);
        assert!((out.loss - (0.5 * 0.0025 / 0.1 + 1.95)).abs() < 1e-12);
        assert_eq!(out.grad[1], 1.0);
    }

    #[test]
    fn closed_set_ignores_unknown_logit() {
        let space = LabelSpace::new(2).unwrap();
        let batch = ProposalBatch {
            logits: vec![0.0, 0.0, 50.0, 0.0],
            embeddings: vec![1.0],
            dim: 1,
            assigned_label: vec![0],
            assigned_iou: vec![0.9],
            image_index: vec![0],
            is_supervised_stage: true,
        };
        let out = closed_set_cross_entropy(&batch, &space).unwrap();
        assert!((out.loss - 3f64.ln()).abs() < 1e-12);
        assert_eq!(out.grad[2], 0.0);
    }
}
