//! Uncertainty classification loss.
//!
//! Rows scored under the full softmax (every ID class, unknown and
//! background) use plain cross-entropy with weight 1. Rows treated as OOD
//! (assigned unknown, or mined from background) are scored under the
//! softmax restricted to `{unknown, background}` and weighted by
//! `w_u = (1 - p_k)^alpha * p_k`, where `p_k` is the row's largest ID-class
//! probability under the full softmax. `w_u` is a constant for the gradient.

use std::cmp::Ordering;

use super::ProposalBatch;
use crate::error::{CflError, Result};
use crate::labels::{ClassKind, LabelSpace};

/// Which branch of the objective applies to a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Labeled data: ID cross-entropy plus the weighted OOD term.
    Sup,
    /// Pseudo-labeled data: only the weighted OOD term.
    Semi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UcConfig {
    pub alpha: f64,
    /// Background rows promoted to OOD rows, per image.
    pub k_mine: usize,
}

impl Default for UcConfig {
    fn default() -> Self {
        Self { alpha: 1.0, k_mine: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UcOutput {
    pub loss: f64,
    /// Same layout as `ProposalBatch::logits`.
    pub grad: Vec<f64>,
    /// `(row, w_u)` for every OOD row, assigned and mined.
    pub ood_rows: Vec<(usize, f64)>,
    /// Rows mined from background.
    pub mined_rows: Vec<usize>,
    /// Rows scored with plain cross-entropy against their assigned label.
    pub id_rows: Vec<usize>,
    pub normalizer: f64,
}

/// Softmax over `space.restricted_class_set(kind)`, in that set's order.
pub fn restricted_softmax(logits_row: &[f64], kind: ClassKind, space: &LabelSpace) -> Vec<f64> {
    let set = space.restricted_class_set(kind);
    let m = set.iter().map(|&c| logits_row[c]).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = set.iter().map(|&c| (logits_row[c] - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `(1 - p_k)^alpha * p_k`.
pub fn uncertainty_weight(p_k: f64, alpha: f64) -> f64 {
    (1.0 - p_k).max(0.0).powf(alpha) * p_k
}

pub fn uncertainty_classification_loss(
    batch: &ProposalBatch,
    space: &LabelSpace,
    cfg: &UcConfig,
    stage: Stage,
) -> Result<UcOutput> {
    if !(cfg.alpha >= 0.0) {
        return Err(CflError::Config(format!("uncertainty exponent must be >= 0, got {}", cfg.alpha)));
    }
    batch.check_shapes(space)?;
    let width = space.total_logits();
    let k = space.num_id_classes();
    let (unknown, background) = (space.unknown_id(), space.background_id());
    let n = batch.len();

    let full: Vec<Vec<f64>> = (0..n)
        .map(|i| restricted_softmax(batch.logits_row(i, width), ClassKind::Id, space))
        .collect();
    let weight: Vec<f64> = full
        .iter()
        .map(|p| uncertainty_weight(p[..k].iter().copied().fold(0.0, f64::max), cfg.alpha))
        .collect();

    // top-k_mine background rows by w_u within each image; ties go to the lower row
    let mut mined = vec![false; n];
    let num_images = batch.image_index.iter().max().map_or(0, |m| m + 1);
    for img in 0..num_images {
        let mut rows: Vec<usize> = (0..n)
            .filter(|&i| batch.image_index[i] == img && batch.assigned_label[i] == background)
            .collect();
        rows.sort_by(|&a, &b| weight[b].partial_cmp(&weight[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        for &r in rows.iter().take(cfg.k_mine) {
            mined[r] = true;
        }
    }

    let normalizer = batch.assigned_label.iter().filter(|&&l| l != background).count().max(1) as f64;
    let mut grad = vec![0.0; batch.logits.len()];
    let mut total = 0.0;
    let mut ood_rows = Vec::new();
    let mut mined_rows = Vec::new();
    let mut id_rows = Vec::new();

    for i in 0..n {
        let label = batch.assigned_label[i];
        let row = batch.logits_row(i, width);
        let g = &mut grad[i * width..(i + 1) * width];
        if label == unknown || mined[i] {
            let w = weight[i];
            let q = restricted_softmax(row, ClassKind::Ood, space);
            total += -w * q[0].ln();
            g[unknown] += w * (q[0] - 1.0);
            g[background] += w * q[1];
            ood_rows.push((i, w));
            if mined[i] {
                mined_rows.push(i);
            }
        } else if stage == Stage::Sup {
            let p = &full[i];
            total += -p[label].ln();
            for (c, gc) in g.iter_mut().enumerate() {
                *gc += p[c] - if c == label { 1.0 } else { 0.0 };
            }
            id_rows.push(i);
        }
    }

    let inv = 1.0 / normalizer;
    grad.iter_mut().for_each(|v| *v *= inv);
    Ok(UcOutput { loss: total * inv, grad, ood_rows, mined_rows, id_rows, normalizer })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(logits: Vec<f64>, labels: Vec<usize>, width: usize) -> ProposalBatch {
        let n = labels.len();
        assert_eq!(logits.len(), n * width);
        ProposalBatch {
            logits,
            embeddings: vec![1.0; n],
            dim: 1,
            assigned_iou: vec![0.9; n],
            image_index: vec![0; n],
            assigned_label: labels,
            is_supervised_stage: true,
        }
    }

    #[test]
    fn restricted_softmax_cases() {
        let s = LabelSpace::new(2).unwrap();
        let p = restricted_softmax(&[0.0; 4], ClassKind::Id, &s);
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let q = restricted_softmax(&[0.0; 4], ClassKind::Ood, &s);
        assert_eq!(q, vec![0.5, 0.5]);
        let q = restricted_softmax(&[5.0, -3.0, 2f64.ln(), 0.0], ClassKind::Ood, &s);
        assert!((q[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn restricted_softmax_is_stable_for_large_logits() {
        let s = LabelSpace::new(3).unwrap();
        let p = restricted_softmax(&[1000.0, 999.0, -1000.0, 0.0, 1000.0], ClassKind::Id, &s);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uncertainty_weight_cases() {
        assert_eq!(uncertainty_weight(0.0, 2.0), 0.0);
        assert_eq!(uncertainty_weight(1.0, 1.0), 0.0);
        assert_eq!(uncertainty_weight(0.5, 1.0), 0.25);
    }

    #[test]
    fn uncertainty_weight_peaks_at_one_over_one_plus_alpha() {
        for alpha in [0.5, 1.0, 2.0, 3.0] {
            let best = (0..=100_000)
                .map(|i| i as f64 / 100_000.0)
                .max_by(|a, b| uncertainty_weight(*a, alpha).partial_cmp(&uncertainty_weight(*b, alpha)).unwrap())
                .unwrap();
            assert!((best - 1.0 / (1.0 + alpha)).abs() < 2e-5, "alpha {alpha}: {best}");
        }
    }

    #[test]
    fn semi_single_ood_row() {
        // K = 2; full softmax: p = [e^a, 1, e^u, e^b] / Z; choose logits so the
        // largest ID probability is 0.25 and p_u(OOD) = 0.5.
        let s = LabelSpace::new(2).unwrap();
        let l = ((3.0 - (-1f64).exp()) / 2.0).ln();
        let logits = vec![0.0, -1.0, l, l];
        let p = restricted_softmax(&logits, ClassKind::Id, &s);
        assert!((p[0] - 0.25).abs() < 1e-12);
        let out = uncertainty_classification_loss(
            &batch(logits, vec![s.unknown_id()], 4),
            &s,
            &UcConfig { alpha: 1.0, k_mine: 0 },
            Stage::Semi,
        )
        .unwrap();
        let expected = 0.75 * 0.25 * 2f64.ln();
        assert!((out.loss - expected).abs() < 1e-12);
        assert!((out.loss - 0.12997).abs() < 1e-5);
    }

    #[test]
    fn sup_single_uniform_id_row() {
        let s = LabelSpace::new(2).unwrap();
        let out = uncertainty_classification_loss(&batch(vec![0.0; 4], vec![0], 4), &s, &UcConfig::default(), Stage::Sup).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-12);
        assert_eq!(out.id_rows, vec![0]);
    }

    #[test]
    fn semi_without_ood_rows_is_exactly_zero() {
        let s = LabelSpace::new(3).unwrap();
        let logits: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin()).collect();
        let labels = vec![0, s.background_id(), 2];
        let out = uncertainty_classification_loss(&batch(logits, labels, 5), &s, &UcConfig { alpha: 1.0, k_mine: 0 }, Stage::Semi).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn mining_takes_most_uncertain_background_rows() {
        let s = LabelSpace::new(2).unwrap();
        let bg = s.background_id();
        // p_k = 0.5 (w = .25) for row 1; row 0 confident background; row 2 moderately uncertain
        let logits = vec![
            -5.0, -5.0, -5.0, 5.0, //
            1.0, -9.0, -9.0, 1.0, //
            0.0, -9.0, -9.0, 2.0,
        ];
        let out = uncertainty_classification_loss(&batch(logits.clone(), vec![bg; 3], 4), &s, &UcConfig { alpha: 1.0, k_mine: 1 }, Stage::Sup).unwrap();
        assert_eq!(out.mined_rows, vec![1]);
        let all = uncertainty_classification_loss(&batch(logits, vec![bg; 3], 4), &s, &UcConfig { alpha: 1.0, k_mine: 10 }, Stage::Sup).unwrap();
        assert_eq!(all.mined_rows, vec![0, 1, 2]);
        assert_eq!(all.normalizer, 1.0);
    }

    #[test]
    fn nan_logits_rejected() {
        let s = LabelSpace::new(1).unwrap();
        assert!(uncertainty_classification_loss(&batch(vec![f64::NAN, 0.0, 0.0], vec![0], 3), &s, &UcConfig::default(), Stage::Sup).is_err());
    }
}
