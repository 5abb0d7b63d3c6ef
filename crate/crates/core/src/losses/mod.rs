//! Training objectives.
//!
//! All losses here work in `f64` and return analytic gradients alongside the
//! scalar value, so they can be checked against finite differences.

mod compose;
mod contrastive;
mod detection;
mod uncertainty;

pub use compose::{compose_total_loss, LossWeights, SupervisedTerms, UnsupervisedTerms};
pub use contrastive::{feature_contrastive_loss, FcConfig, FcOutput};
pub use detection::{binary_cross_entropy_with_logits, closed_set_cross_entropy, smooth_l1, CeOutput};
pub use uncertainty::{
    restricted_softmax, uncertainty_classification_loss, uncertainty_weight, Stage, UcConfig, UcOutput,
};

use crate::error::{CflError, Result};
use crate::labels::LabelSpace;

/// Proposals from one or more images, flattened row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalBatch {
    /// `N x (K + 2)`, row-major.
    pub logits: Vec<f64>,
    /// `N x dim`, row-major, unit-norm rows.
    pub embeddings: Vec<f64>,
    pub dim: usize,
    pub assigned_label: Vec<usize>,
    pub assigned_iou: Vec<f64>,
    /// Source image of each row within the batch; background mining is per image.
    pub image_index: Vec<usize>,
    pub is_supervised_stage: bool,
}

impl ProposalBatch {
    pub fn len(&self) -> usize {
        self.assigned_label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assigned_label.is_empty()
    }

    pub fn logits_row(&self, i: usize, width: usize) -> &[f64] {
        &self.logits[i * width..(i + 1) * width]
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    /// Shape and finiteness checks shared by every loss.
    pub fn check_shapes(&self, space: &LabelSpace) -> Result<()> {
        let n = self.len();
        let w = space.total_logits();
        if self.logits.len() != n * w {
            return Err(CflError::Shape(format!("logits hold {} values, expected {}", self.logits.len(), n * w)));
        }
        if self.embeddings.len() != n * self.dim || self.assigned_iou.len() != n || self.image_index.len() != n {
            return Err(CflError::Shape("proposal batch columns disagree in length".into()));
        }
        if self.logits.iter().any(|v| !v.is_finite()) {
            return Err(CflError::NonFinite("logits"));
        }
        if self.embeddings.iter().any(|v| !v.is_finite()) {
            return Err(CflError::NonFinite("embeddings"));
        }
        if self.assigned_iou.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(CflError::Contract("assigned IoU outside [0, 1]".into()));
        }
        if self.assigned_label.iter().any(|&l| l >= w) {
            return Err(CflError::Contract("assigned label outside the label space".into()));
        }
        Ok(())
    }

    /// Full validation including unit-norm embedding rows.
    pub fn validate(&self, space: &LabelSpace) -> Result<()> {
        self.check_shapes(space)?;
        for i in 0..self.len() {
            let n = self.embedding(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-5 {
                return Err(CflError::Contract(format!("embedding row {i} has norm {n}")));
            }
        }
        Ok(())
    }
}

/// Numerically stable log-sum-exp.
pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}
