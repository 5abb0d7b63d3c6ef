//! The label partition: `K` in-distribution classes, one merged `unknown`
//! class for everything out of distribution, and background.
//!
//! Internal indices are 0-based with background last:
//! ID classes `0..K`, unknown `K`, background `K + 1`. Reports and files use
//! 1-based labels for ID classes and `K + 1` for unknown.

use serde::{Deserialize, Serialize};

use crate::error::{CflError, Result};

/// Which restricted softmax a row is scored under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassKind {
    /// Background, unknown and every ID class.
    Id,
    /// Background and unknown only.
    Ood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSpace {
    num_id_classes: usize,
}

impl LabelSpace {
    pub fn new(num_id_classes: usize) -> Result<Self> {
        if num_id_classes == 0 {
            return Err(CflError::Config("label space needs at least one ID class".into()));
        }
        Ok(Self { num_id_classes })
    }

    pub fn num_id_classes(&self) -> usize {
        self.num_id_classes
    }

    pub fn unknown_id(&self) -> usize {
        self.num_id_classes
    }

    pub fn background_id(&self) -> usize {
        self.num_id_classes + 1
    }

    /// Classifier width: K ID logits, one unknown, one background.
    pub fn total_logits(&self) -> usize {
        self.num_id_classes + 2
    }

    pub fn is_id(&self, label: usize) -> bool {
        label < self.num_id_classes
    }

    pub fn is_unknown(&self, label: usize) -> bool {
        label == self.unknown_id()
    }

    pub fn is_background(&self, label: usize) -> bool {
        label == self.background_id()
    }

    /// Internal index to the 1-based label used in reports.
    pub fn to_external(&self, label: usize) -> usize {
        label + 1
    }

    pub fn from_external(&self, label: usize) -> Result<usize> {
        if label == 0 || label > self.total_logits() {
            return Err(CflError::Config(format!("label {label} outside 1..={}", self.total_logits())));
        }
        Ok(label - 1)
    }

    /// Indices normalized over by the softmax of `kind`, in ascending order.
    pub fn restricted_class_set(&self, kind: ClassKind) -> Vec<usize> {
        match kind {
            ClassKind::Id => (0..self.total_logits()).collect(),
            ClassKind::Ood => vec![self.unknown_id(), self.background_id()],
        }
    }
}
