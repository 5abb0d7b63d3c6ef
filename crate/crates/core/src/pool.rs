//! Class-keyed embedding memory pool.
//!
//! Each class (every ID class plus unknown) keeps at most `capacity`
//! unit-norm embeddings. A candidate is admitted only when its box IoU with
//! the target exceeds `iou_threshold` and its cosine to the class center
//! exceeds `cos_threshold`; once a class is full, a candidate replaces the
//! lowest-scoring stored entry if it scores higher. The score is
//! `s_iou * s_cos`. Stored vectors are detached constants.

use serde::{Deserialize, Serialize};

use crate::error::{CflError, Result};
use crate::geometry::{iou, BoundingBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub capacity: usize,
    pub dim: usize,
    pub iou_threshold: f64,
    pub cos_threshold: f64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self { capacity: 256, dim: 128, iou_threshold: 0.7, cos_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledEmbedding {
    pub vector: Vec<f32>,
    pub class_id: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Admitted,
    Replaced,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassSlot {
    entries: Vec<PooledEmbedding>,
    sum: Vec<f64>,
    center: Option<Vec<f32>>,
}

impl ClassSlot {
    fn new(dim: usize) -> Self {
        Self { entries: Vec::new(), sum: vec![0.0; dim], center: None }
    }

    fn refresh_center(&mut self) {
        if self.entries.is_empty() {
            self.center = None;
            return;
        }
        let norm = self.sum.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.center = (norm > 1e-12).then(|| self.sum.iter().map(|v| (v / norm) as f32).collect());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPool {
    config: PoolConfig,
    slots: Vec<ClassSlot>,
}

/// Immutable per-class embedding matrices (row-major, `dim` columns).
#[derive(Debug, Clone, PartialEq)]
pub struct PoolSnapshot {
    pub dim: usize,
    pub classes: Vec<Vec<f64>>,
}

impl PoolSnapshot {
    pub fn empty(num_classes: usize, dim: usize) -> Self {
        Self { dim, classes: vec![Vec::new(); num_classes] }
    }

    pub fn rows(&self, class_id: usize) -> usize {
        self.classes.get(class_id).map_or(0, |m| m.len() / self.dim)
    }

    pub fn row(&self, class_id: usize, i: usize) -> &[f64] {
        &self.classes[class_id][i * self.dim..(i + 1) * self.dim]
    }

    pub fn from_rows(dim: usize, classes: Vec<Vec<Vec<f64>>>) -> Self {
        Self { dim, classes: classes.into_iter().map(|rows| rows.concat()).collect() }
    }
}

impl EmbeddingPool {
    /// `num_classes` counts the ID classes plus unknown (`K + 1`).
    pub fn new(num_classes: usize, config: PoolConfig) -> Result<Self> {
        if config.capacity == 0 || config.dim == 0 || num_classes == 0 {
            return Err(CflError::Config("pool capacity, dim and class count must be positive".into()));
        }
        Ok(Self { config, slots: vec![ClassSlot::new(config.dim); num_classes] })
    }

    pub fn config(&self) -> &PoolConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.slots.len()
    }

    pub fn len(&self, class_id: usize) -> usize {
        self.slots.get(class_id).map_or(0, |s| s.entries.len())
    }

    pub fn occupancy(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.entries.len()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(|s| s.entries.is_empty())
    }

    pub fn entries(&self, class_id: usize) -> &[PooledEmbedding] {
        &self.slots[class_id].entries
    }

    pub fn center(&self, class_id: usize) -> Option<&[f32]> {
        self.slots.get(class_id).and_then(|s| s.center.as_deref())
    }

    /// `(s_iou, s_cos)` for a candidate. Without a class center the cosine
    /// score is defined as 1.
    pub fn admission_score(
        &self,
        embedding: &[f32],
        bbox: &BoundingBox,
        target: &BoundingBox,
        class_id: usize,
    ) -> Result<(f64, f64)> {
        let s_iou = iou(bbox, target)?;
        let s_cos = match self.center(class_id) {
            Some(c) => cosine_of_units(embedding, c),
            None => 1.0,
        };
        Ok((s_iou, s_cos))
    }

    /// Gate, score and store a candidate. The candidate's `score` is
    /// overwritten with `s_iou * s_cos`.
    pub fn try_insert(&mut self, mut cand: PooledEmbedding, s_iou: f64, s_cos: f64) -> Result<InsertOutcome> {
        let PoolConfig { capacity, dim, iou_threshold, cos_threshold } = self.config;
        if cand.class_id >= self.slots.len() {
            return Err(CflError::Contract(format!(
                "class {} cannot be pooled (background or out of range)",
                cand.class_id
            )));
        }
        if cand.vector.len() != dim {
            return Err(CflError::Shape(format!("embedding has {} dims, pool expects {dim}", cand.vector.len())));
        }
        if cand.vector.iter().any(|v| !v.is_finite()) || !s_iou.is_finite() || !s_cos.is_finite() {
            return Err(CflError::NonFinite("pool candidate"));
        }
        if !(s_iou > iou_threshold && s_cos > cos_threshold) {
            return Ok(InsertOutcome::Rejected);
        }
        normalize_in_place(&mut cand.vector);
        cand.score = s_iou * s_cos;

        let slot = &mut self.slots[cand.class_id];
        let outcome = if slot.entries.len() < capacity {
            for (s, v) in slot.sum.iter_mut().zip(&cand.vector) {
                *s += *v as f64;
            }
            slot.entries.push(cand);
            InsertOutcome::Admitted
        } else {
            let (min_idx, min_score) = slot
                .entries
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, e)| if e.score < acc.1 { (i, e.score) } else { acc });
            if cand.score > min_score {
                let old = std::mem::replace(&mut slot.entries[min_idx], cand);
                let new = &slot.entries[min_idx].vector;
                for ((s, o), n) in slot.sum.iter_mut().zip(&old.vector).zip(new) {
                    *s += *n as f64 - *o as f64;
                }
                InsertOutcome::Replaced
            } else {
                return Ok(InsertOutcome::Rejected);
            }
        };
        slot.refresh_center();
        Ok(outcome)
    }

    pub fn snapshot(&self) -> PoolSnapshot {
        PoolSnapshot {
            dim: self.config.dim,
            classes: self
                .slots
                .iter()
                .map(|s| s.entries.iter().flat_map(|e| e.vector.iter().map(|&v| v as f64)).collect())
                .collect(),
        }
    }

    /// Recompute every center from scratch, discarding accumulated rounding.
    pub fn recompute_centers(&mut self) {
        for slot in &mut self.slots {
            slot.sum = vec![0.0; self.config.dim];
            for e in &slot.entries {
                for (s, v) in slot.sum.iter_mut().zip(&e.vector) {
                    *s += *v as f64;
                }
            }
            slot.refresh_center();
        }
    }
}

fn cosine_of_units(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum::<f64>().clamp(-1.0, 1.0)
}

fn normalize_in_place(v: &mut [f32]) {
    let n = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x = (*x as f64 / n) as f32;
        }
    }
}
