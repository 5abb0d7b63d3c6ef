//! Axis-aligned box algebra.
//!
//! Boxes are continuous and half-open: area is `(x_max - x_min) * (y_max - y_min)`
//! with no "+1" pixel correction.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{CflError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f32,
    pub y_min: f32,
    pub x_max: f32,
    pub y_max: f32,
}

impl BoundingBox {
    /// Validated constructor: coordinates finite, strictly positive extent.
    pub fn new(x_min: f32, y_min: f32, x_max: f32, y_max: f32) -> Result<Self> {
        let b = Self { x_min, y_min, x_max, y_max };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(CflError::InvalidBox([x_min, y_min, x_max, y_max]))
        }
    }

    pub fn from_array(c: [f32; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn to_array(self) -> [f32; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn is_valid(&self) -> bool {
        let c = self.to_array();
        c.iter().all(|v| v.is_finite()) && self.x_min < self.x_max && self.y_min < self.y_max
    }

    pub fn width(&self) -> f32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        (self.x_max as f64 - self.x_min as f64) * (self.y_max as f64 - self.y_min as f64)
    }

    pub fn center(&self) -> (f32, f32) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    /// Clip to `[0, width] x [0, height]`. Returns `None` when nothing with
    /// positive area remains.
    pub fn clip(&self, width: f32, height: f32) -> Option<Self> {
        let b = Self {
            x_min: self.x_min.clamp(0.0, width),
            y_min: self.y_min.clamp(0.0, height),
            x_max: self.x_max.clamp(0.0, width),
            y_max: self.y_max.clamp(0.0, height),
        };
        b.is_valid().then_some(b)
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let w = (self.x_max.min(other.x_max) as f64 - self.x_min.max(other.x_min) as f64).max(0.0);
        let h = (self.y_max.min(other.y_max) as f64 - self.y_min.max(other.y_min) as f64).max(0.0);
        w * h
    }

    /// IoU without validity checks; callers guarantee positive area.
    pub(crate) fn iou_unchecked(&self, other: &Self) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }
}

/// Intersection over union of two valid boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    for bx in [a, b] {
        if !bx.is_valid() {
            return Err(CflError::InvalidBox(bx.to_array()));
        }
    }
    Ok(a.iou_unchecked(b))
}

/// A scored, labeled box. `class_id` uses the internal 0-based label index
/// (see [`crate::labels::LabelSpace`]) and is never the background index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub class_id: usize,
    pub score: f32,
}

/// Descending score, ties broken by smaller `(x_min, y_min)`.
pub(crate) fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.bbox.x_min.partial_cmp(&b.bbox.x_min).unwrap_or(Ordering::Equal))
        .then_with(|| a.bbox.y_min.partial_cmp(&b.bbox.y_min).unwrap_or(Ordering::Equal))
}

/// Class-wise greedy non-maximum suppression.
///
/// Within each class a detection is dropped when its IoU with an already kept
/// detection of the same class exceeds `iou_threshold`. The result is ordered
/// by descending score.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(CflError::Config(format!(
            "nms iou threshold must lie in (0, 1], got {iou_threshold}"
        )));
    }
    if let Some(d) = dets.iter().find(|d| !d.bbox.is_valid()) {
        return Err(CflError::InvalidBox(d.bbox.to_array()));
    }
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| detection_order(a, b));

    let mut kept: Vec<Detection> = Vec::new();
    for d in order {
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == d.class_id && k.bbox.iou_unchecked(&d.bbox) > iou_threshold);
        if !suppressed {
            kept.push(*d);
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(c: [f32; 4]) -> BoundingBox {
        BoundingBox::from_array(c).unwrap()
    }

    fn det(c: [f32; 4], class_id: usize, score: f32) -> Detection {
        Detection { bbox: bb(c), class_id, score }
    }

    /// Counts cells of a `cells x cells` grid over `[0, extent)^2` whose
    /// centers fall inside each box.
    fn grid_iou(a: &BoundingBox, b: &BoundingBox, extent: f64, cells: usize) -> f64 {
        let step = extent / cells as f64;
        let inside = |bx: &BoundingBox, x: f64, y: f64| {
            x >= bx.x_min as f64 && x < bx.x_max as f64 && y >= bx.y_min as f64 && y < bx.y_max as f64
        };
        let (mut inter, mut union) = (0usize, 0usize);
        for i in 0..cells {
            for j in 0..cells {
                let x = (j as f64 + 0.5) * step;
                let y = (i as f64 + 0.5) * step;
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += (ia && ib) as usize;
                union += (ia || ib) as usize;
            }
        }
        inter as f64 / union.max(1) as f64
    }

    #[test]
    fn iou_identity_and_disjoint() {
        assert_eq!(iou(&bb([0., 0., 2., 2.]), &bb([0., 0., 2., 2.])).unwrap(), 1.0);
        assert_eq!(iou(&bb([0., 0., 1., 1.]), &bb([2., 2., 3., 3.])).unwrap(), 0.0);
    }

    #[test]
    fn iou_partial_overlap_matches_grid() {
        let a = bb([0., 0., 2., 2.]);
        let b = bb([1., 1., 3., 3.]);
        let oracle = grid_iou(&a, &b, 3.0, 600);
        assert!((oracle - 1.0 / 7.0).abs() < 1e-9);
        assert!((iou(&a, &b).unwrap() - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_box_rejected() {
        let zero = BoundingBox { x_min: 1.0, y_min: 1.0, x_max: 1.0, y_max: 2.0 };
        assert!(iou(&zero, &bb([0., 0., 1., 1.])).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f32::NAN, 1.0).is_err());
    }

    #[test]
    fn nms_basic_cases() {
        let a = det([0., 0., 10., 10.], 0, 0.9);
        // 10x9 box inside a 10x10 one: IoU = 0.9
        let b = det([0., 0., 10., 9.], 0, 0.8);
        assert!((a.bbox.iou_unchecked(&b.bbox) - 0.9).abs() < 1e-9);
        assert_eq!(nms(&[b, a], 0.5).unwrap(), vec![a]);
        assert_eq!(nms(&[a], 0.5).unwrap(), vec![a]);
        assert!(nms(&[], 0.5).unwrap().is_empty());

        let c = det([0., 0., 10., 10.], 1, 0.8);
        assert_eq!(nms(&[a, c], 0.5).unwrap(), vec![a, c]);
        assert!(nms(&[a], 0.0).is_err());
    }

    #[test]
    fn nms_ties_broken_by_coordinates() {
        let a = det([5., 0., 15., 10.], 0, 0.5);
        let b = det([4., 0., 14., 10.], 0, 0.5);
        let kept = nms(&[a, b], 0.3).unwrap();
        assert_eq!(kept, vec![b]);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0f32..20.0, 0.0f32..20.0, 0.5f32..12.0, 0.5f32..12.0)
            .prop_map(|(x, y, w, h)| bb([x, y, x + w, y + h]))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b).unwrap();
            let ba = iou(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((iou(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn nms_properties(
            raw in proptest::collection::vec((arb_box(), 0usize..3, 0.0f32..1.0), 0..15),
            thr in 0.1f64..0.9,
        ) {
            let dets: Vec<Detection> = raw.iter().map(|&(b, c, s)| Detection { bbox: b, class_id: c, score: s }).collect();
            let kept = nms(&dets, thr).unwrap();
            for k in &kept {
                prop_assert!(dets.contains(k));
            }
            for (i, a) in kept.iter().enumerate() {
                for b in &kept[i + 1..] {
                    if a.class_id == b.class_id {
                        prop_assert!(a.bbox.iou_unchecked(&b.bbox) <= thr);
                    }
                    prop_assert!(a.score >= b.score);
                }
            }
            for d in &dets {
                if !kept.contains(d) {
                    prop_assert!(kept.iter().any(|k| k.class_id == d.class_id
                        && k.score >= d.score
                        && k.bbox.iou_unchecked(&d.bbox) > thr));
                }
            }
        }
    }
}
