//! Detection metrics at a single IoU operating point.
//!
//! AP is the all-point interpolated area under the precision/recall curve.
//! OOD ground truth is merged into the single unknown class before scoring.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::Target;
use crate::error::{CflError, Result};
use crate::geometry::{detection_order, Detection};
use crate::labels::LabelSpace;

pub const DEFAULT_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Outcome of greedy matching for one class across a set of images.
#[derive(Debug, Clone, PartialEq)]
struct Matching {
    /// `true` for a true positive, in descending score order.
    hits: Vec<bool>,
    num_gt: usize,
}

/// Greedy matching by descending score: each detection takes the
/// highest-IoU still unmatched ground truth with IoU >= `iou_thresh`.
fn match_class(images: &[(&[Detection], &[Target])], class_id: usize, iou_thresh: f64) -> Matching {
    let mut dets: Vec<(usize, Detection)> = Vec::new();
    let mut num_gt = 0;
    for (img, (d, g)) in images.iter().enumerate() {
        dets.extend(d.iter().filter(|x| x.class_id == class_id).map(|x| (img, *x)));
        num_gt += g.iter().filter(|t| t.label == class_id).count();
    }
    dets.sort_by(|a, b| detection_order(&a.1, &b.1).then(a.0.cmp(&b.0)));
    let mut taken: Vec<Vec<bool>> = images.iter().map(|(_, g)| vec![false; g.len()]).collect();
    let hits = dets
        .iter()
        .map(|(img, det)| {
            let gts = images[*img].1;
            let mut best: Option<(usize, f64)> = None;
            for (j, gt) in gts.iter().enumerate() {
                if gt.label != class_id || taken[*img][j] {
                    continue;
                }
                let v = det.bbox.iou_unchecked(&gt.bbox);
                if v >= iou_thresh && best.map_or(true, |(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            match best {
                Some((j, _)) => {
                    taken[*img][j] = true;
                    true
                }
                None => false,
            }
        })
        .collect();
    Matching { hits, num_gt }
}

fn area_under_pr(m: &Matching) -> Option<f64> {
    if m.num_gt == 0 {
        return if m.hits.is_empty() { None } else { Some(0.0) };
    }
    let mut precision = Vec::with_capacity(m.hits.len());
    let mut recall = Vec::with_capacity(m.hits.len());
    let mut tp = 0usize;
    for (i, &hit) in m.hits.iter().enumerate() {
        tp += hit as usize;
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / m.num_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev) * p;
        prev = *r;
    }
    Some(ap)
}

/// AP of one class over a set of images. `None` when the class has neither
/// ground truth nor detections; 0 when it has detections but no ground truth.
pub fn average_precision_images(images: &[(&[Detection], &[Target])], class_id: usize, iou_thresh: f64) -> Option<f64> {
    area_under_pr(&match_class(images, class_id, iou_thresh))
}

/// AP of one class on a single image.
pub fn average_precision(dets: &[Detection], gts: &[Target], class_id: usize, iou_thresh: f64) -> Option<f64> {
    average_precision_images(&[(dets, gts)], class_id, iou_thresh)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Indexed by internal class id, ID classes then unknown. `None` = undefined.
    pub per_class_ap: Vec<Option<f64>>,
    pub map_k: f64,
    pub ap_u: f64,
    pub counts: Vec<ClassCounts>,
    pub num_images: usize,
}

impl EvalResult {
    /// One `name value` pair per line.
    pub fn to_text(&self, space: &LabelSpace) -> String {
        let mut out = format!("map_k {:.6}\nap_u {:.6}\n", self.map_k, self.ap_u);
        for (c, ap) in self.per_class_ap.iter().enumerate() {
            let name = if space.is_unknown(c) { "unknown".to_string() } else { format!("class{}", space.to_external(c)) };
            match ap {
                Some(v) => out.push_str(&format!("ap_{name} {v:.6}\n")),
                None => out.push_str(&format!("ap_{name} undefined\n")),
            }
            let k = self.counts[c];
            out.push_str(&format!("tp_{name} {}\nfp_{name} {}\nfn_{name} {}\n", k.tp, k.fp, k.fn_));
        }
        out
    }
}

/// Score predictions against ground truth whose OOD objects carry the
/// unknown label.
pub fn evaluate(predictions: &[Vec<Detection>], ground_truth: &[Vec<Target>], space: &LabelSpace) -> Result<EvalResult> {
    if predictions.is_empty() {
        return Err(CflError::Empty("evaluation set"));
    }
    if predictions.len() != ground_truth.len() {
        return Err(CflError::Shape(format!(
            "{} prediction lists for {} annotated images",
            predictions.len(),
            ground_truth.len()
        )));
    }
    let images: Vec<(&[Detection], &[Target])> =
        predictions.iter().zip(ground_truth).map(|(d, g)| (d.as_slice(), g.as_slice())).collect();
    let mut per_class_ap = Vec::new();
    let mut counts = Vec::new();
    for c in 0..=space.unknown_id() {
        let m = match_class(&images, c, DEFAULT_IOU);
        let tp = m.hits.iter().filter(|h| **h).count();
        counts.push(ClassCounts { tp, fp: m.hits.len() - tp, fn_: m.num_gt - tp });
        per_class_ap.push(area_under_pr(&m));
    }
    let defined: Vec<f64> = per_class_ap[..space.num_id_classes()].iter().flatten().copied().collect();
    let map_k = if defined.is_empty() { 0.0 } else { defined.iter().sum::<f64>() / defined.len() as f64 };
    let ap_u = per_class_ap[space.unknown_id()].unwrap_or(0.0);
    Ok(EvalResult { per_class_ap, map_k, ap_u, counts, num_images: predictions.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelQuality {
    /// Matched ID pseudo boxes over all ID pseudo boxes; 1 when there are none.
    pub precision: f64,
    /// Matched hidden ID objects over all hidden ID objects; 1 when there are none.
    pub recall: f64,
    /// Fraction of ID-labeled pseudo boxes whose best-overlapping hidden
    /// object is OOD; 0 when there are no ID pseudo boxes.
    pub ood_contamination: f64,
    pub num_id_pseudo: usize,
    pub num_unknown_pseudo: usize,
}

/// Compare pseudo-labels with the hidden annotations of unlabeled images.
pub fn pseudo_label_quality(pseudo: &[Vec<Detection>], hidden: &[Vec<Target>], space: &LabelSpace) -> Result<PseudoLabelQuality> {
    if pseudo.len() != hidden.len() {
        return Err(CflError::Shape(format!("{} pseudo-label lists for {} images", pseudo.len(), hidden.len())));
    }
    let images: Vec<(&[Detection], &[Target])> =
        pseudo.iter().zip(hidden).map(|(d, g)| (d.as_slice(), g.as_slice())).collect();
    let (mut tp, mut num_gt, mut num_det) = (0, 0, 0);
    for c in 0..space.num_id_classes() {
        let m = match_class(&images, c, DEFAULT_IOU);
        tp += m.hits.iter().filter(|h| **h).count();
        num_gt += m.num_gt;
        num_det += m.hits.len();
    }
    let mut contaminated = 0;
    let mut num_unknown = 0;
    for (dets, gts) in &images {
        for d in dets.iter() {
            if space.is_unknown(d.class_id) {
                num_unknown += 1;
                continue;
            }
            let best = gts
                .iter()
                .map(|g| (g, d.bbox.iou_unchecked(&g.bbox)))
                .filter(|(_, v)| *v > 0.0)
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal));
            if let Some((g, _)) = best {
                contaminated += space.is_unknown(g.label) as usize;
            }
        }
    }
    let ratio = |num: usize, den: usize, empty: f64| if den == 0 { empty } else { num as f64 / den as f64 };
    Ok(PseudoLabelQuality {
        precision: ratio(tp, num_det, 1.0),
        recall: ratio(tp, num_gt, 1.0),
        ood_contamination: ratio(contaminated, num_det, 0.0),
        num_id_pseudo: num_det,
        num_unknown_pseudo: num_unknown,
    })
}
