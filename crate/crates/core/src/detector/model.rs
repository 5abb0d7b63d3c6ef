use super::boxes::{anchors, decode, encode};
use super::params::{DetectorParams, CONV_STRIDES, FEATURE_STRIDE, RPN_OUTPUTS};
use crate::data::{Image, Target};
use crate::error::{CflError, Result};
use crate::geometry::{detection_order, nms, BoundingBox, Detection};
use crate::labels::{ClassKind, LabelSpace};
use crate::losses::{restricted_softmax, ProposalBatch};
use crate::nn::{
    conv_backward, conv_forward, gemm, linear_backward, linear_forward, relu_backward, relu_in_place, roi_crop,
    roi_crop_backward, ConvCache, ConvShape,
};

/// Proposal assignment threshold: IoU must exceed this to take a label.
pub const ASSIGN_IOU: f64 = 0.5;
const RPN_POSITIVE_IOU: f64 = 0.5;
const RPN_NEGATIVE_IOU: f64 = 0.3;
const MIN_PROPOSAL_SIZE: f32 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardMode {
    /// Training: `train_proposals` proposals, optionally with the targets
    /// appended as extra proposals.
    Train { append_targets: bool },
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub bbox: BoundingBox,
    pub objectness: f32,
}

/// Per-proposal assignment against a target list.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub labels: Vec<usize>,
    /// Max IoU with any target (0 when there are none).
    pub ious: Vec<f64>,
    /// Index of the max-IoU target, when the label is not background.
    pub matched: Vec<Option<usize>>,
}

/// Anchor-level objectness targets (`None` = ignored) and regression
/// targets for positive anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct RpnTargets {
    pub objectness: Vec<Option<bool>>,
    pub deltas: Vec<Option<[f64; 4]>>,
}

#[derive(Debug, Clone)]
struct Cache {
    convs: Vec<ConvCache>,
    /// Post-ReLU output of every convolution; the last one is the feature map.
    acts: Vec<Vec<f32>>,
    roi_boxes: Vec<[f32; 4]>,
    roi_in: Vec<f32>,
    roi_hidden: Vec<f32>,
    emb_hidden: Vec<f32>,
    emb_norms: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub proposals: Vec<Proposal>,
    /// Objectness logit per anchor.
    pub rpn_logits: Vec<f32>,
    /// `anchors x 4`.
    pub rpn_deltas: Vec<f32>,
    /// `proposals x (K + 2)`.
    pub logits: Vec<f32>,
    /// `proposals x 4`, relative to each proposal.
    pub box_deltas: Vec<f32>,
    /// `proposals x dim`, unit rows.
    pub embeddings: Vec<f32>,
    pub assignment: Option<Assignment>,
    pub rpn_targets: Option<RpnTargets>,
    cache: Cache,
}

/// Gradients of the training objective with respect to the head outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub rpn_logits: Vec<f32>,
    pub rpn_deltas: Vec<f32>,
    pub logits: Vec<f32>,
    pub box_deltas: Vec<f32>,
    pub embeddings: Vec<f32>,
}

impl HeadGradients {
    pub fn zeros(out: &ForwardOutput) -> Self {
        Self {
            rpn_logits: vec![0.0; out.rpn_logits.len()],
            rpn_deltas: vec![0.0; out.rpn_deltas.len()],
            logits: vec![0.0; out.logits.len()],
            box_deltas: vec![0.0; out.box_deltas.len()],
            embeddings: vec![0.0; out.embeddings.len()],
        }
    }
}

impl ForwardOutput {
    pub fn num_proposals(&self) -> usize {
        self.proposals.len()
    }

    pub fn embedding(&self, i: usize) -> &[f32] {
        let d = self.embeddings.len() / self.proposals.len().max(1);
        &self.embeddings[i * d..(i + 1) * d]
    }

    /// Loss-side view of this image's proposals. Without targets every row
    /// is background with IoU 0.
    pub fn proposal_batch(&self, space: &LabelSpace, image_index: usize, supervised: bool) -> ProposalBatch {
        let n = self.proposals.len();
        let (labels, ious) = match &self.assignment {
            Some(a) => (a.labels.clone(), a.ious.clone()),
            None => (vec![space.background_id(); n], vec![0.0; n]),
        };
        ProposalBatch {
            logits: self.logits.iter().map(|&v| v as f64).collect(),
            embeddings: self.embeddings.iter().map(|&v| v as f64).collect(),
            dim: self.embeddings.len() / n.max(1),
            assigned_label: labels,
            assigned_iou: ious,
            image_index: vec![image_index; n],
            is_supervised_stage: supervised,
        }
    }

    /// Regression targets (proposal-relative deltas) of rows assigned to a target.
    pub fn roi_regression_targets(&self, targets: &[Target]) -> Vec<Option<[f64; 4]>> {
        match &self.assignment {
            Some(a) => a
                .matched
                .iter()
                .zip(&self.proposals)
                .map(|(m, p)| m.map(|t| encode(&p.bbox, &targets[t].bbox)))
                .collect(),
            None => vec![None; self.proposals.len()],
        }
    }

    /// Gradient w.r.t. the detector parameters, accumulated into `grads`.
    pub fn backward(&self, params: &DetectorParams, head: &HeadGradients, grads: &mut DetectorParams) {
        let cfg = &params.config;
        let c = cfg.feature_channels();
        let fs = cfg.feature_size();
        let n = self.proposals.len();
        let cache = &self.cache;
        let feat = cache.acts.last().expect("backbone ran");

        // embedding head: e = v / |v|
        let d = cfg.emb_dim;
        let mut dv = vec![0.0f32; n * d];
        for i in 0..n {
            let e = &self.embeddings[i * d..(i + 1) * d];
            let de = &head.embeddings[i * d..(i + 1) * d];
            let proj: f32 = e.iter().zip(de).map(|(a, b)| a * b).sum();
            let inv = 1.0 / cache.emb_norms[i];
            for j in 0..d {
                dv[i * d + j] = (de[j] - e[j] * proj) * inv;
            }
        }
        let mut dg = linear_backward(&dv, &cache.emb_hidden, n, &params.emb_out_w, &mut grads.emb_out_w, &mut grads.emb_out_b);
        relu_backward(&mut dg, &cache.emb_hidden);
        let mut droi = linear_backward(&dg, &cache.roi_in, n, &params.emb_fc_w, &mut grads.emb_fc_w, &mut grads.emb_fc_b);

        // ROI head
        let w = cfg.roi_outputs();
        let k2 = cfg.num_id_classes + 2;
        let mut dout = vec![0.0f32; n * w];
        for i in 0..n {
            dout[i * w..i * w + k2].copy_from_slice(&head.logits[i * k2..(i + 1) * k2]);
            dout[i * w + k2..(i + 1) * w].copy_from_slice(&head.box_deltas[i * 4..(i + 1) * 4]);
        }
        let mut dh = linear_backward(&dout, &cache.roi_hidden, n, &params.roi_out_w, &mut grads.roi_out_w, &mut grads.roi_out_b);
        relu_backward(&mut dh, &cache.roi_hidden);
        let droi2 = linear_backward(&dh, &cache.roi_in, n, &params.roi_fc_w, &mut grads.roi_fc_w, &mut grads.roi_fc_b);
        droi.iter_mut().zip(&droi2).for_each(|(a, b)| *a += b);

        let mut dfeat = vec![0.0f32; c * fs * fs];
        roi_crop_backward(&droi, &mut dfeat, c, fs, fs, &cache.roi_boxes, cfg.roi_bins, FEATURE_STRIDE as f32);

        // proposal head: out[5 x cells] = W[5 x c] feat[c x cells] + b
        let cells = fs * fs;
        let mut drpn = vec![0.0f32; RPN_OUTPUTS * cells];
        for a in 0..cells {
            drpn[a] = head.rpn_logits[a];
            for k in 0..4 {
                drpn[(1 + k) * cells + a] = head.rpn_deltas[a * 4 + k];
            }
        }
        gemm(RPN_OUTPUTS, cells, c, &drpn, false, feat, true, &mut grads.rpn_w.data, true);
        for (o, row) in drpn.chunks(cells).enumerate() {
            grads.rpn_b.data[o] += row.iter().sum::<f32>();
        }
        gemm(c, RPN_OUTPUTS, cells, &params.rpn_w.data, true, &drpn, false, &mut dfeat, true);

        // backbone
        let mut dx = dfeat;
        for l in (0..cache.convs.len()).rev() {
            relu_backward(&mut dx, &cache.acts[l]);
            let (gw, gb) = (&mut grads.conv_w[l], &mut grads.conv_b[l]);
            dx = conv_backward(&dx, &cache.convs[l], &params.conv_w[l], gw, gb);
        }
    }
}

/// Assign each proposal the label of its max-IoU target when that IoU
/// exceeds 0.5, background otherwise.
pub fn assign_targets(proposals: &[BoundingBox], targets: &[Target], space: &LabelSpace) -> Assignment {
    let mut labels = Vec::with_capacity(proposals.len());
    let mut ious = Vec::with_capacity(proposals.len());
    let mut matched = Vec::with_capacity(proposals.len());
    for p in proposals {
        let best = targets
            .iter()
            .enumerate()
            .map(|(t, tg)| (t, p.iou_unchecked(&tg.bbox)))
            .fold(None, |acc: Option<(usize, f64)>, cur| match acc {
                Some(a) if a.1 >= cur.1 => Some(a),
                _ => Some(cur),
            });
        match best {
            Some((t, v)) if v > ASSIGN_IOU => {
                labels.push(targets[t].label);
                matched.push(Some(t));
                ious.push(v);
            }
            other => {
                labels.push(space.background_id());
                matched.push(None);
                ious.push(other.map_or(0.0, |b| b.1));
            }
        }
    }
    Assignment { labels, ious, matched }
}

/// Anchor labels: positive at IoU >= 0.5 or when the anchor is some target's
/// best match; negative below 0.3; ignored otherwise.
pub fn rpn_targets(anchor_boxes: &[BoundingBox], targets: &[Target]) -> RpnTargets {
    let n = anchor_boxes.len();
    let mut best_iou = vec![0.0f64; n];
    let mut best_t: Vec<Option<usize>> = vec![None; n];
    let mut forced = vec![None; n];
    for (t, tg) in targets.iter().enumerate() {
        let mut arg = (0, -1.0);
        for (a, ab) in anchor_boxes.iter().enumerate() {
            let v = ab.iou_unchecked(&tg.bbox);
            if v > best_iou[a] {
                best_iou[a] = v;
                best_t[a] = Some(t);
            }
            if v > arg.1 {
                arg = (a, v);
            }
        }
        if arg.1 > 0.0 {
            forced[arg.0] = Some(t);
        }
    }
    let mut objectness = Vec::with_capacity(n);
    let mut deltas = Vec::with_capacity(n);
    for a in 0..n {
        let positive = forced[a].or(if best_iou[a] >= RPN_POSITIVE_IOU { best_t[a] } else { None });
        match positive {
            Some(t) => {
                objectness.push(Some(true));
                deltas.push(Some(encode(&anchor_boxes[a], &targets[t].bbox)));
            }
            None => {
                objectness.push((best_iou[a] < RPN_NEGATIVE_IOU).then_some(false));
                deltas.push(None);
            }
        }
    }
    RpnTargets { objectness, deltas }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Run the detector on one image. `targets`, when given, drive proposal
/// assignment and anchor targets.
pub fn forward(params: &DetectorParams, image: &Image, targets: Option<&[Target]>, mode: ForwardMode) -> Result<ForwardOutput> {
    let cfg = &params.config;
    if image.width != cfg.image_size || image.height != cfg.image_size {
        return Err(CflError::Config(format!(
            "image is {}x{}, detector expects {}x{} (a multiple of {FEATURE_STRIDE})",
            image.width, image.height, cfg.image_size, cfg.image_size
        )));
    }
    let space = cfg.label_space();

    let mut convs = Vec::with_capacity(CONV_STRIDES.len());
    let mut acts: Vec<Vec<f32>> = Vec::with_capacity(CONV_STRIDES.len());
    let (mut c_in, mut h, mut w) = (3, image.height, image.width);
    for (l, &stride) in CONV_STRIDES.iter().enumerate() {
        let shape = ConvShape { c_in, c_out: cfg.channels[l], h, w, stride };
        let input = acts.last().map_or(&image.data, |a| a);
        let (mut out, cache) = conv_forward(input, shape, &params.conv_w[l], &params.conv_b[l]);
        relu_in_place(&mut out);
        c_in = shape.c_out;
        h = shape.out_h();
        w = shape.out_w();
        convs.push(cache);
        acts.push(out);
    }
    let feat = acts.last().expect("five convolutions");
    let c = cfg.feature_channels();
    let fs = cfg.feature_size();
    let cells = fs * fs;

    let mut rpn = Vec::with_capacity(RPN_OUTPUTS * cells);
    for o in 0..RPN_OUTPUTS {
        rpn.extend(std::iter::repeat(params.rpn_b.data[o]).take(cells));
    }
    gemm(RPN_OUTPUTS, c, cells, &params.rpn_w.data, false, feat, false, &mut rpn, true);
    let rpn_logits = rpn[..cells].to_vec();
    let mut rpn_deltas = vec![0.0; cells * 4];
    for a in 0..cells {
        for k in 0..4 {
            rpn_deltas[a * 4 + k] = rpn[(1 + k) * cells + a];
        }
    }

    let anchor_boxes = anchors(fs, fs, FEATURE_STRIDE as f32, cfg.anchor_size);
    let size = cfg.image_size as f32;
    let mut candidates = Vec::with_capacity(cells);
    for (a, ab) in anchor_boxes.iter().enumerate() {
        let d = [rpn_deltas[a * 4], rpn_deltas[a * 4 + 1], rpn_deltas[a * 4 + 2], rpn_deltas[a * 4 + 3]];
        let Some(b) = decode(ab, d).clip(size, size) else { continue };
        if b.width() < MIN_PROPOSAL_SIZE || b.height() < MIN_PROPOSAL_SIZE {
            continue;
        }
        candidates.push(Detection { bbox: b, class_id: 0, score: sigmoid(rpn_logits[a]) });
    }
    let limit = match mode {
        ForwardMode::Train { .. } => cfg.train_proposals,
        ForwardMode::Eval => cfg.eval_proposals,
    };
    let mut proposals: Vec<Proposal> = nms(&candidates, cfg.proposal_nms)?
        .into_iter()
        .take(limit)
        .map(|d| Proposal { bbox: d.bbox, objectness: d.score })
        .collect();
    if let (ForwardMode::Train { append_targets: true }, Some(ts)) = (mode, targets) {
        proposals.extend(ts.iter().map(|t| Proposal { bbox: t.bbox, objectness: 1.0 }));
    }
    let n = proposals.len();

    let roi_boxes: Vec<[f32; 4]> = proposals.iter().map(|p| p.bbox.to_array()).collect();
    let roi_in = roi_crop(feat, c, fs, fs, &roi_boxes, cfg.roi_bins, FEATURE_STRIDE as f32);

    let mut roi_hidden = linear_forward(&roi_in, n, &params.roi_fc_w, &params.roi_fc_b);
    relu_in_place(&mut roi_hidden);
    let roi_out = linear_forward(&roi_hidden, n, &params.roi_out_w, &params.roi_out_b);
    let k2 = cfg.num_id_classes + 2;
    let wout = cfg.roi_outputs();
    let mut logits = Vec::with_capacity(n * k2);
    let mut box_deltas = Vec::with_capacity(n * 4);
    for row in roi_out.chunks(wout) {
        logits.extend_from_slice(&row[..k2]);
        box_deltas.extend_from_slice(&row[k2..]);
    }

    let mut emb_hidden = linear_forward(&roi_in, n, &params.emb_fc_w, &params.emb_fc_b);
    relu_in_place(&mut emb_hidden);
    let mut embeddings = linear_forward(&emb_hidden, n, &params.emb_out_w, &params.emb_out_b);
    let d = cfg.emb_dim;
    let mut emb_norms = Vec::with_capacity(n);
    for row in embeddings.chunks_mut(d) {
        let norm = row.iter().map(|v| v * v).sum::<f32>().sqrt().max(1e-12);
        row.iter_mut().for_each(|v| *v /= norm);
        emb_norms.push(norm);
    }

    let (assignment, rpn_t) = match targets {
        Some(ts) => {
            let boxes: Vec<BoundingBox> = proposals.iter().map(|p| p.bbox).collect();
            (Some(assign_targets(&boxes, ts, &space)), Some(rpn_targets(&anchor_boxes, ts)))
        }
        None => (None, None),
    };

    Ok(ForwardOutput {
        proposals,
        rpn_logits,
        rpn_deltas,
        logits,
        box_deltas,
        embeddings,
        assignment,
        rpn_targets: rpn_t,
        cache: Cache { convs, acts, roi_boxes, roi_in, roi_hidden, emb_hidden, emb_norms },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictConfig {
    pub score_threshold: f32,
    pub nms_iou: f64,
}

/// Per-proposal class probabilities used at inference: the full softmax
/// for an open-set model, or the softmax without the unknown logit.
pub(crate) fn class_probabilities(row: &[f64], space: &LabelSpace, open_set: bool) -> Vec<f64> {
    if open_set {
        restricted_softmax(row, ClassKind::Id, space)
    } else {
        let unknown = space.unknown_id();
        let m = row.iter().enumerate().filter(|(c, _)| *c != unknown).map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().enumerate().map(|(c, v)| if c == unknown { 0.0 } else { (v - m).exp() }).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }
}

/// Detections from an already computed forward pass.
pub fn predict_with(out: &ForwardOutput, params: &DetectorParams, cfg: &PredictConfig) -> Result<Vec<Detection>> {
    let space = params.config.label_space();
    let k2 = space.total_logits();
    let size = params.config.image_size as f32;
    let mut dets = Vec::new();
    for (i, p) in out.proposals.iter().enumerate() {
        let row: Vec<f64> = out.logits[i * k2..(i + 1) * k2].iter().map(|&v| v as f64).collect();
        let probs = class_probabilities(&row, &space, params.config.open_set);
        let (class_id, score) = probs[..space.background_id()]
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (c, v)| if v > acc.1 { (c, v) } else { acc });
        let score = score as f32;
        if score < cfg.score_threshold {
            continue;
        }
        let d = [out.box_deltas[i * 4], out.box_deltas[i * 4 + 1], out.box_deltas[i * 4 + 2], out.box_deltas[i * 4 + 3]];
        let Some(bbox) = decode(&p.bbox, d).clip(size, size) else { continue };
        dets.push(Detection { bbox, class_id, score });
    }
    let mut kept = nms(&dets, cfg.nms_iou)?;
    kept.sort_by(detection_order);
    Ok(kept)
}

/// Inference on one image: class = argmax over non-background classes,
/// thresholded, then class-wise NMS.
pub fn predict(params: &DetectorParams, image: &Image, score_threshold: f32, nms_iou: f64) -> Result<Vec<Detection>> {
    if !(score_threshold > 0.0 && score_threshold < 1.0 && nms_iou > 0.0 && nms_iou < 1.0) {
        return Err(CflError::Config("prediction thresholds must lie in (0, 1)".into()));
    }
    let out = forward(params, image, None, ForwardMode::Eval)?;
    predict_with(&out, params, &PredictConfig { score_threshold, nms_iou })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{render_image, ShapeClass};
    use crate::detector::DetectorConfig;

    fn params(seed: u64) -> DetectorParams {
        DetectorParams::init(DetectorConfig::default(), seed).unwrap()
    }

    fn sample() -> (Image, Vec<Target>) {
        let img = render_image(4, &ShapeClass::ALL).unwrap();
        let targets = img.objects.iter().map(|o| Target { label: 0, bbox: o.bbox }).collect();
        (img.image, targets)
    }

    #[test]
    fn output_shapes_and_unit_embeddings() {
        let p = params(1);
        let (img, targets) = sample();
        let out = forward(&p, &img, Some(&targets), ForwardMode::Train { append_targets: true }).unwrap();
        let n = out.num_proposals();
        assert!(n > targets.len());
        assert_eq!(out.logits.len(), n * 6);
        assert_eq!(out.box_deltas.len(), n * 4);
        for i in 0..n {
            let norm: f32 = out.embedding(i).iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5);
        }
        let a = out.assignment.as_ref().unwrap();
        for (l, v) in a.labels.iter().zip(&a.ious) {
            assert_eq!(*l == 5, *v <= ASSIGN_IOU);
        }
        let eval = forward(&p, &img, None, ForwardMode::Eval).unwrap();
        assert!(eval.num_proposals() <= 32);
    }

    #[test]
    fn forward_is_deterministic() {
        let p = params(2);
        let (img, targets) = sample();
        let a = forward(&p, &img, Some(&targets), ForwardMode::Train { append_targets: true }).unwrap();
        let b = forward(&p, &img, Some(&targets), ForwardMode::Train { append_targets: true }).unwrap();
        assert_eq!(a.logits, b.logits);
        assert_eq!(a.embeddings, b.embeddings);
    }

    #[test]
    fn bad_image_size_rejected() {
        let p = params(0);
        assert!(forward(&p, &Image::filled(60, 60, [0.0; 3]), None, ForwardMode::Eval).is_err());
    }

    #[test]
    fn assignment_rule() {
        let space = LabelSpace::new(4).unwrap();
        let target = Target { label: 0, bbox: BoundingBox { x_min: 0.0, y_min: 0.0, x_max: 10.0, y_max: 10.0 } };
        // 10x6 box inside the target: IoU 0.6
        let prop = BoundingBox { x_min: 0.0, y_min: 0.0, x_max: 10.0, y_max: 6.0 };
        let far = BoundingBox { x_min: 30.0, y_min: 30.0, x_max: 40.0, y_max: 40.0 };
        let a = assign_targets(&[prop, far], &[target], &space);
        assert_eq!(a.labels, vec![0, space.background_id()]);
        assert!((a.ious[0] - 0.6).abs() < 1e-9);
        assert_eq!(a.matched, vec![Some(0), None]);
    }

    #[test]
    fn every_target_gets_a_positive_anchor() {
        let (_, targets) = sample();
        let anchor_boxes = anchors(8, 8, 8.0, 16.0);
        let t = rpn_targets(&anchor_boxes, &targets);
        let positives = t.objectness.iter().filter(|o| **o == Some(true)).count();
        assert!(positives >= targets.len());
        for (o, d) in t.objectness.iter().zip(&t.deltas) {
            assert_eq!(*o == Some(true), d.is_some());
        }
    }

    fn forced_output(p: &DetectorParams, logits_row: [f32; 6]) -> ForwardOutput {
        let (img, _) = sample();
        let mut out = forward(p, &img, None, ForwardMode::Eval).unwrap();
        for i in 0..out.num_proposals() {
            out.logits[i * 6..(i + 1) * 6].copy_from_slice(&logits_row);
            out.box_deltas[i * 4..(i + 1) * 4].fill(0.0);
        }
        out
    }

    #[test]
    fn background_everywhere_gives_no_detections() {
        let p = params(3);
        let out = forced_output(&p, [-5.0, -5.0, -5.0, -5.0, -5.0, 10.0]);
        let cfg = PredictConfig { score_threshold: 0.05, nms_iou: 0.5 };
        assert!(predict_with(&out, &p, &cfg).unwrap().is_empty());
    }

    #[test]
    fn confident_unknown_is_reported_as_unknown() {
        let p = params(3);
        let mut out = forced_output(&p, [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        out.proposals.truncate(1);
        out.logits.truncate(6);
        out.box_deltas.truncate(4);
        // p_unknown = e^5 / (e^5 + 5) ~ 0.967
        out.logits[4] = 5.0;
        let dets = predict_with(&out, &p, &PredictConfig { score_threshold: 0.9, nms_iou: 0.5 }).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].class_id, 4);
        assert!(dets[0].score > 0.9);

        let mut closed = p.clone();
        closed.config.open_set = false;
        let dets = predict_with(&out, &closed, &PredictConfig { score_threshold: 0.05, nms_iou: 0.5 }).unwrap();
        assert!(dets.iter().all(|d| d.class_id != 4));
    }

    #[test]
    fn duplicate_proposals_collapse_after_nms() {
        let p = params(3);
        let mut out = forced_output(&p, [5.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let b = BoundingBox { x_min: 10.0, y_min: 10.0, x_max: 30.0, y_max: 30.0 };
        for (i, prop) in out.proposals.iter_mut().enumerate() {
            prop.bbox = BoundingBox { x_min: b.x_min + (i % 2) as f32, ..b };
        }
        let dets = predict_with(&out, &p, &PredictConfig { score_threshold: 0.5, nms_iou: 0.5 }).unwrap();
        assert_eq!(dets.len(), 1);
        assert!(dets.iter().all(|d| d.class_id < 5));
    }
}
