//! Two-stage training: supervised pre-training, then teacher/student
//! training on labeled plus pseudo-labeled unlabeled images.
//!
//! Every random draw (batch indices, augmentation) is seeded by
//! `(seed, iteration, slot)`, so a run is a pure function of its
//! configuration and seed, and a resumed run continues bit-exactly.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{splitmix64, weak_strong_pair, AugmentPlan, Image, LabeledSample, Strength, Target};
use crate::detector::{
    forward, predict, predict_with, DetectorConfig, DetectorParams, ForwardMode, ForwardOutput, HeadGradients,
    PredictConfig,
};
use crate::error::{CflError, Result};
use crate::geometry::Detection;
use crate::labels::LabelSpace;
use crate::losses::{
    binary_cross_entropy_with_logits, closed_set_cross_entropy, feature_contrastive_loss, smooth_l1,
    uncertainty_classification_loss, FcConfig, LossWeights, ProposalBatch, Stage, SupervisedTerms, UcConfig,
    UnsupervisedTerms,
};
use crate::pool::{EmbeddingPool, PoolConfig, PooledEmbedding};

const RPN_SMOOTH_L1_BETA: f64 = 1.0 / 9.0;
const ROI_SMOOTH_L1_BETA: f64 = 1.0;

const SLOT_LABELED_BATCH: u64 = 1;
const SLOT_UNLABELED_BATCH: u64 = 2;
const SLOT_LABELED_AUG: u64 = 3;
const SLOT_UNLABELED_AUG: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub ema_momentum: f64,
    pub pseudo_threshold: f64,
    pub pseudo_nms: f64,
    pub alpha_t_init: f64,
    pub alpha_t_final: f64,
    pub stage1_iters: u64,
    pub stage2_iters: u64,
    pub lambda: f64,
    pub beta: f64,
    pub tau: f64,
    pub alpha: f64,
    pub k_mine: usize,
    pub labeled_batch: usize,
    pub unlabeled_batch: usize,
    pub enable_fc: bool,
    pub enable_uc: bool,
    pub store_ood_in_pool: bool,
    pub literal_denominator: bool,
    pub pool_capacity: usize,
    /// Pool insertions start at this iteration.
    pub pool_start_iter: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            grad_clip: 10.0,
            ema_momentum: 0.999,
            pseudo_threshold: 0.7,
            pseudo_nms: 0.5,
            alpha_t_init: 0.1,
            alpha_t_final: 0.01,
            stage1_iters: 800,
            stage2_iters: 800,
            lambda: 2.0,
            beta: 1.0,
            tau: 0.2,
            alpha: 1.0,
            k_mine: 3,
            labeled_batch: 4,
            unlabeled_batch: 4,
            enable_fc: true,
            enable_uc: true,
            store_ood_in_pool: true,
            literal_denominator: false,
            pool_capacity: 256,
            pool_start_iter: 0,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        let err = |m: String| Err(CflError::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return err(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return err(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.grad_clip >= 0.0) {
            return err("weight_decay and grad_clip must be non-negative".into());
        }
        if !open(self.ema_momentum) {
            return err(format!("ema_momentum must lie in (0, 1), got {}", self.ema_momentum));
        }
        if !open(self.pseudo_threshold) || !open(self.pseudo_nms) {
            return err("pseudo_threshold and pseudo_nms must lie in (0, 1)".into());
        }
        if !(self.alpha_t_final >= 0.0 && self.alpha_t_final <= self.alpha_t_init) {
            return err(format!(
                "need 0 <= alpha_t_final <= alpha_t_init, got {} and {}",
                self.alpha_t_final, self.alpha_t_init
            ));
        }
        if self.labeled_batch == 0 {
            return err("labeled_batch must be at least 1".into());
        }
        if self.pool_capacity == 0 {
            return err("pool_capacity must be at least 1".into());
        }
        self.loss_weights(0).validate()
    }

    pub fn total_iters(&self) -> u64 {
        self.stage1_iters + self.stage2_iters
    }

    pub fn loss_weights(&self, iteration: u64) -> LossWeights {
        LossWeights {
            alpha_t: alpha_t_schedule(iteration, self),
            beta: self.beta,
            lambda: self.lambda,
            tau: self.tau,
            alpha: self.alpha,
            k_mine: self.k_mine,
        }
    }

    pub fn pool_config(&self, emb_dim: usize) -> PoolConfig {
        PoolConfig { capacity: self.pool_capacity, dim: emb_dim, ..PoolConfig::default() }
    }
}

/// Linear from `alpha_t_init` at iteration 0 to `alpha_t_final` at the last
/// iteration of stage 2, constant afterwards.
pub fn alpha_t_schedule(iteration: u64, cfg: &ScheduleConfig) -> f64 {
    let total = cfg.total_iters();
    if total == 0 {
        return cfg.alpha_t_init;
    }
    let t = (iteration.min(total)) as f64 / total as f64;
    cfg.alpha_t_init + (cfg.alpha_t_final - cfg.alpha_t_init) * t
}

/// `teacher = m * teacher + (1 - m) * student`, parameter by parameter.
pub fn ema_update(teacher: &mut DetectorParams, student: &DetectorParams, m: f64) -> Result<()> {
    if !(m > 0.0 && m < 1.0) {
        return Err(CflError::Config(format!("EMA momentum must lie in (0, 1), got {m}")));
    }
    if !teacher.same_shapes(student) {
        return Err(CflError::Shape("teacher and student parameter shapes differ".into()));
    }
    for (t, s) in teacher.tensors_mut().into_iter().zip(student.tensors()) {
        for (a, b) in t.data.iter_mut().zip(&s.data) {
            *a = (m * *a as f64 + (1.0 - m) * *b as f64) as f32;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelConfig {
    pub threshold: f64,
    pub nms_iou: f64,
}

/// Teacher detections kept as pseudo-labels: score >= threshold, then
/// class-wise NMS. Unknown detections are kept.
pub fn generate_pseudo_labels(teacher: &DetectorParams, image: &Image, cfg: &PseudoLabelConfig) -> Result<Vec<Detection>> {
    let dets = predict(teacher, image, cfg.threshold as f32, cfg.nms_iou)?;
    Ok(dets.into_iter().filter(|d| d.score as f64 >= cfg.threshold).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub student: DetectorParams,
    pub teacher: DetectorParams,
    pub pool: EmbeddingPool,
    /// Number of completed SGD steps over both stages.
    pub iteration: u64,
    pub velocity: DetectorParams,
    /// Root of every per-iteration random stream.
    pub seed: u64,
}

impl TrainState {
    pub fn new(detector: DetectorConfig, cfg: &ScheduleConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut detector = detector;
        detector.open_set = cfg.enable_uc;
        let student = DetectorParams::init(detector, seed)?;
        let space = detector.label_space();
        let pool = EmbeddingPool::new(space.num_id_classes() + 1, cfg.pool_config(detector.emb_dim))?;
        Ok(Self { teacher: student.clone(), velocity: student.zeros_like(), student, pool, iteration: 0, seed })
    }

    pub fn space(&self) -> LabelSpace {
        self.student.config.label_space()
    }

    fn stream(&self, slot: u64, index: u64) -> u64 {
        splitmix64(splitmix64(self.seed ^ (slot << 58)) ^ splitmix64(self.iteration) ^ index.rotate_left(29))
    }
}

/// What one step did, for logging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Iteration number before the step.
    pub iteration: u64,
    pub stage: u8,
    pub sup: SupervisedTerms,
    pub unsup: UnsupervisedTerms,
    pub total: f64,
    pub alpha_t: f64,
    pub pool_occupancy: Vec<usize>,
    pub pseudo_labels: usize,
    pub pseudo_unknown: usize,
    pub grad_norm: f64,
}

/// Losses and head gradients for the images of one branch.
#[derive(Debug, Clone)]
pub struct BranchOutput {
    pub outputs: Vec<ForwardOutput>,
    pub targets: Vec<Vec<Target>>,
    /// Already scaled by the branch's loss weights.
    pub head_grads: Vec<HeadGradients>,
    pub rpn_cls: f64,
    pub rpn_reg: f64,
    pub roi_reg: f64,
    pub roi_ce: f64,
    pub fc: f64,
    pub uc: f64,
}

fn concat_batches(parts: Vec<ProposalBatch>, supervised: bool) -> ProposalBatch {
    let dim = parts.iter().map(|p| p.dim).find(|&d| d > 0).unwrap_or(0);
    let mut out = ProposalBatch {
        logits: Vec::new(),
        embeddings: Vec::new(),
        dim,
        assigned_label: Vec::new(),
        assigned_iou: Vec::new(),
        image_index: Vec::new(),
        is_supervised_stage: supervised,
    };
    for p in parts {
        out.logits.extend(p.logits);
        out.embeddings.extend(p.embeddings);
        out.assigned_label.extend(p.assigned_label);
        out.assigned_iou.extend(p.assigned_iou);
        out.image_index.extend(p.image_index);
    }
    out
}

/// Forward every image of a branch and compute its losses.
///
/// The supervised branch carries regression terms; the unsupervised one
/// never does, so its box-delta gradients are identically zero. `scale`
/// multiplies every gradient (λ for the unsupervised branch).
pub fn branch_losses(
    params: &DetectorParams,
    images: &[Image],
    targets: Vec<Vec<Target>>,
    pool: &EmbeddingPool,
    weights: &LossWeights,
    cfg: &ScheduleConfig,
    supervised: bool,
    scale: f64,
) -> Result<BranchOutput> {
    let space = params.config.label_space();
    let n_img = images.len().max(1) as f64;
    let mut outputs = Vec::with_capacity(images.len());
    for (img, t) in images.iter().zip(&targets) {
        outputs.push(forward(params, img, Some(t), ForwardMode::Train { append_targets: true })?);
    }
    let mut head_grads: Vec<HeadGradients> = outputs.iter().map(HeadGradients::zeros).collect();
    let (mut rpn_cls, mut rpn_reg, mut roi_reg) = (0.0, 0.0, 0.0);

    for (out, hg) in outputs.iter().zip(head_grads.iter_mut()) {
        let rt = out.rpn_targets.as_ref().expect("targets given");
        let logits: Vec<f64> = out.rpn_logits.iter().map(|&v| v as f64).collect();
        let cls = binary_cross_entropy_with_logits(&logits, &rt.objectness);
        rpn_cls += cls.loss / n_img;
        for (g, v) in hg.rpn_logits.iter_mut().zip(&cls.grad) {
            *g = (v * scale / n_img) as f32;
        }
        if !supervised {
            continue;
        }
        let positives = rt.deltas.iter().filter(|d| d.is_some()).count();
        for (a, d) in rt.deltas.iter().enumerate() {
            let Some(target) = d else { continue };
            let pred: Vec<f64> = out.rpn_deltas[a * 4..a * 4 + 4].iter().map(|&v| v as f64).collect();
            let r = smooth_l1(&pred, target, RPN_SMOOTH_L1_BETA, positives as f64);
            rpn_reg += r.loss / n_img;
            for k in 0..4 {
                hg.rpn_deltas[a * 4 + k] = (r.grad[k] * scale / n_img) as f32;
            }
        }
    }

    let batch = concat_batches(
        outputs.iter().enumerate().map(|(i, o)| o.proposal_batch(&space, i, supervised)).collect(),
        supervised,
    );
    batch.validate(&space)?;
    let non_bg = batch.assigned_label.iter().filter(|&&l| l != space.background_id()).count().max(1) as f64;
    let row_offsets: Vec<usize> = outputs
        .iter()
        .scan(0, |acc, o| {
            let start = *acc;
            *acc += o.num_proposals();
            Some(start)
        })
        .collect();

    if supervised {
        for (i, (out, t)) in outputs.iter().zip(&targets).enumerate() {
            for (r, tgt) in out.roi_regression_targets(t).iter().enumerate() {
                let Some(tgt) = tgt else { continue };
                let pred: Vec<f64> = out.box_deltas[r * 4..r * 4 + 4].iter().map(|&v| v as f64).collect();
                let l = smooth_l1(&pred, tgt, ROI_SMOOTH_L1_BETA, non_bg);
                roi_reg += l.loss;
                for k in 0..4 {
                    head_grads[i].box_deltas[r * 4 + k] = (l.grad[k] * scale) as f32;
                }
            }
        }
    }

    let width = space.total_logits();
    let add_logit_grad = |grad: &[f64], w: f64, head_grads: &mut Vec<HeadGradients>| {
        for (i, &off) in row_offsets.iter().enumerate() {
            let n = outputs[i].num_proposals();
            for (g, v) in head_grads[i].logits.iter_mut().zip(&grad[off * width..(off + n) * width]) {
                *g += (v * w * scale) as f32;
            }
        }
    };
    let (mut roi_ce, mut uc) = (0.0, 0.0);
    if cfg.enable_uc {
        let stage = if supervised { Stage::Sup } else { Stage::Semi };
        let out = uncertainty_classification_loss(&batch, &space, &UcConfig { alpha: cfg.alpha, k_mine: cfg.k_mine }, stage)?;
        uc = out.loss;
        add_logit_grad(&out.grad, weights.beta, &mut head_grads);
    } else {
        let out = closed_set_cross_entropy(&batch, &space)?;
        roi_ce = out.loss;
        add_logit_grad(&out.grad, 1.0, &mut head_grads);
    }

    let mut fc = 0.0;
    if cfg.enable_fc && weights.alpha_t > 0.0 {
        let snapshot = pool.snapshot();
        let fc_cfg = FcConfig { tau: cfg.tau, literal_denominator: cfg.literal_denominator };
        let out = feature_contrastive_loss(&batch, &snapshot, &space, &fc_cfg)?;
        fc = out.loss;
        let d = batch.dim;
        for (i, &off) in row_offsets.iter().enumerate() {
            let n = outputs[i].num_proposals();
            for (g, v) in head_grads[i].embeddings.iter_mut().zip(&out.grad[off * d..(off + n) * d]) {
                *g += (v * weights.alpha_t * scale) as f32;
            }
        }
    }

    Ok(BranchOutput { outputs, targets, head_grads, rpn_cls, rpn_reg, roi_reg, roi_ce, fc, uc })
}

/// Offer every target-assigned proposal of a branch to the pool.
fn update_pool(pool: &mut EmbeddingPool, branch: &BranchOutput, space: &LabelSpace, store_ood: bool) -> Result<()> {
    for (out, targets) in branch.outputs.iter().zip(&branch.targets) {
        let Some(a) = &out.assignment else { continue };
        for (i, m) in a.matched.iter().enumerate() {
            let Some(t) = m else { continue };
            let class_id = a.labels[i];
            if space.is_unknown(class_id) && !store_ood {
                continue;
            }
            let emb = out.embedding(i);
            let (s_iou, s_cos) = pool.admission_score(emb, &out.proposals[i].bbox, &targets[*t].bbox, class_id)?;
            pool.try_insert(PooledEmbedding { vector: emb.to_vec(), class_id, score: 0.0 }, s_iou, s_cos)?;
        }
    }
    Ok(())
}

fn sample_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n, k.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

fn labeled_half(state: &TrainState, labeled: &[LabeledSample], cfg: &ScheduleConfig) -> (Vec<Image>, Vec<Vec<Target>>) {
    let idx = sample_indices(labeled.len(), cfg.labeled_batch, state.stream(SLOT_LABELED_BATCH, 0));
    idx.iter()
        .enumerate()
        .map(|(slot, &i)| {
            let s = &labeled[i];
            let boxes: Vec<_> = s.targets.iter().map(|t| t.bbox).collect();
            let plan = AugmentPlan::sample(
                Strength::Weak,
                state.stream(SLOT_LABELED_AUG, slot as u64),
                s.image.width,
                s.image.height,
                &boxes,
            );
            let (img, boxes) = plan.apply(&s.image, &boxes);
            let targets = s.targets.iter().zip(boxes).map(|(t, bbox)| Target { label: t.label, bbox }).collect();
            (img, targets)
        })
        .unzip()
}

/// One SGD step. Returns the step record; the state is untouched on error.
fn step(
    state: &mut TrainState,
    labeled: &[LabeledSample],
    unlabeled: &[Image],
    cfg: &ScheduleConfig,
    stage: u8,
) -> Result<StepRecord> {
    // ReLU maps NaN to 0, so a poisoned weight would not surface in the loss
    if !state.student.is_finite() {
        return Err(CflError::Diverged { iteration: state.iteration, reason: "non-finite student parameters".into() });
    }
    let space = state.space();
    let weights = cfg.loss_weights(state.iteration);
    let teacher_sum = state.teacher.checksum();

    let (l_imgs, l_targets) = labeled_half(state, labeled, cfg);
    let sup = branch_losses(&state.student, &l_imgs, l_targets, &state.pool, &weights, cfg, true, 1.0)?;

    let run_unsup = stage == 2 && cfg.lambda > 0.0 && !unlabeled.is_empty() && cfg.unlabeled_batch > 0;
    let mut unsup_branch = None;
    let (mut pseudo_labels, mut pseudo_unknown) = (0, 0);
    if run_unsup {
        let pl_cfg = PseudoLabelConfig { threshold: cfg.pseudo_threshold, nms_iou: cfg.pseudo_nms };
        let idx = sample_indices(unlabeled.len(), cfg.unlabeled_batch, state.stream(SLOT_UNLABELED_BATCH, 0));
        let mut strong_imgs = Vec::with_capacity(idx.len());
        let mut targets = Vec::with_capacity(idx.len());
        for (slot, &i) in idx.iter().enumerate() {
            let (weak, strong, _) = weak_strong_pair(&unlabeled[i], state.stream(SLOT_UNLABELED_AUG, slot as u64));
            let pseudo = generate_pseudo_labels(&state.teacher, &weak, &pl_cfg)?;
            pseudo_labels += pseudo.len();
            pseudo_unknown += pseudo.iter().filter(|d| space.is_unknown(d.class_id)).count();
            targets.push(pseudo.iter().map(|d| Target { label: d.class_id, bbox: d.bbox }).collect());
            strong_imgs.push(strong);
        }
        unsup_branch =
            Some(branch_losses(&state.student, &strong_imgs, targets, &state.pool, &weights, cfg, false, cfg.lambda)?);
    }

    let mut grads = state.student.zeros_like();
    for branch in std::iter::once(&sup).chain(unsup_branch.as_ref()) {
        for (out, hg) in branch.outputs.iter().zip(&branch.head_grads) {
            out.backward(&state.student, hg, &mut grads);
        }
    }

    let sup_terms = SupervisedTerms {
        rpn_cls: sup.rpn_cls,
        rpn_reg: sup.rpn_reg,
        roi_reg: sup.roi_reg,
        roi_ce: sup.roi_ce,
        fc: sup.fc,
        uc: sup.uc,
    };
    let unsup_terms = unsup_branch
        .as_ref()
        .map(|u| UnsupervisedTerms { rpn_cls: u.rpn_cls, roi_ce: u.roi_ce, fc: u.fc, uc: u.uc })
        .unwrap_or_default();
    let total = sup_terms.total(&weights) + if run_unsup { cfg.lambda * unsup_terms.total(&weights) } else { 0.0 };
    let grad_norm = grads.sum_of_squares().sqrt();
    if !total.is_finite() || !grad_norm.is_finite() {
        return Err(CflError::Diverged {
            iteration: state.iteration,
            reason: format!("loss {total}, gradient norm {grad_norm}, terms {sup_terms:?} {unsup_terms:?}"),
        });
    }

    if cfg.weight_decay > 0.0 {
        grads.add_scaled(&state.student, cfg.weight_decay as f32);
    }
    let norm = grads.sum_of_squares().sqrt();
    if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
        let s = (cfg.grad_clip / norm) as f32;
        grads.tensors_mut().into_iter().for_each(|p| p.data.iter_mut().for_each(|v| *v *= s));
    }
    let mu = cfg.momentum as f32;
    for (v, g) in state.velocity.tensors_mut().into_iter().zip(grads.tensors()) {
        for (a, b) in v.data.iter_mut().zip(&g.data) {
            *a = mu * *a + b;
        }
    }
    state.student.add_scaled(&state.velocity, -(cfg.lr as f32));
    if state.teacher.checksum() != teacher_sum {
        return Err(CflError::Contract("teacher parameters changed during the optimizer step".into()));
    }

    if state.iteration >= cfg.pool_start_iter {
        update_pool(&mut state.pool, &sup, &space, cfg.store_ood_in_pool)?;
        if let Some(u) = &unsup_branch {
            update_pool(&mut state.pool, u, &space, cfg.store_ood_in_pool)?;
        }
    }

    let record = StepRecord {
        iteration: state.iteration,
        stage,
        sup: sup_terms,
        unsup: unsup_terms,
        total,
        alpha_t: weights.alpha_t,
        pool_occupancy: state.pool.occupancy(),
        pseudo_labels,
        pseudo_unknown,
        grad_norm,
    };
    state.iteration += 1;
    Ok(record)
}

/// Observer called after every step; an error aborts training.
pub type StepObserver<'a> = dyn FnMut(&TrainState, &StepRecord) -> Result<()> + 'a;

/// Supervised pre-training up to `stage1_iters`; the teacher becomes a copy
/// of the student at the end. Resumes from `state.iteration`.
pub fn train_stage1(
    state: &mut TrainState,
    labeled: &[LabeledSample],
    cfg: &ScheduleConfig,
    observer: &mut StepObserver<'_>,
) -> Result<()> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(CflError::Empty("labeled set"));
    }
    while state.iteration < cfg.stage1_iters {
        let rec = step(state, labeled, &[], cfg, 1)?;
        observer(state, &rec)?;
    }
    state.teacher = state.student.clone();
    Ok(())
}

/// Teacher/student training from the end of stage 1 to
/// `stage1_iters + stage2_iters`.
pub fn train_stage2(
    state: &mut TrainState,
    labeled: &[LabeledSample],
    unlabeled: &[Image],
    cfg: &ScheduleConfig,
    observer: &mut StepObserver<'_>,
) -> Result<()> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(CflError::Empty("labeled set"));
    }
    if state.iteration < cfg.stage1_iters {
        return Err(CflError::Contract(format!(
            "stage 2 needs a finished stage 1 (iteration {} < {})",
            state.iteration, cfg.stage1_iters
        )));
    }
    if unlabeled.is_empty() {
        log::warn!("unlabeled set is empty; stage 2 reduces to supervised training");
    }
    while state.iteration < cfg.total_iters() {
        let rec = step(state, labeled, unlabeled, cfg, 2)?;
        ema_update(&mut state.teacher, &state.student, cfg.ema_momentum)?;
        observer(state, &rec)?;
    }
    Ok(())
}

/// Predictions for a list of images.
pub fn predict_all(params: &DetectorParams, images: &[&Image], score_threshold: f32, nms_iou: f64) -> Result<Vec<Vec<Detection>>> {
    let cfg = PredictConfig { score_threshold, nms_iou };
    images
        .iter()
        .map(|img| {
            let out = forward(params, img, None, ForwardMode::Eval)?;
            predict_with(&out, params, &cfg)
        })
        .collect()
}
