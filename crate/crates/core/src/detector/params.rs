use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CflError, Result};
use crate::labels::LabelSpace;
use crate::nn::Param;

/// Architecture hyperparameters. Serialized with the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub num_id_classes: usize,
    /// When false the unknown logit is never scored: a closed-set detector.
    pub open_set: bool,
    pub image_size: usize,
    /// Output channels of the five backbone convolutions.
    pub channels: [usize; 5],
    pub roi_hidden: usize,
    pub emb_hidden: usize,
    pub emb_dim: usize,
    pub roi_bins: usize,
    pub anchor_size: f32,
    pub train_proposals: usize,
    pub eval_proposals: usize,
    pub proposal_nms: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            num_id_classes: 4,
            open_set: true,
            image_size: 64,
            channels: [16, 32, 32, 48, 48],
            roi_hidden: 128,
            emb_hidden: 128,
            emb_dim: 128,
            roi_bins: 4,
            anchor_size: 16.0,
            train_proposals: 64,
            eval_proposals: 32,
            proposal_nms: 0.7,
        }
    }
}

/// Backbone stride per convolution: three stride-2 blocks, the last two
/// followed by a stride-1 convolution.
pub const CONV_STRIDES: [usize; 5] = [2, 2, 1, 2, 1];
pub const FEATURE_STRIDE: usize = 8;
/// Objectness plus four box deltas per anchor.
pub const RPN_OUTPUTS: usize = 5;

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.image_size % FEATURE_STRIDE != 0 {
            return Err(CflError::Config(format!("image size {} not divisible by {FEATURE_STRIDE}", self.image_size)));
        }
        if self.num_id_classes == 0 || self.emb_dim == 0 || self.roi_bins == 0 {
            return Err(CflError::Config("detector dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn label_space(&self) -> LabelSpace {
        LabelSpace::new(self.num_id_classes).expect("validated class count")
    }

    pub fn feature_size(&self) -> usize {
        self.image_size / FEATURE_STRIDE
    }

    pub fn feature_channels(&self) -> usize {
        self.channels[4]
    }

    pub fn roi_features(&self) -> usize {
        self.feature_channels() * self.roi_bins * self.roi_bins
    }

    /// Width of the ROI head output: class logits then four box deltas.
    pub fn roi_outputs(&self) -> usize {
        self.num_id_classes + 2 + 4
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub config: DetectorConfig,
    pub conv_w: Vec<Param>,
    pub conv_b: Vec<Param>,
    pub rpn_w: Param,
    pub rpn_b: Param,
    pub roi_fc_w: Param,
    pub roi_fc_b: Param,
    pub roi_out_w: Param,
    pub roi_out_b: Param,
    pub emb_fc_w: Param,
    pub emb_fc_b: Param,
    pub emb_out_w: Param,
    pub emb_out_b: Param,
}

impl DetectorParams {
    /// He-initialized weights; output layers start small.
    pub fn init(config: DetectorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        let mut c_in = 3;
        for &c_out in &config.channels {
            let fan_in = c_in * 9;
            conv_w.push(Param::normal(&[c_out, fan_in], (2.0 / fan_in as f32).sqrt(), &mut rng));
            conv_b.push(Param::zeros(&[c_out]));
            c_in = c_out;
        }
        let c = config.feature_channels();
        let r = config.roi_features();
        Ok(Self {
            config,
            conv_w,
            conv_b,
            rpn_w: Param::normal(&[RPN_OUTPUTS, c], 0.01, &mut rng),
            rpn_b: Param::zeros(&[RPN_OUTPUTS]),
            roi_fc_w: Param::normal(&[config.roi_hidden, r], (2.0 / r as f32).sqrt(), &mut rng),
            roi_fc_b: Param::zeros(&[config.roi_hidden]),
            roi_out_w: Param::normal(&[config.roi_outputs(), config.roi_hidden], 0.01, &mut rng),
            roi_out_b: Param::zeros(&[config.roi_outputs()]),
            emb_fc_w: Param::normal(&[config.emb_hidden, r], (2.0 / r as f32).sqrt(), &mut rng),
            emb_fc_b: Param::zeros(&[config.emb_hidden]),
            emb_out_w: Param::normal(&[config.emb_dim, config.emb_hidden], (1.0 / config.emb_hidden as f32).sqrt(), &mut rng),
            emb_out_b: Param::zeros(&[config.emb_dim]),
        })
    }

    /// All-zero tensors of identical shapes, used as gradient accumulators.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|p| p.data.iter_mut().for_each(|v| *v = 0.0));
        z
    }

    /// Every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = Vec::new();
        for (w, b) in self.conv_w.iter().zip(&self.conv_b) {
            v.push(w);
            v.push(b);
        }
        v.extend([
            &self.rpn_w,
            &self.rpn_b,
            &self.roi_fc_w,
            &self.roi_fc_b,
            &self.roi_out_w,
            &self.roi_out_b,
            &self.emb_fc_w,
            &self.emb_fc_b,
            &self.emb_out_w,
            &self.emb_out_b,
        ]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = Vec::new();
        for (w, b) in self.conv_w.iter_mut().zip(self.conv_b.iter_mut()) {
            v.push(w);
            v.push(b);
        }
        v.extend([
            &mut self.rpn_w,
            &mut self.rpn_b,
            &mut self.roi_fc_w,
            &mut self.roi_fc_b,
            &mut self.roi_out_w,
            &mut self.roi_out_b,
            &mut self.emb_fc_w,
            &mut self.emb_fc_b,
            &mut self.emb_out_w,
            &mut self.emb_out_b,
        ]);
        v
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|p| p.len()).sum()
    }

    pub fn same_shapes(&self, other: &Self) -> bool {
        let (a, b) = (self.tensors(), other.tensors());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.shape == y.shape)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|p| p.data.iter().all(|v| v.is_finite()))
    }

    /// Order-sensitive FNV-1a hash over the raw bits of every weight.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.tensors() {
            for v in &p.data {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: f32) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.tensors().iter().flat_map(|p| p.data.iter()).map(|v| (*v as f64).powi(2)).sum()
    }
}
