//! Toy two-stage detector.
//!
//! A five-convolution backbone (8x downsampling) feeds a 1x1 proposal head
//! with one 16 px anchor per feature cell. The top proposals after NMS are
//! cropped from the feature map with a bilinear 4x4 crop-and-resize and fed
//! to two MLPs: the ROI head (class logits + box deltas) and the embedding
//! head (L2-normalized). Backward passes are written by hand.

pub mod boxes;
mod model;
mod params;

pub use model::{
    assign_targets, forward, predict, predict_with, rpn_targets, Assignment, ForwardMode, ForwardOutput,
    HeadGradients, PredictConfig, Proposal, RpnTargets,
};
pub use params::{DetectorConfig, DetectorParams, CONV_STRIDES, FEATURE_STRIDE, RPN_OUTPUTS};
