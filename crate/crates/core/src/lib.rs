//! Open-set semi-supervised object detection at toy scale.
//!
//! A small two-stage detector is trained on synthetic shape images under a
//! teacher/student pseudo-labeling pipeline. Two objectives shape the model:
//! a feature contrastive loss over a class-keyed embedding memory pool, and an
//! uncertainty-weighted classification loss that teaches the classifier to put
//! probability mass on a dedicated `unknown` class for out-of-distribution
//! objects.
//!
//! Module map:
//! - [`geometry`]: boxes, IoU, class-wise NMS
//! - [`labels`]: the ID / unknown / background label partition
//! - [`data`]: deterministic shape-image generator, splits, augmentations
//! - [`pool`]: the per-class embedding memory pool
//! - [`losses`]: contrastive, uncertainty and composed objectives
//! - [`detector`]: the convolutional detector with hand-written backprop
//! - [`pipeline`]: stage-1 / stage-2 training, EMA teacher, schedules
//! - [`eval`]: AP, mAP over ID classes, AP of the unknown class, pseudo-label quality

pub mod data;
pub mod detector;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod labels;
pub mod losses;
pub mod nn;
pub mod pipeline;
pub mod pool;

pub use error::{CflError, Result};
pub use geometry::{iou, nms, BoundingBox, Detection};
pub use labels::{ClassKind, LabelSpace};
