//! Synthetic shape-image detection data.

mod augment;
mod manifest;
mod render;
mod shapes;
mod split;

pub use augment::{augment, flip_box, flip_image, weak_strong_pair, AugmentPlan, Photometric, Strength};
pub use manifest::{
    load_hidden_annotations, load_labeled, load_test, load_unlabeled_images, read_manifest, write_dataset,
    Annotation, ManifestRecord, SplitName,
};
pub use render::{render_image, render_scene, Image, ObjectMask, ShapeImage, ShapeObject, DEFAULT_IMAGE_SIZE};
pub use shapes::ShapeClass;
pub use split::{build_splits, Dataset, SplitConfig};
pub(crate) use split::splitmix64;

use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;

/// A training/evaluation target with an internal label index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub label: usize,
    pub bbox: BoundingBox,
}

/// An image with its (possibly pseudo) targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub seed: u64,
    pub image: Image,
    pub targets: Vec<Target>,
}
