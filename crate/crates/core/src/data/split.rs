use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::render::{render_scene, ShapeImage};
use super::shapes::ShapeClass;
use super::{LabeledSample, Target};
use crate::error::{CflError, Result};
use crate::labels::LabelSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub id_classes: Vec<ShapeClass>,
    pub ood_classes: Vec<ShapeClass>,
    pub num_labeled: usize,
    pub num_unlabeled: usize,
    pub num_test: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        use ShapeClass::*;
        Self {
            id_classes: vec![Circle, Square, Triangle, Cross],
            ood_classes: vec![Star, Ring],
            num_labeled: 200,
            num_unlabeled: 800,
            num_test: 200,
            image_size: super::DEFAULT_IMAGE_SIZE,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.id_classes.is_empty() || self.ood_classes.is_empty() {
            return Err(CflError::Config("ID and OOD class sets must both be non-empty".into()));
        }
        let ids: HashSet<_> = self.id_classes.iter().collect();
        if ids.len() != self.id_classes.len() {
            return Err(CflError::Config("duplicate ID class".into()));
        }
        if self.ood_classes.iter().any(|c| ids.contains(c)) {
            return Err(CflError::Config("ID and OOD class sets overlap".into()));
        }
        if self.image_size % 8 != 0 {
            return Err(CflError::Config(format!("image size {} not divisible by 8", self.image_size)));
        }
        Ok(())
    }

    pub fn label_space(&self) -> Result<LabelSpace> {
        LabelSpace::new(self.id_classes.len())
    }

    /// Internal label of a shape: its ID index, or unknown for OOD shapes.
    pub fn label_of(&self, shape: ShapeClass) -> usize {
        self.id_classes
            .iter()
            .position(|&c| c == shape)
            .unwrap_or(self.id_classes.len())
    }

    fn all_classes(&self) -> Vec<ShapeClass> {
        self.id_classes.iter().chain(&self.ood_classes).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: SplitConfig,
    pub labeled: Vec<ShapeImage>,
    pub unlabeled: Vec<ShapeImage>,
    pub test: Vec<ShapeImage>,
}

impl Dataset {
    fn targets(&self, img: &ShapeImage) -> Vec<Target> {
        img.objects
            .iter()
            .map(|o| Target { label: self.config.label_of(o.shape), bbox: o.bbox })
            .collect()
    }

    pub fn labeled_samples(&self) -> Vec<LabeledSample> {
        self.labeled
            .iter()
            .map(|img| LabeledSample { seed: img.seed, image: img.image.clone(), targets: self.targets(img) })
            .collect()
    }

    /// Test samples with OOD objects relabeled unknown.
    pub fn test_samples(&self) -> Vec<LabeledSample> {
        self.test
            .iter()
            .map(|img| LabeledSample { seed: img.seed, image: img.image.clone(), targets: self.targets(img) })
            .collect()
    }

    /// Hidden annotations of the unlabeled split, for diagnostics only.
    pub fn unlabeled_hidden(&self) -> Vec<Vec<Target>> {
        self.unlabeled.iter().map(|img| self.targets(img)).collect()
    }
}

const TAG_LABELED: u64 = 1;
const TAG_UNLABELED: u64 = 2;
const TAG_TEST: u64 = 3;

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Distinct `(tag, block, index)` triples map to distinct seeds because
/// splitmix64 is a bijection.
fn image_seed(base: u64, tag: u64, block: u64, index: usize) -> u64 {
    splitmix64(splitmix64(base) ^ (tag << 56) ^ (block << 40) ^ index as u64)
}

fn render_block(cfg: &SplitConfig, tag: u64, block: u64, n: usize, allowed: &[ShapeClass]) -> Result<Vec<ShapeImage>> {
    (0..n)
        .map(|i| Ok(render_scene(image_seed(cfg.seed, tag, block, i), allowed, None, cfg.image_size)?.0))
        .collect()
}

/// Build the labeled (ID objects only), unlabeled (ID + OOD, annotations
/// hidden from training) and test (ID + OOD) splits.
pub fn build_splits(cfg: &SplitConfig) -> Result<Dataset> {
    cfg.validate()?;
    let all = cfg.all_classes();
    let labeled = render_block(cfg, TAG_LABELED, 0, cfg.num_labeled, &cfg.id_classes)?;

    let mut unlabeled = Vec::new();
    for block in 0..64 {
        unlabeled = render_block(cfg, TAG_UNLABELED, block, cfg.num_unlabeled, &all)?;
        let has_ood = unlabeled
            .iter()
            .flat_map(|img| &img.objects)
            .any(|o| cfg.ood_classes.contains(&o.shape));
        if has_ood || cfg.num_unlabeled == 0 {
            break;
        }
    }
    let test = render_block(cfg, TAG_TEST, 0, cfg.num_test, &all)?;

    let mut seen = HashSet::new();
    for img in labeled.iter().chain(&unlabeled).chain(&test) {
        if !seen.insert(img.seed) {
            return Err(CflError::Generation(format!("seed {} appears in more than one split", img.seed)));
        }
    }
    Ok(Dataset { config: cfg.clone(), labeled, unlabeled, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SplitConfig {
        SplitConfig { num_labeled: 100, num_unlabeled: 30, num_test: 30, ..Default::default() }
    }

    #[test]
    fn labeled_split_only_has_id_objects() {
        let ds = build_splits(&small()).unwrap();
        assert_eq!(ds.labeled.len(), 100);
        let cfg = &ds.config;
        assert!(ds.labeled.iter().flat_map(|i| &i.objects).all(|o| cfg.id_classes.contains(&o.shape)));
        assert!(ds.labeled_samples().iter().flat_map(|s| &s.targets).all(|t| t.label < 4));
    }

    #[test]
    fn test_split_relabels_ood_as_unknown() {
        let ds = build_splits(&small()).unwrap();
        let mut saw_unknown = false;
        for (img, sample) in ds.test.iter().zip(ds.test_samples()) {
            for (o, t) in img.objects.iter().zip(&sample.targets) {
                let is_ood = matches!(o.shape, ShapeClass::Star | ShapeClass::Ring);
                assert_eq!(t.label == 4, is_ood);
                saw_unknown |= is_ood;
            }
        }
        assert!(saw_unknown);
    }

    #[test]
    fn splits_are_deterministic_and_disjoint() {
        let a = build_splits(&small()).unwrap();
        let b = build_splits(&small()).unwrap();
        assert_eq!(a, b);
        let seeds: HashSet<u64> = a.labeled.iter().chain(&a.unlabeled).chain(&a.test).map(|i| i.seed).collect();
        assert_eq!(seeds.len(), 160);
    }

    #[test]
    fn unlabeled_split_contains_ood() {
        let ds = build_splits(&small()).unwrap();
        assert!(ds.unlabeled.iter().flat_map(|i| &i.objects).any(|o| o.shape == ShapeClass::Star || o.shape == ShapeClass::Ring));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = small();
        cfg.ood_classes.push(ShapeClass::Circle);
        assert!(build_splits(&cfg).is_err());
        let cfg = SplitConfig { ood_classes: vec![], ..small() };
        assert!(build_splits(&cfg).is_err());
    }
}
