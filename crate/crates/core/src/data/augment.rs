//! Weak and strong views.
//!
//! The recipe is a stand-in: weak is a random horizontal flip; strong adds
//! brightness/contrast jitter, Gaussian noise and an erased rectangle placed
//! away from every object. Geometry is only ever changed by the flip.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::render::{Image, ShapeImage, ShapeObject};
use crate::geometry::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strength {
    Weak,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Photometric {
    pub brightness: f32,
    pub contrast: f32,
    pub noise_sigma: f32,
    pub noise_seed: u64,
    /// `(x, y, w, h, fill)`.
    pub erase: Option<(usize, usize, usize, usize, f32)>,
}

impl Photometric {
    fn identity() -> Self {
        Self { contrast: 1.0, ..Default::default() }
    }

    pub fn is_identity(&self) -> bool {
        self.brightness == 0.0 && self.contrast == 1.0 && self.noise_sigma == 0.0 && self.erase.is_none()
    }
}

/// A fully drawn augmentation; applying it is deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentPlan {
    pub flip: bool,
    pub photometric: Photometric,
}

impl AugmentPlan {
    pub fn identity() -> Self {
        Self { flip: false, photometric: Photometric::identity() }
    }

    /// Draw a plan for `strength`. Boxes (after the flip) are needed to keep
    /// the erased region off every object.
    pub fn sample(strength: Strength, seed: u64, width: usize, height: usize, boxes: &[BoundingBox]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A_0F0F_F0F0);
        let flip = rng.gen_bool(0.5);
        let photometric = match strength {
            Strength::Weak => Photometric::identity(),
            Strength::Strong => {
                let flipped: Vec<BoundingBox> =
                    boxes.iter().map(|b| if flip { flip_box(b, width) } else { *b }).collect();
                sample_photometric(&mut rng, width, height, &flipped)
            }
        };
        Self { flip, photometric }
    }

    pub fn apply(&self, image: &Image, boxes: &[BoundingBox]) -> (Image, Vec<BoundingBox>) {
        let (mut out, boxes) = if self.flip {
            (flip_image(image), boxes.iter().map(|b| flip_box(b, image.width)).collect())
        } else {
            (image.clone(), boxes.to_vec())
        };
        apply_photometric(&mut out, &self.photometric);
        (out, boxes)
    }
}

fn sample_photometric(rng: &mut ChaCha8Rng, width: usize, height: usize, boxes: &[BoundingBox]) -> Photometric {
    let brightness = rng.gen_range(-0.15..0.15f32);
    let contrast = rng.gen_range(0.7..1.3f32);
    let noise_sigma = rng.gen_range(0.0..0.05f32);
    let noise_seed = rng.gen::<u64>();
    let mut erase = None;
    for _ in 0..20 {
        let w = rng.gen_range(6..=14usize);
        let h = rng.gen_range(6..=14usize);
        let x = rng.gen_range(0..=width - w);
        let y = rng.gen_range(0..=height - h);
        let rect = BoundingBox { x_min: x as f32, y_min: y as f32, x_max: (x + w) as f32, y_max: (y + h) as f32 };
        if boxes.iter().all(|b| b.intersection_area(&rect) == 0.0) {
            erase = Some((x, y, w, h, rng.gen_range(0.0..1.0f32)));
            break;
        }
    }
    Photometric { brightness, contrast, noise_sigma, noise_seed, erase }
}

fn apply_photometric(image: &mut Image, p: &Photometric) {
    if p.is_identity() {
        return;
    }
    let mean = image.data.iter().sum::<f32>() / image.data.len() as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(p.noise_seed);
    for v in image.data.iter_mut() {
        let n: f32 = rng.sample(StandardNormal);
        *v = ((*v - mean) * p.contrast + mean + p.brightness + p.noise_sigma * n).clamp(0.0, 1.0);
    }
    if let Some((x, y, w, h, fill)) = p.erase {
        for c in 0..3 {
            for yy in y..y + h {
                for xx in x..x + w {
                    image.set(c, yy, xx, fill);
                }
            }
        }
    }
}

pub fn flip_box(b: &BoundingBox, width: usize) -> BoundingBox {
    let w = width as f32;
    BoundingBox { x_min: w - b.x_max, y_min: b.y_min, x_max: w - b.x_min, y_max: b.y_max }
}

pub fn flip_image(image: &Image) -> Image {
    let mut out = image.clone();
    for c in 0..3 {
        for y in 0..image.height {
            for x in 0..image.width {
                out.set(c, y, image.width - 1 - x, image.get(c, y, x));
            }
        }
    }
    out
}

/// Augment a scene, keeping its object list consistent with the pixels.
pub fn augment(img: &ShapeImage, strength: Strength, seed: u64) -> ShapeImage {
    let boxes: Vec<BoundingBox> = img.objects.iter().map(|o| o.bbox).collect();
    let plan = AugmentPlan::sample(strength, seed, img.image.width, img.image.height, &boxes);
    let (image, boxes) = plan.apply(&img.image, &boxes);
    let objects = img
        .objects
        .iter()
        .zip(boxes)
        .map(|(o, bbox)| ShapeObject { shape: o.shape, bbox })
        .collect();
    ShapeImage { image, objects, seed: img.seed }
}

/// Weak and strong views sharing one flip: the strong view is the weak view
/// plus photometric noise, so boxes predicted on one are valid on the other.
pub fn weak_strong_pair(image: &Image, seed: u64) -> (Image, Image, bool) {
    let plan = AugmentPlan::sample(Strength::Strong, seed, image.width, image.height, &[]);
    let weak = if plan.flip { flip_image(image) } else { image.clone() };
    let mut strong = weak.clone();
    apply_photometric(&mut strong, &plan.photometric);
    (weak, strong, plan.flip)
}
