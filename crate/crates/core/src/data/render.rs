use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::shapes::ShapeClass;
use crate::error::{CflError, Result};
use crate::geometry::BoundingBox;

pub const DEFAULT_IMAGE_SIZE: usize = 64;
const MIN_OBJECT: i32 = 10;
const MAX_OBJECT: i32 = 26;
const NOISE_SIGMA: f32 = 0.05;
const MAX_CLUTTER: usize = 3;

/// Planar RGB image, channel-major (`[c][y][x]`), intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for c in rgb {
            data.extend(std::iter::repeat(c).take(width * height));
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(c, y, x)]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    /// Snap every intensity to the nearest multiple of 1/255 so PNG storage is lossless.
    pub fn quantize(&mut self) {
        for v in &mut self.data {
            *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let px = |c| (self.get(c, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
            image::Rgb([px(0), px(1), px(2)])
        })
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = Image::filled(w, h, [0.0; 3]);
        for (x, y, p) in img.enumerate_pixels() {
            for c in 0..3 {
                out.set(c, y as usize, x as usize, p.0[c] as f32 / 255.0);
            }
        }
        out
    }

    pub fn bounds(&self) -> BoundingBox {
        BoundingBox { x_min: 0.0, y_min: 0.0, x_max: self.width as f32, y_max: self.height as f32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeObject {
    pub shape: ShapeClass,
    pub bbox: BoundingBox,
}

/// A rendered scene. Pixel content is a pure function of `seed`, the allowed
/// class set and the image size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeImage {
    pub image: Image,
    pub objects: Vec<ShapeObject>,
    pub seed: u64,
}

/// Per-object pixel mask, row-major `height * width`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMask {
    pub width: usize,
    pub height: usize,
    pub inside: Vec<bool>,
}

impl ObjectMask {
    /// Tight extent of the mask as a half-open box.
    pub fn extent(&self) -> Option<BoundingBox> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.inside[y * self.width + x] {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        (x0 != usize::MAX).then(|| BoundingBox {
            x_min: x0 as f32,
            y_min: y0 as f32,
            x_max: x1 as f32,
            y_max: y1 as f32,
        })
    }
}

/// Thin straight stroke across the background; never annotated.
fn draw_clutter(image: &mut Image, rng: &mut ChaCha8Rng) {
    let size = image.width as f32;
    let (x0, y0) = (rng.gen_range(0.0..size), rng.gen_range(0.0..size));
    let angle = rng.gen_range(0.0..std::f32::consts::PI);
    let len = rng.gen_range(8.0..24.0f32);
    let color = [rng.gen_range(0.2..0.8f32), rng.gen_range(0.2..0.8f32), rng.gen_range(0.2..0.8f32)];
    let (dx, dy) = (angle.cos(), angle.sin());
    for step in 0..(2.0 * len) as usize {
        let t = step as f32 * 0.5;
        let (x, y) = ((x0 + t * dx) as isize, (y0 + t * dy) as isize);
        if x < 0 || y < 0 || x >= image.width as isize || y >= image.height as isize {
            break;
        }
        for (c, &col) in color.iter().enumerate() {
            image.set(c, y as usize, x as usize, col);
        }
    }
}

/// Render a scene of 1 to 4 non-overlapping shapes drawn from `allowed`.
pub fn render_image(seed: u64, allowed: &[ShapeClass]) -> Result<ShapeImage> {
    Ok(render_scene(seed, allowed, None, DEFAULT_IMAGE_SIZE)?.0)
}

/// Full renderer. `num_objects` requests an exact count (1..=4); the
/// default draws it from the seed. Also returns each object's mask.
pub fn render_scene(
    seed: u64,
    allowed: &[ShapeClass],
    num_objects: Option<usize>,
    size: usize,
) -> Result<(ShapeImage, Vec<ObjectMask>)> {
    if allowed.is_empty() {
        return Err(CflError::Config("allowed class set is empty".into()));
    }
    if let Some(n) = num_objects {
        if !(1..=4).contains(&n) {
            return Err(CflError::Config(format!("object count must be 1..=4, got {n}")));
        }
    }
    if size < 2 * MAX_OBJECT as usize {
        return Err(CflError::Config(format!("image size {size} too small")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg = [rng.gen_range(0.0..0.35f32), rng.gen_range(0.0..0.35f32), rng.gen_range(0.0..0.35f32)];
    let mut image = Image::filled(size, size, bg);
    for v in image.data.iter_mut() {
        let n: f32 = rng.sample(StandardNormal);
        *v += NOISE_SIGMA * n;
    }
    for _ in 0..rng.gen_range(0..=MAX_CLUTTER) {
        draw_clutter(&mut image, &mut rng);
    }

    let target = num_objects.unwrap_or_else(|| rng.gen_range(1..=4));
    let mut footprints: Vec<(i32, i32, i32)> = Vec::new();
    let mut objects = Vec::new();
    let mut masks = Vec::new();
    let mut attempts = 0;
    while objects.len() < target && attempts < 400 {
        attempts += 1;
        let s = rng.gen_range(MIN_OBJECT..=MAX_OBJECT);
        let x = rng.gen_range(0..=(size as i32 - s));
        let y = rng.gen_range(0..=(size as i32 - s));
        let shape = allowed[rng.gen_range(0..allowed.len())];
        let angle = rng.gen_range(0.0..std::f32::consts::TAU);
        let color = [rng.gen_range(0.4..1.0f32), rng.gen_range(0.4..1.0f32), rng.gen_range(0.4..1.0f32)];
        let clash = footprints.iter().any(|&(fx, fy, fs)| {
            x < fx + fs + 1 && fx < x + s + 1 && y < fy + fs + 1 && fy < y + s + 1
        });
        if clash {
            continue;
        }
        let mut mask = ObjectMask { width: size, height: size, inside: vec![false; size * size] };
        let half = s as f32 / 2.0;
        let (cx, cy) = (x as f32 + half, y as f32 + half);
        for py in y..y + s {
            for px in x..x + s {
                let u = (px as f32 + 0.5 - cx) / half;
                let v = (py as f32 + 0.5 - cy) / half;
                if shape.contains_rotated(u, v, angle) {
                    mask.inside[py as usize * size + px as usize] = true;
                    for (c, &col) in color.iter().enumerate() {
                        image.set(c, py as usize, px as usize, col);
                    }
                }
            }
        }
        let Some(bbox) = mask.extent() else { continue };
        footprints.push((x, y, s));
        objects.push(ShapeObject { shape, bbox });
        masks.push(mask);
    }
    if objects.is_empty() || (num_objects.is_some() && objects.len() != target) {
        return Err(CflError::Generation(format!("could not place {target} objects for seed {seed}")));
    }
    image.quantize();
    Ok((ShapeImage { image, objects, seed }, masks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::iou;

    #[test]
    fn same_seed_is_bit_identical() {
        let a = render_image(7, &ShapeClass::ALL).unwrap();
        let b = render_image(7, &ShapeClass::ALL).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.image, render_image(8, &ShapeClass::ALL).unwrap().image);
    }

    #[test]
    fn restriction_is_honored() {
        for seed in 0..20 {
            let img = render_image(seed, &[ShapeClass::Circle]).unwrap();
            assert!(img.objects.iter().all(|o| o.shape == ShapeClass::Circle));
            assert!((1..=4).contains(&img.objects.len()));
        }
        assert!(render_image(0, &[]).is_err());
    }

    #[test]
    fn boxes_match_scanned_mask_extents() {
        for seed in 0..10 {
            let (img, masks) = render_scene(seed, &ShapeClass::ALL, Some(3), 64).unwrap();
            assert_eq!(img.objects.len(), 3);
            let bounds = img.image.bounds();
            for (obj, mask) in img.objects.iter().zip(&masks) {
                assert_eq!(mask.extent().unwrap(), obj.bbox);
                let clipped = obj.bbox.clip(bounds.x_max, bounds.y_max).unwrap();
                assert_eq!(iou(&obj.bbox, &clipped).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn objects_have_distinct_boxes() {
        for seed in 0..30 {
            let img = render_image(seed, &ShapeClass::ALL).unwrap();
            for (i, a) in img.objects.iter().enumerate() {
                for b in &img.objects[i + 1..] {
                    assert_ne!(a.bbox, b.bbox);
                    assert_eq!(a.bbox.intersection_area(&b.bbox), 0.0);
                }
            }
        }
    }

    #[test]
    fn png_round_trip_is_lossless() {
        let img = render_image(3, &ShapeClass::ALL).unwrap().image;
        assert_eq!(Image::from_rgb8(&img.to_rgb8()), img);
    }
}
