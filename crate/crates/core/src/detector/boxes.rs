//! Anchors and the center/size box-delta parameterization.

use crate::geometry::BoundingBox;

/// Deltas `(dx, dy, dw, dh)` of `target` relative to `reference`:
/// center offsets scaled by reference size, log size ratios.
pub fn encode(reference: &BoundingBox, target: &BoundingBox) -> [f64; 4] {
    let (rx, ry) = reference.center();
    let (tx, ty) = target.center();
    let (rw, rh) = (reference.width() as f64, reference.height() as f64);
    [
        (tx - rx) as f64 / rw,
        (ty - ry) as f64 / rh,
        (target.width() as f64 / rw).ln(),
        (target.height() as f64 / rh).ln(),
    ]
}

const MAX_LOG_SCALE: f32 = 2.0;

/// Inverse of [`encode`]; size deltas are clamped to keep boxes sane.
pub fn decode(reference: &BoundingBox, d: [f32; 4]) -> BoundingBox {
    let (rx, ry) = reference.center();
    let (rw, rh) = (reference.width(), reference.height());
    let cx = rx + d[0] * rw;
    let cy = ry + d[1] * rh;
    let w = rw * d[2].clamp(-MAX_LOG_SCALE, MAX_LOG_SCALE).exp();
    let h = rh * d[3].clamp(-MAX_LOG_SCALE, MAX_LOG_SCALE).exp();
    BoundingBox { x_min: cx - 0.5 * w, y_min: cy - 0.5 * h, x_max: cx + 0.5 * w, y_max: cy + 0.5 * h }
}

/// One square anchor per feature cell, centered on the cell, in row-major
/// cell order.
pub fn anchors(feat_h: usize, feat_w: usize, stride: f32, size: f32) -> Vec<BoundingBox> {
    let mut out = Vec::with_capacity(feat_h * feat_w);
    for i in 0..feat_h {
        for j in 0..feat_w {
            let cx = (j as f32 + 0.5) * stride;
            let cy = (i as f32 + 0.5) * stride;
            out.push(BoundingBox {
                x_min: cx - 0.5 * size,
                y_min: cy - 0.5 * size,
                x_max: cx + 0.5 * size,
                y_max: cy + 0.5 * size,
            });
        }
    }
    out
}
