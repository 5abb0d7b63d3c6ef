//! Minimal dense layers with hand-written backward passes.
//!
//! Activations are `f32`, channel-major. Convolutions are 3x3 with padding 1
//! and go through im2col + GEMM.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// A named parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn normal<R: Rng>(shape: &[usize], std: f32, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f32 = rng.sample(StandardNormal);
                z * std
            })
            .collect();
        Self { shape: shape.to_vec(), data }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// `C = A * B (+ C when accumulate)`, all row-major. `A` is `m x k` (or its
/// transpose is stored when `a_t`), `B` is `k x n` (or transposed with `b_t`).
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f32], a_t: bool, b: &[f32], b_t: bool, c: &mut [f32], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slices have exactly the lengths implied by (m, k, n) and the strides above.
    unsafe {
        matrixmultiply::sgemm(
            m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn out_h(&self) -> usize {
        (self.h + 2 - 3) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 - 3) / self.stride + 1
    }

    fn cols_rows(&self) -> usize {
        self.c_in * 9
    }
}

fn im2col(input: &[f32], s: &ConvShape) -> Vec<f32> {
    let (ho, wo) = (s.out_h(), s.out_w());
    let mut cols = vec![0.0; s.cols_rows() * ho * wo];
    for c in 0..s.c_in {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (c * 9 + ky * 3 + kx) * ho * wo;
                for oy in 0..ho {
                    let iy = (oy * s.stride + ky) as isize - 1;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let src = &input[(c * s.h + iy as usize) * s.w..][..s.w];
                    let dst = &mut cols[row + oy * wo..][..wo];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * s.stride + kx) as isize - 1;
                        if ix >= 0 && ix < s.w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f32], s: &ConvShape) -> Vec<f32> {
    let (ho, wo) = (s.out_h(), s.out_w());
    let mut out = vec![0.0; s.c_in * s.h * s.w];
    for c in 0..s.c_in {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (c * 9 + ky * 3 + kx) * ho * wo;
                for oy in 0..ho {
                    let iy = (oy * s.stride + ky) as isize - 1;
                    if iy < 0 || iy >= s.h as isize {
                        continue;
                    }
                    let dst = &mut out[(c * s.h + iy as usize) * s.w..][..s.w];
                    let src = &cols[row + oy * wo..][..wo];
                    for (ox, v) in src.iter().enumerate() {
                        let ix = (ox * s.stride + kx) as isize - 1;
                        if ix >= 0 && ix < s.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Cached state of one convolution for its backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    pub shape: ConvShape,
    cols: Vec<f32>,
}

/// 3x3 convolution, padding 1. `weight` is `c_out x (c_in * 9)`.
pub fn conv_forward(input: &[f32], s: ConvShape, weight: &Param, bias: &Param) -> (Vec<f32>, ConvCache) {
    let cols = im2col(input, &s);
    let hw = s.out_h() * s.out_w();
    let mut out = vec![0.0; s.c_out * hw];
    for (o, chunk) in out.chunks_mut(hw).enumerate() {
        chunk.iter_mut().for_each(|v| *v = bias.data[o]);
    }
    gemm(s.c_out, s.cols_rows(), hw, &weight.data, false, &cols, false, &mut out, true);
    (out, ConvCache { shape: s, cols })
}

/// Accumulates weight/bias gradients and returns the input gradient.
pub fn conv_backward(dout: &[f32], cache: &ConvCache, weight: &Param, dweight: &mut Param, dbias: &mut Param) -> Vec<f32> {
    let s = cache.shape;
    let hw = s.out_h() * s.out_w();
    gemm(s.c_out, hw, s.cols_rows(), dout, false, &cache.cols, true, &mut dweight.data, true);
    for (o, chunk) in dout.chunks(hw).enumerate() {
        dbias.data[o] += chunk.iter().sum::<f32>();
    }
    let mut dcols = vec![0.0; s.cols_rows() * hw];
    gemm(s.cols_rows(), s.c_out, hw, &weight.data, true, dout, false, &mut dcols, false);
    col2im(&dcols, &s)
}

/// `y = x W^T + b` for `x: n x in`, `W: out x in`.
pub fn linear_forward(x: &[f32], n: usize, weight: &Param, bias: &Param) -> Vec<f32> {
    let (out_dim, in_dim) = (weight.shape[0], weight.shape[1]);
    let mut y = Vec::with_capacity(n * out_dim);
    for _ in 0..n {
        y.extend_from_slice(&bias.data);
    }
    gemm(n, in_dim, out_dim, x, false, &weight.data, true, &mut y, true);
    y
}

/// Accumulates parameter gradients and returns `dx`.
pub fn linear_backward(dy: &[f32], x: &[f32], n: usize, weight: &Param, dweight: &mut Param, dbias: &mut Param) -> Vec<f32> {
    let (out_dim, in_dim) = (weight.shape[0], weight.shape[1]);
    gemm(out_dim, n, in_dim, dy, true, x, false, &mut dweight.data, true);
    for row in dy.chunks(out_dim) {
        for (b, g) in dbias.data.iter_mut().zip(row) {
            *b += g;
        }
    }
    let mut dx = vec![0.0; n * in_dim];
    gemm(n, out_dim, in_dim, dy, false, &weight.data, false, &mut dx, false);
    dx
}

pub fn relu_in_place(x: &mut [f32]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zero the gradient wherever the forward activation was clamped.
pub fn relu_backward(dy: &mut [f32], activated: &[f32]) {
    for (g, a) in dy.iter_mut().zip(activated) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Bilinear sampling taps `(index, weight)` for a point in feature-map coordinates.
fn bilinear_taps(fx: f32, fy: f32, h: usize, w: usize) -> [(usize, f32); 4] {
    let fx = fx.clamp(0.0, (w - 1) as f32);
    let fy = fy.clamp(0.0, (h - 1) as f32);
    let x0 = fx.floor() as usize;
    let y0 = fy.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (ax, ay) = (fx - x0 as f32, fy - y0 as f32);
    [
        (y0 * w + x0, (1.0 - ax) * (1.0 - ay)),
        (y0 * w + x1, ax * (1.0 - ay)),
        (y1 * w + x0, (1.0 - ax) * ay),
        (y1 * w + x1, ax * ay),
    ]
}

/// Sample positions for a `bins x bins` crop of an image-space box, mapped
/// onto a feature map with the given stride.
fn crop_points(bx: [f32; 4], bins: usize, stride: f32) -> Vec<(f32, f32)> {
    let [x0, y0, x1, y1] = bx;
    let (bw, bh) = ((x1 - x0) / bins as f32, (y1 - y0) / bins as f32);
    let mut pts = Vec::with_capacity(bins * bins);
    for i in 0..bins {
        for j in 0..bins {
            let x = x0 + (j as f32 + 0.5) * bw;
            let y = y0 + (i as f32 + 0.5) * bh;
            pts.push((x / stride - 0.5, y / stride - 0.5));
        }
    }
    pts
}

/// Bilinear crop-and-resize. Output row per box is `c * bins * bins`,
/// channel-major.
pub fn roi_crop(feat: &[f32], c: usize, h: usize, w: usize, boxes: &[[f32; 4]], bins: usize, stride: f32) -> Vec<f32> {
    let per = c * bins * bins;
    let mut out = vec![0.0; boxes.len() * per];
    for (b, bx) in boxes.iter().enumerate() {
        let row = &mut out[b * per..(b + 1) * per];
        for (p, (fx, fy)) in crop_points(*bx, bins, stride).into_iter().enumerate() {
            let taps = bilinear_taps(fx, fy, h, w);
            for ch in 0..c {
                let plane = &feat[ch * h * w..(ch + 1) * h * w];
                row[ch * bins * bins + p] = taps.iter().map(|&(i, wt)| plane[i] * wt).sum();
            }
        }
    }
    out
}

/// Scatter crop gradients back onto the feature map (accumulating).
#[allow(clippy::too_many_arguments)]
pub fn roi_crop_backward(dout: &[f32], dfeat: &mut [f32], c: usize, h: usize, w: usize, boxes: &[[f32; 4]], bins: usize, stride: f32) {
    let per = c * bins * bins;
    for (b, bx) in boxes.iter().enumerate() {
        let row = &dout[b * per..(b + 1) * per];
        for (p, (fx, fy)) in crop_points(*bx, bins, stride).into_iter().enumerate() {
            let taps = bilinear_taps(fx, fy, h, w);
            for ch in 0..c {
                let g = row[ch * bins * bins + p];
                if g == 0.0 {
                    continue;
                }
                let plane = &mut dfeat[ch * h * w..(ch + 1) * h * w];
                for &(i, wt) in &taps {
                    plane[i] += g * wt;
                }
            }
        }
    }
}
