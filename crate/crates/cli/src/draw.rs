//! Minimal raster drawing: lines, boxes, a 3x5 bitmap font, line plots.

use image::{Rgb, RgbImage};

pub const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
pub const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
pub const GREY: Rgb<u8> = Rgb([150, 150, 150]);

/// Distinct colours for series and ID classes.
pub const PALETTE: [Rgb<u8>; 8] = [
    Rgb([230, 60, 60]),
    Rgb([60, 180, 75]),
    Rgb([70, 120, 230]),
    Rgb([245, 170, 40]),
    Rgb([145, 30, 180]),
    Rgb([70, 200, 210]),
    Rgb([200, 120, 60]),
    Rgb([120, 120, 120]),
];

/// Reserved for the unknown class; never in `PALETTE`.
pub const UNKNOWN: Rgb<u8> = Rgb([255, 0, 255]);

const GLYPHS: &[(char, &str)] = &[
    ('0', "111101101101111"),
    ('1', "010110010010111"),
    ('2', "111001111100111"),
    ('3', "111001111001111"),
    ('4', "101101111001001"),
    ('5', "111100111001111"),
    ('6', "111100111101111"),
    ('7', "111001010010010"),
    ('8', "111101111101111"),
    ('9', "111101111001111"),
    ('a', "010101111101101"),
    ('b', "110101110101110"),
    ('c', "011100100100011"),
    ('d', "110101101101110"),
    ('e', "111100110100111"),
    ('f', "111100110100100"),
    ('g', "011100101101011"),
    ('h', "101101111101101"),
    ('i', "111010010010111"),
    ('j', "001001001101010"),
    ('k', "101101110101101"),
    ('l', "100100100100111"),
    ('m', "101111111101101"),
    ('n', "110101101101101"),
    ('o', "010101101101010"),
    ('p', "110101110100100"),
    ('q', "010101101110011"),
    ('r', "110101110101101"),
    ('s', "011100010001110"),
    ('t', "111010010010010"),
    ('u', "101101101101111"),
    ('v', "101101101101010"),
    ('w', "101101111111101"),
    ('x', "101101010101101"),
    ('y', "101101010010010"),
    ('z', "111001010100111"),
    ('.', "000000000000010"),
    ('-', "000000111000000"),
    ('_', "000000000000111"),
    ('=', "000111000111000"),
    (':', "000010000010000"),
    ('(', "001010010010001"),
    (')', "100010010010100"),
    (',', "000000000010100"),
    ('/', "001001010100100"),
    ('+', "000010111010000"),
];

fn glyph(c: char) -> Option<&'static str> {
    let c = c.to_ascii_lowercase();
    GLYPHS.iter().find(|(g, _)| *g == c).map(|(_, bits)| *bits)
}

pub fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

pub fn fill_rect(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: Rgb<u8>) {
    for y in y0..y1 {
        for x in x0..x1 {
            put(img, x, y, color);
        }
    }
}

pub fn line(img: &mut RgbImage, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Box outline; `dashed` skips every other run of 3 pixels.
pub fn rect(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: Rgb<u8>, dashed: bool) {
    let on = |i: i64| !dashed || (i / 3) % 2 == 0;
    for x in x0..=x1 {
        if on(x - x0) {
            put(img, x, y0, color);
            put(img, x, y1, color);
        }
    }
    for y in y0..=y1 {
        if on(y - y0) {
            put(img, x0, y, color);
            put(img, x1, y, color);
        }
    }
}

pub fn text_width(s: &str, scale: i64) -> i64 {
    s.chars().count() as i64 * 4 * scale
}

/// Draw `s` with its top-left corner at `(x, y)`. Unsupported characters render as blanks.
pub fn text(img: &mut RgbImage, x: i64, y: i64, s: &str, scale: i64, color: Rgb<u8>) {
    for (i, c) in s.chars().enumerate() {
        let Some(bits) = glyph(c) else { continue };
        let ox = x + i as i64 * 4 * scale;
        for (k, b) in bits.bytes().enumerate() {
            if b == b'1' {
                let (gx, gy) = ((k % 3) as i64, (k / 3) as i64);
                fill_rect(img, ox + gx * scale, y + gy * scale, ox + (gx + 1) * scale, y + (gy + 1) * scale, color);
            }
        }
    }
}

/// Text on a filled background box.
pub fn label(img: &mut RgbImage, x: i64, y: i64, s: &str, scale: i64, fg: Rgb<u8>, bg: Rgb<u8>) {
    fill_rect(img, x, y, x + text_width(s, scale) + scale, y + 6 * scale, bg);
    text(img, x + scale, y + scale / 2, s, scale, fg);
}

pub struct Series<'a> {
    pub name: &'a str,
    pub points: &'a [(f64, f64)],
}

/// Line chart with axes, min/max tick labels and a legend.
pub fn line_plot(title: &str, series: &[Series<'_>], width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, WHITE);
    let (left, right, top, bottom) = (60i64, width as i64 - 150, 30i64, height as i64 - 30);
    text(&mut img, left, 8, title, 2, BLACK);
    let finite = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in finite {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if x_lo > x_hi {
        (x_lo, x_hi, y_lo, y_hi) = (0.0, 1.0, 0.0, 1.0);
    }
    if x_hi - x_lo < 1e-12 {
        x_hi = x_lo + 1.0;
    }
    if y_hi - y_lo < 1e-12 {
        y_hi = y_lo + 1.0;
    }
    line(&mut img, (left, bottom), (right, bottom), BLACK);
    line(&mut img, (left, top), (left, bottom), BLACK);
    text(&mut img, 4, top, &format!("{y_hi:.3}"), 1, BLACK);
    text(&mut img, 4, bottom - 5, &format!("{y_lo:.3}"), 1, BLACK);
    text(&mut img, left, bottom + 6, &format!("{x_lo}"), 1, BLACK);
    let hi = format!("{x_hi}");
    text(&mut img, right - text_width(&hi, 1), bottom + 6, &hi, 1, BLACK);
    let px = |x: f64| left + ((x - x_lo) / (x_hi - x_lo) * (right - left) as f64).round() as i64;
    let py = |y: f64| bottom - ((y - y_lo) / (y_hi - y_lo) * (bottom - top) as f64).round() as i64;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut prev: Option<(i64, i64)> = None;
        for &(x, y) in s.points {
            if !(x.is_finite() && y.is_finite()) {
                prev = None;
                continue;
            }
            let p = (px(x), py(y));
            match prev {
                Some(q) => line(&mut img, q, p, color),
                None => put(&mut img, p.0, p.1, color),
            }
            prev = Some(p);
        }
        let ly = top + i as i64 * 14;
        fill_rect(&mut img, right + 10, ly + 2, right + 22, ly + 8, color);
        text(&mut img, right + 26, ly, s.name, 2, BLACK);
    }
    img
}

/// A grid of text cells with a header row.
pub fn table(title: &str, header: &[&str], rows: &[Vec<String>]) -> RgbImage {
    let scale = 2;
    let ncol = header.len();
    let mut widths: Vec<i64> = header.iter().map(|h| text_width(h, scale)).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(text_width(c, scale));
        }
    }
    let pad = 10;
    let row_h = 6 * scale + 2 * pad / 2;
    let total_w = widths.iter().map(|w| w + 2 * pad).sum::<i64>().max(text_width(title, scale)) + 2 * pad;
    let total_h = 30 + row_h * (rows.len() as i64 + 1) + pad;
    let mut img = RgbImage::from_pixel(total_w as u32, total_h as u32, WHITE);
    text(&mut img, pad, 8, title, scale, BLACK);
    let y0 = 30;
    let all = std::iter::once(header.iter().map(|s| s.to_string()).collect::<Vec<_>>()).chain(rows.iter().cloned());
    for (ri, r) in all.enumerate() {
        let y = y0 + ri as i64 * row_h;
        let mut x = pad;
        for (ci, w) in widths.iter().enumerate().take(ncol) {
            if let Some(c) = r.get(ci) {
                text(&mut img, x + pad, y + pad / 2, c, scale, BLACK);
            }
            x += w + 2 * pad;
        }
        line(&mut img, (pad, y + row_h), (x, y + row_h), if ri == 0 { BLACK } else { GREY });
    }
    img
}
