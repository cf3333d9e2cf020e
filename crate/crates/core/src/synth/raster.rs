//! Minimal RGB drawing: blended rectangles, anti-aliased segments and
//! ellipses, 5×7 digit glyphs.

use image::RgbImage;

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

fn blend(img: &mut RgbImage, x: i64, y: i64, color: Rgb, alpha: f64) {
    if x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 || alpha <= 0.0 {
        return;
    }
    let px = img.get_pixel_mut(x as u32, y as u32);
    let a = alpha.min(1.0);
    for c in 0..3 {
        px[c] = (px[c] as f64 * (1.0 - a) + color[c] as f64 * a).round() as u8;
    }
}

/// Fills every pixel whose centre lies in `[x0, x1] × [y0, y1]`.
pub fn fill_rect(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, color: Rgb, alpha: f64) {
    let (cx0, cx1) = (x0.min(x1).ceil() as i64, x0.max(x1).floor() as i64);
    let (cy0, cy1) = (y0.min(y1).ceil() as i64, y0.max(y1).floor() as i64);
    let cx0 = cx0.max(0);
    let cy0 = cy0.max(0);
    let cx1 = cx1.min(img.width() as i64 - 1);
    let cy1 = cy1.min(img.height() as i64 - 1);
    for y in cy0..=cy1 {
        for x in cx0..=cx1 {
            blend(img, x, y, color, alpha);
        }
    }
}

/// Outline of the rectangle, `thickness` pixels wide, drawn inside it.
pub fn stroke_rect(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, thickness: f64, color: Rgb) {
    let t = thickness.max(1.0) - 1.0;
    fill_rect(img, x0, y0, x1, y0 + t, color, 1.0);
    fill_rect(img, x0, y1 - t, x1, y1, color, 1.0);
    fill_rect(img, x0, y0, x0 + t, y1, color, 1.0);
    fill_rect(img, x1 - t, y0, x1, y1, color, 1.0);
}

/// Segment of the given width with one pixel of linear edge falloff.
pub fn draw_segment(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), width: f64, color: Rgb) {
    let half = width / 2.0;
    let pad = half + 1.0;
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let xs = (a.0.min(b.0) - pad).floor() as i64..=(a.0.max(b.0) + pad).ceil() as i64;
    for y in (a.1.min(b.1) - pad).floor() as i64..=(a.1.max(b.1) + pad).ceil() as i64 {
        for x in xs.clone() {
            let (px, py) = (x as f64 - a.0, y as f64 - a.1);
            let t = if len2 > 0.0 { ((px * dx + py * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let d = ((px - t * dx).powi(2) + (py - t * dy).powi(2)).sqrt();
            blend(img, x, y, color, (half + 0.5 - d).clamp(0.0, 1.0));
        }
    }
}

/// Filled axis-aligned ellipse with an anti-aliased rim.
pub fn fill_ellipse(img: &mut RgbImage, center: (f64, f64), radii: (f64, f64), color: Rgb) {
    let (rx, ry) = (radii.0.max(0.5), radii.1.max(0.5));
    for y in (center.1 - ry - 1.0).floor() as i64..=(center.1 + ry + 1.0).ceil() as i64 {
        for x in (center.0 - rx - 1.0).floor() as i64..=(center.0 + rx + 1.0).ceil() as i64 {
            let (u, v) = ((x as f64 - center.0) / rx, (y as f64 - center.1) / ry);
            let r = (u * u + v * v).sqrt();
            // distance to the rim in pixels, approximated along the radius
            let d = (r - 1.0) * rx.min(ry);
            blend(img, x, y, color, (0.5 - d).clamp(0.0, 1.0));
        }
    }
}

/// 5×7 digit bitmaps, one row per byte, bit 4 = leftmost column.
const DIGITS: [[u8; 7]; 10] = [
    [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
    [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
    [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
    [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
    [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
    [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
    [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
    [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
    [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
    [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
];

pub const GLYPH_WIDTH: u32 = 5;
pub const GLYPH_HEIGHT: u32 = 7;

pub fn glyph(c: char) -> Result<&'static [u8; 7]> {
    c.to_digit(10)
        .map(|d| &DIGITS[d as usize])
        .ok_or(Error::UnsupportedGlyph(c))
}

/// Pixel size of `len` glyphs at `scale`, one blank column between glyphs.
pub fn label_size(len: usize, scale: u32) -> (u32, u32) {
    let n = len as u32;
    ((n * (GLYPH_WIDTH + 1)).saturating_sub(1) * scale, GLYPH_HEIGHT * scale)
}

/// Draws decimal digits with their top-left corner at `anchor`; every glyph
/// cell becomes a `scale × scale` block. Nothing is drawn when `text`
/// contains a non-digit.
pub fn render_label(canvas: &mut RgbImage, text: &str, font_scale: u32, color: Rgb, anchor: (i64, i64)) -> Result<()> {
    let glyphs = text.chars().map(glyph).collect::<Result<Vec<_>>>()?;
    let s = font_scale.max(1) as i64;
    for (k, g) in glyphs.iter().enumerate() {
        let left = anchor.0 + k as i64 * (GLYPH_WIDTH as i64 + 1) * s;
        for (row, bits) in g.iter().enumerate() {
            for col in 0..GLYPH_WIDTH as i64 {
                if bits >> (GLYPH_WIDTH as i64 - 1 - col) & 1 == 1 {
                    for dy in 0..s {
                        for dx in 0..s {
                            blend(canvas, left + col * s + dx, anchor.1 + row as i64 * s + dy, color, 1.0);
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(img: &RgbImage) -> Vec<(u32, u32)> {
        img.enumerate_pixels()
            .filter(|(_, _, p)| p.0 != [0, 0, 0])
            .map(|(x, y, _)| (x, y))
            .collect()
    }

    #[test]
    fn zero_glyph_at_scale_one() {
        let mut img = RgbImage::new(10, 10);
        render_label(&mut img, "0", 1, [255, 255, 255], (2, 1)).unwrap();
        let mut want = Vec::new();
        for (row, bits) in DIGITS[0].iter().enumerate() {
            for col in 0..5u32 {
                if bits >> (4 - col) & 1 == 1 {
                    want.push((2 + col, 1 + row as u32));
                }
            }
        }
        want.sort_by_key(|&(x, y)| (y, x));
        assert_eq!(lit(&img), want);
    }

    #[test]
    fn scale_two_doubles_cells() {
        let mut one = RgbImage::new(20, 20);
        let mut two = RgbImage::new(20, 20);
        render_label(&mut one, "7", 1, [9, 9, 9], (0, 0)).unwrap();
        render_label(&mut two, "7", 2, [9, 9, 9], (0, 0)).unwrap();
        for (x, y, p) in two.enumerate_pixels() {
            if x < 10 && y < 14 {
                assert_eq!(p, one.get_pixel(x / 2, y / 2));
            }
        }
        assert_eq!(lit(&two).len(), 4 * lit(&one).len());
    }

    #[test]
    fn unsupported_glyph() {
        let mut img = RgbImage::new(10, 10);
        assert!(matches!(render_label(&mut img, "1A", 1, [1, 1, 1], (0, 0)), Err(Error::UnsupportedGlyph('A'))));
        assert!(lit(&img).is_empty());
    }

    #[test]
    fn rect_covers_pixel_centres() {
        let mut img = RgbImage::new(10, 10);
        fill_rect(&mut img, 1.5, 2.0, 3.5, 2.9, [5, 5, 5], 1.0);
        assert_eq!(lit(&img), vec![(2, 2), (3, 2)]);
    }
}
