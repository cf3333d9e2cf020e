//! Dense mark-probability grids: Gaussian target rendering, the
//! CE / soft-Dice training losses and local-maximum peak extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Smoothing added to both sides of the Dice ratio.
pub const DICE_EPS: f64 = 1e-6;
/// Probability clamp applied before taking logs in the cross entropy.
pub const CE_CLAMP: f64 = 1e-7;
/// Default target Gaussian width at 768 px resolution.
pub const DEFAULT_TARGET_SIGMA: f64 = 2.0;

/// Row-major probability grid. Every value lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl Heatmap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidHeatmap(format!("zero dimension {width}x{height}")));
        }
        if values.len() != width * height {
            return Err(Error::InvalidHeatmap(format!(
                "{} values for a {width}x{height} grid",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidHeatmap(format!(
                "value {} at index {i} outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Renders one unit-peak Gaussian per point, combined with a pixelwise max.
pub fn render_gaussians(points: &[Point2], sigma: f64, width: usize, height: usize) -> Result<Heatmap> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidSigma(sigma));
    }
    let mut values = vec![0.0f32; width * height];
    // beyond this radius exp() underflows f32 to exactly zero
    let reach = (sigma * (2.0f64 * 104.0).sqrt()).ceil() + 1.0;
    let inv = 1.0 / (2.0 * sigma * sigma);
    for p in points {
        if !p.is_finite() {
            continue;
        }
        let x0 = (p.x - reach).floor().max(0.0) as usize;
        let y0 = (p.y - reach).floor().max(0.0) as usize;
        let x1 = ((p.x + reach).ceil().max(-1.0) + 1.0).min(width as f64) as usize;
        let y1 = ((p.y + reach).ceil().max(-1.0) + 1.0).min(height as f64) as usize;
        for y in y0..y1 {
            let dy = y as f64 - p.y;
            let row = &mut values[y * width..(y + 1) * width];
            for (x, v) in row.iter_mut().enumerate().take(x1).skip(x0) {
                let dx = x as f64 - p.x;
                let g = (-(dx * dx + dy * dy) * inv).exp() as f32;
                if g > *v {
                    *v = g;
                }
            }
        }
    }
    Heatmap::new(width, height, values)
}

fn check_shapes(x: &Heatmap, y: &Heatmap) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            left: x.shape(),
            right: y.shape(),
        });
    }
    Ok(())
}

/// `1 − (Σxy + ε) / (Σx² + Σy² + ε)`. The numerator carries no factor 2.
pub fn dice_loss(x: &Heatmap, y: &Heatmap) -> Result<f64> {
    check_shapes(x, y)?;
    let (mut xy, mut xx, mut yy) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in x.values.iter().zip(&y.values) {
        let (a, b) = (a as f64, b as f64);
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    Ok(1.0 - (xy + DICE_EPS) / (xx + yy + DICE_EPS))
}

/// Mean binary cross entropy, predictions clamped to `[δ, 1−δ]`.
pub fn cross_entropy_loss(x: &Heatmap, y: &Heatmap) -> Result<f64> {
    check_shapes(x, y)?;
    let sum: f64 = x
        .values
        .iter()
        .zip(&y.values)
        .map(|(&p, &t)| {
            let p = (p as f64).clamp(CE_CLAMP, 1.0 - CE_CLAMP);
            let t = t as f64;
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / x.values.len() as f64)
}

pub fn total_loss(x: &Heatmap, y: &Heatmap, lambda_ce: f64, lambda_dice: f64) -> Result<f64> {
    if !(lambda_ce >= 0.0 && lambda_dice >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "loss weights must be non-negative, got ({lambda_ce}, {lambda_dice})"
        )));
    }
    Ok(lambda_ce * cross_entropy_loss(x, y)? + lambda_dice * dice_loss(x, y)?)
}

/// Parameters of the local-maximum peak extractor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    pub tau: f64,
    pub kernel: usize,
    pub sigma: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            kernel: 5,
            sigma: 1.0,
        }
    }
}

/// Normalised 1D Gaussian taps; the 2D kernel is their outer product.
fn gaussian_taps(k: usize, sigma: f64) -> Vec<f64> {
    let c = (k / 2) as f64;
    let mut taps: Vec<f64> = (0..k)
        .map(|i| {
            let d = i as f64 - c;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Same-size zero-padded convolution with the k×k Gaussian, done as two
/// separable passes.
pub fn smooth(h: &Heatmap, kernel: usize, sigma: f64) -> Result<Vec<f64>> {
    if kernel < 3 || kernel.is_multiple_of(2) {
        return Err(Error::InvalidKernel(kernel));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidSigma(sigma));
    }
    let taps = gaussian_taps(kernel, sigma);
    let r = (kernel / 2) as isize;
    let (w, ht) = (h.width as isize, h.height as isize);

    let mut tmp = vec![0.0f64; h.values.len()];
    for y in 0..ht {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, t) in taps.iter().enumerate() {
                let xx = x + i as isize - r;
                if (0..w).contains(&xx) {
                    acc += t * h.values[(y * w + xx) as usize] as f64;
                }
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    let mut out = vec![0.0f64; h.values.len()];
    for y in 0..ht {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, t) in taps.iter().enumerate() {
                let yy = y + i as isize - r;
                if (0..ht).contains(&yy) {
                    acc += t * tmp[(yy * w + x) as usize];
                }
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    Ok(out)
}

/// Local-maximum peak extraction.
///
/// A pixel is reported when, after Gaussian smoothing, it is strictly larger
/// than its left/right neighbours and its top/bottom neighbours, and its
/// smoothed value exceeds `tau`. Border pixels are never peaks. Coordinates
/// are integer pixel indices in row-major order.
pub fn extract_peaks(h: &Heatmap, cfg: &PeakConfig) -> Result<Vec<Point2>> {
    let s = smooth(h, cfg.kernel, cfg.sigma)?;
    let (w, ht) = (h.width, h.height);
    let mut peaks = Vec::new();
    if w < 3 || ht < 3 {
        return Ok(peaks);
    }
    for y in 1..ht - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let v = s[i];
            if !(v > cfg.tau) {
                continue;
            }
            let x_peak = v - s[i - 1] > 0.0 && s[i + 1] - v < 0.0;
            let y_peak = v - s[i - w] > 0.0 && s[i + w] - v < 0.0;
            if x_peak && y_peak {
                peaks.push(Point2::new(x as f64, y as f64));
            }
        }
    }
    Ok(peaks)
}
