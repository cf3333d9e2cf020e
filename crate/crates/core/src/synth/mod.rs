//! Procedural ruler renderer with exact cm-mark ground truth.
//!
//! A ruler is drawn axis-aligned onto a background (solid colour or a
//! user-supplied image), decorated with random lines and shapes, then the
//! whole canvas is tilted by a trapezoidal homography. The cm-mark anchors
//! (where each cm graduation meets the ruler edge) are mapped through the
//! same homography and reported with sub-pixel precision.

pub mod prompt;
pub mod raster;
pub mod warp;

use std::path::{Path, PathBuf};

use image::RgbImage;
use log::debug;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::seed;

pub use prompt::{build_prompt, random_prompt, Prompt};
pub use raster::{render_label, Rgb};
pub use warp::{perspective_warp, tilt_homography, Matrix3};

/// 96 dpi: 1 cm = 96 / 2.54 px.
pub const DEFAULT_CM_TO_PX: f64 = 37.7952755906;
pub const CM_PER_INCH: f64 = 2.54;
pub const MAX_SPEC_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OtherMarks {
    None,
    Cm,
    Inch,
}

/// Spacing of the finest inch graduation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InchInterval {
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "1/4")]
    Quarter,
    #[serde(rename = "1/8")]
    Eighth,
    #[serde(rename = "1/16")]
    Sixteenth,
}

impl InchInterval {
    pub fn divisions(self) -> u32 {
        match self {
            InchInterval::Half => 2,
            InchInterval::Quarter => 4,
            InchInterval::Eighth => 8,
            InchInterval::Sixteenth => 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulerSpec {
    /// Canvas position of the 0 cm anchor.
    pub position: Point2,
    pub length_cm: u32,
    pub cm_to_px: f64,
    pub ruler_height_cm: f64,
    /// Body length beyond the marked range, as a fraction of the marked
    /// length, split evenly between both ends.
    pub ruler_extension_fraction: f64,
    pub orientation: Orientation,
    pub fill_color: Rgb,
    pub edge_color: Rgb,
    /// Body opacity; edge, marks and labels are always opaque.
    pub alpha: f64,
    /// Edge and mark line width in pixels.
    pub thickness: u32,
    pub mm_mark_interval: u32,
    pub inch_mark_interval: InchInterval,
    pub cm_font_scale: u32,
    pub inch_font_scale: u32,
    pub cm_font_color: Rgb,
    pub inch_font_color: Rgb,
    pub cm_mark_length: f64,
    pub mm_mark_length: f64,
    pub half_cm_mark_length: f64,
    pub inch_mark_length: f64,
    pub sub_inch_mark_length: f64,
    pub half_inch_mark_length: f64,
    pub cm_mark_color: Rgb,
    pub mm_mark_color: Rgb,
    pub inch_mark_color: Rgb,
    pub sub_inch_mark_color: Rgb,
    pub show_cm_numbers: bool,
    pub show_inch_numbers: bool,
    pub tilt_factor_horizontal: f64,
    pub tilt_factor_vertical: f64,
    pub num_random_lines: u32,
    pub num_random_shapes: u32,
    pub other_marks: OtherMarks,
}

impl RulerSpec {
    /// Listing defaults for a ruler of `length_cm` at `position`.
    pub fn new(position: Point2, length_cm: u32) -> Self {
        Self {
            position,
            length_cm,
            cm_to_px: DEFAULT_CM_TO_PX,
            ruler_height_cm: 3.0,
            ruler_extension_fraction: 0.2,
            orientation: Orientation::Horizontal,
            fill_color: [255, 255, 255],
            edge_color: [0, 0, 0],
            alpha: 0.5,
            thickness: 2,
            mm_mark_interval: 1,
            inch_mark_interval: InchInterval::Sixteenth,
            cm_font_scale: 1,
            inch_font_scale: 1,
            cm_font_color: [0, 0, 0],
            inch_font_color: [0, 0, 0],
            cm_mark_length: 20.0,
            mm_mark_length: 10.0,
            half_cm_mark_length: 15.0,
            inch_mark_length: 20.0,
            sub_inch_mark_length: 10.0,
            half_inch_mark_length: 15.0,
            cm_mark_color: [50, 50, 50],
            mm_mark_color: [50, 50, 50],
            inch_mark_color: [100, 100, 100],
            sub_inch_mark_color: [100, 100, 100],
            show_cm_numbers: true,
            show_inch_numbers: true,
            tilt_factor_horizontal: 0.1,
            tilt_factor_vertical: 0.1,
            num_random_lines: 10,
            num_random_shapes: 10,
            other_marks: OtherMarks::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.length_cm < 1 {
            return bad("length_cm must be at least 1".into());
        }
        if !(self.cm_to_px > 0.0 && self.cm_to_px.is_finite()) {
            return bad(format!("cm_to_px {}", self.cm_to_px));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {}", self.alpha));
        }
        if !(self.ruler_height_cm > 0.0) || !(self.ruler_extension_fraction >= 0.0) {
            return bad("ruler height and extension must be positive".into());
        }
        if !matches!(self.mm_mark_interval, 1 | 2 | 5) {
            return bad(format!("mm_mark_interval {} must divide 10", self.mm_mark_interval));
        }
        if !self.position.is_finite() {
            return bad("non-finite position".into());
        }
        for t in [self.tilt_factor_horizontal, self.tilt_factor_vertical] {
            if !(t.abs() <= warp::MAX_TILT) {
                return Err(Error::InvalidTilt(t));
            }
        }
        Ok(())
    }

    pub fn length_px(&self) -> f64 {
        self.length_cm as f64 * self.cm_to_px
    }

    /// Body rectangle `(x0, y0, x1, y1)` before warping.
    pub fn footprint(&self) -> (f64, f64, f64, f64) {
        let l = self.length_px();
        let ext = self.ruler_extension_fraction * l / 2.0;
        let h = self.ruler_height_cm * self.cm_to_px;
        let (u0, u1, v0, v1) = (-ext, l + ext, 0.0, h);
        let p = self.position;
        match self.orientation {
            Orientation::Horizontal => (p.x + u0, p.y + v0, p.x + u1, p.y + v1),
            Orientation::Vertical => (p.x + v0, p.y + u0, p.x + v1, p.y + u1),
        }
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        let (x0, y0, x1, y1) = self.footprint();
        x0 >= 0.0 && y0 >= 0.0 && x1 <= (width - 1) as f64 && y1 <= (height - 1) as f64
    }

    /// Canvas point at distance `u` along the ruler and `v` across it.
    fn at(&self, u: f64, v: f64) -> (f64, f64) {
        match self.orientation {
            Orientation::Horizontal => (self.position.x + u, self.position.y + v),
            Orientation::Vertical => (self.position.x + v, self.position.y + u),
        }
    }

    /// Pre-warp cm anchors on the marked edge.
    pub fn cm_anchors(&self) -> Vec<Point2> {
        (0..=self.length_cm)
            .map(|i| {
                let (x, y) = self.at(i as f64 * self.cm_to_px, 0.0);
                Point2::new(x, y)
            })
            .collect()
    }
}

pub struct RulerSample {
    pub image: RgbImage,
    /// Post-warp cm anchors, `length_cm + 1` of them.
    pub cm_marks: Vec<Point2>,
    pub homography: Matrix3,
    pub spec: RulerSpec,
}

fn random_color<R: Rng>(rng: &mut R, lo: u8, hi: u8) -> Rgb {
    [rng.random_range(lo..=hi), rng.random_range(lo..=hi), rng.random_range(lo..=hi)]
}

fn draw_clutter<R: Rng>(img: &mut RgbImage, spec: &RulerSpec, rng: &mut R) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    for _ in 0..spec.num_random_lines {
        let a = (rng.random_range(0.0..w), rng.random_range(0.0..h));
        let b = (rng.random_range(0.0..w), rng.random_range(0.0..h));
        let width = rng.random_range(1.0..4.0);
        let color = random_color(rng, 0, 255);
        raster::draw_segment(img, a, b, width, color);
    }
    for _ in 0..spec.num_random_shapes {
        let c = (rng.random_range(0.0..w), rng.random_range(0.0..h));
        let r = (rng.random_range(4.0..w / 8.0), rng.random_range(4.0..h / 8.0));
        let color = random_color(rng, 0, 255);
        if rng.random_bool(0.5) {
            raster::fill_rect(img, c.0 - r.0, c.1 - r.1, c.0 + r.0, c.1 + r.1, color, 1.0);
        } else {
            raster::fill_ellipse(img, c, r, color);
        }
    }
}

/// Graduation of width `thickness` centred at `u`, running from the edge
/// `v0` a distance `len` into the body (`dir` = ±1).
fn tick(img: &mut RgbImage, spec: &RulerSpec, u: f64, v0: f64, len: f64, dir: f64, color: Rgb) {
    let half = spec.thickness.max(1) as f64 / 2.0;
    let (x0, y0) = spec.at(u - half, v0);
    let (x1, y1) = spec.at(u + half, v0 + dir * len);
    raster::fill_rect(img, x0, y0, x1, y1, color, 1.0);
}

fn label(img: &mut RgbImage, spec: &RulerSpec, text: &str, scale: u32, u: f64, v: f64, color: Rgb) {
    let (lw, lh) = raster::label_size(text.len(), scale);
    let anchor = match spec.orientation {
        Orientation::Horizontal => {
            let (x, y) = spec.at(u, v);
            (x - lw as f64 / 2.0, y)
        }
        Orientation::Vertical => {
            let (x, y) = spec.at(u, v);
            (x, y - lh as f64 / 2.0)
        }
    };
    // digits only, so rendering cannot fail
    let _ = render_label(img, text, scale, color, (anchor.0.round() as i64, anchor.1.round() as i64));
}

fn draw_cm_scale(img: &mut RgbImage, spec: &RulerSpec, v0: f64, dir: f64, numbers: bool) {
    let cm = spec.cm_to_px;
    let steps = 10 / spec.mm_mark_interval;
    for i in 0..spec.length_cm {
        for k in 1..steps {
            let mm = k * spec.mm_mark_interval;
            let len = if mm == 5 { spec.half_cm_mark_length } else { spec.mm_mark_length };
            tick(img, spec, (i as f64 + mm as f64 / 10.0) * cm, v0, len, dir, spec.mm_mark_color);
        }
        if spec.mm_mark_interval == 2 {
            tick(img, spec, (i as f64 + 0.5) * cm, v0, spec.half_cm_mark_length, dir, spec.mm_mark_color);
        }
    }
    for i in 0..=spec.length_cm {
        tick(img, spec, i as f64 * cm, v0, spec.cm_mark_length, dir, spec.cm_mark_color);
    }
    if numbers {
        let gap = 3.0;
        for i in 0..=spec.length_cm {
            let v = if dir > 0.0 {
                v0 + spec.cm_mark_length + gap
            } else {
                v0 - spec.cm_mark_length - gap - (raster::GLYPH_HEIGHT * spec.cm_font_scale) as f64
            };
            label(img, spec, &i.to_string(), spec.cm_font_scale, i as f64 * cm, v, spec.cm_font_color);
        }
    }
}

fn draw_inch_scale(img: &mut RgbImage, spec: &RulerSpec, v0: f64) {
    let div = spec.inch_mark_interval.divisions();
    let inch = CM_PER_INCH * spec.cm_to_px;
    let step = inch / div as f64;
    let count = (spec.length_px() / step).floor() as u32;
    for k in 0..=count {
        let (len, color) = if k % div == 0 {
            (spec.inch_mark_length, spec.inch_mark_color)
        } else if 2 * (k % div) == div {
            (spec.half_inch_mark_length, spec.sub_inch_mark_color)
        } else {
            (spec.sub_inch_mark_length, spec.sub_inch_mark_color)
        };
        tick(img, spec, k as f64 * step, v0, len, -1.0, color);
        if spec.show_inch_numbers && k % div == 0 {
            let v = v0 - spec.inch_mark_length - 3.0 - (raster::GLYPH_HEIGHT * spec.inch_font_scale) as f64;
            label(img, spec, &(k / div).to_string(), spec.inch_font_scale, k as f64 * step, v, spec.inch_font_color);
        }
    }
}

/// Renders `spec` onto a copy of `background` and tilts the result.
/// `seed` drives the decorative lines and shapes.
pub fn draw_ruler(background: &RgbImage, spec: &RulerSpec, seed: u64) -> Result<RulerSample> {
    spec.validate()?;
    let (w, h) = background.dimensions();
    if w < 2 || h < 2 || !spec.fits(w, h) {
        return Err(Error::SpecOutOfBounds(format!(
            "footprint {:?} outside {w}x{h}",
            spec.footprint()
        )));
    }
    let mut img = background.clone();
    let mut rng = seed::rng(seed);
    draw_clutter(&mut img, spec, &mut rng);

    let (x0, y0, x1, y1) = spec.footprint();
    raster::fill_rect(&mut img, x0, y0, x1, y1, spec.fill_color, spec.alpha);
    raster::stroke_rect(&mut img, x0, y0, x1, y1, spec.thickness as f64, spec.edge_color);

    let far = spec.ruler_height_cm * spec.cm_to_px;
    draw_cm_scale(&mut img, spec, 0.0, 1.0, spec.show_cm_numbers);
    match spec.other_marks {
        OtherMarks::None => {}
        OtherMarks::Cm => draw_cm_scale(&mut img, spec, far, -1.0, spec.show_cm_numbers),
        OtherMarks::Inch => draw_inch_scale(&mut img, spec, far),
    }

    let anchors = spec.cm_anchors();
    let (image, cm_marks, homography) =
        perspective_warp(&img, &anchors, spec.tilt_factor_horizontal, spec.tilt_factor_vertical)?;
    let inside = |p: &Point2| p.x >= 0.0 && p.y >= 0.0 && p.x <= (w - 1) as f64 && p.y <= (h - 1) as f64;
    if !cm_marks.iter().all(inside) {
        return Err(Error::SpecOutOfBounds("warped marks leave the canvas".into()));
    }
    Ok(RulerSample {
        image,
        cm_marks,
        homography,
        spec: spec.clone(),
    })
}

/// Sampling ranges for [`random_spec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecRanges {
    pub length_cm: [u32; 2],
    pub cm_to_px: [f64; 2],
    pub ruler_height_cm: [f64; 2],
    pub extension_fraction: [f64; 2],
    pub max_tilt: f64,
    pub max_random_lines: u32,
    pub max_random_shapes: u32,
}

impl Default for SpecRanges {
    fn default() -> Self {
        Self {
            length_cm: [5, 20],
            cm_to_px: [16.0, 48.0],
            ruler_height_cm: [1.5, 4.0],
            extension_fraction: [0.0, 0.3],
            max_tilt: 0.15,
            max_random_lines: 10,
            max_random_shapes: 10,
        }
    }
}

fn range_f<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] >= r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Draws every ruler parameter uniformly from `ranges` (placement uniform
/// over positions that keep the body on the canvas). Draws that cannot be
/// placed are retried up to 100 times.
pub fn random_spec<R: Rng>(rng: &mut R, width: u32, height: u32, ranges: &SpecRanges) -> Result<RulerSpec> {
    for _ in 0..MAX_SPEC_ATTEMPTS {
        let length = rng.random_range(ranges.length_cm[0]..=ranges.length_cm[1].max(ranges.length_cm[0]));
        let mut s = RulerSpec::new(Point2::new(0.0, 0.0), length.max(1));
        s.cm_to_px = range_f(rng, ranges.cm_to_px);
        s.ruler_height_cm = range_f(rng, ranges.ruler_height_cm);
        s.ruler_extension_fraction = range_f(rng, ranges.extension_fraction);
        s.orientation = if rng.random_bool(0.5) { Orientation::Horizontal } else { Orientation::Vertical };
        s.fill_color = random_color(rng, 150, 255);
        s.edge_color = random_color(rng, 0, 100);
        s.alpha = rng.random_range(0.4..=1.0);
        s.thickness = rng.random_range(1..=3);
        s.mm_mark_interval = [1, 2, 5][rng.random_range(0..3)];
        s.inch_mark_interval = [
            InchInterval::Half,
            InchInterval::Quarter,
            InchInterval::Eighth,
            InchInterval::Sixteenth,
        ][rng.random_range(0..4)];
        s.cm_font_scale = rng.random_range(1..=2);
        s.inch_font_scale = rng.random_range(1..=2);
        s.cm_font_color = random_color(rng, 0, 80);
        s.inch_font_color = random_color(rng, 0, 80);
        let mark = s.cm_to_px;
        s.cm_mark_length = mark * rng.random_range(0.4..0.7);
        s.half_cm_mark_length = s.cm_mark_length * 0.75;
        s.mm_mark_length = s.cm_mark_length * 0.5;
        s.inch_mark_length = s.cm_mark_length;
        s.half_inch_mark_length = s.half_cm_mark_length;
        s.sub_inch_mark_length = s.mm_mark_length;
        s.cm_mark_color = random_color(rng, 0, 90);
        s.mm_mark_color = s.cm_mark_color;
        s.inch_mark_color = random_color(rng, 0, 120);
        s.sub_inch_mark_color = s.inch_mark_color;
        s.show_cm_numbers = rng.random_bool(0.7);
        s.show_inch_numbers = rng.random_bool(0.7);
        s.tilt_factor_horizontal = rng.random_range(-ranges.max_tilt..=ranges.max_tilt);
        s.tilt_factor_vertical = rng.random_range(-ranges.max_tilt..=ranges.max_tilt);
        s.num_random_lines = rng.random_range(0..=ranges.max_random_lines);
        s.num_random_shapes = rng.random_range(0..=ranges.max_random_shapes);
        s.other_marks = [OtherMarks::None, OtherMarks::Cm, OtherMarks::Inch][rng.random_range(0..3)];

        let (x0, y0, x1, y1) = s.footprint();
        let (room_x, room_y) = ((width as f64 - 1.0) - (x1 - x0), (height as f64 - 1.0) - (y1 - y0));
        if room_x < 0.0 || room_y < 0.0 {
            continue;
        }
        // footprint offsets relative to the anchor
        let (ox, oy) = (x0, y0);
        s.position = Point2::new(
            rng.random_range(0.0..=room_x) - ox,
            rng.random_range(0.0..=room_y) - oy,
        );
        if s.fits(width, height) && s.validate().is_ok() {
            return Ok(s);
        }
    }
    Err(Error::CannotFit(MAX_SPEC_ATTEMPTS))
}

pub fn solid_background(width: u32, height: u32, color: Rgb) -> RgbImage {
    RgbImage::from_pixel(width, height, image::Rgb(color))
}

/// Per-sample record stored alongside each generated image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub spec: RulerSpec,
    pub homography: Matrix3,
    pub cm_marks: Vec<Point2>,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub count: usize,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub ranges: SpecRanges,
    pub backgrounds: Option<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 10,
            seed: 0,
            width: 768,
            height: 768,
            ranges: SpecRanges::default(),
            backgrounds: None,
        }
    }
}

fn list_backgrounds(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("png" | "ppm" | "pnm")
            )
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Sample `index` of a synthetic set: fully determined by `(cfg, index)`.
pub fn generate_sample(cfg: &SynthConfig, backgrounds: &[PathBuf], index: usize) -> Result<(RulerSample, SynthRecord)> {
    let mut rng = seed::rng_for(cfg.seed, index as u64);
    let (bg, bg_name) = if backgrounds.is_empty() || rng.random_bool(0.25) {
        (solid_background(cfg.width, cfg.height, random_color(&mut rng, 0, 255)), None)
    } else {
        let path = &backgrounds[rng.random_range(0..backgrounds.len())];
        let img = image::open(path)?.to_rgb8();
        let img = image::imageops::resize(&img, cfg.width, cfg.height, image::imageops::FilterType::Triangle);
        (img, path.file_name().map(|n| n.to_string_lossy().into_owned()))
    };
    let spec = random_spec(&mut rng, cfg.width, cfg.height, &cfg.ranges)?;
    let prompt = random_prompt(&mut rng);
    let sample = draw_ruler(&bg, &spec, rng.random())?;
    let record = SynthRecord {
        spec,
        homography: sample.homography,
        cm_marks: sample.cm_marks.clone(),
        prompt: prompt.text,
        background: bg_name,
    };
    Ok((sample, record))
}

/// Renders `cfg.count` samples in parallel and writes `synth_NNNNN.png`
/// files to `out_dir`. Returns `(id, file name, record)` per sample in index
/// order.
pub fn generate_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<Vec<(String, String, SynthRecord)>> {
    std::fs::create_dir_all(out_dir)?;
    let backgrounds = match &cfg.backgrounds {
        Some(dir) => list_backgrounds(dir)?,
        None => Vec::new(),
    };
    (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let (sample, record) = generate_sample(cfg, &backgrounds, i)?;
            let id = format!("synth_{i:05}");
            let file = format!("{id}.png");
            sample.image.save_with_format(out_dir.join(&file), image::ImageFormat::Png)?;
            debug!("wrote {file}");
            Ok((id, file, record))
        })
        .collect()
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// [`generate_dataset`] plus `manifest.json`, one point-annotated ruler per
/// image.
pub fn write_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<crate::io::DatasetManifest> {
    use crate::eval::{Annotation, PointAnnotation, PointRuler};
    let entries = generate_dataset(cfg, out_dir)?
        .into_iter()
        .map(|(id, image, record)| crate::io::ManifestEntry {
            id,
            image,
            width: cfg.width,
            height: cfg.height,
            annotation: Annotation::Points(PointAnnotation {
                rulers: vec![PointRuler {
                    id: "ruler0".into(),
                    marks: record.cm_marks.clone(),
                }],
            }),
            heatmap: None,
            detections: None,
            synth: Some(record),
        })
        .collect();
    let manifest = crate::io::DatasetManifest::new(entries);
    crate::io::Document::new(manifest.clone()).write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dataset_is_independent_of_thread_count() {
        let cfg = SynthConfig {
            count: 4,
            seed: 9,
            width: 200,
            height: 200,
            ranges: SpecRanges {
                length_cm: [3, 6],
                cm_to_px: [10.0, 20.0],
                ..SpecRanges::default()
            },
            backgrounds: None,
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = seed::with_jobs(1, || write_dataset(&cfg, a.path())).unwrap();
        let mb = seed::with_jobs(4, || write_dataset(&cfg, b.path())).unwrap();
        assert_eq!(ma, mb);
        for name in ["synth_00000.png", "synth_00003.png", MANIFEST_FILE] {
            assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
        }
        let loaded = crate::io::read_manifest(&a.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(loaded.doc.data, ma);
    }

    fn flat_spec(orientation: Orientation) -> RulerSpec {
        let mut s = RulerSpec::new(Point2::new(100.0, 100.0), 10);
        s.orientation = orientation;
        s.tilt_factor_horizontal = 0.0;
        s.tilt_factor_vertical = 0.0;
        s
    }

    #[test]
    fn horizontal_anchor_placement() {
        let bg = solid_background(640, 320, [20, 120, 20]);
        let s = draw_ruler(&bg, &flat_spec(Orientation::Horizontal), 1).unwrap();
        assert_eq!(s.cm_marks.len(), 11);
        for (i, p) in s.cm_marks.iter().enumerate() {
            assert_eq!(p.x, 100.0 + i as f64 * DEFAULT_CM_TO_PX);
            assert_eq!(p.y, 100.0);
        }
    }

    #[test]
    fn vertical_anchor_placement() {
        let bg = solid_background(320, 640, [20, 120, 20]);
        let s = draw_ruler(&bg, &flat_spec(Orientation::Vertical), 1).unwrap();
        for (i, p) in s.cm_marks.iter().enumerate() {
            assert_eq!((p.x, p.y), (100.0, 100.0 + i as f64 * DEFAULT_CM_TO_PX));
        }
    }

    #[test]
    fn tilted_marks_follow_homography() {
        let bg = solid_background(640, 400, [200, 200, 200]);
        let mut spec = flat_spec(Orientation::Horizontal);
        spec.tilt_factor_horizontal = 0.1;
        spec.tilt_factor_vertical = 0.1;
        let s = draw_ruler(&bg, &spec, 3).unwrap();
        let h = s.homography;
        for (p, a) in s.cm_marks.iter().zip(spec.cm_anchors()) {
            let w = h[2][0] * a.x + h[2][1] * a.y + h[2][2];
            let x = (h[0][0] * a.x + h[0][1] * a.y + h[0][2]) / w;
            let y = (h[1][0] * a.x + h[1][1] * a.y + h[1][2]) / w;
            assert!((p.x - x).abs() <= 1e-6 && (p.y - y).abs() <= 1e-6);
            let back = warp::apply(&warp::invert(&h).unwrap(), *p);
            assert!((back.x - a.x).abs() <= 1e-6 && (back.y - a.y).abs() <= 1e-6);
        }
    }

    #[test]
    fn marks_are_drawn_at_anchors() {
        let bg = solid_background(640, 320, [20, 120, 20]);
        let mut spec = flat_spec(Orientation::Horizontal);
        spec.num_random_lines = 0;
        spec.num_random_shapes = 0;
        let s = draw_ruler(&bg, &spec, 1).unwrap();
        let half = spec.thickness as f64 / 2.0;
        for p in &s.cm_marks {
            let cols = (p.x - half).ceil() as u32..=(p.x + half).floor() as u32;
            assert!(
                cols.clone().any(|x| s.image.get_pixel(x, p.y as u32).0 == spec.cm_mark_color),
                "no mark pixel near {p:?}"
            );
        }
    }

    #[test]
    fn out_of_bounds_spec() {
        let bg = solid_background(200, 200, [0, 0, 0]);
        assert!(matches!(
            draw_ruler(&bg, &flat_spec(Orientation::Horizontal), 0),
            Err(Error::SpecOutOfBounds(_))
        ));
    }

    #[test]
    fn draw_is_deterministic() {
        let bg = solid_background(500, 300, [90, 60, 30]);
        let mut spec = flat_spec(Orientation::Horizontal);
        spec.position = Point2::new(60.0, 80.0);
        spec.other_marks = OtherMarks::Inch;
        let a = draw_ruler(&bg, &spec, 42).unwrap();
        let b = draw_ruler(&bg, &spec, 42).unwrap();
        assert_eq!(a.image, b.image);
        let c = draw_ruler(&bg, &spec, 43).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn random_spec_is_deterministic() {
        let ranges = SpecRanges::default();
        let a = random_spec(&mut seed::rng(5), 768, 768, &ranges).unwrap();
        let b = random_spec(&mut seed::rng(5), 768, 768, &ranges).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_canvas_cannot_fit() {
        let ranges = SpecRanges {
            length_cm: [10, 10],
            cm_to_px: [DEFAULT_CM_TO_PX, DEFAULT_CM_TO_PX],
            ..SpecRanges::default()
        };
        assert!(matches!(random_spec(&mut seed::rng(0), 32, 32, &ranges), Err(Error::CannotFit(100))));
    }

    #[test]
    fn random_specs_satisfy_invariants() {
        let ranges = SpecRanges::default();
        let mut rng = seed::rng(77);
        for _ in 0..1000 {
            let s = random_spec(&mut rng, 768, 768, &ranges).unwrap();
            s.validate().unwrap();
            assert!(s.fits(768, 768));
            assert!(s.tilt_factor_horizontal.abs() <= 0.4 && s.tilt_factor_vertical.abs() <= 0.4);
            assert_eq!(s.cm_anchors().len(), s.length_cm as usize + 1);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn generated_samples_keep_mark_count(seed in 0u64..10_000) {
            let cfg = SynthConfig { seed, width: 256, height: 256, ranges: SpecRanges {
                length_cm: [3, 8], cm_to_px: [10.0, 25.0], ..SpecRanges::default() }, ..SynthConfig::default() };
            let (sample, rec) = generate_sample(&cfg, &[], 0).unwrap();
            prop_assert_eq!(sample.cm_marks.len(), sample.spec.length_cm as usize + 1);
            prop_assert_eq!(rec.cm_marks, sample.cm_marks.clone());
            for p in &sample.cm_marks {
                prop_assert!(p.x >= 0.0 && p.y >= 0.0 && p.x <= 255.0 && p.y <= 255.0);
            }
        }
    }
}
