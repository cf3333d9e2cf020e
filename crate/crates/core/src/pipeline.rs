//! Detected points → dominant line → 1D marks → scale estimate.
//!
//! Scale estimators implement [`ScaleEstimator`] and are created by name
//! from a [`Registry`]; the built-in names are `direct`, `median`, `gp-de`
//! and `deepgp`.

use std::sync::Arc;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::deepgp::{deepgp_infer, DeepGpModel};
use crate::error::{Error, Result};
use crate::eval::{self, Annotation, BenchCase, BenchOptions, BenchmarkReport};
use crate::geometry::{project_to_line, HoughLine, Mark1D, Point2};
use crate::gpfit::{estimate_direct, estimate_gp_de, estimate_median_filtered, scale_from_gp, DeSettings, ScaleEstimate};
use crate::heatmap::{extract_peaks, render_gaussians, Heatmap, PeakConfig, DEFAULT_TARGET_SIGMA};
use crate::hough::{hough_all_lines, hough_dominant_line, HoughConfig, LineDetection};
use crate::io::{self, Manifest, ManifestEntry};

/// Turns sorted 1D mark coordinates into a pixels/cm estimate.
pub trait ScaleEstimator: Send + Sync {
    fn name(&self) -> &str;
    /// Fewest marks the estimator accepts; fewer yields a failed estimate.
    fn min_marks(&self) -> usize;
    fn estimate(&self, sorted_marks: &[Mark1D]) -> Result<ScaleEstimate>;
}

/// Settings shared by all estimator factories.
#[derive(Debug, Clone, Default)]
pub struct EstimatorConfig {
    pub de: DeSettings,
    pub model: Option<Arc<DeepGpModel>>,
}

pub type EstimatorFactory = fn(&EstimatorConfig) -> Result<Box<dyn ScaleEstimator>>;

struct Direct;

impl ScaleEstimator for Direct {
    fn name(&self) -> &str {
        "direct"
    }
    fn min_marks(&self) -> usize {
        2
    }
    fn estimate(&self, marks: &[Mark1D]) -> Result<ScaleEstimate> {
        Ok(estimate_direct(marks))
    }
}

struct Median;

impl ScaleEstimator for Median {
    fn name(&self) -> &str {
        "median"
    }
    fn min_marks(&self) -> usize {
        2
    }
    fn estimate(&self, marks: &[Mark1D]) -> Result<ScaleEstimate> {
        Ok(estimate_median_filtered(marks))
    }
}

struct GpDe(DeSettings);

impl ScaleEstimator for GpDe {
    fn name(&self) -> &str {
        "gp-de"
    }
    fn min_marks(&self) -> usize {
        3
    }
    fn estimate(&self, marks: &[Mark1D]) -> Result<ScaleEstimate> {
        estimate_gp_de(marks, &self.0)
    }
}

struct DeepGp(Arc<DeepGpModel>);

impl ScaleEstimator for DeepGp {
    fn name(&self) -> &str {
        "deepgp"
    }
    fn min_marks(&self) -> usize {
        3
    }
    fn estimate(&self, marks: &[Mark1D]) -> Result<ScaleEstimate> {
        let params = deepgp_infer(&self.0, marks)?;
        let (lo, hi) = (marks[0], marks[marks.len() - 1]);
        Ok(scale_from_gp(&params, lo, hi))
    }
}

/// Name → factory table.
pub struct Registry {
    entries: Vec<(String, EstimatorFactory)>,
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Self { entries: Vec::new() };
        r.register("direct", |_| Ok(Box::new(Direct)));
        r.register("median", |_| Ok(Box::new(Median)));
        r.register("gp-de", |c| Ok(Box::new(GpDe(c.de.clone()))));
        r.register("deepgp", |c| match &c.model {
            Some(m) => Ok(Box::new(DeepGp(Arc::clone(m)))),
            None => Err(Error::MissingModel("deepgp".into())),
        });
        r
    }
}

impl Registry {
    /// Adds or replaces `name`.
    pub fn register(&mut self, name: &str, factory: EstimatorFactory) {
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = factory,
            None => self.entries.push((name.to_string(), factory)),
        }
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn create(&self, name: &str, cfg: &EstimatorConfig) -> Result<Box<dyn ScaleEstimator>> {
        let (_, factory) = self
            .entries
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::UnknownEstimator(name.to_string()))?;
        factory(cfg)
    }
}

pub fn create_estimator(name: &str, cfg: &EstimatorConfig) -> Result<Box<dyn ScaleEstimator>> {
    Registry::default().create(name, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub hough: HoughConfig,
    pub peaks: PeakConfig,
    /// Estimate every ruler found by greedy peeling instead of only the
    /// dominant one.
    pub multi_line: bool,
    pub max_lines: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            hough: HoughConfig::default(),
            peaks: PeakConfig::default(),
            multi_line: false,
            max_lines: 8,
        }
    }
}

/// Result for one ruler line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulerEstimate {
    pub estimate: ScaleEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<HoughLine>,
    pub inliers: Vec<Point2>,
    /// Sorted projected coordinates of the inliers.
    pub marks: Vec<Mark1D>,
}

impl RulerEstimate {
    fn failed() -> Self {
        Self {
            estimate: ScaleEstimate::failed(),
            line: None,
            inliers: Vec::new(),
            marks: Vec::new(),
        }
    }
}

fn estimate_on_line(det: LineDetection, est: &dyn ScaleEstimator) -> RulerEstimate {
    let LineDetection { line, inliers, .. } = det;
    let mut marks = match project_to_line(&inliers, &line) {
        Ok(m) => m,
        Err(_) => return RulerEstimate::failed(),
    };
    marks.sort_by(f64::total_cmp);
    let estimate = if marks.len() < est.min_marks() {
        ScaleEstimate::failed()
    } else {
        est.estimate(&marks).unwrap_or_else(|e| {
            debug!("{} failed on {} marks: {e}", est.name(), marks.len());
            ScaleEstimate::failed()
        })
    };
    RulerEstimate {
        estimate,
        line: Some(line),
        inliers,
        marks,
    }
}

/// Dominant line only. Never errors: unusable input gives a failed
/// estimate with scale 0.
pub fn estimate_from_points(points: &[Point2], est: &dyn ScaleEstimator, cfg: &PipelineConfig) -> RulerEstimate {
    match hough_dominant_line(points, &cfg.hough) {
        Ok(det) => estimate_on_line(det, est),
        Err(_) => RulerEstimate::failed(),
    }
}

/// One estimate per peeled line, largest support first.
pub fn estimate_all_from_points(points: &[Point2], est: &dyn ScaleEstimator, cfg: &PipelineConfig) -> Vec<RulerEstimate> {
    match hough_all_lines(points, &cfg.hough, cfg.max_lines) {
        Ok(dets) if !dets.is_empty() => dets.into_iter().map(|d| estimate_on_line(d, est)).collect(),
        _ => vec![RulerEstimate::failed()],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapEstimate {
    pub points: Vec<Point2>,
    /// One entry, or one per ruler in multi-line mode.
    pub rulers: Vec<RulerEstimate>,
}

impl HeatmapEstimate {
    /// Image-level answer: the ruler with the most support.
    pub fn primary(&self) -> &ScaleEstimate {
        &self.rulers[0].estimate
    }
}

pub fn estimate_points(points: &[Point2], est: &dyn ScaleEstimator, cfg: &PipelineConfig) -> Vec<RulerEstimate> {
    if cfg.multi_line {
        estimate_all_from_points(points, est, cfg)
    } else {
        vec![estimate_from_points(points, est, cfg)]
    }
}

pub fn estimate_from_heatmap(h: &Heatmap, est: &dyn ScaleEstimator, cfg: &PipelineConfig) -> Result<HeatmapEstimate> {
    let points = extract_peaks(h, &cfg.peaks)?;
    let rulers = estimate_points(&points, est, cfg);
    Ok(HeatmapEstimate { points, rulers })
}

/// Where batch estimation takes its points from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointSource {
    /// `detections` if present, else `heatmap` if present, else
    /// `gt-heatmap`.
    Auto,
    /// Precomputed `detections` of each entry.
    Detections,
    /// The entry's PFM heatmap, through peak extraction.
    Heatmap,
    /// Annotated points fed directly.
    GtPoints,
    /// Annotated points rendered as a heatmap (σ = 2), then peak extraction.
    GtHeatmap,
}

impl std::str::FromStr for PointSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "detections" => Ok(Self::Detections),
            "heatmap" => Ok(Self::Heatmap),
            "gt-points" => Ok(Self::GtPoints),
            "gt-heatmap" => Ok(Self::GtHeatmap),
            _ => Err(Error::InvalidParams(format!("unknown point source {s:?}"))),
        }
    }
}

fn annotated_points(a: &Annotation) -> Result<Vec<Point2>> {
    match a {
        Annotation::Points(p) => Ok(p.rulers.iter().flat_map(|r| r.marks.iter().copied()).collect()),
        Annotation::Lines(_) => Err(Error::InvalidParams("line annotations carry no mark points".into())),
    }
}

/// Estimates one manifest entry.
pub fn estimate_entry(
    manifest: &Manifest,
    entry: &ManifestEntry,
    source: PointSource,
    est: &dyn ScaleEstimator,
    cfg: &PipelineConfig,
) -> Result<HeatmapEstimate> {
    let source = match source {
        PointSource::Auto if entry.detections.is_some() => PointSource::Detections,
        PointSource::Auto if entry.heatmap.is_some() => PointSource::Heatmap,
        PointSource::Auto => PointSource::GtHeatmap,
        s => s,
    };
    let points = match source {
        PointSource::Auto => unreachable!("resolved above"),
        PointSource::Detections => entry
            .detections
            .clone()
            .ok_or_else(|| Error::InvalidParams(format!("entry {:?} has no detections", entry.id)))?,
        PointSource::GtPoints => annotated_points(&entry.annotation)?,
        PointSource::Heatmap => {
            let rel = entry
                .heatmap
                .as_ref()
                .ok_or_else(|| Error::InvalidParams(format!("entry {:?} has no heatmap", entry.id)))?;
            return estimate_from_heatmap(&io::read_pfm(&manifest.resolve(rel))?, est, cfg);
        }
        PointSource::GtHeatmap => {
            let pts = annotated_points(&entry.annotation)?;
            let h = render_gaussians(&pts, DEFAULT_TARGET_SIGMA, entry.width as usize, entry.height as usize)?;
            return estimate_from_heatmap(&h, est, cfg);
        }
    };
    let rulers = estimate_points(&points, est, cfg);
    Ok(HeatmapEstimate { points, rulers })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub source: PointSource,
    pub size_rule: eval::SizeRule,
    pub bench: BenchOptions,
}

/// Benchmarks `est` over every entry. Entry failures become zero
/// predictions with the error text in the record.
pub fn estimate_batch(manifest: &Manifest, est: &dyn ScaleEstimator, cfg: &PipelineConfig, opts: &BatchOptions) -> Result<BenchmarkReport> {
    let entries = manifest.entries();
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let cases = entries
        .iter()
        .map(|e| {
            Ok(BenchCase {
                id: e.id.clone(),
                ground_truth: e.annotation.ground_truth()?,
                size: opts.size_rule.size(e.width, e.height),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    eval::run_benchmark(&cases, &opts.bench, |i| {
        estimate_entry(manifest, &entries[i], opts.source, est, cfg)
            .map(|r| r.primary().clone())
            .inspect_err(|e| warn!("entry {:?}: {e}", entries[i].id))
    })
}
