//! Ground-truth protocols, the mAPE/cm@n metric and the benchmark harness.
//!
//! mAPE/cm@n = (1/|Q|) Σ n·|p_i − q_i| / s_i with `p` the predicted and `q`
//! the ground-truth pixels/cm and `s` the image size (longest side). Failed
//! estimates count as `p = 0`.

use std::fmt::Write as _;
use std::time::Instant;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fit_line, project_to_line, Point2};
use crate::gpfit::ScaleEstimate;

pub const DEFAULT_N: f64 = 768.0;
/// Leading share of records left out of the timing mean.
pub const WARMUP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRuler {
    pub id: String,
    pub marks: Vec<Point2>,
}

/// Unordered points on visible cm marks, grouped per ruler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointAnnotation {
    pub rulers: Vec<PointRuler>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRuler {
    pub id: String,
    pub endpoints: [Point2; 2],
    pub length_cm: f64,
}

/// One labelled segment per ruler with its physical length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineAnnotation {
    pub rulers: Vec<LineRuler>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Annotation {
    Points(PointAnnotation),
    Lines(LineAnnotation),
}

fn violation(path: String, message: &str) -> Error {
    Error::SchemaViolation {
        path,
        message: message.to_string(),
    }
}

impl PointAnnotation {
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.rulers.iter().enumerate() {
            if r.marks.len() < 2 {
                return Err(violation(format!("rulers[{i}].marks"), "a ruler needs at least 2 marks"));
            }
            if let Some(j) = r.marks.iter().position(|p| !p.is_finite()) {
                return Err(violation(format!("rulers[{i}].marks[{j}]"), "non-finite coordinate"));
            }
        }
        Ok(())
    }
}

impl LineAnnotation {
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.rulers.iter().enumerate() {
            if !(r.length_cm > 0.0 && r.length_cm.is_finite()) {
                return Err(violation(format!("rulers[{i}].length_cm"), "length must be positive"));
            }
            let [a, b] = r.endpoints;
            if !a.is_finite() || !b.is_finite() || a == b {
                return Err(violation(format!("rulers[{i}].endpoints"), "endpoints must be finite and distinct"));
            }
        }
        Ok(())
    }
}

impl Annotation {
    pub fn validate(&self) -> Result<()> {
        match self {
            Annotation::Points(a) => a.validate(),
            Annotation::Lines(a) => a.validate(),
        }
    }

    pub fn ground_truth(&self) -> Result<f64> {
        match self {
            Annotation::Points(a) => gt_scale_from_points(a),
            Annotation::Lines(a) => gt_scale_from_lines(a),
        }
    }
}

pub(crate) fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median adjacent spacing of one ruler's marks after ordering them along
/// their least-squares line.
pub fn ruler_spacing(marks: &[Point2]) -> Result<f64> {
    let line = fit_line(marks)?;
    let mut t = project_to_line(marks, &line)?;
    t.sort_by(f64::total_cmp);
    Ok(median(t.windows(2).map(|w| w[1] - w[0]).collect()))
}

/// Spacing of the ruler with the most marks; ties go to the earlier ruler.
pub fn gt_scale_from_points(a: &PointAnnotation) -> Result<f64> {
    a.validate()?;
    let mut best: Option<&PointRuler> = None;
    for r in &a.rulers {
        if best.is_none_or(|b| r.marks.len() > b.marks.len()) {
            best = Some(r);
        }
    }
    ruler_spacing(&best.ok_or(Error::NoRulers)?.marks)
}

/// Pixels/cm of the ruler whose segment is longest in pixels.
pub fn gt_scale_from_lines(a: &LineAnnotation) -> Result<f64> {
    a.validate()?;
    let mut best: Option<(f64, f64)> = None;
    for r in &a.rulers {
        let px = r.endpoints[0].distance(&r.endpoints[1]);
        if best.is_none_or(|(b, _)| px > b) {
            best = Some((px, px / r.length_cm));
        }
    }
    best.map(|(_, s)| s).ok_or(Error::NoRulers)
}

/// Image size used by the metric: the longer side.
pub fn image_size(width: u32, height: u32) -> f64 {
    SizeRule::Max.size(width, height)
}

/// Which scalar stands for an image's size in the metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeRule {
    #[default]
    Max,
    Width,
    Height,
    Diagonal,
}

impl SizeRule {
    pub fn size(self, width: u32, height: u32) -> f64 {
        let (w, h) = (width as f64, height as f64);
        match self {
            SizeRule::Max => w.max(h),
            SizeRule::Width => w,
            SizeRule::Height => h,
            SizeRule::Diagonal => w.hypot(h),
        }
    }
}

impl std::str::FromStr for SizeRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "width" => Ok(Self::Width),
            "height" => Ok(Self::Height),
            "diagonal" => Ok(Self::Diagonal),
            _ => Err(Error::InvalidParams(format!("unknown size rule {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    /// Predicted pixels/cm, 0 on failure.
    pub predicted: f64,
    pub ground_truth: f64,
    pub size: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn mape_per_cm_at_n(records: &[EvalRecord], n: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(r) = records.iter().find(|r| !(r.size > 0.0)) {
        return Err(Error::InvalidParams(format!("record {:?} has size {}", r.id, r.size)));
    }
    let sum: f64 = records
        .iter()
        .map(|r| n * (r.predicted - r.ground_truth).abs() / r.size)
        .sum();
    Ok(sum / records.len() as f64)
}

/// Mean elapsed time after dropping the first `ceil(0.1·N)` records. When
/// that leaves nothing (N = 1) the single record is used.
pub fn mean_elapsed_ms(records: &[EvalRecord]) -> Option<f64> {
    let times: Vec<f64> = records.iter().map(|r| r.elapsed_ms).collect::<Option<_>>()?;
    if times.is_empty() {
        return None;
    }
    let skip = (WARMUP_FRACTION * times.len() as f64).ceil() as usize;
    let kept = if skip < times.len() { &times[skip..] } else { &times[..] };
    Some(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// One dataset item as seen by the harness.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub id: String,
    pub ground_truth: f64,
    pub size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub n: f64,
    /// Serial run with per-record wall-clock timing.
    pub timed: bool,
    /// Worker threads for untimed runs (0 = all cores).
    pub jobs: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            n: DEFAULT_N,
            timed: false,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub n: f64,
    pub mape: f64,
    pub ms_per_sample: Option<f64>,
    pub records: Vec<EvalRecord>,
}

fn record(case: &BenchCase, outcome: Result<ScaleEstimate>, elapsed_ms: Option<f64>) -> EvalRecord {
    let (predicted, error) = match outcome {
        Ok(e) if e.is_ok() => (e.pixels_per_cm, None),
        Ok(_) => (0.0, Some("failed".to_string())),
        Err(e) => (0.0, Some(e.to_string())),
    };
    EvalRecord {
        id: case.id.clone(),
        predicted,
        ground_truth: case.ground_truth,
        size: case.size,
        elapsed_ms,
        error,
    }
}

/// Runs `estimate(i)` for every case. Errors and failed estimates are
/// recorded as a prediction of 0; the table always has one row per case.
pub fn run_benchmark<F>(cases: &[BenchCase], opts: &BenchOptions, estimate: F) -> Result<BenchmarkReport>
where
    F: Fn(usize) -> Result<ScaleEstimate> + Sync,
{
    if cases.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let records: Vec<EvalRecord> = if opts.timed {
        cases
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let t0 = Instant::now();
                let out = estimate(i);
                let ms = t0.elapsed().as_secs_f64() * 1e3;
                record(c, out, Some(ms))
            })
            .collect()
    } else {
        crate::seed::with_jobs(opts.jobs, || {
            cases
                .par_iter()
                .enumerate()
                .map(|(i, c)| record(c, estimate(i), None))
                .collect()
        })
    };
    let mape = mape_per_cm_at_n(&records, opts.n)?;
    debug!("benchmark over {} cases: mape {mape}", records.len());
    Ok(BenchmarkReport {
        n: opts.n,
        mape,
        ms_per_sample: mean_elapsed_ms(&records),
        records,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl BenchmarkReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,predicted,ground_truth,size,elapsed_ms,error\n");
        for r in &self.records {
            let elapsed = r.elapsed_ms.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&r.id),
                r.predicted,
                r.ground_truth,
                r.size,
                elapsed,
                csv_field(r.error.as_deref().unwrap_or(""))
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(p: f64, q: f64, s: f64) -> EvalRecord {
        EvalRecord {
            id: String::new(),
            predicted: p,
            ground_truth: q,
            size: s,
            elapsed_ms: None,
            error: None,
        }
    }

    fn ruler(id: &str, marks: Vec<Point2>) -> PointRuler {
        PointRuler {
            id: id.into(),
            marks,
        }
    }

    fn along(ts: &[f64]) -> Vec<Point2> {
        // direction (0.6, 0.8): unit length
        ts.iter().map(|&t| Point2::new(5.0 + 0.6 * t, 7.0 + 0.8 * t)).collect()
    }

    #[test]
    fn metric_examples() {
        assert!((mape_per_cm_at_n(&[rec(10.0, 12.0, 768.0)], 768.0).unwrap() - 2.0).abs() <= 1e-12);
        assert_eq!(mape_per_cm_at_n(&[rec(3.0, 3.0, 100.0), rec(7.5, 7.5, 50.0)], 768.0).unwrap(), 0.0);
        assert!((mape_per_cm_at_n(&[rec(10.0, 14.0, 1536.0)], 768.0).unwrap() - 2.0).abs() <= 1e-12);
        assert!(matches!(mape_per_cm_at_n(&[], 768.0), Err(Error::EmptyDataset)));
    }

    #[test]
    fn point_ground_truth_examples() {
        let a = PointAnnotation {
            rulers: vec![ruler("a", along(&[0.0, 10.0, 20.0, 30.0]))],
        };
        assert!((gt_scale_from_points(&a).unwrap() - 10.0).abs() < 1e-9);

        let a = PointAnnotation {
            rulers: vec![ruler("a", along(&[30.0, 0.0, 40.0, 10.0]))],
        };
        assert!((gt_scale_from_points(&a).unwrap() - 10.0).abs() < 1e-9);

        let a = PointAnnotation {
            rulers: vec![
                ruler("small", along(&[0.0, 7.0, 14.0])),
                ruler("big", along(&[0.0, 9.0, 18.0, 27.0, 36.0])),
            ],
        };
        assert!((gt_scale_from_points(&a).unwrap() - 9.0).abs() < 1e-9);

        let tie = PointAnnotation {
            rulers: vec![ruler("first", along(&[0.0, 4.0])), ruler("second", along(&[0.0, 6.0]))],
        };
        assert!((gt_scale_from_points(&tie).unwrap() - 4.0).abs() < 1e-9);
        assert!(matches!(gt_scale_from_points(&PointAnnotation { rulers: vec![] }), Err(Error::NoRulers)));
    }

    #[test]
    fn line_ground_truth_examples() {
        let line = |id: &str, len_px: f64, cm: f64| LineRuler {
            id: id.into(),
            endpoints: [Point2::new(0.0, 0.0), Point2::new(len_px * 0.8, len_px * 0.6)],
            length_cm: cm,
        };
        let one = LineAnnotation {
            rulers: vec![line("a", 100.0, 10.0)],
        };
        assert!((gt_scale_from_lines(&one).unwrap() - 10.0).abs() < 1e-12);
        let two = LineAnnotation {
            rulers: vec![line("a", 100.0, 10.0), line("b", 300.0, 20.0)],
        };
        assert!((gt_scale_from_lines(&two).unwrap() - 15.0).abs() < 1e-12);
        let zero = LineAnnotation {
            rulers: vec![LineRuler {
                id: "z".into(),
                endpoints: [Point2::new(1.0, 1.0); 2],
                length_cm: 5.0,
            }],
        };
        assert!(matches!(gt_scale_from_lines(&zero), Err(Error::SchemaViolation { .. })));
        assert!(matches!(gt_scale_from_lines(&LineAnnotation { rulers: vec![] }), Err(Error::NoRulers)));
    }

    fn cases(n: usize) -> Vec<BenchCase> {
        (0..n)
            .map(|i| BenchCase {
                id: format!("c{i}"),
                ground_truth: 10.0 + i as f64,
                size: 500.0 + 10.0 * i as f64,
            })
            .collect()
    }

    #[test]
    fn failures_count_as_zero() {
        let cs = cases(7);
        let report = run_benchmark(&cs, &BenchOptions::default(), |_| Ok(ScaleEstimate::failed())).unwrap();
        let want: f64 = cs.iter().map(|c| 768.0 * c.ground_truth / c.size).sum::<f64>() / 7.0;
        assert!((report.mape - want).abs() <= 1e-12);
        assert_eq!(report.records.len(), 7);

        let errs = run_benchmark(&cs, &BenchOptions::default(), |_| Err(Error::EmptyInput)).unwrap();
        assert_eq!(errs.mape, report.mape);
        assert!(errs.records.iter().all(|r| r.error.is_some()));
    }

    #[test]
    fn oracle_scores_zero() {
        let cs = cases(5);
        let report = run_benchmark(&cs, &BenchOptions::default(), |i| Ok(ScaleEstimate::ok(cs[i].ground_truth, 5))).unwrap();
        assert_eq!(report.mape, 0.0);
        assert!(report.ms_per_sample.is_none());
    }

    #[test]
    fn timing_discards_first_tenth() {
        let mut rs: Vec<EvalRecord> = (0..10).map(|_| rec(1.0, 1.0, 1.0)).collect();
        for (i, r) in rs.iter_mut().enumerate() {
            r.elapsed_ms = Some(if i == 0 { 1000.0 } else { i as f64 });
        }
        assert_eq!(mean_elapsed_ms(&rs), Some(5.0));
        let timed = run_benchmark(&cases(3), &BenchOptions { timed: true, ..Default::default() }, |_| {
            Ok(ScaleEstimate::failed())
        })
        .unwrap();
        assert!(timed.ms_per_sample.unwrap() >= 0.0);
        assert!(matches!(run_benchmark(&[], &BenchOptions::default(), |_| Ok(ScaleEstimate::failed())), Err(Error::EmptyDataset)));
    }

    #[test]
    fn csv_has_one_row_per_record() {
        let cs = cases(4);
        let report = run_benchmark(&cs, &BenchOptions::default(), |_| Ok(ScaleEstimate::failed())).unwrap();
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(1).unwrap().starts_with("c0,0,10,500,,failed"));
    }

    fn records_strategy() -> impl Strategy<Value = Vec<EvalRecord>> {
        prop::collection::vec((0.0..100.0f64, 0.1..100.0f64, 1.0..4000.0f64), 1..40)
            .prop_map(|v| v.into_iter().map(|(p, q, s)| rec(p, q, s)).collect())
    }

    proptest! {
        #[test]
        fn metric_is_homogeneous_in_n(rs in records_strategy(), n in 1.0..2000.0f64) {
            let a = mape_per_cm_at_n(&rs, n).unwrap();
            let b = mape_per_cm_at_n(&rs, 2.0 * n).unwrap();
            prop_assert!((b - 2.0 * a).abs() <= 1e-12 * b.abs().max(1.0));
        }

        #[test]
        fn metric_is_permutation_invariant(rs in records_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut shuffled = rs.clone();
            shuffled.shuffle(&mut crate::seed::rng(seed));
            let a = mape_per_cm_at_n(&rs, 768.0).unwrap();
            let b = mape_per_cm_at_n(&shuffled, 768.0).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn point_truth_ignores_mark_order(gap in 2.0..50.0f64, n in 2usize..20, seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let ts: Vec<f64> = (0..n).map(|i| i as f64 * gap).collect();
            let mut marks = along(&ts);
            let a = gt_scale_from_points(&PointAnnotation { rulers: vec![ruler("r", marks.clone())] }).unwrap();
            marks.shuffle(&mut crate::seed::rng(seed));
            let b = gt_scale_from_points(&PointAnnotation { rulers: vec![ruler("r", marks)] }).unwrap();
            prop_assert!((a - b).abs() <= 1e-9);
            prop_assert!((a - gap).abs() <= 1e-7 * gap);
        }
    }
}
