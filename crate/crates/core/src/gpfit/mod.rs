//! Perspective-invariant scale recovery.
//!
//! Marks along a straight ruler photographed under perspective are modelled
//! as a geometric progression: each gap is `r` times the previous one. The
//! progression `(m0, m1, r)` is fitted to detected 1D marks by minimising the
//! symmetric Chamfer distance with differential evolution; the scale is the
//! mean gap of the fitted progression over the observed span.

pub mod baselines;
pub mod chamfer;
pub mod de;
pub mod progression;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Mark1D;

pub use baselines::{estimate_direct, estimate_median_filtered};
pub use chamfer::{chamfer_1d, ChamferDistance};
pub use progression::{gp_generate, gp_generate_spanning, GpParams};

/// Ratio bound `r_max`; `r_min` is its reciprocal.
pub const RATIO_BOUND: f64 = 1.5;
/// Relative widening applied to a zero-width spacing box.
pub const DEGENERATE_WIDEN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

/// A pixels-per-cm estimate. Failure is encoded as a zero scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    pub pixels_per_cm: f64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<GpParams>,
    pub marks_used: usize,
}

impl ScaleEstimate {
    pub fn ok(pixels_per_cm: f64, marks_used: usize) -> Self {
        Self {
            pixels_per_cm,
            status: Status::Ok,
            params: None,
            marks_used,
        }
    }

    pub fn failed() -> Self {
        Self {
            pixels_per_cm: 0.0,
            status: Status::Failed,
            params: None,
            marks_used: 0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

/// Box bounds for the progression search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub r_min: f64,
    pub r_max: f64,
    pub d_min: f64,
    pub d_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub population: usize,
    pub max_generations: usize,
    pub crossover_prob: f64,
    /// Mutation weight range, re-drawn every generation.
    pub differential_weight: [f64; 2],
    pub seed: u64,
    /// Stagnation threshold relative to the mean mark spacing.
    pub tolerance: f64,
    pub stagnation_generations: usize,
}

/// Optimiser settings without the data-dependent bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeSettings {
    pub population: usize,
    pub max_generations: usize,
    pub crossover_prob: f64,
    pub differential_weight: [f64; 2],
    pub seed: u64,
    pub tolerance: f64,
    pub stagnation_generations: usize,
}

impl Default for DeSettings {
    fn default() -> Self {
        Self {
            population: 128,
            max_generations: 400,
            crossover_prob: 0.7,
            differential_weight: [0.5, 1.0],
            seed: 0,
            tolerance: 1e-8,
            stagnation_generations: 200,
        }
    }
}

impl FitConfig {
    pub fn new(bounds: Bounds, de: &DeSettings) -> Self {
        Self {
            r_min: bounds.r_min,
            r_max: bounds.r_max,
            d_min: bounds.d_min,
            d_max: bounds.d_max,
            population: de.population,
            max_generations: de.max_generations,
            crossover_prob: de.crossover_prob,
            differential_weight: de.differential_weight,
            seed: de.seed,
            tolerance: de.tolerance,
            stagnation_generations: de.stagnation_generations,
        }
    }

    /// Default optimiser settings with bounds derived from `marks`.
    pub fn for_marks(marks: &[Mark1D], seed: u64) -> Result<Self> {
        Ok(Self::new(
            default_bounds(marks)?,
            &DeSettings {
                seed,
                ..DeSettings::default()
            },
        ))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.r_min > 0.0 && self.r_min < self.r_max) {
            return bad(format!("ratio bounds [{}, {}]", self.r_min, self.r_max));
        }
        if !(self.d_min > 0.0 && self.d_min <= self.d_max) {
            return bad(format!("spacing bounds [{}, {}]", self.d_min, self.d_max));
        }
        if self.population < 8 {
            return bad(format!("population {} < 8", self.population));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return bad(format!("crossover probability {}", self.crossover_prob));
        }
        let [w0, w1] = self.differential_weight;
        if !(w0 > 0.0 && w0 <= w1) {
            return bad(format!("differential weight range [{w0}, {w1}]"));
        }
        Ok(())
    }
}

fn sorted(marks: &[Mark1D]) -> Vec<f64> {
    let mut v = marks.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub(crate) fn adjacent_gaps(sorted: &[f64]) -> Vec<f64> {
    sorted.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Ratio bounds `[1/1.5, 1.5]`; spacing bounds are the smallest and largest
/// adjacent distance between the sorted marks.
pub fn default_bounds(marks: &[Mark1D]) -> Result<Bounds> {
    if marks.len() < 2 {
        return Err(Error::TooFewMarks {
            needed: 2,
            got: marks.len(),
        });
    }
    let gaps = adjacent_gaps(&sorted(marks));
    Ok(Bounds {
        r_min: 1.0 / RATIO_BOUND,
        r_max: RATIO_BOUND,
        d_min: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        d_max: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Result of a differential-evolution progression fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpFit {
    pub params: GpParams,
    /// Chamfer distance between the marks and the fitted progression.
    pub objective: f64,
    pub generations: usize,
    pub evaluations: usize,
}

/// Chamfer distance between sorted `marks` and the progression spanning them.
pub fn fit_objective(sorted_marks: &[f64], params: &GpParams) -> f64 {
    let (lo, hi) = (sorted_marks[0], sorted_marks[sorted_marks.len() - 1]);
    match gp_generate_spanning(params, lo, hi) {
        Ok(gen) => chamfer::chamfer_presorted(sorted_marks, &gen),
        Err(_) => f64::INFINITY,
    }
}

/// Fits `(m0, m1 = m0 + d, r)` to the marks by differential evolution over
/// the box `r ∈ [r_min, r_max]`, `d ∈ [d_min, d_max]`,
/// `m0 ∈ [min − d_max, min + d_max]`. A zero-width spacing box is widened
/// by ±10%.
pub fn fit_gp_de(marks: &[Mark1D], cfg: &FitConfig) -> Result<GpFit> {
    if marks.len() < 3 {
        return Err(Error::TooFewMarks {
            needed: 3,
            got: marks.len(),
        });
    }
    if marks.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidParams("non-finite mark".into()));
    }
    cfg.validate()?;
    let marks = sorted(marks);
    let lo = marks[0];
    let span = marks[marks.len() - 1] - lo;

    let (mut d_min, mut d_max) = (cfg.d_min, cfg.d_max);
    if d_max - d_min <= 1e-9 * d_max {
        d_min *= 1.0 - DEGENERATE_WIDEN;
        d_max *= 1.0 + DEGENERATE_WIDEN;
    }
    let bounds = [(lo - d_max, lo + d_max), (d_min, d_max), (cfg.r_min, cfg.r_max)];
    let opts = de::DeOptions {
        population: cfg.population,
        max_generations: cfg.max_generations,
        crossover_prob: cfg.crossover_prob,
        weight: cfg.differential_weight,
        seed: cfg.seed,
        tolerance: cfg.tolerance,
        tolerance_scale: span / (marks.len() - 1) as f64,
        stagnation_generations: cfg.stagnation_generations,
    };
    let objective = |x: &[f64]| {
        let p = GpParams {
            m0: x[0],
            m1: x[0] + x[1],
            r: x[2],
        };
        if p.m1 == p.m0 {
            return f64::INFINITY;
        }
        fit_objective(&marks, &p)
    };
    let res = de::minimize(objective, &bounds, &opts);
    Ok(GpFit {
        params: GpParams {
            m0: res.x[0],
            m1: res.x[0] + res.x[1],
            r: res.x[2],
        },
        objective: res.value,
        generations: res.generations,
        evaluations: res.evaluations,
    })
}

/// Mean gap of the progression over `[lo, hi]`.
pub fn scale_from_gp(params: &GpParams, lo: Mark1D, hi: Mark1D) -> ScaleEstimate {
    match gp_generate_spanning(params, lo, hi) {
        Ok(gen) => {
            let n = gen.len();
            let mean = adjacent_gaps(&gen).iter().sum::<f64>() / (n - 1) as f64;
            ScaleEstimate {
                pixels_per_cm: mean,
                status: Status::Ok,
                params: Some(*params),
                marks_used: n,
            }
        }
        Err(_) => ScaleEstimate::failed(),
    }
}

/// Fits a progression and reports its mean gap over the marks' span.
pub fn estimate_gp_de(marks: &[Mark1D], de: &DeSettings) -> Result<ScaleEstimate> {
    let cfg = FitConfig::new(default_bounds(marks)?, de);
    let fit = fit_gp_de(marks, &cfg)?;
    let (lo, hi) = min_max(marks);
    Ok(scale_from_gp(&fit.params, lo, hi))
}

pub(crate) fn min_max(marks: &[f64]) -> (f64, f64) {
    marks
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &m| (a.min(m), b.max(m)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn bounds_examples() {
        let b = default_bounds(&[0.0, 2.0, 4.0, 9.0]).unwrap();
        assert_eq!((b.d_min, b.d_max), (2.0, 5.0));
        assert!((b.r_min - 0.6667).abs() < 1e-4);
        assert_eq!(b.r_max, 1.5);

        let b = default_bounds(&[9.0, 0.0, 3.0, 6.0]).unwrap();
        assert_eq!((b.d_min, b.d_max), (3.0, 3.0));
        let b = default_bounds(&[0.0, 1.0]).unwrap();
        assert_eq!((b.d_min, b.d_max), (1.0, 1.0));
        assert!(matches!(default_bounds(&[1.0]), Err(Error::TooFewMarks { .. })));
    }

    #[test]
    fn fit_arithmetic_marks() {
        let marks: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let fit = fit_gp_de(&marks, &FitConfig::for_marks(&marks, 1).unwrap()).unwrap();
        let d = fit.params.spacing();
        assert!((d - 1.0).abs() <= 0.01, "{fit:?}");
        assert!((0.99..=1.01).contains(&fit.params.r), "{fit:?}");
        assert!(fit.objective <= 1e-3);
        assert!((scale_from_gp(&fit.params, 0.0, 10.0).pixels_per_cm - 1.0).abs() < 0.01);
    }

    #[test]
    fn fit_recovers_ratio() {
        let marks = [0.0, 10.0, 19.0, 27.1, 34.39];
        let fit = fit_gp_de(&marks, &FitConfig::for_marks(&marks, 3).unwrap()).unwrap();
        assert!((fit.params.r - 0.9).abs() <= 0.02 * 0.9, "{fit:?}");
        assert!(fit.objective <= 1e-3);
    }

    #[test]
    fn fit_needs_three_marks() {
        let cfg = FitConfig::for_marks(&[0.0, 5.0], 0).unwrap();
        assert!(matches!(fit_gp_de(&[0.0, 5.0], &cfg), Err(Error::TooFewMarks { needed: 3, got: 2 })));
    }

    #[test]
    fn fit_rejects_bad_config() {
        let marks = [0.0, 1.0, 2.0];
        let mut cfg = FitConfig::for_marks(&marks, 0).unwrap();
        cfg.population = 4;
        assert!(fit_gp_de(&marks, &cfg).is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let marks = [3.0, 14.2, 24.9, 36.3, 46.8, 58.1, 69.0];
        let cfg = FitConfig::for_marks(&marks, 77).unwrap();
        let a = fit_gp_de(&marks, &cfg).unwrap();
        let b = fit_gp_de(&marks, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.params.m0.to_bits(), b.params.m0.to_bits());
    }

    #[test]
    fn fit_is_scale_equivariant() {
        let truth = GpParams::new(12.0, 30.0, 1.07).unwrap();
        let marks = gp_generate(&truth, 12).unwrap();
        let base_cfg = FitConfig::for_marks(&marks, 5).unwrap();
        let base = fit_gp_de(&marks, &base_cfg).unwrap();
        let (lo, hi) = min_max(&marks);
        let base_scale = scale_from_gp(&base.params, lo, hi).pixels_per_cm;
        for c in [2.0, 0.5, 3.7] {
            let scaled: Vec<f64> = marks.iter().map(|m| m * c).collect();
            let cfg = FitConfig::for_marks(&scaled, 5).unwrap();
            let fit = fit_gp_de(&scaled, &cfg).unwrap();
            let rel = |a: f64, b: f64| ((a - b) / b).abs();
            assert!(rel(fit.params.spacing(), c * base.params.spacing()) <= 1e-6, "c={c}");
            let s = scale_from_gp(&fit.params, lo * c, hi * c).pixels_per_cm;
            assert!(rel(s, c * base_scale) <= 1e-6, "c={c}");
        }
    }

    #[test]
    fn scale_examples() {
        let p = GpParams::new(0.0, 10.0, 1.0).unwrap();
        let s = scale_from_gp(&p, 0.0, 100.0);
        assert_eq!(s.pixels_per_cm, 10.0);
        assert_eq!(s.marks_used, 11);

        // marks 0, 10, 19, 27.1, 34.39 (the next mark 40.951 lies a full gap out)
        let p = GpParams::new(0.0, 10.0, 0.9).unwrap();
        let s = scale_from_gp(&p, 0.0, 34.39);
        assert_eq!(s.marks_used, 5);
        assert!((s.pixels_per_cm - (10.0 + 9.0 + 8.1 + 7.29) / 4.0).abs() < 1e-9);

        let p = GpParams::new(0.0, 7.0, 1.5).unwrap();
        let s = scale_from_gp(&p, 0.0, 7.0);
        assert_eq!(s.pixels_per_cm, 7.0);

        let p = GpParams::new(0.0, 0.1, 1.0).unwrap();
        assert_eq!(scale_from_gp(&p, 0.0, 7.0), ScaleEstimate::failed());
    }

    #[test]
    fn noiseless_fits_small_sweep() {
        let mut rng = seed::rng(2024);
        let mut good = 0;
        for trial in 0..40u64 {
            let (n, r, d) = loop {
                let n = rng.random_range(5..=40usize);
                let r: f64 = rng.random_range(0.7..1.4);
                let d = rng.random_range(8.0..40.0);
                if d * r.powi(n as i32 - 2).min(1.0) >= 2.0 {
                    break (n, r, d);
                }
            };
            let m0 = rng.random_range(0.0..100.0);
            let truth = GpParams::new(m0, m0 + d, r).unwrap();
            let marks = gp_generate(&truth, n).unwrap();
            let want = estimate_direct(&marks).pixels_per_cm;
            let got = estimate_gp_de(&marks, &DeSettings { seed: trial, ..Default::default() }).unwrap();
            if ((got.pixels_per_cm - want) / want).abs() <= 0.01 {
                good += 1;
            } else {
                eprintln!("trial {trial}: n={n} r={r:.3} want {want} got {got:?}");
            }
        }
        assert!(good >= 39, "{good}");
    }
}
