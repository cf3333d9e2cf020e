//! Learned inverse mapping from noisy 1D marks to progression parameters.
//!
//! Training data is generated online: random progressions are perturbed by
//! jitter, dropped marks and spurious marks, min-max normalised to `[-1, 1]`
//! and encoded as 64 sorted slots plus a 64-slot presence mask. The network
//! regresses `(m0', d', r)` in normalised space.

pub mod model;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Mark1D;
use crate::gpfit::{gp_generate, GpParams, RATIO_BOUND};
use crate::seed;

pub use model::{gradient_check, DeepGpModel, Gradients, Layer};

/// Capacity of the fixed-width input encoding.
pub const MAX_MARKS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Jitter standard deviation as a fraction of `|m1 − m0|`.
    pub sigma_frac: f64,
    pub drop_frac_max: f64,
    pub add_max: usize,
    pub seed: u64,
    /// Drop exactly `⌊drop_frac_max·n⌋` marks and add exactly `add_max`
    /// instead of drawing both counts uniformly.
    pub fixed_counts: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_frac: 0.0,
            drop_frac_max: 0.0,
            add_max: 0,
            seed: 0,
            fixed_counts: false,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_frac >= 0.0 && self.sigma_frac.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma_frac {}", self.sigma_frac)));
        }
        if !(0.0..1.0).contains(&self.drop_frac_max) {
            return Err(Error::InvalidParams(format!("drop_frac_max {}", self.drop_frac_max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyGpSample {
    pub marks: Vec<Mark1D>,
    pub truth: GpParams,
    /// Clean marks retained after dropping.
    pub n_clean: usize,
}

/// `n` progression marks with Gaussian jitter, random removals (at least 3
/// marks survive) and spurious marks drawn uniformly over the clean span,
/// returned in random order.
pub fn generate_noisy_gp(truth: &GpParams, n: usize, cfg: &NoiseConfig) -> Result<NoisyGpSample> {
    if !(3..=MAX_MARKS).contains(&n) {
        return Err(Error::InvalidCount(n));
    }
    cfg.validate()?;
    let clean = gp_generate(truth, n)?;
    let mut rng = seed::rng(cfg.seed);

    let sigma = cfg.sigma_frac * truth.spacing().abs();
    let mut marks = clean.clone();
    if sigma > 0.0 {
        let jitter = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParams(e.to_string()))?;
        for m in &mut marks {
            *m += jitter.sample(&mut rng);
        }
    }

    let drop_cap = ((cfg.drop_frac_max * n as f64).floor() as usize).min(n - 3);
    let drops = if cfg.fixed_counts { drop_cap } else { rng.random_range(0..=drop_cap) };
    if drops > 0 {
        let removed: Vec<usize> = rand::seq::index::sample(&mut rng, n, drops).into_vec();
        let mut keep = vec![true; n];
        for i in removed {
            keep[i] = false;
        }
        marks = marks
            .into_iter()
            .zip(keep)
            .filter_map(|(m, k)| k.then_some(m))
            .collect();
    }
    let n_clean = marks.len();

    let adds = if cfg.fixed_counts { cfg.add_max } else { rng.random_range(0..=cfg.add_max) };
    let (lo, hi) = crate::gpfit::min_max(&clean);
    for _ in 0..adds {
        marks.push(rng.random_range(lo..=hi));
    }
    marks.shuffle(&mut rng);
    Ok(NoisyGpSample {
        marks,
        truth: *truth,
        n_clean,
    })
}

/// Affine map from pixel coordinates to `[-1, 1]`: `t' = (t − offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub offset: f64,
    pub scale: f64,
}

pub fn normalize_marks(marks: &[Mark1D]) -> Result<(Vec<f64>, NormalizationRecord)> {
    let (lo, hi) = crate::gpfit::min_max(marks);
    if !(hi > lo) {
        return Err(Error::DegenerateRange);
    }
    let rec = NormalizationRecord {
        offset: (hi + lo) / 2.0,
        scale: (hi - lo) / 2.0,
    };
    let out = marks
        .iter()
        .map(|&t| {
            // pin the extremes so rounding never leaves [-1, 1]
            if t == lo {
                -1.0
            } else if t == hi {
                1.0
            } else {
                (t - rec.offset) / rec.scale
            }
        })
        .collect();
    Ok((out, rec))
}

/// 64 sorted values (zero padded) followed by a 64-slot presence mask.
pub fn encode_input(normalized: &[f64]) -> Result<Vec<f32>> {
    if normalized.len() > MAX_MARKS {
        return Err(Error::TooManyMarks(normalized.len()));
    }
    if normalized.len() < 2 {
        return Err(Error::TooFewMarks {
            needed: 2,
            got: normalized.len(),
        });
    }
    let mut sorted = normalized.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = vec![0.0f32; 2 * MAX_MARKS];
    for (i, v) in sorted.iter().enumerate() {
        out[i] = *v as f32;
        out[MAX_MARKS + i] = 1.0;
    }
    Ok(out)
}

/// Inverse of [`encode_input`]: the values of the occupied slots.
pub fn decode_input(encoded: &[f32]) -> Vec<f32> {
    (0..MAX_MARKS)
        .filter(|&i| encoded[MAX_MARKS + i] > 0.5)
        .map(|i| encoded[i])
        .collect()
}

/// Regression target `(m0', d', r)` for a sample normalised by `rec`.
pub fn target_for(truth: &GpParams, rec: &NormalizationRecord) -> [f32; 3] {
    [
        ((truth.m0 - rec.offset) / rec.scale) as f32,
        (truth.spacing() / rec.scale) as f32,
        truth.r as f32,
    ]
}

fn check_count(n: usize) -> Result<()> {
    if n > MAX_MARKS {
        return Err(Error::TooManyMarks(n));
    }
    if n < 3 {
        return Err(Error::TooFewMarks { needed: 3, got: n });
    }
    Ok(())
}

/// Predicts progression parameters in pixel coordinates. The ratio is
/// clamped to `[1/1.5, 1.5]`.
pub fn deepgp_infer(model: &DeepGpModel, marks: &[Mark1D]) -> Result<GpParams> {
    check_count(marks.len())?;
    let (norm, rec) = normalize_marks(marks)?;
    let out = model.predict(&encode_input(&norm)?);
    let m0 = out[0] as f64 * rec.scale + rec.offset;
    let d = out[1] as f64 * rec.scale;
    let r = (out[2] as f64).clamp(1.0 / RATIO_BOUND, RATIO_BOUND);
    GpParams::new(m0, m0 + d, r)
}

/// Parameter ranges of the online training distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleRanges {
    /// Inclusive clean mark count range.
    pub n: [usize; 2],
    /// Ratio range, sampled log-uniformly.
    pub r: [f64; 2],
    pub sigma_frac: [f64; 2],
    pub drop_frac_max: f64,
    pub add_max: usize,
    /// First gap `d` in pixels.
    pub spacing: [f64; 2],
    pub offset: [f64; 2],
    /// Progressions whose smallest gap falls below this many pixels are
    /// re-drawn.
    pub min_gap: f64,
}

impl Default for SampleRanges {
    fn default() -> Self {
        Self {
            n: [5, MAX_MARKS],
            r: [1.0 / 1.4, 1.4],
            sigma_frac: [0.0, 0.05],
            drop_frac_max: 0.2,
            add_max: 3,
            spacing: [8.0, 40.0],
            offset: [0.0, 500.0],
            min_gap: 2.0,
        }
    }
}

/// Smallest clean gap of an `n`-mark progression with first gap `d`.
pub fn min_gap(d: f64, r: f64, n: usize) -> f64 {
    d.abs() * r.powi(n as i32 - 2).min(1.0)
}

/// Draws a clean progression and mark count. Draws violating `min_gap` are
/// rejected; after 64 rejections the ratio falls back to 1.
pub fn sample_truth<R: Rng>(rng: &mut R, ranges: &SampleRanges) -> (GpParams, usize) {
    let n = rng.random_range(ranges.n[0]..=ranges.n[1]);
    let m0 = rng.random_range(ranges.offset[0]..=ranges.offset[1]);
    let d = rng.random_range(ranges.spacing[0]..=ranges.spacing[1]);
    let (ln_lo, ln_hi) = (ranges.r[0].ln(), ranges.r[1].ln());
    let mut r = 1.0;
    for _ in 0..64 {
        let c = rng.random_range(ln_lo..=ln_hi).exp();
        if min_gap(d, c, n) >= ranges.min_gap {
            r = c;
            break;
        }
    }
    (GpParams { m0, m1: m0 + d, r }, n)
}

/// One training example: network input and regression target.
pub fn training_example(seed: u64, ranges: &SampleRanges) -> (Vec<f32>, [f32; 3]) {
    let mut rng = seed::rng(seed);
    let (truth, n) = sample_truth(&mut rng, ranges);
    let noise = NoiseConfig {
        sigma_frac: rng.random_range(ranges.sigma_frac[0]..=ranges.sigma_frac[1]),
        drop_frac_max: ranges.drop_frac_max,
        add_max: ranges.add_max,
        seed: rng.random(),
        fixed_counts: false,
    };
    let mut sample = generate_noisy_gp(&truth, n, &noise).expect("ranges yield valid samples");
    // marks are shuffled, so truncation keeps a random subset
    sample.marks.truncate(MAX_MARKS);
    match normalize_marks(&sample.marks) {
        Ok((norm, rec)) => (
            encode_input(&norm).expect("at most 64 marks"),
            target_for(&truth, &rec),
        ),
        // all marks collapsed onto one value; an all-zero input teaches nothing harmful
        Err(_) => (vec![0.0; 2 * MAX_MARKS], [0.0, 0.0, truth.r as f32]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch: usize,
    pub steps: usize,
    /// Peak learning rate reached after warm-up, then cosine-decayed to 0.
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub seed: u64,
    pub ranges: SampleRanges,
    /// Emit a log record every `log_every` steps (and on the last step).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 256,
            steps: 4000,
            learning_rate: 1e-3,
            warmup_steps: 100,
            seed: 0,
            ranges: SampleRanges::default(),
            log_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch == 0 {
            return Err(Error::InvalidParams("steps and batch must be positive".into()));
        }
        let r = &self.ranges;
        if r.n[0] < 3 || r.n[1] < r.n[0] {
            return Err(Error::InvalidParams(format!("mark count range {:?}", r.n)));
        }
        if r.n[1] > MAX_MARKS {
            return Err(Error::TooManyMarks(r.n[1]));
        }
        if !(r.r[0] > 0.0 && r.r[0] <= r.r[1]) || !(r.spacing[0] > 0.0 && r.spacing[0] <= r.spacing[1]) {
            return Err(Error::InvalidParams("ratio or spacing range".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::InvalidParams(format!("learning rate {}", self.learning_rate)));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = (self.steps - self.warmup_steps).max(1) as f64;
        let progress = (step - self.warmup_steps) as f64 / span;
        0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: f64,
}

struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(model: &DeepGpModel) -> Self {
        let sizes: Vec<usize> = model
            .layers
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect();
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut DeepGpModel, grads: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let rate = (lr * c2.sqrt() / c1) as f32;
        let (b1, b2, eps) = (BETA1 as f32, BETA2 as f32, (ADAM_EPS * c2.sqrt()) as f32);
        let params = model
            .layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias]);
        let gs = grads.weights.iter().zip(&grads.bias).flat_map(|(w, b)| [w, b]);
        for (((p, g), m), v) in params.zip(gs).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                if rate != 0.0 {
                    p[i] -= rate * m[i] / (v[i].sqrt() + eps);
                }
            }
        }
    }
}

/// Input and target buffers for training step `step`. Example `i` of the
/// step is seeded by the global sample counter `step·batch + i`, so batches
/// are identical for any thread count.
pub fn training_batch(cfg: &TrainConfig, step: usize) -> (Vec<f32>, Vec<f32>) {
    let base = (step * cfg.batch) as u64;
    let examples: Vec<(Vec<f32>, [f32; 3])> = (0..cfg.batch as u64)
        .into_par_iter()
        .map(|i| training_example(seed::derive(cfg.seed, base + i), &cfg.ranges))
        .collect();
    let mut x = Vec::with_capacity(cfg.batch * 2 * MAX_MARKS);
    let mut y = Vec::with_capacity(cfg.batch * 3);
    for (input, target) in examples {
        x.extend(input);
        y.extend(target);
    }
    (x, y)
}

/// Trains a fresh default-topology model with Adam on online batches.
/// `on_record` receives every logged `{step, loss}` record.
pub fn deepgp_train(cfg: &TrainConfig, mut on_record: impl FnMut(TrainRecord)) -> Result<DeepGpModel> {
    cfg.validate()?;
    let mut model = DeepGpModel::default_topology(seed::derive(cfg.seed, u64::MAX));
    let mut adam = Adam::new(&model);
    for step in 0..cfg.steps {
        let (x, y) = training_batch(cfg, step);
        let (loss, grads) = model.mse_and_grad(&x, &y, cfg.batch);
        adam.step(&mut model, &grads, cfg.learning_rate_at(step));
        let every = cfg.log_every.max(1);
        if step % every == 0 || step + 1 == cfg.steps {
            on_record(TrainRecord { step, loss });
        }
    }
    if !model.is_finite() {
        return Err(Error::InvalidParams("training diverged".into()));
    }
    Ok(model)
}

/// Mean squared error of `model` on `count` held-out examples drawn from
/// `ranges` with seeds derived from `seed`.
pub fn validation_mse(model: &DeepGpModel, ranges: &SampleRanges, seed: u64, count: usize) -> f64 {
    let cfg = TrainConfig {
        batch: count,
        seed,
        ranges: ranges.clone(),
        ..TrainConfig::default()
    };
    let (x, y) = training_batch(&cfg, 0);
    model.mse_and_grad(&x, &y, count).0
}
