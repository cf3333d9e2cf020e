//! Point-set Hough transform: groups detected marks by collinearity and
//! returns the line with the most support.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fit_line, line_from_points, HoughLine, Point2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoughConfig {
    /// Angle bin width in degrees.
    pub delta_theta: f64,
    /// Rho bin width in pixels; also the inlier distance threshold.
    pub delta_rho: f64,
    /// Accumulator cells above `peak_fraction · max` become candidate lines.
    pub peak_fraction: f64,
    /// Row-major 3×3 smoothing kernel applied to the accumulator.
    pub smoothing_kernel: [f64; 9],
    /// Refinement of the winning cell's line: the line through a pair of its
    /// inliers with the lowest truncated squared residual over all points,
    /// then up to this many total-least-squares refits.
    /// The bin grid only localises a line to within Δθ, so on long lines the
    /// far points of the cell's line can sit outside Δρ. 0 returns the grid
    /// line as is.
    #[serde(default = "default_refine")]
    pub refine_iterations: usize,
}

fn default_refine() -> usize {
    2
}

pub const BINOMIAL_3X3: [f64; 9] = [
    1.0 / 16.0,
    2.0 / 16.0,
    1.0 / 16.0,
    2.0 / 16.0,
    4.0 / 16.0,
    2.0 / 16.0,
    1.0 / 16.0,
    2.0 / 16.0,
    1.0 / 16.0,
];

impl Default for HoughConfig {
    fn default() -> Self {
        Self {
            delta_theta: 1.0,
            delta_rho: 2.0,
            peak_fraction: 0.3,
            smoothing_kernel: BINOMIAL_3X3,
            refine_iterations: default_refine(),
        }
    }
}

impl HoughConfig {
    fn validate(&self) -> Result<()> {
        if !(self.delta_theta > 0.0 && self.delta_rho > 0.0) {
            return Err(Error::InvalidParams(format!(
                "hough bin widths must be positive (Δθ={}, Δρ={})",
                self.delta_theta, self.delta_rho
            )));
        }
        if !(self.peak_fraction > 0.0 && self.peak_fraction < 1.0) {
            return Err(Error::InvalidParams(format!(
                "peak_fraction {} outside (0, 1)",
                self.peak_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineDetection {
    pub line: HoughLine,
    pub inliers: Vec<Point2>,
    /// Positions of the inliers in the input slice.
    pub indices: Vec<usize>,
    pub support: usize,
}

/// Values of `arange(start, stop, step)`.
fn arange(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).ceil().max(0.0) as usize;
    (0..n).map(|i| start + i as f64 * step).collect()
}

/// Index of the first boundary `>= v` (left-closed bucketize).
fn bucketize(v: f64, bounds: &[f64]) -> usize {
    bounds.partition_point(|&b| b < v).min(bounds.len() - 1)
}

pub fn hough_dominant_line(points: &[Point2], cfg: &HoughConfig) -> Result<LineDetection> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    cfg.validate()?;

    let thetas: Vec<f64> = arange(-90.0, 90.0, cfg.delta_theta)
        .into_iter()
        .map(f64::to_radians)
        .collect();
    let trig: Vec<(f64, f64)> = thetas.iter().map(|t| (t.cos(), t.sin())).collect();
    let rho_max = points.iter().map(Point2::norm).fold(0.0, f64::max).ceil();
    let rhos = arange(-rho_max, rho_max + cfg.delta_rho, cfg.delta_rho);
    let (n_rho, n_theta) = (rhos.len(), thetas.len());

    let mut acc = vec![0.0f64; n_rho * n_theta];
    for p in points {
        for (j, &(c, s)) in trig.iter().enumerate() {
            let i = bucketize(p.x * c + p.y * s, &rhos);
            acc[i * n_theta + j] += 1.0;
        }
    }

    let k = &cfg.smoothing_kernel;
    let mut smooth = vec![0.0f64; acc.len()];
    for i in 0..n_rho {
        for j in 0..n_theta {
            let mut v = 0.0;
            for di in 0..3 {
                for dj in 0..3 {
                    let (ii, jj) = (i as isize + di as isize - 1, j as isize + dj as isize - 1);
                    if ii >= 0 && jj >= 0 && (ii as usize) < n_rho && (jj as usize) < n_theta {
                        v += k[di * 3 + dj] * acc[ii as usize * n_theta + jj as usize];
                    }
                }
            }
            smooth[i * n_theta + j] = v;
        }
    }
    let max = smooth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = cfg.peak_fraction * max;

    // Ranked by inlier count, then by the smaller summed inlier residual; the
    // θ-major scan keeps the first strict improvement, so remaining ties go
    // to smaller θ, then ρ.
    let mut best: Option<(usize, usize, usize, f64)> = None;
    for j in 0..n_theta {
        let (c, s) = trig[j];
        for i in 0..n_rho {
            if !(smooth[i * n_theta + j] > threshold) {
                continue;
            }
            let rho = rhos[i];
            let (mut count, mut residual) = (0, 0.0);
            for p in points {
                let e = (rho - (p.x * c + p.y * s)).abs();
                if e < cfg.delta_rho {
                    count += 1;
                    residual += e;
                }
            }
            if best.is_none_or(|(_, _, b, e)| count > b || (count == b && residual < e)) {
                best = Some((i, j, count, residual));
            }
        }
    }
    let (i, j, _, _) = best.expect("maximum cell always exceeds a fraction of itself");
    let mut line = HoughLine {
        rho: rhos[i],
        theta: thetas[j],
    };
    let mut indices = within(points, &line, cfg.delta_rho);
    if cfg.refine_iterations > 0 {
        if let Some(l) = consensus(points, &indices, cfg.delta_rho) {
            line = l;
            indices = within(points, &line, cfg.delta_rho);
        }
    }
    for _ in 0..cfg.refine_iterations {
        let inliers: Vec<Point2> = indices.iter().map(|&k| points[k]).collect();
        let Ok(fitted) = fit_line(&inliers) else { break };
        if cost(points, &fitted, cfg.delta_rho) > cost(points, &line, cfg.delta_rho) {
            break;
        }
        let next = within(points, &fitted, cfg.delta_rho);
        let done = next == indices;
        line = fitted;
        indices = next;
        if done {
            break;
        }
    }
    Ok(LineDetection {
        line,
        inliers: indices.iter().map(|&k| points[k]).collect(),
        support: indices.len(),
        indices,
    })
}

/// Truncated quadratic residual: points farther than `delta_rho` all cost
/// the same, so the cost rewards fitting the inliers tightly.
fn cost(points: &[Point2], line: &HoughLine, delta_rho: f64) -> f64 {
    let cap = delta_rho * delta_rho;
    points.iter().map(|p| line.residual(p).powi(2).min(cap)).sum()
}

/// Cheapest line through a pair of candidates; ties go to pair order.
fn consensus(points: &[Point2], candidates: &[usize], delta_rho: f64) -> Option<HoughLine> {
    let mut best: Option<(HoughLine, f64)> = None;
    for (n, &a) in candidates.iter().enumerate() {
        for &b in &candidates[n + 1..] {
            let Ok(line) = line_from_points(points[a], points[b]) else { continue };
            let c = cost(points, &line, delta_rho);
            if best.is_none_or(|(_, bc)| c < bc) {
                best = Some((line, c));
            }
        }
    }
    best.map(|(line, _)| line)
}

fn within(points: &[Point2], line: &HoughLine, delta_rho: f64) -> Vec<usize> {
    let (c, s) = (line.theta.cos(), line.theta.sin());
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| (line.rho - (p.x * c + p.y * s)).abs() < delta_rho)
        .map(|(k, _)| k)
        .collect()
}

/// Greedy peeling: detect, remove inliers, repeat. Stops when fewer than two
/// points remain, a detection has fewer than three inliers, or `max_lines`
/// detections were found. Indices refer to the original `points`.
pub fn hough_all_lines(points: &[Point2], cfg: &HoughConfig, max_lines: usize) -> Result<Vec<LineDetection>> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut found = Vec::new();
    while found.len() < max_lines && remaining.len() >= 2 {
        let subset: Vec<Point2> = remaining.iter().map(|&i| points[i]).collect();
        let mut det = hough_dominant_line(&subset, cfg)?;
        if det.support < 3 {
            break;
        }
        det.indices = det.indices.iter().map(|&i| remaining[i]).collect();
        remaining.retain(|i| !det.indices.contains(i));
        found.push(det);
    }
    found.sort_by(|a, b| b.support.cmp(&a.support));
    Ok(found)
}
