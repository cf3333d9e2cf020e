//! Adjacent-distance scale baselines.

use super::{adjacent_gaps, ScaleEstimate};
use crate::geometry::Mark1D;

/// Tolerated relative deviation from the median distance.
pub const DISTANCE_TOLERANCE: f64 = 0.2;
/// Tolerated relative deviation from the median ratio of adjacent distances.
pub const RATIO_TOLERANCE: f64 = 0.1;

fn sorted_gaps(marks: &[Mark1D]) -> Vec<f64> {
    let mut v = marks.to_vec();
    v.sort_by(f64::total_cmp);
    adjacent_gaps(&v)
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean adjacent distance of the sorted marks.
pub fn estimate_direct(marks: &[Mark1D]) -> ScaleEstimate {
    if marks.len() < 2 {
        return ScaleEstimate::failed();
    }
    let gaps = sorted_gaps(marks);
    ScaleEstimate::ok(gaps.iter().sum::<f64>() / gaps.len() as f64, marks.len())
}

/// Mean of the adjacent distances that survive two filters, applied in
/// order:
///
/// 1. distances deviating more than 20% from the median distance are dropped;
/// 2. among the survivors, ratios of neighbouring distances are compared to
///    their median; a distance is dropped when it has at least one ratio and
///    all of its ratios deviate more than 10% from that median.
pub fn estimate_median_filtered(marks: &[Mark1D]) -> ScaleEstimate {
    if marks.len() < 3 {
        return ScaleEstimate::failed();
    }
    let gaps = sorted_gaps(marks);
    let med = median(&gaps);
    let close: Vec<f64> = gaps
        .into_iter()
        .filter(|d| (d - med).abs() <= DISTANCE_TOLERANCE * med)
        .collect();
    if close.is_empty() {
        return ScaleEstimate::failed();
    }

    let ratios: Vec<f64> = close.windows(2).map(|w| w[1] / w[0]).collect();
    let kept: Vec<f64> = if ratios.is_empty() {
        close
    } else {
        let med_q = median(&ratios);
        let ok = |q: f64| (q - med_q).abs() <= RATIO_TOLERANCE * med_q;
        close
            .iter()
            .enumerate()
            .filter(|&(i, _)| {
                let left = i.checked_sub(1).map(|j| ok(ratios[j]));
                let right = ratios.get(i).map(|&q| ok(q));
                left.unwrap_or(false) || right.unwrap_or(false)
            })
            .map(|(_, &d)| d)
            .collect()
    };
    if kept.is_empty() {
        return ScaleEstimate::failed();
    }
    ScaleEstimate::ok(kept.iter().sum::<f64>() / kept.len() as f64, marks.len())
}
