//! Symmetric 1D Chamfer distance: mean nearest-neighbour distance from `a`
//! to `b` plus the mean from `b` to `a`.

use crate::error::{Error, Result};

/// A Chamfer distance implementation.
pub trait ChamferDistance: Send + Sync {
    fn name(&self) -> &'static str;
    fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64>;
}

/// Quadratic all-pairs scan.
#[derive(Debug, Default, Clone, Copy)]
pub struct BruteForce;

/// Sorts both sets, then resolves nearest neighbours with a linear merge.
#[derive(Debug, Default, Clone, Copy)]
pub struct SortedMerge;

static BRUTE_FORCE: BruteForce = BruteForce;
static SORTED_MERGE: SortedMerge = SortedMerge;

/// Every built-in implementation, keyed by name.
pub fn kernels() -> [&'static dyn ChamferDistance; 2] {
    [&BRUTE_FORCE, &SORTED_MERGE]
}

pub fn kernel(name: &str) -> Option<&'static dyn ChamferDistance> {
    kernels().into_iter().find(|k| k.name() == name)
}

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

impl ChamferDistance for BruteForce {
    fn name(&self) -> &'static str {
        "brute-force"
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check(a, b)?;
        let directed = |from: &[f64], to: &[f64]| {
            from.iter()
                .map(|x| to.iter().map(|y| (x - y).abs()).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / from.len() as f64
        };
        Ok(directed(a, b) + directed(b, a))
    }
}

impl ChamferDistance for SortedMerge {
    fn name(&self) -> &'static str {
        "sorted-merge"
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check(a, b)?;
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        Ok(chamfer_presorted(&a, &b))
    }
}

/// Sum of the mean nearest-neighbour distances between `from` and `to`
/// (both sorted ascending, non-empty).
fn directed_sorted(from: &[f64], to: &[f64]) -> f64 {
    let mut j = 0;
    let mut sum = 0.0;
    for &x in from {
        while j + 1 < to.len() && to[j + 1] <= x {
            j += 1;
        }
        let mut best = (x - to[j]).abs();
        if j + 1 < to.len() {
            best = best.min((x - to[j + 1]).abs());
        }
        sum += best;
    }
    sum / from.len() as f64
}

/// Chamfer distance for inputs already sorted ascending.
pub(crate) fn chamfer_presorted(a: &[f64], b: &[f64]) -> f64 {
    directed_sorted(a, b) + directed_sorted(b, a)
}

/// Symmetric Chamfer distance using the sorted-merge implementation.
pub fn chamfer_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    SortedMerge.distance(a, b)
}
