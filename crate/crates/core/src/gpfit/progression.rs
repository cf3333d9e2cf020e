//! Geometric-progression mark sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Mark1D;

/// Smallest gap the spanning generator will extend into.
pub const MIN_SPAN_GAP: f64 = 0.5;
/// Hard cap on marks generated in either index direction.
pub const MAX_SPAN_MARKS: usize = 4096;

/// Two seed marks and the common ratio between consecutive gaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub m0: Mark1D,
    pub m1: Mark1D,
    pub r: f64,
}

impl GpParams {
    pub fn new(m0: Mark1D, m1: Mark1D, r: f64) -> Result<Self> {
        let p = Self { m0, m1, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m0.is_finite() && self.m1.is_finite() && self.r.is_finite()) {
            return Err(Error::InvalidParams("non-finite GP parameter".into()));
        }
        if self.m0 == self.m1 {
            return Err(Error::InvalidParams("m0 == m1".into()));
        }
        if !(self.r > 0.0) {
            return Err(Error::InvalidParams(format!("ratio {} must be positive", self.r)));
        }
        Ok(())
    }

    /// First gap `m1 - m0` (signed).
    pub fn spacing(&self) -> f64 {
        self.m1 - self.m0
    }
}

/// `m_i = r·(m_{i-1} − m_{i-2}) + m_{i-1}`, `n` marks starting at `m0`.
pub fn gp_generate(params: &GpParams, n: usize) -> Result<Vec<Mark1D>> {
    params.validate()?;
    if n < 2 {
        return Err(Error::InvalidCount(n));
    }
    let mut out = Vec::with_capacity(n);
    out.push(params.m0);
    out.push(params.m1);
    for i in 2..n {
        out.push(params.r * (out[i - 1] - out[i - 2]) + out[i - 1]);
    }
    Ok(out)
}

/// Extends the progression from `(m0, m1)` in both index directions and keeps
/// the marks that cover `[lo, hi]`: every mark inside the span, plus a mark
/// just outside it when it lies closer to the span than half of its gap to
/// the inner neighbour. Result is sorted ascending.
pub fn gp_generate_spanning(params: &GpParams, lo: Mark1D, hi: Mark1D) -> Result<Vec<Mark1D>> {
    params.validate()?;
    if !(lo < hi) {
        return Err(Error::DegenerateSpan(format!("empty span [{lo}, {hi}]")));
    }
    let d = params.spacing();
    if d.abs() < MIN_SPAN_GAP {
        return Err(Error::DegenerateSpan(format!("spacing {d} below {MIN_SPAN_GAP} px")));
    }
    let r = params.r;
    // past the far end in the direction of travel
    let beyond = |t: f64, step: f64| if step > 0.0 { t > hi } else { t < lo };

    let mut marks = Vec::with_capacity(32);
    marks.push(params.m0);
    let (mut t, mut gap) = (params.m0, d);
    for _ in 0..MAX_SPAN_MARKS {
        t += gap;
        marks.push(t);
        if beyond(t, gap) {
            break;
        }
        gap *= r;
        if gap.abs() < MIN_SPAN_GAP {
            break;
        }
    }
    let (mut t, mut gap) = (params.m0, -d / r);
    if gap.abs() >= MIN_SPAN_GAP {
        for _ in 0..MAX_SPAN_MARKS {
            t += gap;
            marks.push(t);
            if beyond(t, gap) {
                break;
            }
            gap /= r;
            if gap.abs() < MIN_SPAN_GAP {
                break;
            }
        }
    }
    marks.sort_by(f64::total_cmp);

    let n = marks.len();
    let kept: Vec<f64> = (0..n)
        .filter(|&i| {
            let t = marks[i];
            if t > hi {
                i > 0 && t - hi < (t - marks[i - 1]) / 2.0
            } else if t < lo {
                i + 1 < n && lo - t < (marks[i + 1] - t) / 2.0
            } else {
                true
            }
        })
        .map(|i| marks[i])
        .collect();
    if kept.len() < 2 {
        return Err(Error::DegenerateSpan(format!(
            "progression leaves fewer than two marks on [{lo}, {hi}]"
        )));
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(m0: f64, m1: f64, r: f64) -> GpParams {
        GpParams::new(m0, m1, r).unwrap()
    }

    /// Oracle: iterate the recurrence `steps` times in both directions with
    /// no span-based exit (only the minimum-gap stop), then apply the
    /// half-gap window to the sorted list.
    fn oracle_spanning(params: &GpParams, lo: f64, hi: f64, steps: usize) -> Vec<f64> {
        let mut v = vec![params.m0];
        let mut gap = params.spacing();
        let mut t = params.m0;
        for _ in 0..steps {
            t += gap;
            v.push(t);
            gap *= params.r;
            if gap.abs() < MIN_SPAN_GAP {
                break;
            }
        }
        let mut gap = params.spacing() / params.r;
        let mut t = params.m0;
        for _ in 0..steps {
            if gap.abs() < MIN_SPAN_GAP {
                break;
            }
            t -= gap;
            v.push(t);
            gap /= params.r;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        (0..n)
            .filter(|&i| {
                let t = v[i];
                (lo..=hi).contains(&t)
                    || (t > hi && t - hi < (t - v[i - 1]) / 2.0)
                    || (t < lo && lo - t < (v[i + 1] - t) / 2.0)
            })
            .map(|i| v[i])
            .collect()
    }

    #[test]
    fn generate_examples() {
        assert_eq!(gp_generate(&p(0.0, 1.0, 1.0), 5).unwrap(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(gp_generate(&p(0.0, 1.0, 2.0), 4).unwrap(), vec![0.0, 1.0, 3.0, 7.0]);
        assert_eq!(gp_generate(&p(10.0, 8.0, 0.5), 4).unwrap(), vec![10.0, 8.0, 7.0, 6.5]);
    }

    #[test]
    fn invalid_params() {
        assert!(matches!(GpParams::new(1.0, 1.0, 1.0), Err(Error::InvalidParams(_))));
        assert!(matches!(GpParams::new(0.0, 1.0, 0.0), Err(Error::InvalidParams(_))));
        let bad = GpParams { m0: 0.0, m1: 1.0, r: -1.0 };
        assert!(gp_generate(&bad, 4).is_err());
        assert!(matches!(gp_generate(&p(0.0, 1.0, 1.0), 1), Err(Error::InvalidCount(1))));
    }

    #[test]
    fn spanning_examples() {
        let v = gp_generate_spanning(&p(0.0, 10.0, 1.0), 0.0, 100.0).unwrap();
        assert_eq!(v, (0..=10).map(|i| i as f64 * 10.0).collect::<Vec<_>>());

        let v = gp_generate_spanning(&p(50.0, 60.0, 1.0), 0.0, 100.0).unwrap();
        assert_eq!(v.len(), 11);
        assert_eq!((v[0], v[10]), (0.0, 100.0));

        let v = gp_generate_spanning(&p(0.0, 10.0, 0.9), 0.0, 40.0).unwrap();
        let want = [0.0, 10.0, 19.0, 27.1, 34.39, 40.951];
        assert_eq!(v.len(), want.len());
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-9, "{v:?}");
        }
        assert_eq!(v, oracle_spanning(&p(0.0, 10.0, 0.9), 0.0, 40.0, 60));
    }

    #[test]
    fn spanning_matches_oracle() {
        for (m0, m1, r, lo, hi) in [
            (3.0, 9.5, 1.13, -40.0, 200.0),
            (120.0, 111.0, 0.93, 0.0, 150.0),
            (-7.0, 5.0, 1.4, 10.0, 300.0),
            (500.0, 520.0, 1.0 / 1.5, 0.0, 550.0),
        ] {
            let params = p(m0, m1, r);
            let got = gp_generate_spanning(&params, lo, hi).unwrap();
            assert_eq!(got, oracle_spanning(&params, lo, hi, 300), "{params:?}");
        }
    }

    #[test]
    fn spanning_rejects_degenerate() {
        assert!(matches!(
            gp_generate_spanning(&p(0.0, 0.2, 1.0), 0.0, 10.0),
            Err(Error::DegenerateSpan(_))
        ));
        assert!(matches!(
            gp_generate_spanning(&p(0.0, 1.0, 1.0), 5.0, 5.0),
            Err(Error::DegenerateSpan(_))
        ));
        // converges at 20 long before reaching the span
        assert!(matches!(
            gp_generate_spanning(&p(0.0, 10.0, 0.5), 100.0, 200.0),
            Err(Error::DegenerateSpan(_))
        ));
    }

    #[test]
    fn unit_ratio_is_arithmetic() {
        let v = gp_generate(&p(2.5, 4.0, 1.0), 30).unwrap();
        for (i, x) in v.iter().enumerate() {
            assert_eq!(*x, 2.5 + 1.5 * i as f64);
        }
    }
}
