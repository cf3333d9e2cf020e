//! Points, normal-form lines and the projection that turns collinear marks
//! into 1D coordinates.
//!
//! A line is stored as `x·cosθ + y·sinθ = ρ` with `θ ∈ [-π/2, π/2)`. Its unit
//! direction is fixed to `(-sinθ, cosθ)`, so the sign of every projected
//! coordinate is reproducible.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Image-space point in pixels; `y` grows downwards.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Signed coordinate (pixels) of a mark along a line's direction vector.
pub type Mark1D = f64;

/// Line in normal form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoughLine {
    pub rho: f64,
    pub theta: f64,
}

impl HoughLine {
    /// Builds a line, folding `theta` into `[-π/2, π/2)` and flipping the sign
    /// of `rho` when a half-turn was needed.
    pub fn new(rho: f64, theta: f64) -> Self {
        let mut rho = rho;
        let mut theta = theta.rem_euclid(2.0 * PI);
        if theta >= PI {
            theta -= 2.0 * PI;
        }
        // theta now in [-π, π)
        if theta >= FRAC_PI_2 {
            theta -= PI;
            rho = -rho;
        } else if theta < -FRAC_PI_2 {
            theta += PI;
            rho = -rho;
        }
        // canonicalise -0.0
        Self {
            rho: rho + 0.0,
            theta: theta + 0.0,
        }
    }

    pub fn normal(&self) -> (f64, f64) {
        (self.theta.cos(), self.theta.sin())
    }

    pub fn direction(&self) -> (f64, f64) {
        (-self.theta.sin(), self.theta.cos())
    }

    /// Signed residual `x·cosθ + y·sinθ − ρ`.
    pub fn residual(&self, p: &Point2) -> f64 {
        let (c, s) = self.normal();
        p.x * c + p.y * s - self.rho
    }
}

pub fn line_from_points(a: Point2, b: Point2) -> Result<HoughLine> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::DegenerateInput("line through two identical points"));
    }
    // direction (-sinθ, cosθ) ∥ (dx, dy)
    let line = HoughLine::new(0.0, (-dx).atan2(dy));
    let (c, s) = line.normal();
    Ok(HoughLine {
        rho: a.x * c + a.y * s,
        ..line
    })
}

/// Total least-squares line: through the centroid along the principal axis
/// of the point scatter.
pub fn fit_line(points: &[Point2]) -> Result<HoughLine> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - cx, p.y - cy);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx + syy == 0.0 {
        return Err(Error::DegenerateInput("all points coincide"));
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let c = Point2::new(cx, cy);
    line_from_points(c, Point2::new(cx + angle.cos(), cy + angle.sin()))
}

pub fn project_to_line(points: &[Point2], line: &HoughLine) -> Result<Vec<Mark1D>> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (dx, dy) = line.direction();
    Ok(points.iter().map(|p| p.x * dx + p.y * dy).collect())
}

pub fn unproject_from_line(marks: &[Mark1D], line: &HoughLine) -> Vec<Point2> {
    let (nx, ny) = line.normal();
    let (dx, dy) = line.direction();
    marks
        .iter()
        .map(|&t| Point2::new(line.rho * nx + t * dx, line.rho * ny + t * dy))
        .collect()
}
