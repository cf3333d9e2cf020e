//! Ruler reading from detected graduation marks.
//!
//! The pipeline stages are:
//!
//! 1. **Heatmap** – Gaussian mark targets, training losses and local-maximum
//!    peak extraction ([`heatmap`]).
//! 2. **Hough** – grouping of detected marks into straight rulers ([`hough`]).
//! 3. **Projection** – reduction of collinear marks to 1D coordinates
//!    ([`geometry`]).
//! 4. **Scale** – geometric-progression fitting by differential evolution
//!    ([`gpfit`]) or by a learned regressor ([`deepgp`]), plus simple
//!    adjacent-distance baselines.
//!
//! [`synth`] renders procedural rulers with exact cm-mark ground truth,
//! [`eval`] implements the mAPE/cm@n benchmark protocol and [`pipeline`]
//! wires everything behind a name-keyed estimator registry.

pub mod deepgp;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod gpfit;
pub mod heatmap;
pub mod hough;
pub mod io;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{HoughLine, Mark1D, Point2};
