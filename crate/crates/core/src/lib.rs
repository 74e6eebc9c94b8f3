//! Cross-brace completeness inspection for frame scaffolding.
//!
//! Each annotated unit is cropped and masked, run through Canny and a Hough
//! transform, stripped of near-vertical and near-horizontal lines, and the
//! remaining diagonals are split into two orientation groups by 2-means on
//! doubled angles. A unit is complete when some cross-group intersection
//! lands in the central window of its bounding box.

pub mod brace;
pub mod cli;
pub mod coco;
pub mod config;
pub mod eval;
pub mod hough;
pub mod imaging;
pub mod monitor;
pub mod overlay;
pub mod report;
pub mod synth;

pub use brace::{detect_unit, detect_unit_detailed, DetectParams, UnitDetection, UnitVerdict};
pub use config::RunConfig;
pub use hough::PolarLine;
