//! Whole-image detection and the JSON detection report.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brace::{detect_unit_detailed, BraceError, DetectParams, UnitDetection};
use crate::coco::{AnnotationSet, ImageEntry, UnitRegion};
use crate::config::RunConfig;
use crate::imaging::GrayImage;

/// Runs every region independently and returns detections in input order.
pub fn detect_regions(
    img: &GrayImage,
    regions: &[UnitRegion],
    params: &DetectParams,
) -> Result<Vec<UnitDetection>, BraceError> {
    regions
        .par_iter()
        .map(|r| detect_unit_detailed(img, r, params))
        .collect()
}

/// Finds the COCO image entry for `path` by basename. A COCO file describing a
/// single image matches any path.
pub fn resolve_image<'a>(set: &'a AnnotationSet, path: &Path) -> Option<&'a ImageEntry> {
    let name = path.file_name()?.to_string_lossy();
    set.image_by_file_name(&name).or_else(|| {
        if set.images.len() == 1 {
            set.images.first()
        } else {
            None
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitReport {
    pub unit_id: u64,
    pub brace_present: bool,
    pub n_lines_a: usize,
    pub n_lines_b: usize,
    pub central_hits: usize,
    pub intersections: Vec<[f64; 2]>,
}

impl From<&UnitDetection> for UnitReport {
    fn from(d: &UnitDetection) -> Self {
        let v = &d.verdict;
        Self {
            unit_id: v.unit_id,
            brace_present: v.brace_present,
            n_lines_a: v.n_lines_a,
            n_lines_b: v.n_lines_b,
            central_hits: v.central_hits,
            intersections: v.intersections.iter().map(|p| [p.x, p.y]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub file: String,
    /// Wall-clock detection time; `null` when timing is disabled.
    pub elapsed_ms: Option<f64>,
    pub units: Vec<UnitReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub images: Vec<ImageReport>,
    pub config: RunConfig,
}

impl DetectionReport {
    pub fn all_present(&self) -> bool {
        self.images.iter().flat_map(|i| &i.units).all(|u| u.brace_present)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
