//! Scoring detections against synthetic ground truth.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::brace::{BraceError, BraceParams, DetectParams, Rect, UnitVerdict};
use crate::coco::{parse_coco, CocoError};
use crate::imaging::{decode_image, ImagingError};
use crate::report::detect_regions;
use crate::synth::{TruthFile, UnitTruth, COCO_FILE, TRUTH_FILE};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed truth file: {0}")]
    Truth(#[from] serde_json::Error),
    #[error("unit {0} has a verdict but no truth entry")]
    MissingTruth(u64),
    #[error("frame {0} has no entry in the annotations")]
    MissingImage(String),
    #[error(transparent)]
    Coco(#[from] CocoError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Brace(#[from] BraceError),
}

/// Confusion counts with "brace present" as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Distance from the true crossing to the nearest intersection inside the
/// unit's central window, or `None` if either is missing.
pub fn crossing_error(verdict: &UnitVerdict, truth: &UnitTruth, params: &BraceParams) -> Option<f64> {
    let [tx, ty] = truth.crossing?;
    let [x, y, w, h] = truth.bbox;
    let window = Rect {
        x_min: x,
        y_min: y,
        x_max: x + w,
        y_max: y + h,
    }
    .centered_window(params.central_frac);
    verdict
        .intersections
        .iter()
        .filter(|p| window.contains(p.x, p.y))
        .map(|p| (p.x - tx).hypot(p.y - ty))
        .min_by(f64::total_cmp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitOutcome {
    pub file: String,
    pub unit_id: u64,
    pub truth: bool,
    pub predicted: bool,
    pub crossing_error_px: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub confusion: Confusion,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub accuracy: Option<f64>,
    /// Largest crossing error over true positives.
    pub max_crossing_error_px: Option<f64>,
    pub units: Vec<UnitOutcome>,
}

impl EvalReport {
    pub fn from_outcomes(units: Vec<UnitOutcome>) -> Self {
        let mut confusion = Confusion::default();
        for u in &units {
            confusion.add(u.truth, u.predicted);
        }
        let max_crossing_error_px = units
            .iter()
            .filter(|u| u.truth && u.predicted)
            .filter_map(|u| u.crossing_error_px)
            .max_by(f64::total_cmp);
        Self {
            confusion,
            precision: confusion.precision(),
            recall: confusion.recall(),
            accuracy: confusion.accuracy(),
            max_crossing_error_px,
            units,
        }
    }
}

/// Pairs verdicts with truth records by unit id.
pub fn score_frame(
    file: &str,
    verdicts: &[UnitVerdict],
    truth: &[UnitTruth],
    params: &BraceParams,
) -> Result<Vec<UnitOutcome>, EvalError> {
    verdicts
        .iter()
        .map(|v| {
            let t = truth
                .iter()
                .find(|t| t.unit_id == v.unit_id)
                .ok_or(EvalError::MissingTruth(v.unit_id))?;
            Ok(UnitOutcome {
                file: file.to_string(),
                unit_id: v.unit_id,
                truth: t.brace_present,
                predicted: v.brace_present,
                crossing_error_px: crossing_error(v, t, params),
            })
        })
        .collect()
}

fn read(path: &Path) -> Result<Vec<u8>, EvalError> {
    std::fs::read(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs detection over a corpus directory written by the generator.
pub fn evaluate_corpus(dir: &Path, category: &str, params: &DetectParams) -> Result<EvalReport, EvalError> {
    let truth: TruthFile = serde_json::from_slice(&read(&dir.join(TRUTH_FILE))?)?;
    let coco_text = String::from_utf8_lossy(&read(&dir.join(COCO_FILE))?).into_owned();
    let set = parse_coco(&coco_text, category)?;
    let mut outcomes = Vec::new();
    for frame in &truth.frames {
        let img = decode_image(&read(&dir.join(&frame.file))?)?.into_gray();
        let entry = set
            .image_by_file_name(&frame.file)
            .ok_or_else(|| EvalError::MissingImage(frame.file.clone()))?;
        let regions: Vec<_> = set.regions_for_image(entry.id).cloned().collect();
        let verdicts: Vec<UnitVerdict> = detect_regions(&img, &regions, params)?
            .into_iter()
            .map(|d| d.verdict)
            .collect();
        outcomes.extend(score_frame(&frame.file, &verdicts, &frame.units, &params.brace)?);
    }
    Ok(EvalReport::from_outcomes(outcomes))
}
