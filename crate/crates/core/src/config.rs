//! TOML run configuration.
//!
//! Every key is optional and falls back to its documented default; unknown keys
//! are rejected. Command-line flags override file values.
//!
//! ```toml
//! seed = 42
//! category = "scaffold_unit"
//!
//! [canny]
//! low = 50.0
//! high = 150.0
//!
//! [hough]
//! rho_res = 1.0
//! theta_res = 0.017453292519943295
//! threshold_frac = 0.3      # of the unit crop height
//! # threshold = 120         # absolute vote count, overrides threshold_frac
//! nms_rho = 2
//! nms_theta = 2
//! max_lines = 16
//!
//! [brace]
//! vert_tol = 0.2617993877991494
//! horiz_tol = 0.17453292519943295
//! central_frac = 0.6
//! kmeans_restarts = 10
//! kmeans_max_iter = 100
//! kmeans_tol = 1e-6
//! parallel_eps = 1e-3
//!
//! [synth]
//! unit_width_mm = 762.0
//! unit_height_mm = 1900.0
//! px_per_mm = 0.25
//!
//! [clutter]
//! max_clutter_lines = 0
//! max_noise_sigma = 0.0
//! max_jitter_px = 0.0
//!
//! [monitor]
//! debounce = 1
//! ```

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::brace::{BraceParams, CannyParams, DetectParams};
use crate::coco::DEFAULT_UNIT_CATEGORY;
use crate::hough::{HoughParams, VoteThreshold};
use crate::synth::{ClutterRanges, ScaffoldSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoughSection {
    pub rho_res: f64,
    pub theta_res: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u32>,
    pub threshold_frac: f64,
    pub nms_rho: usize,
    pub nms_theta: usize,
    pub max_lines: usize,
}

impl Default for HoughSection {
    fn default() -> Self {
        Self {
            rho_res: 1.0,
            theta_res: PI / 180.0,
            threshold: None,
            threshold_frac: 0.3,
            nms_rho: 2,
            nms_theta: 2,
            max_lines: 16,
        }
    }
}

impl HoughSection {
    pub fn params(&self) -> HoughParams {
        HoughParams {
            rho_res: self.rho_res,
            theta_res: self.theta_res,
            threshold: match self.threshold {
                Some(v) => VoteThreshold::Absolute(v),
                None => VoteThreshold::HeightFraction(self.threshold_frac),
            },
            nms_rho: self.nms_rho,
            nms_theta: self.nms_theta,
            max_lines: self.max_lines,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSection {
    pub debounce: usize,
}

impl Default for MonitorSection {
    fn default() -> Self {
        Self { debounce: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub category: String,
    pub canny: CannyParams,
    pub hough: HoughSection,
    pub brace: BraceParams,
    pub synth: ScaffoldSpec,
    pub clutter: ClutterRanges,
    pub monitor: MonitorSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            category: DEFAULT_UNIT_CATEGORY.to_string(),
            canny: CannyParams::default(),
            hough: HoughSection::default(),
            brace: BraceParams::default(),
            synth: ScaffoldSpec::default(),
            clutter: ClutterRanges::default(),
            monitor: MonitorSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, or returns the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: String| ConfigError::Invalid(e);
        self.hough.params().validate().map_err(invalid)?;
        self.brace.validate().map_err(|e| invalid(e.to_string()))?;
        if !(self.canny.low >= 0.0 && self.canny.low <= self.canny.high) {
            return Err(invalid("canny thresholds need 0 <= low <= high".into()));
        }
        self.synth.validate().map_err(|e| invalid(e.to_string()))?;
        if self.monitor.debounce == 0 {
            return Err(invalid("monitor.debounce must be at least 1".into()));
        }
        Ok(())
    }

    pub fn detect_params(&self) -> DetectParams {
        DetectParams {
            canny: self.canny,
            hough: self.hough.params(),
            brace: self.brace,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
