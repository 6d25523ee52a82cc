//! Detector configuration and its plain `key = value` file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! r_max = 535
//! levels_per_octave = 3
//! merge_angle_deg = 15
//! ```

use std::path::Path;

use thiserror::Error;

use crate::affineshape::FilterConfig;
use crate::scalespace::{OctaveCount, PyramidConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value {value:?} for {key}")]
    InvalidValue { line: usize, key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub pyramid: PyramidConfig,
    /// Largest accepted Hessian eigen ratio.
    pub r_max: f64,
    /// Early rejection threshold on `|DoG|` before refinement.
    pub prelim_contrast: f64,
    pub filter: FilterConfig,
    /// Quantize synthesized images to integer gray levels.
    pub quantize: bool,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            pyramid: PyramidConfig::default(),
            r_max: 535.0,
            prelim_contrast: 0.5,
            filter: FilterConfig::default(),
            quantize: true,
            seed: 0,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "levels_per_octave",
    "base_sigma",
    "octaves",
    "assumed_input_blur",
    "kernel_truncation",
    "upsample",
    "r_max",
    "prelim_contrast",
    "c_min",
    "alpha_min",
    "beta_min",
    "merge_dist",
    "merge_scale",
    "merge_angle_deg",
    "quantize",
    "seed",
];

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Some(true),
        "0" | "false" | "no" | "off" => Some(false),
        _ => None,
    }
}

impl DetectorConfig {
    /// Sets one option by name. `line` is only used for error reporting.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let invalid = || ConfigError::InvalidValue { line, key: key.to_string(), value: value.to_string() };
        let float = || value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(invalid);
        match key {
            "levels_per_octave" => self.pyramid.levels_per_octave = value.parse().map_err(|_| invalid())?,
            "base_sigma" => self.pyramid.base_sigma = float()?,
            "octaves" => {
                self.pyramid.octaves = if value.eq_ignore_ascii_case("auto") {
                    OctaveCount::Auto
                } else {
                    OctaveCount::Fixed(value.parse().map_err(|_| invalid())?)
                }
            }
            "assumed_input_blur" => self.pyramid.assumed_input_blur = float()?,
            "kernel_truncation" => self.pyramid.kernel_truncation = float()?,
            "upsample" => self.pyramid.upsample = parse_bool(value).ok_or_else(invalid)?,
            "r_max" => self.r_max = float()?,
            "prelim_contrast" => self.prelim_contrast = float()?,
            "c_min" => self.filter.c_min = float()?,
            "alpha_min" => self.filter.alpha_min = float()?,
            "beta_min" => self.filter.beta_min = float()?,
            "merge_dist" => self.filter.merge_dist = float()?,
            "merge_scale" => self.filter.merge_scale = float()?,
            "merge_angle_deg" => self.filter.merge_angle = float()?.to_radians(),
            "quantize" => self.quantize = parse_bool(value).ok_or_else(invalid)?,
            "seed" => self.seed = value.parse().map_err(|_| invalid())?,
            _ => return Err(ConfigError::UnknownKey { line, key: key.to_string() }),
        }
        Ok(())
    }

    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim(), i + 1)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        self.apply_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pyramid.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.r_max >= 1.0) {
            return Err(ConfigError::Invalid("r_max must be >= 1".into()));
        }
        let f = &self.filter;
        let thresholds =
            [self.prelim_contrast, f.c_min, f.alpha_min, f.beta_min, f.merge_dist, f.merge_scale, f.merge_angle];
        if thresholds.iter().any(|v| !(*v >= 0.0)) {
            return Err(ConfigError::Invalid("thresholds must be >= 0".into()));
        }
        Ok(())
    }
}
