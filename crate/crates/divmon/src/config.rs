//! JSON configuration file and the config digest embedded in snapshots.

use std::path::Path;

use divmon_core::monitor::{DEFAULT_PREDICTIVE_THRESHOLD, DEFAULT_TEMPORAL_THRESHOLD};
use divmon_core::window::DEFAULT_MIN_SAMPLES;
use divmon_core::{BaselineMode, BaselineSpec, BinningSpec, MonitorConfig, Span, WindowSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::events::{format_timestamp, parse_timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineModeName {
    PreviousWindow,
    MovingAverage,
}

/// On-disk form of [`MonitorConfig`]. Every key except the model ids has a
/// default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub main_model: String,
    pub support_models: Vec<String>,
    #[serde(default = "default_predictive")]
    pub predictive_threshold: f64,
    #[serde(default = "default_temporal")]
    pub temporal_threshold: f64,
    #[serde(default = "default_mode")]
    pub baseline_mode: BaselineModeName,
    #[serde(default = "default_depth")]
    pub baseline_depth: usize,
    #[serde(default = "default_bins")]
    pub bin_count: usize,
    /// `<n><unit>` with unit one of `ms s m h d w`, or bare seconds.
    #[serde(default = "default_duration")]
    pub window_duration: String,
    /// RFC 3339 instant; offsets are normalized to UTC.
    #[serde(default = "default_origin")]
    pub window_origin: String,
    #[serde(default = "default_min_samples")]
    pub min_samples: u64,
    #[serde(default)]
    pub kl_smoothing: Option<f64>,
}

fn default_predictive() -> f64 {
    DEFAULT_PREDICTIVE_THRESHOLD
}
fn default_temporal() -> f64 {
    DEFAULT_TEMPORAL_THRESHOLD
}
fn default_mode() -> BaselineModeName {
    BaselineModeName::PreviousWindow
}
fn default_depth() -> usize {
    1
}
fn default_bins() -> usize {
    10
}
fn default_duration() -> String {
    "30d".into()
}
fn default_origin() -> String {
    "1970-01-01T00:00:00Z".into()
}
fn default_min_samples() -> u64 {
    DEFAULT_MIN_SAMPLES
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_monitor_config(&self) -> Result<MonitorConfig> {
        let baseline = match self.baseline_mode {
            BaselineModeName::PreviousWindow => {
                if self.baseline_depth != 1 {
                    return Err(Error::Config(
                        "baseline_depth must be 1 for previous_window".into(),
                    ));
                }
                BaselineSpec::previous_window()
            }
            BaselineModeName::MovingAverage => BaselineSpec::moving_average(self.baseline_depth)?,
        };
        let window = WindowSpec::new(
            parse_duration(&self.window_duration)?,
            parse_timestamp(&self.window_origin).map_err(Error::Config)?,
            self.min_samples,
        )?;
        let config = MonitorConfig {
            main_model: self.main_model.clone(),
            support_models: self.support_models.clone(),
            predictive_threshold: self.predictive_threshold,
            temporal_threshold: self.temporal_threshold,
            baseline,
            binning: BinningSpec::unit(self.bin_count)?,
            window,
            kl_smoothing: self.kl_smoothing,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_monitor_config(config: &MonitorConfig) -> Self {
        Self {
            main_model: config.main_model.clone(),
            support_models: config.support_models.clone(),
            predictive_threshold: config.predictive_threshold,
            temporal_threshold: config.temporal_threshold,
            baseline_mode: match config.baseline.mode {
                BaselineMode::PreviousWindow => BaselineModeName::PreviousWindow,
                BaselineMode::MovingAverage => BaselineModeName::MovingAverage,
            },
            baseline_depth: config.baseline.effective_depth(),
            bin_count: config.binning.bin_count(),
            window_duration: format!("{}ms", config.window.duration.as_millis()),
            window_origin: format_timestamp(config.window.origin),
            min_samples: config.window.min_samples,
            kl_smoothing: config.kl_smoothing,
        }
    }
}

pub fn load_config(path: &Path) -> Result<MonitorConfig> {
    ConfigFile::load(path)?.to_monitor_config()
}

/// Parses `30d`, `12h`, `90m`, `3600s`, `500ms`, `2w`, or bare seconds.
pub fn parse_duration(text: &str) -> Result<Span> {
    let text = text.trim();
    let split = text
        .find(|c: char| !c.is_ascii_digit())
        .unwrap_or(text.len());
    let (digits, unit) = text.split_at(split);
    let n: i64 = digits
        .parse()
        .map_err(|_| Error::Config(format!("bad duration {text:?}")))?;
    let unit_ms: i64 = match unit {
        "ms" => 1,
        "" | "s" => 1_000,
        "m" => 60_000,
        "h" => 3_600_000,
        "d" => 86_400_000,
        "w" => 7 * 86_400_000,
        _ => return Err(Error::Config(format!("unknown duration unit in {text:?}"))),
    };
    let ms = n
        .checked_mul(unit_ms)
        .filter(|&ms| ms > 0)
        .ok_or_else(|| Error::Config(format!("duration {text:?} must be positive")))?;
    Ok(Span(ms))
}

/// SHA-256 over the canonical serialization of the resolved config.
pub fn config_digest(config: &MonitorConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}
