//! Time windows, per-window histogram accumulation and moving-average
//! baselines.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;

use serde::{Deserialize, Serialize};

use crate::divergence::{normalize, BinningSpec, ScoreDistribution, ScoreHistogram};
use crate::error::{Error, Result};
use crate::event::{PredictionEvent, Span, Timestamp};

/// Default floor below which a model's window is reported as insufficient.
pub const DEFAULT_MIN_SAMPLES: u64 = 100;

/// Half-open interval `[start, end)`; consecutive indices are contiguous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub index: u64,
    pub start: Timestamp,
    pub end: Timestamp,
    pub label: String,
}

impl TimeWindow {
    pub fn contains(&self, t: Timestamp) -> bool {
        t >= self.start && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub duration: Span,
    pub origin: Timestamp,
    pub min_samples: u64,
}

impl WindowSpec {
    pub fn new(duration: Span, origin: Timestamp, min_samples: u64) -> Result<Self> {
        let spec = Self {
            duration,
            origin,
            min_samples,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration.as_millis() <= 0 {
            return Err(Error::InvalidConfig(
                "window duration must be positive".into(),
            ));
        }
        if self.min_samples == 0 {
            return Err(Error::InvalidConfig(
                "min_samples must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// The window with sequence number `index`.
    pub fn window(&self, index: u64) -> Result<TimeWindow> {
        let d = self.duration.as_millis() as i128;
        let start = self.origin.as_millis() as i128 + d * index as i128;
        let end = start + d;
        let start = i64::try_from(start).map_err(|_| Error::TimestampOverflow)?;
        let end = i64::try_from(end).map_err(|_| Error::TimestampOverflow)?;
        Ok(TimeWindow {
            index,
            start: Timestamp(start),
            end: Timestamp(end),
            label: format!("W{index}"),
        })
    }

    pub fn index_of(&self, t: Timestamp) -> Result<u64> {
        if t < self.origin {
            return Err(Error::PreEpoch {
                timestamp_ms: t.as_millis(),
                origin_ms: self.origin.as_millis(),
            });
        }
        let offset = t.as_millis() as i128 - self.origin.as_millis() as i128;
        Ok((offset / self.duration.as_millis() as i128) as u64)
    }
}

/// The unique window containing `t`.
pub fn assign_window(t: Timestamp, spec: &WindowSpec) -> Result<TimeWindow> {
    spec.window(spec.index_of(t)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowStatus {
    Open,
    Closed,
}

/// Per-model result of closing a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WindowOutcome {
    Ready(ScoreDistribution),
    Insufficient { samples: u64 },
}

impl WindowOutcome {
    pub fn distribution(&self) -> Option<&ScoreDistribution> {
        match self {
            WindowOutcome::Ready(d) => Some(d),
            WindowOutcome::Insufficient { .. } => None,
        }
    }
}

/// Histograms for every model seen in one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowAccumulator {
    window: TimeWindow,
    binning: BinningSpec,
    per_model: BTreeMap<String, ScoreHistogram>,
    status: WindowStatus,
}

impl WindowAccumulator {
    pub fn new(window: TimeWindow, binning: BinningSpec) -> Self {
        Self {
            window,
            binning,
            per_model: BTreeMap::new(),
            status: WindowStatus::Open,
        }
    }

    pub fn window(&self) -> &TimeWindow {
        &self.window
    }

    pub fn binning(&self) -> &BinningSpec {
        &self.binning
    }

    pub fn status(&self) -> WindowStatus {
        self.status
    }

    pub fn histograms(&self) -> &BTreeMap<String, ScoreHistogram> {
        &self.per_model
    }

    pub fn histogram(&self, model_id: &str) -> Option<&ScoreHistogram> {
        self.per_model.get(model_id)
    }

    /// Counts the event's score into its model's histogram. Returns the bin.
    pub fn accumulate(&mut self, event: &PredictionEvent) -> Result<usize> {
        if self.status == WindowStatus::Closed {
            return Err(Error::WindowClosed(self.window.index));
        }
        if !self.window.contains(event.timestamp) {
            return Err(Error::WrongWindow {
                window: self.window.index,
                timestamp_ms: event.timestamp.as_millis(),
            });
        }
        let bin = self
            .binning
            .bin_of(event.score)
            .ok_or(Error::ScoreOutOfDomain {
                index: 0,
                value: event.score,
            })?;
        let binning = self.binning;
        let hist = self
            .per_model
            .entry(event.model_id.clone())
            .or_insert_with(|| ScoreHistogram::new(binning));
        hist.record(event.score)?;
        Ok(bin)
    }

    /// Folds a partial accumulator for the same window into this one.
    /// Count addition commutes, so merged partials equal serial ingestion.
    pub fn merge(&mut self, other: &WindowAccumulator) -> Result<()> {
        if self.window.index != other.window.index {
            return Err(Error::WindowMismatch(self.window.index, other.window.index));
        }
        if self.status == WindowStatus::Closed || other.status == WindowStatus::Closed {
            return Err(Error::WindowClosed(self.window.index));
        }
        if self.binning != other.binning {
            return Err(Error::BinningMismatch);
        }
        for (model, hist) in &other.per_model {
            match self.per_model.get_mut(model) {
                Some(mine) => mine.merge(hist)?,
                None => {
                    self.per_model.insert(model.clone(), hist.clone());
                }
            }
        }
        Ok(())
    }

    /// Freezes the window and normalizes every model that reached
    /// `spec.min_samples`; the rest come back as insufficient.
    pub fn close(&mut self, spec: &WindowSpec) -> Result<BTreeMap<String, WindowOutcome>> {
        if self.status == WindowStatus::Closed {
            return Err(Error::WindowClosed(self.window.index));
        }
        self.status = WindowStatus::Closed;
        let mut out = BTreeMap::new();
        for (model, hist) in &self.per_model {
            let outcome = if hist.total() >= spec.min_samples {
                WindowOutcome::Ready(normalize(hist)?)
            } else {
                WindowOutcome::Insufficient {
                    samples: hist.total(),
                }
            };
            out.insert(model.clone(), outcome);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineMode {
    PreviousWindow,
    MovingAverage,
}

/// How a model's temporal baseline is formed from its closed windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub mode: BaselineMode,
    pub depth: usize,
}

impl BaselineSpec {
    pub const fn previous_window() -> Self {
        Self {
            mode: BaselineMode::PreviousWindow,
            depth: 1,
        }
    }

    pub fn moving_average(depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidConfig(
                "baseline depth must be at least 1".into(),
            ));
        }
        Ok(Self {
            mode: BaselineMode::MovingAverage,
            depth,
        })
    }

    /// Number of historical windows averaged.
    pub fn effective_depth(&self) -> usize {
        match self.mode {
            BaselineMode::PreviousWindow => 1,
            BaselineMode::MovingAverage => self.depth.max(1),
        }
    }
}

impl Default for BaselineSpec {
    fn default() -> Self {
        Self::previous_window()
    }
}

/// Per-bin mean of the last `min(k, history.len())` distributions.
pub fn moving_average(history: &[ScoreDistribution], k: usize) -> Result<ScoreDistribution> {
    if k == 0 {
        return Err(Error::InvalidConfig(
            "moving average depth must be at least 1".into(),
        ));
    }
    let last = history.last().ok_or(Error::NoBaseline)?;
    let binning = *last.binning();
    let recent = &history[history.len().saturating_sub(k)..];
    let mut sums = vec![0.0; binning.bin_count()];
    let mut samples = 0u64;
    for d in recent {
        if *d.binning() != binning {
            return Err(Error::BinningMismatch);
        }
        for (s, m) in sums.iter_mut().zip(d.mass()) {
            *s += m;
        }
        samples += d.sample_count();
    }
    let n = recent.len() as f64;
    let mass = sums.into_iter().map(|s| (s / n).min(1.0)).collect();
    ScoreDistribution::from_mass(binning, mass, samples)
}
