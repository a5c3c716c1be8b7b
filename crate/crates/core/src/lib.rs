//! Ground-truth-free monitoring core for deployed classification models.
//!
//! Prediction scores from a main model and one or more support models are
//! binned per time window into discrete distributions. Two families of
//! Jensen-Shannon readings are derived from them:
//!
//! - **predictive divergence**: every model pair over the same window, a
//!   surrogate for the main model's accuracy;
//! - **temporal stability**: each model's current window against a moving
//!   average of its own closed windows, a surrogate for consistency.
//!
//! Readings that cross the configured tolerances become [`monitor::Alert`]s.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the CLI and the
//! HTTP service live in the `divmon` companion crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod divergence;
pub mod engine;
pub mod error;
pub mod event;
pub mod monitor;
pub mod window;

pub use divergence::{
    bin_scores, js_divergence, kl_divergence, normalize, BinningSpec, DivergenceKind,
    DivergenceValue, Magnitude, ScoreDistribution, ScoreHistogram,
};
pub use engine::{
    ClassEvaluation, ClassMonitor, Diagnostics, IngestOutcome, IngestReport, MonitorState,
};
pub use error::{Error, Result};
pub use event::{PredictionEvent, Span, Timestamp};
pub use monitor::{
    attribute_suspect, evaluate_window, predictive_alert, predictive_divergence, temporal_alert,
    temporal_stability, Alert, CoverageNote, DivergenceReading, Metric, MonitorConfig, Operand,
    Severity, Suspect, WindowEvaluation,
};
pub use window::{
    assign_window, moving_average, BaselineMode, BaselineSpec, TimeWindow, WindowAccumulator,
    WindowOutcome, WindowSpec, WindowStatus,
};
