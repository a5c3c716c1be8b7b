use alloc::string::String;

use serde::{Deserialize, Serialize};

/// UTC instant as milliseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const fn from_millis(ms: i64) -> Self {
        Self(ms)
    }

    pub const fn as_millis(self) -> i64 {
        self.0
    }
}

/// Positive length of time in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span(pub i64);

impl Span {
    pub const MINUTE: Span = Span(60_000);
    pub const HOUR: Span = Span(3_600_000);
    pub const DAY: Span = Span(86_400_000);

    pub const fn from_millis(ms: i64) -> Self {
        Self(ms)
    }

    pub const fn days(n: i64) -> Self {
        Self(n * 86_400_000)
    }

    pub const fn as_millis(self) -> i64 {
        self.0
    }
}

/// One model's score for one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEvent {
    pub study_id: String,
    pub timestamp: Timestamp,
    pub model_id: String,
    pub class_label: String,
    pub score: f64,
}
