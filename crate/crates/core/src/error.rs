use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid binning: {0}")]
    InvalidBinning(&'static str),
    #[error("score {value} at index {index} is outside the binning domain")]
    ScoreOutOfDomain { index: usize, value: f64 },
    #[error("empty window: cannot normalize a histogram with zero samples")]
    EmptyWindow,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(&'static str),
    #[error("operands use different binning")]
    BinningMismatch,
    #[error("smoothing epsilon must be finite and non-negative, got {0}")]
    InvalidSmoothing(f64),
    #[error("pre-epoch event at {timestamp_ms} ms (origin {origin_ms} ms)")]
    PreEpoch { timestamp_ms: i64, origin_ms: i64 },
    #[error("timestamp outside representable window range")]
    TimestampOverflow,
    #[error("window {0} is closed")]
    WindowClosed(u64),
    #[error("event at {timestamp_ms} ms does not belong to window {window}")]
    WrongWindow { window: u64, timestamp_ms: i64 },
    #[error("partial accumulators cover different windows ({0} vs {1})")]
    WindowMismatch(u64, u64),
    #[error("no baseline: history is empty")]
    NoBaseline,
    #[error("bootstrap window: no history for model {0}")]
    BootstrapWindow(String),
    #[error("main model {0} absent from window")]
    MainModelAbsent(String),
    #[error("nothing to attribute: no readings")]
    NothingToAttribute,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
