//! Predictive divergence, temporal stability, suspect attribution and alert
//! emission for one closed window.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::divergence::{
    js_divergence, kl_divergence, BinningSpec, DivergenceValue, ScoreDistribution,
};
use crate::error::{Error, Result};
use crate::event::{Span, Timestamp};
use crate::window::{
    moving_average, BaselineSpec, TimeWindow, WindowOutcome, WindowSpec, DEFAULT_MIN_SAMPLES,
};

pub const DEFAULT_PREDICTIVE_THRESHOLD: f64 = 0.20;
pub const DEFAULT_TEMPORAL_THRESHOLD: f64 = 0.10;

/// Everything one monitor instance (one class label) needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub main_model: String,
    pub support_models: Vec<String>,
    pub predictive_threshold: f64,
    pub temporal_threshold: f64,
    pub baseline: BaselineSpec,
    pub binning: BinningSpec,
    pub window: WindowSpec,
    /// Per-bin epsilon for the supplementary KL readings. `None` leaves KL
    /// unsmoothed, so disjoint supports report an infinite value.
    pub kl_smoothing: Option<f64>,
}

impl MonitorConfig {
    /// Config with default thresholds, a previous-window baseline, ten
    /// unit-interval bins and 30-day windows anchored at the Unix epoch.
    pub fn new(
        main_model: impl Into<String>,
        support_models: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        Self {
            main_model: main_model.into(),
            support_models: support_models.into_iter().map(Into::into).collect(),
            predictive_threshold: DEFAULT_PREDICTIVE_THRESHOLD,
            temporal_threshold: DEFAULT_TEMPORAL_THRESHOLD,
            baseline: BaselineSpec::default(),
            binning: BinningSpec::default(),
            window: WindowSpec {
                duration: Span::days(30),
                origin: Timestamp(0),
                min_samples: DEFAULT_MIN_SAMPLES,
            },
            kl_smoothing: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.support_models.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one support model is required".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for id in self.models() {
            if id.is_empty() {
                return Err(Error::InvalidConfig("model ids must be non-empty".into()));
            }
            if !seen.insert(id) {
                return Err(Error::InvalidConfig(format!("model id {id} listed twice")));
            }
        }
        for (name, t) in [
            ("predictive_threshold", self.predictive_threshold),
            ("temporal_threshold", self.temporal_threshold),
        ] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in (0, 1], got {t}"
                )));
            }
        }
        if self.baseline.depth == 0 {
            return Err(Error::InvalidConfig(
                "baseline depth must be at least 1".into(),
            ));
        }
        if let Some(eps) = self.kl_smoothing {
            if !(eps.is_finite() && eps >= 0.0) {
                return Err(Error::InvalidSmoothing(eps));
            }
        }
        // Re-run the binning constructor so deserialized specs are checked too.
        BinningSpec::new(
            self.binning.bin_count(),
            self.binning.domain_low(),
            self.binning.domain_high(),
        )?;
        self.window.validate()
    }

    /// Main model first, then supports in configured order.
    pub fn models(&self) -> impl Iterator<Item = &str> {
        core::iter::once(self.main_model.as_str())
            .chain(self.support_models.iter().map(String::as_str))
    }

    pub fn is_registered(&self, model_id: &str) -> bool {
        self.models().any(|m| m == model_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Predictive,
    Temporal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    Model(String),
    /// The model's own historical baseline.
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReading {
    pub metric: Metric,
    pub model_a: String,
    pub model_b: Operand,
    pub window: TimeWindow,
    /// Jensen-Shannon divergence in bits.
    pub value: DivergenceValue,
    /// Supplementary `KL(a ‖ b)` for predictive pairs.
    pub kl: Option<DivergenceValue>,
    /// The pair's value in its first evaluated window, for predictive
    /// readings produced by the ingestion engine.
    pub reference: Option<f64>,
}

impl DivergenceReading {
    pub fn bits(&self) -> f64 {
        self.value.bits()
    }

    /// Both model ids for a predictive reading.
    pub fn pair(&self) -> Option<(&str, &str)> {
        match &self.model_b {
            Operand::Model(b) => Some((self.model_a.as_str(), b.as_str())),
            Operand::Baseline => None,
        }
    }

    pub fn involves(&self, model: &str) -> bool {
        self.model_a == model || matches!(&self.model_b, Operand::Model(b) if b == model)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Suspect {
    Model(String),
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Warn,
    Critical,
}

impl Severity {
    /// Critical once the value reaches twice the threshold.
    pub fn classify(value: f64, threshold: f64) -> Self {
        if value >= 2.0 * threshold {
            Severity::Critical
        } else {
            Severity::Warn
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub window: TimeWindow,
    pub metric: Metric,
    /// Offending readings, each strictly above `threshold`.
    pub readings: Vec<DivergenceReading>,
    pub suspect: Suspect,
    pub threshold: f64,
    pub severity: Severity,
}

impl Alert {
    pub fn max_value(&self) -> f64 {
        self.readings
            .iter()
            .map(DivergenceReading::bits)
            .fold(0.0, f64::max)
    }
}

/// Why a model or pair contributed no reading in a window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoverageNote {
    Missing { model: String },
    Insufficient { model: String, samples: u64 },
    MainAbsent { model: String },
    SkippedPair { model_a: String, model_b: String },
    Bootstrap { model: String },
}

/// Everything produced when one window closes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEvaluation {
    pub window: TimeWindow,
    pub readings: Vec<DivergenceReading>,
    pub alerts: Vec<Alert>,
    pub coverage: Vec<CoverageNote>,
}

/// JS readings for every unordered pair of configured models present in
/// the window, main-model pairs first.
///
/// Pairs whose members are missing or below the sample floor are skipped and
/// reported in the returned coverage notes. A main model that never appeared
/// at all is an error.
pub fn predictive_divergence(
    outcomes: &BTreeMap<String, WindowOutcome>,
    window: &TimeWindow,
    config: &MonitorConfig,
) -> Result<(Vec<DivergenceReading>, Vec<CoverageNote>)> {
    if !outcomes.contains_key(&config.main_model) {
        return Err(Error::MainModelAbsent(config.main_model.clone()));
    }
    let models: Vec<&str> = config.models().collect();
    let mut coverage = Vec::new();
    for m in &models {
        match outcomes.get(*m) {
            None => coverage.push(CoverageNote::Missing { model: (*m).into() }),
            Some(WindowOutcome::Insufficient { samples }) => {
                coverage.push(CoverageNote::Insufficient {
                    model: (*m).into(),
                    samples: *samples,
                })
            }
            Some(WindowOutcome::Ready(_)) => {}
        }
    }
    let ready = |m: &str| outcomes.get(m).and_then(WindowOutcome::distribution);

    let mut readings = Vec::new();
    for (i, a) in models.iter().enumerate() {
        for b in &models[i + 1..] {
            let (Some(pa), Some(pb)) = (ready(a), ready(b)) else {
                coverage.push(CoverageNote::SkippedPair {
                    model_a: (*a).into(),
                    model_b: (*b).into(),
                });
                continue;
            };
            readings.push(DivergenceReading {
                metric: Metric::Predictive,
                model_a: (*a).into(),
                model_b: Operand::Model((*b).into()),
                window: window.clone(),
                value: js_divergence(pa, pb)?,
                kl: Some(kl_divergence(pa, pb, config.kl_smoothing)?),
                reference: None,
            });
        }
    }
    Ok((readings, coverage))
}

/// JS divergence between `current` and the moving-average baseline built
/// from `history`. An empty history means this window only seeds the
/// baseline.
pub fn temporal_stability(
    model: &str,
    current: &ScoreDistribution,
    history: &[ScoreDistribution],
    window: &TimeWindow,
    config: &MonitorConfig,
) -> Result<DivergenceReading> {
    if history.is_empty() {
        return Err(Error::BootstrapWindow(model.into()));
    }
    let baseline = moving_average(history, config.baseline.effective_depth())?;
    Ok(DivergenceReading {
        metric: Metric::Temporal,
        model_a: model.into(),
        model_b: Operand::Baseline,
        window: window.clone(),
        value: js_divergence(current, &baseline)?,
        kl: None,
        reference: None,
    })
}

/// Names the single model common to every pair above `threshold`.
///
/// A model qualifies when each exceeding pair contains it (so every pair
/// without it is at or below the threshold). Zero or several qualifying
/// models give [`Suspect::Inconclusive`]; temporal readings are ignored.
pub fn attribute_suspect(readings: &[DivergenceReading], threshold: f64) -> Result<Suspect> {
    let pairs: Vec<(&str, &str, f64)> = readings
        .iter()
        .filter(|r| r.metric == Metric::Predictive)
        .filter_map(|r| r.pair().map(|(a, b)| (a, b, r.bits())))
        .collect();
    if pairs.is_empty() {
        return Err(Error::NothingToAttribute);
    }
    let exceeding: Vec<_> = pairs.iter().filter(|p| p.2 > threshold).collect();
    let Some(first) = exceeding.first() else {
        return Ok(Suspect::Inconclusive);
    };
    let qualifying: Vec<&str> = [first.0, first.1]
        .into_iter()
        .filter(|m| exceeding.iter().all(|p| p.0 == *m || p.1 == *m))
        .collect();
    match qualifying.as_slice() {
        [m] => Ok(Suspect::Model((*m).into())),
        _ => Ok(Suspect::Inconclusive),
    }
}

/// Bundles every predictive reading above the threshold into one alert,
/// with the suspect chosen over all of the window's readings.
pub fn predictive_alert(
    readings: &[DivergenceReading],
    window: &TimeWindow,
    config: &MonitorConfig,
) -> Result<Option<Alert>> {
    let threshold = config.predictive_threshold;
    let offending: Vec<DivergenceReading> = readings
        .iter()
        .filter(|r| r.metric == Metric::Predictive && r.bits() > threshold)
        .cloned()
        .collect();
    if offending.is_empty() {
        return Ok(None);
    }
    let suspect = attribute_suspect(readings, threshold)?;
    let max = offending
        .iter()
        .map(DivergenceReading::bits)
        .fold(0.0, f64::max);
    Ok(Some(Alert {
        window: window.clone(),
        metric: Metric::Predictive,
        readings: offending,
        suspect,
        threshold,
        severity: Severity::classify(max, threshold),
    }))
}

/// Alert for a single temporal reading above the threshold; the model
/// itself is the suspect.
pub fn temporal_alert(reading: &DivergenceReading, config: &MonitorConfig) -> Option<Alert> {
    let threshold = config.temporal_threshold;
    if reading.metric != Metric::Temporal || reading.bits() <= threshold {
        return None;
    }
    Some(Alert {
        window: reading.window.clone(),
        metric: Metric::Temporal,
        severity: Severity::classify(reading.bits(), threshold),
        suspect: Suspect::Model(reading.model_a.clone()),
        threshold,
        readings: alloc::vec![reading.clone()],
    })
}

/// Computes every reading for a closed window and turns threshold crossings
/// into alerts: at most one predictive alert bundling all offending pairs,
/// and one temporal alert per offending model.
pub fn evaluate_window(
    window: &TimeWindow,
    outcomes: &BTreeMap<String, WindowOutcome>,
    histories: &BTreeMap<String, Vec<ScoreDistribution>>,
    config: &MonitorConfig,
) -> Result<WindowEvaluation> {
    let mut readings = Vec::new();
    let mut coverage = Vec::new();
    let mut alerts = Vec::new();

    match predictive_divergence(outcomes, window, config) {
        Ok((pr, notes)) => {
            readings.extend(pr);
            coverage.extend(notes);
        }
        Err(Error::MainModelAbsent(model)) => coverage.push(CoverageNote::MainAbsent { model }),
        Err(e) => return Err(e),
    }

    if let Some(alert) = predictive_alert(&readings, window, config)? {
        alerts.push(alert);
    }

    for model in config.models() {
        let Some(current) = outcomes.get(model).and_then(WindowOutcome::distribution) else {
            continue;
        };
        let history = histories.get(model).map(Vec::as_slice).unwrap_or(&[]);
        let reading = match temporal_stability(model, current, history, window, config) {
            Ok(r) => r,
            Err(Error::BootstrapWindow(model)) => {
                coverage.push(CoverageNote::Bootstrap { model });
                continue;
            }
            Err(e) => return Err(e),
        };
        alerts.extend(temporal_alert(&reading, config));
        readings.push(reading);
    }

    Ok(WindowEvaluation {
        window: window.clone(),
        readings,
        alerts,
        coverage,
    })
}
