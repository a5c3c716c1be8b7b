//! Ordered ingestion state machine: routes events to per-class windows,
//! rolls windows over, and evaluates each window as it closes.
//!
//! The whole state is plain data and serializes with serde, which is what
//! snapshot files are built from.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::divergence::ScoreDistribution;
use crate::error::Result;
use crate::event::PredictionEvent;
use crate::monitor::{evaluate_window, DivergenceReading, Metric, MonitorConfig, WindowEvaluation};
use crate::window::{WindowAccumulator, WindowOutcome};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub accepted: u64,
    pub duplicate: u64,
    pub late: u64,
    pub unregistered: u64,
    pub pre_epoch: u64,
    pub out_of_range: u64,
    pub windows_closed: u64,
}

impl Diagnostics {
    /// Events dropped for reasons other than duplication or lateness.
    pub fn rejected(&self) -> u64 {
        self.unregistered + self.pre_epoch + self.out_of_range
    }

    pub fn total(&self) -> u64 {
        self.accepted + self.duplicate + self.late + self.rejected()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IngestOutcome {
    Accepted,
    Duplicate,
    /// Timestamp falls in a window that has already closed.
    Late,
    Unregistered,
    PreEpoch,
    OutOfRange,
}

/// A window evaluation tagged with the class label it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEvaluation {
    pub class_label: String,
    pub evaluation: WindowEvaluation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub outcome: IngestOutcome,
    /// Windows closed by this event's rollover, evaluated before the event
    /// was applied.
    pub evaluations: Vec<ClassEvaluation>,
}

/// Monitor for a single class label.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMonitor {
    open: Option<WindowAccumulator>,
    last_closed: Option<u64>,
    histories: BTreeMap<String, Vec<ScoreDistribution>>,
    /// First-seen predictive value per model pair.
    references: BTreeMap<String, BTreeMap<String, f64>>,
}

impl ClassMonitor {
    pub fn open_window(&self) -> Option<&WindowAccumulator> {
        self.open.as_ref()
    }

    pub fn last_closed(&self) -> Option<u64> {
        self.last_closed
    }

    pub fn histories(&self) -> &BTreeMap<String, Vec<ScoreDistribution>> {
        &self.histories
    }

    fn is_late(&self, index: u64) -> bool {
        match (&self.open, self.last_closed) {
            (Some(acc), _) => index < acc.window().index,
            (None, Some(last)) => index <= last,
            (None, None) => false,
        }
    }

    fn close_open(&mut self, config: &MonitorConfig) -> Result<Option<WindowEvaluation>> {
        let Some(mut acc) = self.open.take() else {
            return Ok(None);
        };
        let outcomes = acc.close(&config.window)?;
        let mut ev = evaluate_window(acc.window(), &outcomes, &self.histories, config)?;

        for r in ev.readings.iter_mut() {
            self.attach_reference(r);
        }
        for alert in ev.alerts.iter_mut() {
            for r in alert.readings.iter_mut() {
                self.attach_reference(r);
            }
        }

        let depth = config.baseline.effective_depth();
        for (model, outcome) in outcomes {
            if let WindowOutcome::Ready(d) = outcome {
                let h = self.histories.entry(model).or_default();
                h.push(d);
                if h.len() > depth {
                    h.drain(..h.len() - depth);
                }
            }
        }
        self.last_closed = Some(acc.window().index);
        Ok(Some(ev))
    }

    fn attach_reference(&mut self, r: &mut DivergenceReading) {
        if r.metric != Metric::Predictive {
            return;
        }
        let Some((a, b)) = r.pair() else { return };
        let (a, b) = (String::from(a), String::from(b));
        let value = r.bits();
        let reference = *self
            .references
            .entry(a)
            .or_default()
            .entry(b)
            .or_insert(value);
        r.reference = Some(reference);
    }
}

/// Full ingestion state for one configuration; one [`ClassMonitor`] per
/// class label, created on first sight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorState {
    config: MonitorConfig,
    classes: BTreeMap<String, ClassMonitor>,
    seen: BTreeSet<(String, String, String)>,
    diagnostics: Diagnostics,
}

impl MonitorState {
    pub fn new(config: MonitorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            classes: BTreeMap::new(),
            seen: BTreeSet::new(),
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn classes(&self) -> &BTreeMap<String, ClassMonitor> {
        &self.classes
    }

    /// Applies one event. A timestamp past the open window first closes and
    /// evaluates that window.
    pub fn ingest(&mut self, event: &PredictionEvent) -> Result<IngestReport> {
        let outcome = self.classify(event);
        let mut evaluations = Vec::new();
        let Ok(index) = outcome else {
            let outcome = outcome.unwrap_err();
            self.count(outcome);
            return Ok(IngestReport {
                outcome,
                evaluations,
            });
        };

        let class = self.classes.entry(event.class_label.clone()).or_default();
        if class
            .open
            .as_ref()
            .is_some_and(|acc| index > acc.window().index)
        {
            if let Some(evaluation) = class.close_open(&self.config)? {
                self.diagnostics.windows_closed += 1;
                evaluations.push(ClassEvaluation {
                    class_label: event.class_label.clone(),
                    evaluation,
                });
            }
        }
        if class.open.is_none() {
            let window = self.config.window.window(index)?;
            class.open = Some(WindowAccumulator::new(window, self.config.binning));
        }
        if let Some(acc) = class.open.as_mut() {
            acc.accumulate(event)?;
        }
        self.seen.insert(key(event));
        self.diagnostics.accepted += 1;
        Ok(IngestReport {
            outcome: IngestOutcome::Accepted,
            evaluations,
        })
    }

    /// Closes and evaluates every open window, e.g. at the end of a replay.
    pub fn finish(&mut self) -> Result<Vec<ClassEvaluation>> {
        let mut out = Vec::new();
        for (label, class) in self.classes.iter_mut() {
            if let Some(evaluation) = class.close_open(&self.config)? {
                self.diagnostics.windows_closed += 1;
                out.push(ClassEvaluation {
                    class_label: label.clone(),
                    evaluation,
                });
            }
        }
        Ok(out)
    }

    // Ok(window index) when the event should be accepted.
    fn classify(&self, event: &PredictionEvent) -> core::result::Result<u64, IngestOutcome> {
        if !self.config.is_registered(&event.model_id) {
            return Err(IngestOutcome::Unregistered);
        }
        if !self.config.binning.contains(event.score) {
            return Err(IngestOutcome::OutOfRange);
        }
        let index = self
            .config
            .window
            .index_of(event.timestamp)
            .map_err(|_| IngestOutcome::PreEpoch)?;
        if self.seen.contains(&key(event)) {
            return Err(IngestOutcome::Duplicate);
        }
        if self
            .classes
            .get(&event.class_label)
            .is_some_and(|c| c.is_late(index))
        {
            return Err(IngestOutcome::Late);
        }
        Ok(index)
    }

    fn count(&mut self, outcome: IngestOutcome) {
        let d = &mut self.diagnostics;
        match outcome {
            IngestOutcome::Accepted => d.accepted += 1,
            IngestOutcome::Duplicate => d.duplicate += 1,
            IngestOutcome::Late => d.late += 1,
            IngestOutcome::Unregistered => d.unregistered += 1,
            IngestOutcome::PreEpoch => d.pre_epoch += 1,
            IngestOutcome::OutOfRange => d.out_of_range += 1,
        }
    }
}

fn key(e: &PredictionEvent) -> (String, String, String) {
    (
        e.study_id.clone(),
        e.model_id.clone(),
        e.class_label.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Span, Timestamp};
    use crate::monitor::Operand;
    use alloc::format;
    use alloc::string::ToString;

    fn config() -> MonitorConfig {
        let mut c = MonitorConfig::new("AI1", ["AI2"]);
        c.window.duration = Span::DAY;
        c.window.min_samples = 1;
        c
    }

    fn ev(study: &str, model: &str, t: i64, score: f64) -> PredictionEvent {
        PredictionEvent {
            study_id: study.to_string(),
            timestamp: Timestamp(t),
            model_id: model.to_string(),
            class_label: "consolidation".to_string(),
            score,
        }
    }

    #[test]
    fn rollover_closes_previous_window_first() {
        let mut s = MonitorState::new(config()).unwrap();
        let day = Span::DAY.as_millis();
        for i in 0..4 {
            let r = s.ingest(&ev(&format!("a{i}"), "AI1", i, 0.25)).unwrap();
            assert!(r.evaluations.is_empty());
            s.ingest(&ev(&format!("a{i}"), "AI2", i, 0.35)).unwrap();
        }
        let r = s.ingest(&ev("b0", "AI1", day, 0.25)).unwrap();
        assert_eq!(r.outcome, IngestOutcome::Accepted);
        assert_eq!(r.evaluations.len(), 1);
        let e = &r.evaluations[0].evaluation;
        assert_eq!(e.window.index, 0);
        assert_eq!(e.readings.len(), 1);
        assert_eq!(e.readings[0].reference, Some(e.readings[0].bits()));
        let class = &s.classes()["consolidation"];
        assert_eq!(class.open_window().unwrap().window().index, 1);
        assert_eq!(
            class
                .open_window()
                .unwrap()
                .histogram("AI1")
                .unwrap()
                .total(),
            1
        );
        assert_eq!(class.last_closed(), Some(0));
    }

    #[test]
    fn duplicates_late_and_unregistered_are_counted() {
        let mut s = MonitorState::new(config()).unwrap();
        let day = Span::DAY.as_millis();
        s.ingest(&ev("a", "AI1", 0, 0.5)).unwrap();
        assert_eq!(
            s.ingest(&ev("a", "AI1", 5, 0.9)).unwrap().outcome,
            IngestOutcome::Duplicate
        );
        assert_eq!(
            s.ingest(&ev("x", "AI7", 5, 0.9)).unwrap().outcome,
            IngestOutcome::Unregistered
        );
        assert_eq!(
            s.ingest(&ev("y", "AI1", -1, 0.9)).unwrap().outcome,
            IngestOutcome::PreEpoch
        );
        assert_eq!(
            s.ingest(&ev("z", "AI1", 1, 1.9)).unwrap().outcome,
            IngestOutcome::OutOfRange
        );
        s.ingest(&ev("b", "AI1", day, 0.5)).unwrap();
        assert_eq!(
            s.ingest(&ev("c", "AI1", 10, 0.5)).unwrap().outcome,
            IngestOutcome::Late
        );
        let d = s.diagnostics();
        assert_eq!(
            (d.accepted, d.duplicate, d.late, d.rejected()),
            (2, 1, 1, 3)
        );
        assert_eq!(d.total(), 7);
        s.finish().unwrap();
        assert_eq!(
            s.ingest(&ev("d", "AI1", day + 1, 0.5)).unwrap().outcome,
            IngestOutcome::Late
        );
    }

    #[test]
    fn temporal_readings_follow_bootstrap() {
        let mut s = MonitorState::new(config()).unwrap();
        let day = Span::DAY.as_millis();
        s.ingest(&ev("a", "AI1", 0, 0.1)).unwrap();
        s.ingest(&ev("a", "AI2", 0, 0.1)).unwrap();
        s.ingest(&ev("b", "AI1", day, 0.9)).unwrap();
        s.ingest(&ev("b", "AI2", day, 0.1)).unwrap();
        let evs = s.finish().unwrap();
        let e = &evs[0].evaluation;
        let temporal: Vec<_> = e
            .readings
            .iter()
            .filter(|r| r.model_b == Operand::Baseline)
            .collect();
        assert_eq!(temporal.len(), 2);
        assert_eq!(temporal[0].bits(), 1.0);
        assert_eq!(temporal[1].bits(), 0.0);
        assert_eq!(e.alerts.len(), 2);
    }

    #[test]
    fn class_labels_are_independent() {
        let mut s = MonitorState::new(config()).unwrap();
        let day = Span::DAY.as_millis();
        s.ingest(&ev("a", "AI1", 0, 0.1)).unwrap();
        let mut other = ev("a", "AI1", 3 * day, 0.1);
        other.class_label = "effusion".to_string();
        let r = s.ingest(&other).unwrap();
        assert!(r.evaluations.is_empty());
        assert_eq!(s.classes().len(), 2);
        assert_eq!(s.finish().unwrap().len(), 2);
    }
}
