//! Report emission: machine-readable readings and alerts, plot-ready long
//! CSVs, and a markdown summary with the two divergence tables.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use divmon_core::{
    Alert, ClassEvaluation, CoverageNote, Diagnostics, DivergenceReading, DivergenceValue, Metric,
    Operand, Severity, Suspect,
};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::events::{format_timestamp, RowError};

pub const READINGS_FILE: &str = "readings.json";
pub const ALERTS_FILE: &str = "alerts.jsonl";
pub const REPORT_FILE: &str = "report.md";
pub const PREDICTIVE_FILE: &str = "predictive.csv";
pub const TEMPORAL_FILE: &str = "temporal.csv";

fn fixed6(v: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{v:.6}")).expect("decimal literal")
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::Predictive => "predictive",
        Metric::Temporal => "temporal",
    }
}

fn kl_value(v: &DivergenceValue) -> Box<RawValue> {
    if v.is_infinite() {
        RawValue::from_string("\"inf\"".into()).expect("string literal")
    } else {
        fixed6(v.bits())
    }
}

/// Series key for a reading: `A-B` for pairs, the model id for temporal
/// readings, prefixed with `label/` when several class labels are present.
pub fn series_name(class_label: &str, reading: &DivergenceReading, multi_label: bool) -> String {
    let base = match &reading.model_b {
        Operand::Model(b) => format!("{}-{}", reading.model_a, b),
        Operand::Baseline => reading.model_a.clone(),
    };
    if multi_label {
        format!("{class_label}/{base}")
    } else {
        base
    }
}

#[derive(Serialize)]
struct ReadingRecord<'a> {
    class_label: &'a str,
    window_label: &'a str,
    window_index: u64,
    window_start: String,
    window_end: String,
    metric: &'static str,
    model_a: &'a str,
    model_b: &'a str,
    value: Box<RawValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<Box<RawValue>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<Box<RawValue>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kl: Option<Box<RawValue>>,
}

fn reading_record<'a>(class_label: &'a str, r: &'a DivergenceReading) -> ReadingRecord<'a> {
    ReadingRecord {
        class_label,
        window_label: &r.window.label,
        window_index: r.window.index,
        window_start: format_timestamp(r.window.start),
        window_end: format_timestamp(r.window.end),
        metric: metric_name(r.metric),
        model_a: &r.model_a,
        model_b: match &r.model_b {
            Operand::Model(b) => b,
            Operand::Baseline => "baseline",
        },
        value: fixed6(r.bits()),
        reference: r.reference.map(fixed6),
        delta: r.reference.map(|base| fixed6(r.bits() - base)),
        kl: r.kl.as_ref().map(kl_value),
    }
}

#[derive(Serialize)]
struct AlertReading {
    series: String,
    value: Box<RawValue>,
}

#[derive(Serialize)]
struct AlertRecord<'a> {
    window_label: &'a str,
    class_label: &'a str,
    metric: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pairs: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    value: Box<RawValue>,
    readings: Vec<AlertReading>,
    threshold: Box<RawValue>,
    suspect: &'a str,
    severity: &'static str,
    timestamp: String,
}

/// One alert as a single JSON line. The timestamp is the end of the window
/// that produced it, so replays stay deterministic.
pub fn alert_json_line(class_label: &str, alert: &Alert) -> String {
    let record = AlertRecord {
        window_label: &alert.window.label,
        class_label,
        metric: metric_name(alert.metric),
        pairs: (alert.metric == Metric::Predictive).then(|| {
            alert
                .readings
                .iter()
                .map(|r| series_name(class_label, r, false))
                .collect()
        }),
        model: (alert.metric == Metric::Temporal).then(|| alert.readings[0].model_a.as_str()),
        value: fixed6(alert.max_value()),
        readings: alert
            .readings
            .iter()
            .map(|r| AlertReading {
                series: series_name(class_label, r, false),
                value: fixed6(r.bits()),
            })
            .collect(),
        threshold: fixed6(alert.threshold),
        suspect: match &alert.suspect {
            Suspect::Model(m) => m,
            Suspect::Inconclusive => "inconclusive",
        },
        severity: match alert.severity {
            Severity::Warn => "warn",
            Severity::Critical => "critical",
        },
        timestamp: format_timestamp(alert.window.end),
    };
    serde_json::to_string(&record).expect("alert serializes")
}

/// One row of the plot-ready long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub window: String,
    pub series: String,
    pub value: f64,
}

pub fn read_long_csv<R: Read>(input: R) -> Result<Vec<LongRow>> {
    let mut reader = csv::Reader::from_reader(input);
    reader
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Everything a replay produced, ready to render.
#[derive(Debug, Clone, Default)]
pub struct ReportBundle {
    pub evaluations: Vec<ClassEvaluation>,
    pub diagnostics: Diagnostics,
    pub row_errors: Vec<RowError>,
}

impl ReportBundle {
    fn multi_label(&self) -> bool {
        let mut labels = self.evaluations.iter().map(|e| e.class_label.as_str());
        let first = labels.next();
        labels.any(|l| Some(l) != first)
    }

    fn class_labels(&self) -> Vec<&str> {
        let mut labels: Vec<&str> = Vec::new();
        for e in &self.evaluations {
            if !labels.contains(&e.class_label.as_str()) {
                labels.push(&e.class_label);
            }
        }
        labels
    }

    pub fn alerts(&self) -> impl Iterator<Item = (&str, &Alert)> {
        self.evaluations.iter().flat_map(|e| {
            e.evaluation
                .alerts
                .iter()
                .map(move |a| (e.class_label.as_str(), a))
        })
    }

    pub fn has_critical(&self) -> bool {
        self.alerts().any(|(_, a)| a.severity == Severity::Critical)
    }

    pub fn window_count(&self) -> usize {
        self.evaluations.len()
    }

    pub fn readings_json(&self) -> String {
        let records: Vec<ReadingRecord> = self
            .evaluations
            .iter()
            .flat_map(|e| {
                e.evaluation
                    .readings
                    .iter()
                    .map(move |r| reading_record(&e.class_label, r))
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&records).expect("readings serialize");
        text.push('\n');
        text
    }

    pub fn alerts_jsonl(&self) -> String {
        self.alerts()
            .map(|(label, a)| alert_json_line(label, a) + "\n")
            .collect()
    }

    pub fn long_rows(&self, metric: Metric) -> Vec<LongRow> {
        let multi = self.multi_label();
        self.evaluations
            .iter()
            .flat_map(|e| {
                e.evaluation
                    .readings
                    .iter()
                    .filter(move |r| r.metric == metric)
                    .map(move |r| LongRow {
                        window: r.window.label.clone(),
                        series: series_name(&e.class_label, r, multi),
                        value: r.bits(),
                    })
            })
            .collect()
    }

    pub fn long_csv(&self, metric: Metric) -> String {
        let mut out = String::from("window,series,value\n");
        for row in self.long_rows(metric) {
            let _ = writeln!(out, "{},{},{:.6}", row.window, row.series, row.value);
        }
        out
    }

    pub fn markdown(&self) -> String {
        let mut md = String::from("# Divergence monitoring report\n\n");
        let d = &self.diagnostics;
        let _ = writeln!(
            md,
            "Events: {} accepted, {} duplicate, {} late, {} unregistered model, {} pre-epoch, {} out of range, {} unparsable rows.\n",
            d.accepted,
            d.duplicate,
            d.late,
            d.unregistered,
            d.pre_epoch,
            d.out_of_range,
            self.row_errors.len()
        );
        if self.evaluations.is_empty() {
            md.push_str("No windows were closed.\n");
        }
        for label in self.class_labels() {
            let evals: Vec<&ClassEvaluation> = self
                .evaluations
                .iter()
                .filter(|e| e.class_label == label)
                .collect();
            let _ = writeln!(md, "## Class `{label}`\n");
            predictive_tables(&mut md, &evals);
            temporal_table(&mut md, &evals);
            alerts_section(&mut md, &evals);
            coverage_section(&mut md, &evals);
        }
        md
    }

    pub fn write_all(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let files = [
            (READINGS_FILE, self.readings_json()),
            (ALERTS_FILE, self.alerts_jsonl()),
            (REPORT_FILE, self.markdown()),
            (PREDICTIVE_FILE, self.long_csv(Metric::Predictive)),
            (TEMPORAL_FILE, self.long_csv(Metric::Temporal)),
        ];
        for (name, body) in files {
            let path = out_dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn ordered_series(evals: &[&ClassEvaluation], metric: Metric) -> Vec<String> {
    let mut series: Vec<String> = Vec::new();
    for e in evals {
        for r in e.evaluation.readings.iter().filter(|r| r.metric == metric) {
            let name = series_name("", r, false);
            if !series.contains(&name) {
                series.push(name);
            }
        }
    }
    series
}

fn cell(value: Option<f64>) -> String {
    value.map_or_else(|| "–".to_string(), |v| format!("{v:.3}"))
}

fn predictive_tables(md: &mut String, evals: &[&ClassEvaluation]) {
    let pairs = ordered_series(evals, Metric::Predictive);
    if pairs.is_empty() {
        md.push_str("No predictive readings.\n\n");
        return;
    }
    let header = |md: &mut String| {
        let _ = writeln!(md, "| Window | Start | {} |", pairs.join(" | "));
        let _ = writeln!(md, "|---|---|{}", "---|".repeat(pairs.len()));
    };
    md.push_str("### Predictive divergence (JS, bits)\n\n");
    header(md);
    for e in evals {
        let values = pairs
            .iter()
            .map(|p| cell(lookup(e, Metric::Predictive, p).map(|r| r.bits())));
        row(md, e, values);
    }
    md.push_str("\n### Change from each pair's reference window\n\n");
    header(md);
    for e in evals {
        let values = pairs.iter().map(|p| {
            lookup(e, Metric::Predictive, p)
                .and_then(|r| r.reference.map(|base| r.bits() - base))
                .map_or_else(|| "–".to_string(), |d| format!("{d:+.3}"))
        });
        row(md, e, values);
    }
    md.push('\n');
}

fn temporal_table(md: &mut String, evals: &[&ClassEvaluation]) {
    let models = ordered_series(evals, Metric::Temporal);
    let windows: Vec<&&ClassEvaluation> = evals
        .iter()
        .filter(|e| {
            e.evaluation
                .readings
                .iter()
                .any(|r| r.metric == Metric::Temporal)
        })
        .collect();
    if models.is_empty() {
        md.push_str("No temporal readings yet: every model is still in its bootstrap window.\n\n");
        return;
    }
    md.push_str("### Temporal stability (JS against baseline, bits)\n\n");
    let labels: Vec<&str> = windows
        .iter()
        .map(|e| e.evaluation.window.label.as_str())
        .collect();
    let _ = writeln!(md, "| Model | {} |", labels.join(" | "));
    let _ = writeln!(md, "|---|{}", "---|".repeat(labels.len()));
    for m in &models {
        let cells: Vec<String> = windows
            .iter()
            .map(|e| cell(lookup(e, Metric::Temporal, m).map(|r| r.bits())))
            .collect();
        let _ = writeln!(md, "| {m} | {} |", cells.join(" | "));
    }
    md.push('\n');
}

fn alerts_section(md: &mut String, evals: &[&ClassEvaluation]) {
    md.push_str("### Alerts\n\n");
    let mut any = false;
    for e in evals {
        for a in &e.evaluation.alerts {
            any = true;
            let what: Vec<String> = a
                .readings
                .iter()
                .map(|r| format!("{} {:.3}", series_name("", r, false), r.bits()))
                .collect();
            let suspect = match &a.suspect {
                Suspect::Model(m) => m.as_str(),
                Suspect::Inconclusive => "inconclusive",
            };
            let _ = writeln!(
                md,
                "- {} {} {:?}: {} (threshold {:.3}, suspect {})",
                a.window.label,
                metric_name(a.metric),
                a.severity,
                what.join(", "),
                a.threshold,
                suspect
            );
        }
    }
    if !any {
        md.push_str("None.\n");
    }
    md.push('\n');
}

fn coverage_section(md: &mut String, evals: &[&ClassEvaluation]) {
    let mut lines = Vec::new();
    for e in evals {
        for note in &e.evaluation.coverage {
            let text = match note {
                CoverageNote::Missing { model } => format!("{model} absent"),
                CoverageNote::Insufficient { model, samples } => {
                    format!("{model} insufficient ({samples} samples)")
                }
                CoverageNote::MainAbsent { model } => format!("main model {model} absent"),
                CoverageNote::SkippedPair { model_a, model_b } => {
                    format!("pair {model_a}-{model_b} skipped")
                }
                CoverageNote::Bootstrap { model } => format!("{model} bootstrap (no history)"),
            };
            lines.push(format!("- {}: {text}", e.evaluation.window.label));
        }
    }
    if !lines.is_empty() {
        md.push_str("### Coverage\n\n");
        md.push_str(&lines.join("\n"));
        md.push_str("\n\n");
    }
}

fn lookup<'a>(
    e: &'a ClassEvaluation,
    metric: Metric,
    series: &str,
) -> Option<&'a DivergenceReading> {
    e.evaluation
        .readings
        .iter()
        .find(|r| r.metric == metric && series_name("", r, false) == series)
}

fn row(md: &mut String, e: &ClassEvaluation, values: impl Iterator<Item = String>) {
    let w = &e.evaluation.window;
    let start = format_timestamp(w.start);
    let date = start.get(..10).unwrap_or(&start);
    let values: Vec<String> = values.collect();
    let _ = writeln!(md, "| {} | {} | {} |", w.label, date, values.join(" | "));
}

#[cfg(test)]
mod tests {
    use super::*;
    use divmon_core::{MonitorConfig, MonitorState, PredictionEvent, Timestamp};

    fn bundle() -> ReportBundle {
        let mut config = MonitorConfig::new("AI1", ["AI2"]);
        config.window.min_samples = 1;
        let mut state = MonitorState::new(config.clone()).unwrap();
        let day = config.window.duration.as_millis();
        let mut evaluations = Vec::new();
        for (i, (t, a, b)) in [(0, 0.1, 0.15), (1, 0.12, 0.18), (day, 0.9, 0.2)]
            .into_iter()
            .enumerate()
        {
            for (model, score) in [("AI1", a), ("AI2", b)] {
                let r = state
                    .ingest(&PredictionEvent {
                        study_id: i.to_string(),
                        timestamp: Timestamp(t),
                        model_id: model.into(),
                        class_label: "consolidation".into(),
                        score,
                    })
                    .unwrap();
                evaluations.extend(r.evaluations);
            }
        }
        evaluations.extend(state.finish().unwrap());
        ReportBundle {
            evaluations,
            diagnostics: *state.diagnostics(),
            row_errors: Vec::new(),
        }
    }

    #[test]
    fn long_csv_round_trips_readings() {
        let b = bundle();
        let text = b.long_csv(Metric::Predictive);
        assert!(text.starts_with("window,series,value\nW0,AI1-AI2,"));
        let rows = read_long_csv(text.as_bytes()).unwrap();
        let readings: Vec<&DivergenceReading> = b
            .evaluations
            .iter()
            .flat_map(|e| &e.evaluation.readings)
            .filter(|r| r.metric == Metric::Predictive)
            .collect();
        assert_eq!(rows.len(), readings.len());
        for (row, r) in rows.iter().zip(readings) {
            assert_eq!(row.window, r.window.label);
            assert!((row.value - r.bits()).abs() <= 5e-7);
        }
    }

    #[test]
    fn alert_lines_carry_required_fields() {
        let b = bundle();
        let lines: Vec<serde_json::Value> = b
            .alerts_jsonl()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert!(!lines.is_empty());
        for l in &lines {
            for key in [
                "window_label",
                "metric",
                "value",
                "threshold",
                "suspect",
                "severity",
                "timestamp",
            ] {
                assert!(l.get(key).is_some(), "{key} missing in {l}");
            }
            assert!(l.get("pairs").is_some() || l.get("model").is_some());
        }
    }

    #[test]
    fn markdown_uses_three_decimals() {
        let md = bundle().markdown();
        assert!(md.contains("### Predictive divergence"));
        assert!(md.contains("### Temporal stability"));
        assert!(md.contains("| W0 | 1970-01-01 |"));
    }

    #[test]
    fn readings_json_values_have_six_decimals() {
        let json = bundle().readings_json();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(parsed.as_array().unwrap().len() >= 3);
        assert!(json.contains("\"value\": 0."));
        let re_ok = json
            .lines()
            .filter(|l| l.trim_start().starts_with("\"value\""))
            .all(|l| {
                l.trim()
                    .trim_end_matches(',')
                    .rsplit('.')
                    .next()
                    .unwrap()
                    .len()
                    == 6
            });
        assert!(re_ok);
    }
}
