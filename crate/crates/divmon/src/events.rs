//! The canonical event record, shared by the CSV replay format and the HTTP
//! endpoint.

use std::io::{Read, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use divmon_core::{PredictionEvent, Timestamp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 5] = ["study_id", "timestamp", "model_id", "class_label", "score"];

/// Default number of bad rows tolerated before a CSV replay aborts.
pub const DEFAULT_ERROR_BUDGET: usize = 100;

/// One event as it appears on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub study_id: String,
    pub timestamp: String,
    pub model_id: String,
    pub class_label: String,
    pub score: f64,
}

impl EventRecord {
    pub fn into_event(self) -> std::result::Result<PredictionEvent, String> {
        if self.study_id.is_empty() {
            return Err("empty study_id".into());
        }
        if self.model_id.is_empty() {
            return Err("empty model_id".into());
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score out of range: {}", self.score));
        }
        Ok(PredictionEvent {
            timestamp: parse_timestamp(&self.timestamp)?,
            study_id: self.study_id,
            model_id: self.model_id,
            class_label: self.class_label,
            score: self.score,
        })
    }
}

/// RFC 3339 / ISO-8601 instant to UTC milliseconds.
pub fn parse_timestamp(text: &str) -> std::result::Result<Timestamp, String> {
    DateTime::parse_from_rfc3339(text.trim())
        .map(|t| Timestamp(t.with_timezone(&Utc).timestamp_millis()))
        .map_err(|e| format!("unparsable timestamp {text:?}: {e}"))
}

pub fn format_timestamp(t: Timestamp) -> String {
    match DateTime::<Utc>::from_timestamp_millis(t.as_millis()) {
        Some(dt) if t.as_millis() % 1000 == 0 => dt.to_rfc3339_opts(SecondsFormat::Secs, true),
        Some(dt) => dt.to_rfc3339_opts(SecondsFormat::Millis, true),
        None => t.as_millis().to_string(),
    }
}

/// A rejected input record. `row` is the 1-based line number for CSV input
/// (the header is line 1) and the 0-based array index for JSON batches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub row: u64,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ParsedEvents {
    pub events: Vec<PredictionEvent>,
    pub errors: Vec<RowError>,
}

impl ParsedEvents {
    pub fn rows(&self) -> usize {
        self.events.len() + self.errors.len()
    }
}

/// Parses the canonical CSV. Bad rows are collected with their line
/// numbers; more than `error_budget` of them aborts the parse.
pub fn parse_event_csv<R: Read>(input: R, error_budget: usize) -> Result<ParsedEvents> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::MissingHeader);
    }
    for col in COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn(col));
        }
    }
    if let Some(extra) = headers.iter().find(|h| !COLUMNS.contains(h)) {
        return Err(Error::UnexpectedColumn(extra.to_string()));
    }

    let mut out = ParsedEvents::default();
    for result in reader.records() {
        let parsed = match result {
            Ok(record) => {
                let row = record.position().map_or(0, |p| p.line());
                let outcome = record
                    .deserialize::<EventRecord>(Some(&headers))
                    .map_err(|e| describe_csv_error(&e))
                    .and_then(EventRecord::into_event);
                (row, outcome)
            }
            Err(e) => (
                e.position().map_or(0, |p| p.line()),
                Err(describe_csv_error(&e)),
            ),
        };
        match parsed {
            (_, Ok(event)) => out.events.push(event),
            (row, Err(message)) => {
                out.errors.push(RowError { row, message });
                if out.errors.len() > error_budget {
                    return Err(Error::ErrorBudgetExceeded {
                        budget: error_budget,
                        errors: out.errors.len(),
                    });
                }
            }
        }
    }
    Ok(out)
}

fn describe_csv_error(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(i) => format!("field {}: {}", i + 1, err.kind()),
            None => err.kind().to_string(),
        },
        _ => e.to_string(),
    }
}

/// Writes events in the canonical CSV layout. Scores are written with six
/// decimals.
pub fn write_event_csv<W: Write>(output: W, events: &[PredictionEvent]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    writer.write_record(COLUMNS)?;
    for e in events {
        writer.write_record([
            e.study_id.as_str(),
            &format_timestamp(e.timestamp),
            &e.model_id,
            &e.class_label,
            &format!("{:.6}", e.score),
        ])?;
    }
    writer.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
