//! Retrospective replay of a CSV event file through the monitor.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use divmon_core::{ClassEvaluation, MonitorConfig, MonitorState, PredictionEvent};

use crate::error::{Error, Result};
use crate::events::parse_event_csv;
use crate::report::ReportBundle;

/// Exit status when any CRITICAL alert fired.
pub const EXIT_CRITICAL: i32 = 2;

/// Feeds events in order, then closes whatever windows are still open.
pub fn replay_events(
    config: MonitorConfig,
    events: &[PredictionEvent],
) -> Result<(MonitorState, Vec<ClassEvaluation>)> {
    let mut state = MonitorState::new(config)?;
    let mut evaluations = Vec::new();
    for e in events {
        evaluations.extend(state.ingest(e)?.evaluations);
    }
    evaluations.extend(state.finish()?);
    Ok((state, evaluations))
}

/// Parses `input`, runs the full replay and writes every report file into
/// `out_dir`.
pub fn run_replay(
    input: &Path,
    config: MonitorConfig,
    out_dir: &Path,
    error_budget: usize,
) -> Result<ReportBundle> {
    let file = File::open(input).map_err(|e| Error::io(input, e))?;
    let parsed = parse_event_csv(BufReader::new(file), error_budget)?;
    if parsed.events.is_empty() {
        return Err(Error::NoEvents);
    }
    let (state, evaluations) = replay_events(config, &parsed.events)?;
    let bundle = ReportBundle {
        evaluations,
        diagnostics: *state.diagnostics(),
        row_errors: parsed.errors,
    };
    bundle.write_all(out_dir)?;
    Ok(bundle)
}
