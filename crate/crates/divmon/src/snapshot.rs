//! Versioned, checksummed snapshot files.
//!
//! Layout (UTF-8 text):
//!
//! ```text
//! DIVMON-SNAPSHOT 1
//! digest <sha256 of the resolved config>
//! checksum <sha256 of the payload bytes>
//! <payload JSON>
//! ```

use std::path::Path;

use divmon_core::{ClassEvaluation, MonitorConfig, MonitorState};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::config_digest;
use crate::error::{Error, Result};

pub const MAGIC: &str = "DIVMON-SNAPSHOT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Payload {
    alert_log_offset: u64,
    state: MonitorState,
    evaluations: Vec<ClassEvaluation>,
}

/// Monitor state captured at a quiescent point, plus the evaluations already
/// emitted and how many alert lines were written.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub config_digest: String,
    pub alert_log_offset: u64,
    pub state: MonitorState,
    pub evaluations: Vec<ClassEvaluation>,
}

impl StateSnapshot {
    pub fn capture(
        state: &MonitorState,
        evaluations: &[ClassEvaluation],
        alert_log_offset: u64,
    ) -> Self {
        Self {
            config_digest: config_digest(state.config()),
            alert_log_offset,
            state: state.clone(),
            evaluations: evaluations.to_vec(),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let payload = serde_json::to_vec(&Payload {
            alert_log_offset: self.alert_log_offset,
            state: self.state.clone(),
            evaluations: self.evaluations.clone(),
        })?;
        let mut out = format!(
            "{MAGIC} {VERSION}\ndigest {}\nchecksum {}\n",
            self.config_digest,
            hex::encode(Sha256::digest(&payload))
        )
        .into_bytes();
        out.extend_from_slice(&payload);
        Ok(out)
    }

    /// Parses and integrity-checks a snapshot without looking at any
    /// configuration.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut rest = bytes;
        let mut header = |name: &str| -> Result<String> {
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::Snapshot(format!("truncated before {name} line")))?;
            let line = std::str::from_utf8(&rest[..end])
                .map_err(|_| Error::Snapshot(format!("{name} line is not UTF-8")))?
                .to_string();
            rest = &rest[end + 1..];
            Ok(line)
        };
        let magic = header("magic")?;
        let version = magic
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::Snapshot("not a divmon snapshot".into()))?;
        if version != VERSION.to_string() {
            return Err(Error::Snapshot(format!(
                "unsupported snapshot version {version} (expected {VERSION})"
            )));
        }
        let digest = field(&header("digest")?, "digest")?;
        let checksum = field(&header("checksum")?, "checksum")?;
        if hex::encode(Sha256::digest(rest)) != checksum {
            return Err(Error::Snapshot("checksum mismatch".into()));
        }
        let payload: Payload = serde_json::from_slice(rest)
            .map_err(|e| Error::Snapshot(format!("corrupt payload: {e}")))?;
        if config_digest(payload.state.config()) != digest {
            return Err(Error::Snapshot(
                "embedded config does not match digest".into(),
            ));
        }
        Ok(Self {
            config_digest: digest,
            alert_log_offset: payload.alert_log_offset,
            state: payload.state,
            evaluations: payload.evaluations,
        })
    }

    /// Hands back the state if it was taken under `config`.
    pub fn restore(
        self,
        config: &MonitorConfig,
    ) -> Result<(MonitorState, Vec<ClassEvaluation>, u64)> {
        let expected = config_digest(config);
        if expected != self.config_digest {
            return Err(Error::ConfigMismatch {
                expected,
                found: self.config_digest,
            });
        }
        Ok((self.state, self.evaluations, self.alert_log_offset))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Writes via a sibling temp file and rename.
    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.encode()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

fn field(line: &str, name: &str) -> Result<String> {
    line.strip_prefix(name)
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .ok_or_else(|| Error::Snapshot(format!("missing {name} line")))
}
