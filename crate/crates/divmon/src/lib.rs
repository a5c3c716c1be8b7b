//! Std companion to `divmon-core`: event files, configuration, snapshots,
//! synthetic scenarios, reports, and the replay / HTTP front ends.

pub mod config;
pub mod error;
pub mod events;
pub mod replay;
pub mod report;
pub mod serve;
pub mod snapshot;
pub mod synthetic;

pub use error::{Error, Result};
