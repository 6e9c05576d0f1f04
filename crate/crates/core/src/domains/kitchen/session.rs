use std::io::BufRead;

use super::Kitchen;
use crate::error::{GemError, Result};
use crate::io::{read_log, DomainSpec};
use crate::model::data::Dataset;

/// Reads a recorded session for `kitchen`. Timestamps and ids are checked
/// and dropped; the returned dataset is tagged as ingested.
pub fn ingest_session_log<R: BufRead>(reader: R, kitchen: &Kitchen) -> Result<Dataset> {
    let log = read_log(reader)?;
    match &log.header.domain {
        DomainSpec::Kitchen(config) if config == kitchen.config() => Ok(log.dataset),
        DomainSpec::Kitchen(_) => Err(GemError::InvalidSchema(
            "session was recorded with a different menu or layout".into(),
        )),
        other => Err(GemError::InvalidSchema(format!(
            "expected a kitchen session, found a {} log",
            other.name()
        ))),
    }
}
