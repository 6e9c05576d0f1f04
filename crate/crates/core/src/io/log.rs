//! Demonstration logs: one JSON object per line. The first line is a header
//! carrying the domain, schema and action names; every following line is a
//! record with the true state by feature name, the action name and the
//! error flag.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::domain::{AnyDomain, DomainSpec};
use super::FORMAT_VERSION;
use crate::error::{GemError, Result};
use crate::model::data::{DataSource, Dataset, Demonstration};
use crate::model::domain::{ActionId, Domain};
use crate::model::schema::{FeatureSchema, State};

const LOG_KIND: &str = "demonstration-log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SessionInfo {
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant_id: Option<String>,
    /// Seed of the session's order sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct LogHeader {
    pub format_version: u32,
    pub kind: String,
    pub domain: DomainSpec,
    pub schema: FeatureSchema,
    pub actions: Vec<String>,
    pub source: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<SessionInfo>,
}

impl LogHeader {
    pub fn new(domain: &AnyDomain, source: DataSource) -> Self {
        LogHeader {
            format_version: FORMAT_VERSION,
            kind: LOG_KIND.into(),
            domain: domain.spec(),
            schema: domain.schema().clone(),
            actions: domain.actions().to_vec(),
            source,
            session: None,
        }
    }

    pub fn with_session(mut self, session: SessionInfo) -> Self {
        self.session = Some(session);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct LogRecord {
    pub schema_id: String,
    pub state: Map<String, Value>,
    pub action: String,
    pub error: u8,
    /// Milliseconds since the Unix epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Value>,
}

impl LogRecord {
    pub fn from_demonstration(domain: &dyn Domain, d: &Demonstration) -> Self {
        let schema = domain.schema();
        let state = schema
            .features()
            .iter()
            .enumerate()
            .map(|(j, f)| (f.name.clone(), Value::from(schema.value_name(j, d.state.get(j)))))
            .collect();
        LogRecord {
            schema_id: schema.id().to_string(),
            state,
            action: domain.action_name(d.action).to_string(),
            error: d.error as u8,
            timestamp: None,
            meta: None,
        }
    }

    /// Resolves the named feature values into a state of `schema`.
    pub fn parse_state(&self, schema: &FeatureSchema) -> std::result::Result<State, String> {
        if self.schema_id != schema.id() {
            return Err(format!(
                "schema-id `{}` differs from `{}`",
                self.schema_id,
                schema.id()
            ));
        }
        if let Some(extra) = self.state.keys().find(|k| schema.feature_index(k).is_none()) {
            return Err(format!("unknown feature `{extra}`"));
        }
        let mut values = Vec::with_capacity(schema.len());
        for (j, f) in schema.features().iter().enumerate() {
            let raw = self
                .state
                .get(&f.name)
                .ok_or_else(|| format!("missing feature `{}`", f.name))?;
            let text = match raw {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                other => return Err(format!("feature `{}` has non-scalar value {other}", f.name)),
            };
            values.push(schema.value_index(j, &text).map_err(|e| e.to_string())?);
        }
        Ok(State::from_raw(values))
    }

    pub fn parse_action(&self, domain: &dyn Domain) -> std::result::Result<ActionId, String> {
        domain.action_index(&self.action).map_err(|e| e.to_string())
    }

    pub fn parse_error(&self) -> std::result::Result<bool, String> {
        match self.error {
            0 => Ok(false),
            1 => Ok(true),
            x => Err(format!("error flag must be 0 or 1, found {x}")),
        }
    }

    pub fn to_demonstration(&self, domain: &dyn Domain) -> std::result::Result<Demonstration, String> {
        Ok(Demonstration {
            state: self.parse_state(domain.schema())?,
            action: self.parse_action(domain)?,
            error: self.parse_error()?,
        })
    }
}

/// Per-record fields that do not enter the dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecordInfo {
    pub timestamp: Option<u64>,
    pub meta: Option<Value>,
}

#[derive(Debug, Clone)]
pub struct DemonstrationLog {
    pub header: LogHeader,
    pub domain: AnyDomain,
    pub dataset: Dataset,
    pub records: Vec<RecordInfo>,
}

impl DemonstrationLog {
    /// Splits the dataset by `meta.participant`, keeping first-seen order.
    /// Records without a participant form one group keyed by "".
    pub fn participants(&self) -> Vec<(String, Dataset)> {
        let mut keys: Vec<String> = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            let key = match r.meta.as_ref().and_then(|m| m.get("participant")) {
                Some(Value::String(s)) => s.clone(),
                Some(v) => v.to_string(),
                None => String::new(),
            };
            match keys.iter().position(|k| *k == key) {
                Some(g) => groups[g].push(i),
                None => {
                    keys.push(key);
                    groups.push(vec![i]);
                }
            }
        }
        keys.into_iter()
            .zip(groups)
            .map(|(k, idx)| (k, self.dataset.reordered(&idx)))
            .collect()
    }
}

fn malformed(line: usize, message: impl Into<String>) -> GemError {
    GemError::MalformedRecord {
        line,
        message: message.into(),
    }
}

/// Parses and validates a whole log. Error flags are re-derived and must
/// match; timestamps, when present, must not decrease. The returned dataset
/// is tagged as ingested.
pub fn read_log<R: BufRead>(reader: R) -> Result<DemonstrationLog> {
    parse_log(reader, false)
}

/// Like [`read_log`], but a header without records yields an empty dataset.
/// Session logs start out that way.
pub fn read_session<R: BufRead>(reader: R) -> Result<DemonstrationLog> {
    parse_log(reader, true)
}

fn parse_log<R: BufRead>(reader: R, allow_empty: bool) -> Result<DemonstrationLog> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (line_no, header_line) = loop {
        match lines.next() {
            None => return Err(GemError::EmptyDataset),
            Some((n, l)) => {
                let l = l?;
                if !l.trim().is_empty() {
                    break (n, l);
                }
            }
        }
    };
    let header: LogHeader =
        serde_json::from_str(&header_line).map_err(|e| malformed(line_no, format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(malformed(
            line_no,
            format!("unsupported format-version {}", header.format_version),
        ));
    }
    if header.kind != LOG_KIND {
        return Err(malformed(line_no, format!("expected kind `{LOG_KIND}`, found `{}`", header.kind)));
    }
    let domain = header.domain.build()?;
    if header.schema != *domain.schema() {
        return Err(GemError::InvalidSchema(format!(
            "header schema `{}` does not match the {} domain",
            header.schema.id(),
            header.domain.name()
        )));
    }
    if header.actions != domain.actions() {
        return Err(GemError::InvalidSchema("header actions do not match the domain".into()));
    }

    let mut demos = Vec::new();
    let mut records = Vec::new();
    let mut last_time: Option<u64> = None;
    for (n, l) in lines {
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let record: LogRecord = serde_json::from_str(&l).map_err(|e| malformed(n, e.to_string()))?;
        if record.schema_id != domain.schema().id() {
            return Err(GemError::SchemaIdMismatch {
                expected: domain.schema().id().to_string(),
                found: record.schema_id,
            });
        }
        let demo = record.to_demonstration(&domain).map_err(|m| malformed(n, m))?;
        if let Some(t) = record.timestamp {
            if last_time.is_some_and(|prev| t < prev) {
                return Err(malformed(n, "timestamp decreases"));
            }
            last_time = Some(t);
        }
        demos.push(demo);
        records.push(RecordInfo {
            timestamp: record.timestamp,
            meta: record.meta,
        });
    }
    if demos.is_empty() && !allow_empty {
        return Err(GemError::EmptyDataset);
    }
    let dataset = Dataset::new(&domain, demos, DataSource::Ingested)?;
    Ok(DemonstrationLog {
        header,
        domain,
        dataset,
        records,
    })
}

/// Streams a log: the header on construction, then one line per record.
pub struct LogWriter<'a, W: Write> {
    out: W,
    domain: &'a dyn Domain,
}

impl<'a, W: Write> LogWriter<'a, W> {
    pub fn new(mut out: W, domain: &'a dyn Domain, header: &LogHeader) -> Result<Self> {
        serde_json::to_writer(&mut out, header)?;
        out.write_all(b"\n")?;
        Ok(LogWriter { out, domain })
    }

    pub fn write(&mut self, d: &Demonstration, info: &RecordInfo) -> Result<()> {
        let mut record = LogRecord::from_demonstration(self.domain, d);
        record.timestamp = info.timestamp;
        record.meta = info.meta.clone();
        serde_json::to_writer(&mut self.out, &record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn write_all(&mut self, data: &Dataset) -> Result<()> {
        for d in data.demonstrations() {
            self.write(d, &RecordInfo::default())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// SHA-256 over the schema id and the (state, action, error) triples, so
/// timestamps and metadata do not change it.
pub fn dataset_checksum(data: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update(data.schema_id().as_bytes());
    h.update(b"\n");
    for d in data.demonstrations() {
        let values: Vec<String> = d.state.values().iter().map(|v| v.to_string()).collect();
        h.update(format!("{}|{}|{}\n", values.join(","), d.action, d.error as u8).as_bytes());
    }
    hex::encode(h.finalize())
}
