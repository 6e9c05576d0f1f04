//! On-disk formats: demonstration logs and posterior documents.

mod domain;
mod log;
mod posterior;

pub use domain::{AnyDomain, DomainSpec};
pub use log::{
    dataset_checksum, read_log, read_session, LogHeader, LogRecord, LogWriter, RecordInfo, SessionInfo,
    DemonstrationLog,
};
pub use posterior::{ArgmaxEntry, EtaProbability, MaskProbability, PosteriorDocument, SupportEntry};

/// Version stamped into every file this crate writes.
pub const FORMAT_VERSION: u32 = 1;
