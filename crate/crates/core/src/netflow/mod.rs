//! Flow ingest: NetFlow v5 codec, CSV interchange and SMTP selection.

mod csv;
mod filter;
mod v5;

use thiserror::Error;

pub use self::csv::{
    read_csv, read_labeled_csv, write_csv, write_labeled_csv, FlowCsvReader, FlowCsvWriter,
    FLOW_COLUMNS, LABEL_COLUMNS,
};
pub use filter::{filter_smtp, top_servers};
pub use v5::{
    parse_v5, peek_header, serialize_v5, NetflowV5Header, NetflowV5Record, V5StreamReader,
    HEADER_LEN, MAX_RECORDS, RECORD_LEN,
};

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum NetflowError {
    #[error("truncated packet: need {needed} octets, have {got}")]
    TruncatedPacket { needed: usize, got: usize },
    #[error("unsupported NetFlow version {0}")]
    BadVersion(u16),
    #[error("record count {declared} does not match packet: {reason}")]
    CountMismatch { declared: u16, reason: String },
    #[error("record {index}: {source}")]
    InvalidRecord { index: usize, source: ModelError },
    #[error("{0} records exceed the 30-record packet limit")]
    TooManyRecords(usize),
    #[error("field {0} does not fit the v5 layout")]
    FieldOverflow(&'static str),
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("missing or unexpected CSV header")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NetflowError {
    fn from_csv(err: ::csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        let reason = err.to_string();
        match err.into_kind() {
            ::csv::ErrorKind::Io(io) => NetflowError::Io(io),
            _ => NetflowError::MalformedRow { line, reason },
        }
    }
}
