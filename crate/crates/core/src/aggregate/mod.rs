//! Per-server statistics, time series, spike detection and diurnal analysis.

mod diurnal;
mod histogram;
mod report;
mod series;
mod spikes;
mod stats;

use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diurnal::{diurnal_offset, hourly_profile};
pub use histogram::{edges as histogram_edges, ByteHistogram, BIN_COUNT, PINNED_EDGES};
pub use report::{build_report, write_cdf_csv, ClassCdfs, Report, ReportOptions, ServerReport};
pub use series::{bucketize, TimeSeries, DEFAULT_BUCKET_MS};
pub use spikes::{detect_spikes, SpikeEvent, SpikeParams};
pub use stats::ServerStats;

use crate::model::FlowClass;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregateError {
    #[error("flow for server {got} given to accumulator for {expected}")]
    ServerMismatch { expected: Ipv4Addr, got: Ipv4Addr },
    #[error("server {0} has no accepted or rejected flows")]
    NoJudgedFlows(Ipv4Addr),
    #[error("server {0} has no rejected flows")]
    NoRejectedFlows(Ipv4Addr),
    #[error("flow starts at {start_ms}, before series origin {t0_ms}")]
    FlowBeforeOrigin { start_ms: i64, t0_ms: i64 },
    #[error("bucket width must be positive, got {0}")]
    InvalidBucket(i64),
    #[error("series has {got} buckets, need at least {needed}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("bucket widths {0} ms and {1} ms are incompatible")]
    IncompatibleBuckets(i64, i64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub failed: u64,
    pub rejected: u64,
    pub accepted: u64,
}

impl ClassCounts {
    pub fn get(&self, class: FlowClass) -> u64 {
        match class {
            FlowClass::Failed => self.failed,
            FlowClass::Rejected => self.rejected,
            FlowClass::Accepted => self.accepted,
        }
    }

    pub fn total(&self) -> u64 {
        self.failed + self.rejected + self.accepted
    }
}

impl From<[u64; 3]> for ClassCounts {
    fn from(c: [u64; 3]) -> Self {
        ClassCounts {
            failed: c[FlowClass::Failed.index()],
            rejected: c[FlowClass::Rejected.index()],
            accepted: c[FlowClass::Accepted.index()],
        }
    }
}
