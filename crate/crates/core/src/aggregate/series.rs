use std::net::Ipv4Addr;

use serde::Serialize;

use super::AggregateError;
use crate::model::{FlowClass, LabeledFlow};

pub const DEFAULT_BUCKET_MS: i64 = 900_000;

/// Per-class flow counts in fixed-width buckets starting at `t0_ms`.
/// Bucket `k` covers `[t0_ms + k * bucket_ms, t0_ms + (k + 1) * bucket_ms)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TimeSeries {
    pub server: Option<Ipv4Addr>,
    pub bucket_ms: i64,
    pub t0_ms: i64,
    pub buckets: Vec<[u64; 3]>,
}

impl TimeSeries {
    pub fn new(bucket_ms: i64, t0_ms: i64) -> Result<Self, AggregateError> {
        if bucket_ms <= 0 {
            return Err(AggregateError::InvalidBucket(bucket_ms));
        }
        Ok(TimeSeries {
            server: None,
            bucket_ms,
            t0_ms,
            buckets: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn span_ms(&self) -> i64 {
        self.buckets.len() as i64 * self.bucket_ms
    }

    pub fn bucket_start(&self, k: usize) -> i64 {
        self.t0_ms + k as i64 * self.bucket_ms
    }

    pub fn class_counts(&self, class: FlowClass) -> Vec<u64> {
        self.buckets.iter().map(|b| b[class.index()]).collect()
    }

    pub fn add(&mut self, start_ms: i64, class: FlowClass) -> Result<(), AggregateError> {
        if start_ms < self.t0_ms {
            return Err(AggregateError::FlowBeforeOrigin {
                start_ms,
                t0_ms: self.t0_ms,
            });
        }
        let k = ((start_ms - self.t0_ms) / self.bucket_ms) as usize;
        if k >= self.buckets.len() {
            self.buckets.resize(k + 1, [0; 3]);
        }
        self.buckets[k][class.index()] += 1;
        Ok(())
    }

    /// Extend with empty buckets up to `len`.
    pub fn pad_to(&mut self, len: usize) {
        if self.buckets.len() < len {
            self.buckets.resize(len, [0; 3]);
        }
    }
}

pub fn bucketize<'a, I>(labels: I, bucket_ms: i64, t0_ms: i64) -> Result<TimeSeries, AggregateError>
where
    I: IntoIterator<Item = &'a LabeledFlow>,
{
    let mut ts = TimeSeries::new(bucket_ms, t0_ms)?;
    for lf in labels {
        ts.add(lf.flow.start_ms, lf.label)?;
    }
    Ok(ts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FlowRecord, LabelSource};

    fn at(t: i64, class: FlowClass) -> LabeledFlow {
        let mut flow = FlowRecord::smtp(
            Ipv4Addr::new(192, 0, 2, 1),
            Ipv4Addr::new(10, 0, 0, 25),
            1,
            40,
        );
        flow.start_ms = t;
        flow.end_ms = t;
        LabeledFlow {
            flow,
            label: class,
            reason: None,
            label_source: LabelSource::Synthetic,
        }
    }

    #[test]
    fn floor_arithmetic() {
        let ts = bucketize(
            &[
                at(0, FlowClass::Failed),
                at(899_999, FlowClass::Failed),
                at(900_000, FlowClass::Accepted),
            ],
            DEFAULT_BUCKET_MS,
            0,
        )
        .unwrap();
        assert_eq!(ts.buckets, vec![[2, 0, 0], [0, 0, 1]]);
        assert_eq!(ts.bucket_start(1), 900_000);
    }

    #[test]
    fn before_origin() {
        assert_eq!(
            bucketize(&[at(-1, FlowClass::Failed)], DEFAULT_BUCKET_MS, 0),
            Err(AggregateError::FlowBeforeOrigin {
                start_ms: -1,
                t0_ms: 0
            })
        );
    }

    #[test]
    fn zero_width_rejected() {
        assert_eq!(bucketize(&[], 0, 0), Err(AggregateError::InvalidBucket(0)));
    }

    #[test]
    fn nonzero_origin() {
        let ts = bucketize(
            &[at(1_000 + 1_800_000, FlowClass::Rejected)],
            DEFAULT_BUCKET_MS,
            1_000,
        )
        .unwrap();
        assert_eq!(ts.buckets, vec![[0, 0, 0], [0, 0, 0], [0, 1, 0]]);
    }
}
