use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::{AggregateError, TimeSeries};
use crate::model::FlowClass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeParams {
    pub factor: f64,
    /// Number of preceding buckets in the median baseline.
    pub window: usize,
    pub min_count: u64,
}

impl Default for SpikeParams {
    fn default() -> Self {
        SpikeParams {
            factor: 5.0,
            window: 96,
            min_count: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikeEvent {
    pub server: Option<Ipv4Addr>,
    pub bucket: usize,
    pub start_ms: i64,
    pub class: FlowClass,
    pub count: u64,
    pub baseline: f64,
}

fn median(sorted: &[u64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    }
}

/// Buckets whose count reaches `factor` times the median of the preceding
/// `window` buckets and at least `min_count`. Empty buckets are never spikes.
/// The first `window` buckets have no baseline and are not tested.
pub fn detect_spikes(
    ts: &TimeSeries,
    class: FlowClass,
    params: &SpikeParams,
) -> Result<Vec<SpikeEvent>, AggregateError> {
    let window = params.window.max(1);
    if ts.len() < window {
        return Err(AggregateError::SeriesTooShort {
            needed: window,
            got: ts.len(),
        });
    }
    let counts = ts.class_counts(class);
    // sorted copy of the sliding window, updated incrementally
    let mut sorted: Vec<u64> = counts[..window].to_vec();
    sorted.sort_unstable();
    let mut events = Vec::new();
    for b in window..counts.len() {
        let baseline = median(&sorted);
        let count = counts[b];
        if count > 0 && count >= params.min_count && count as f64 >= params.factor * baseline {
            events.push(SpikeEvent {
                server: ts.server,
                bucket: b,
                start_ms: ts.bucket_start(b),
                class,
                count,
                baseline,
            });
        }
        let out = counts[b - window];
        let pos = sorted
            .binary_search(&out)
            .expect("outgoing value is in the window");
        sorted.remove(pos);
        let ins = sorted.partition_point(|&v| v < count);
        sorted.insert(ins, count);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rejected_series(counts: &[u64]) -> TimeSeries {
        let mut ts = TimeSeries::new(900_000, 0).unwrap();
        ts.buckets = counts.iter().map(|&c| [0, c, 0]).collect();
        ts
    }

    fn naive(counts: &[u64], p: &SpikeParams) -> Vec<usize> {
        (p.window..counts.len())
            .filter(|&b| {
                let mut w = counts[b - p.window..b].to_vec();
                w.sort_unstable();
                let c = counts[b];
                c > 0 && c >= p.min_count && c as f64 >= p.factor * median(&w)
            })
            .collect()
    }

    #[test]
    fn single_campaign_bucket() {
        let mut counts = vec![500; 300];
        counts[200] = 80_000;
        let events = detect_spikes(
            &rejected_series(&counts),
            FlowClass::Rejected,
            &SpikeParams::default(),
        )
        .unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].bucket, 200);
        assert_eq!(events[0].count, 80_000);
        assert_eq!(events[0].baseline, 500.0);
    }

    #[test]
    fn flat_series_has_no_spikes() {
        let ts = rejected_series(&[500; 200]);
        assert!(
            detect_spikes(&ts, FlowClass::Rejected, &SpikeParams::default())
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn short_series() {
        let ts = rejected_series(&[500; 95]);
        assert_eq!(
            detect_spikes(&ts, FlowClass::Rejected, &SpikeParams::default()),
            Err(AggregateError::SeriesTooShort {
                needed: 96,
                got: 95
            })
        );
    }

    #[test]
    fn min_count_suppresses_small_excursions() {
        let mut counts = vec![10; 120];
        counts[110] = 90;
        let ts = rejected_series(&counts);
        assert!(
            detect_spikes(&ts, FlowClass::Rejected, &SpikeParams::default())
                .unwrap()
                .is_empty()
        );
        let p = SpikeParams {
            min_count: 0,
            ..Default::default()
        };
        assert_eq!(
            detect_spikes(&ts, FlowClass::Rejected, &p).unwrap().len(),
            1
        );
    }

    proptest! {
        #[test]
        fn matches_naive_rolling_median(
            counts in proptest::collection::vec(0u64..50, 10..80),
            window in 1usize..10,
            factor in 1u32..6,
        ) {
            let p = SpikeParams { factor: factor as f64, window, min_count: 0 };
            let got: Vec<usize> = detect_spikes(&rejected_series(&counts), FlowClass::Rejected, &p)
                .unwrap().into_iter().map(|e| e.bucket).collect();
            prop_assert_eq!(got, naive(&counts, &p));
        }

        #[test]
        fn scale_invariant_without_min_count(
            counts in proptest::collection::vec(0u64..1000, 20..60),
            scale in 1u64..1000,
        ) {
            let p = SpikeParams { factor: 5.0, window: 8, min_count: 0 };
            let scaled: Vec<u64> = counts.iter().map(|c| c * scale).collect();
            let a: Vec<usize> = detect_spikes(&rejected_series(&counts), FlowClass::Rejected, &p)
                .unwrap().into_iter().map(|e| e.bucket).collect();
            let b: Vec<usize> = detect_spikes(&rejected_series(&scaled), FlowClass::Rejected, &p)
                .unwrap().into_iter().map(|e| e.bucket).collect();
            prop_assert_eq!(a, b);
        }
    }
}
