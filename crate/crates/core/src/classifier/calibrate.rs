//! Threshold calibration by per-boundary error minimisation.

use super::ClassifierError;
use crate::model::{bytes_per_packet, FlowClass, LabeledFlow, Thresholds};

pub const MIN_CLASS_SAMPLES: usize = 100;

/// Smallest integer `t >= 1` minimising `|{low >= t}| + |{high < t}|`, i.e.
/// the boundary that puts the fewest `low` values on the high side and
/// `high` values on the low side.
///
/// The cost only changes at `t = floor(v) + 1` for sample values `v`, so
/// those points (plus `t = 1`) are the only candidates.
pub fn smallest_minimizer(low: &[f64], high: &[f64]) -> u64 {
    let mut low = low.to_vec();
    let mut high = high.to_vec();
    low.sort_by(f64::total_cmp);
    high.sort_by(f64::total_cmp);

    let mut candidates: Vec<u64> = low
        .iter()
        .chain(high.iter())
        .filter(|v| v.is_finite() && **v >= 0.0)
        .map(|v| v.floor() as u64 + 1)
        .collect();
    candidates.push(1);
    candidates.sort_unstable();
    candidates.dedup();

    let mut best = (usize::MAX, 1u64);
    for t in candidates {
        let x = t as f64;
        let low_above = low.len() - low.partition_point(|&v| v < x);
        let high_below = high.partition_point(|&v| v < x);
        let cost = low_above + high_below;
        if cost < best.0 {
            best = (cost, t);
        }
    }
    best.1
}

/// Derives thresholds from labeled flows.
///
/// Each boundary is fitted independently between the two classes it
/// separates. The bytes-per-packet bound separates accepted flows from
/// failed and rejected ones together. The packet range is closed on the
/// rejected side, so its upper bound is the last rejected packet count.
pub fn calibrate(labeled: &[LabeledFlow]) -> Result<Thresholds, ClassifierError> {
    let mut per_class: [Vec<&LabeledFlow>; 3] = Default::default();
    for lf in labeled {
        per_class[lf.label.index()].push(lf);
    }
    for class in FlowClass::ALL {
        if per_class[class.index()].len() < MIN_CLASS_SAMPLES {
            return Err(ClassifierError::InsufficientClassSamples(class));
        }
    }

    let feature = |class: FlowClass, f: fn(&LabeledFlow) -> f64| -> Vec<f64> {
        per_class[class.index()].iter().map(|lf| f(lf)).collect()
    };
    let bytes = |lf: &LabeledFlow| lf.flow.bytes as f64;
    let packets = |lf: &LabeledFlow| lf.flow.packets as f64;
    let bpp = |lf: &LabeledFlow| bytes_per_packet(&lf.flow);

    let (failed, rejected, accepted) =
        (FlowClass::Failed, FlowClass::Rejected, FlowClass::Accepted);

    let byte_lo = smallest_minimizer(&feature(failed, bytes), &feature(rejected, bytes));
    let byte_hi = smallest_minimizer(&feature(rejected, bytes), &feature(accepted, bytes));
    let pkt_lo = smallest_minimizer(&feature(failed, packets), &feature(rejected, packets));
    let pkt_hi = smallest_minimizer(&feature(rejected, packets), &feature(accepted, packets)) - 1;
    let mut not_accepted = feature(failed, bpp);
    not_accepted.extend(feature(rejected, bpp));
    let bpp_bound = smallest_minimizer(&not_accepted, &feature(accepted, bpp));

    Thresholds::new(byte_lo, byte_hi, pkt_lo, pkt_hi, bpp_bound as f64)
        .map_err(ClassifierError::Degenerate)
}
