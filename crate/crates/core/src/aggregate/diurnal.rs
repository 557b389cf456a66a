use super::{AggregateError, TimeSeries};
use crate::model::FlowClass;

const HOUR_MS: i64 = 3_600_000;
const DAY_MS: i64 = 24 * HOUR_MS;
const MIN_SPAN_MS: i64 = 48 * HOUR_MS;

/// Mean count per hour of day (UTC, from bucket start times) for one class.
pub fn hourly_profile(ts: &TimeSeries, class: FlowClass) -> Result<[f64; 24], AggregateError> {
    if ts.bucket_ms <= 0 || HOUR_MS % ts.bucket_ms != 0 {
        return Err(AggregateError::IncompatibleBuckets(ts.bucket_ms, HOUR_MS));
    }
    if ts.span_ms() < MIN_SPAN_MS {
        return Err(AggregateError::SeriesTooShort {
            needed: (MIN_SPAN_MS / ts.bucket_ms) as usize,
            got: ts.len(),
        });
    }
    let mut sums = [0.0; 24];
    let mut n = [0u64; 24];
    for (k, b) in ts.buckets.iter().enumerate() {
        let hour = (ts.bucket_start(k).rem_euclid(DAY_MS) / HOUR_MS) as usize;
        sums[hour] += b[class.index()] as f64;
        n[hour] += 1;
    }
    let mut out = [0.0; 24];
    for h in 0..24 {
        out[h] = sums[h] / n[h] as f64;
    }
    Ok(out)
}

/// Hour lag `k` at which `b`'s daily profile best lines up with `a`'s, i.e.
/// the `k` maximizing `sum_h a[h] * b[(h + k) % 24]` over mean-centered
/// profiles. A `b` peaking six hours after `a` gives 6. Ties go to the
/// smallest lag.
pub fn diurnal_offset(
    a: &TimeSeries,
    b: &TimeSeries,
    class_a: FlowClass,
    class_b: FlowClass,
) -> Result<u32, AggregateError> {
    if a.bucket_ms != b.bucket_ms {
        return Err(AggregateError::IncompatibleBuckets(
            a.bucket_ms,
            b.bucket_ms,
        ));
    }
    let pa = centered(hourly_profile(a, class_a)?);
    let pb = centered(hourly_profile(b, class_b)?);
    let corr = |k: usize| -> f64 { (0..24).map(|h| pa[h] * pb[(h + k) % 24]).sum() };
    let mut best = (0u32, corr(0));
    for k in 1..24 {
        let c = corr(k);
        // tolerance keeps float noise from breaking exact ties
        if c > best.1 + 1e-9 * best.1.abs().max(1.0) {
            best = (k as u32, c);
        }
    }
    Ok(best.0)
}

fn centered(mut p: [f64; 24]) -> [f64; 24] {
    let mean = p.iter().sum::<f64>() / 24.0;
    for v in &mut p {
        *v -= mean;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Three days of 15-minute buckets; the `class` column follows a 24 h
    /// sinusoid peaking at `peak_hour`.
    fn sinusoid(peak_hour: f64, class: FlowClass) -> TimeSeries {
        let mut ts = TimeSeries::new(900_000, 0).unwrap();
        for k in 0..(3 * 96) {
            let t_hours = k as f64 / 4.0;
            let v = 1000.0 + 500.0 * (2.0 * PI * (t_hours - peak_hour) / 24.0).cos();
            let mut b = [0; 3];
            b[class.index()] = v.round() as u64;
            ts.buckets.push(b);
        }
        ts
    }

    #[test]
    fn six_hour_shift() {
        let a = sinusoid(3.0, FlowClass::Accepted);
        let b = sinusoid(9.0, FlowClass::Rejected);
        assert_eq!(
            diurnal_offset(&a, &b, FlowClass::Accepted, FlowClass::Rejected).unwrap(),
            6
        );
        assert_eq!(
            diurnal_offset(&b, &a, FlowClass::Rejected, FlowClass::Accepted).unwrap(),
            18
        );
        assert_eq!(
            diurnal_offset(&a, &a, FlowClass::Accepted, FlowClass::Accepted).unwrap(),
            0
        );
    }

    #[test]
    fn same_series_two_classes() {
        let a = sinusoid(14.0, FlowClass::Accepted);
        let mut ts = a.clone();
        for (k, b) in sinusoid(20.0, FlowClass::Rejected)
            .buckets
            .iter()
            .enumerate()
        {
            ts.buckets[k][FlowClass::Rejected.index()] = b[FlowClass::Rejected.index()];
        }
        assert_eq!(
            diurnal_offset(&ts, &ts, FlowClass::Accepted, FlowClass::Rejected).unwrap(),
            6
        );
    }

    #[test]
    fn too_short() {
        let mut a = sinusoid(0.0, FlowClass::Accepted);
        a.buckets.truncate(191);
        assert!(matches!(
            diurnal_offset(&a, &a, FlowClass::Accepted, FlowClass::Accepted),
            Err(AggregateError::SeriesTooShort {
                needed: 192,
                got: 191
            })
        ));
    }

    #[test]
    fn incompatible_widths() {
        let a = sinusoid(0.0, FlowClass::Accepted);
        let mut b = a.clone();
        b.bucket_ms = 1_800_000;
        assert!(matches!(
            diurnal_offset(&a, &b, FlowClass::Accepted, FlowClass::Accepted),
            Err(AggregateError::IncompatibleBuckets(..))
        ));
        let mut c = a.clone();
        c.bucket_ms = 7 * 60_000;
        assert!(matches!(
            hourly_profile(&c, FlowClass::Accepted),
            Err(AggregateError::IncompatibleBuckets(..))
        ));
    }

    proptest! {
        #[test]
        fn recovers_whole_hour_shifts(peak in 0u32..24, shift in 0u32..24) {
            let a = sinusoid(peak as f64, FlowClass::Accepted);
            let b = sinusoid((peak + shift) as f64, FlowClass::Accepted);
            let fwd = diurnal_offset(&a, &b, FlowClass::Accepted, FlowClass::Accepted).unwrap();
            let back = diurnal_offset(&b, &a, FlowClass::Accepted, FlowClass::Accepted).unwrap();
            prop_assert_eq!(fwd, shift);
            prop_assert_eq!((fwd + back) % 24, 0);
        }
    }
}
