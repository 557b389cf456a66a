use std::net::Ipv4Addr;

use super::histogram::ByteHistogram;
use super::{AggregateError, ClassCounts};
use crate::model::{FlowClass, LabeledFlow};

/// Mergeable per-server accumulator: class counts plus a byte histogram per
/// class. Partitioned workers can each own one and merge at the end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerStats {
    pub server: Ipv4Addr,
    counts: [u64; 3],
    histograms: [ByteHistogram; 3],
}

impl ServerStats {
    pub fn new(server: Ipv4Addr) -> Self {
        ServerStats {
            server,
            counts: [0; 3],
            histograms: Default::default(),
        }
    }

    pub fn accumulate(&mut self, lf: &LabeledFlow) -> Result<(), AggregateError> {
        if lf.flow.dst_ip != self.server {
            return Err(AggregateError::ServerMismatch {
                expected: self.server,
                got: lf.flow.dst_ip,
            });
        }
        let i = lf.label.index();
        self.counts[i] += 1;
        self.histograms[i].add(lf.flow.bytes);
        Ok(())
    }

    pub fn merge(&self, other: &ServerStats) -> Result<ServerStats, AggregateError> {
        if self.server != other.server {
            return Err(AggregateError::ServerMismatch {
                expected: self.server,
                got: other.server,
            });
        }
        let mut out = self.clone();
        for i in 0..3 {
            out.counts[i] += other.counts[i];
            out.histograms[i].merge(&other.histograms[i]);
        }
        Ok(out)
    }

    pub fn count(&self, class: FlowClass) -> u64 {
        self.counts[class.index()]
    }

    pub fn counts(&self) -> ClassCounts {
        ClassCounts::from(self.counts)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn histogram(&self, class: FlowClass) -> &ByteHistogram {
        &self.histograms[class.index()]
    }

    /// Accepted share of judged flows. Failed attempts were never judged by
    /// the server and do not count.
    pub fn rating(&self) -> Result<f64, AggregateError> {
        let accepted = self.count(FlowClass::Accepted);
        let judged = accepted + self.count(FlowClass::Rejected);
        if judged == 0 {
            return Err(AggregateError::NoJudgedFlows(self.server));
        }
        Ok(accepted as f64 / judged as f64)
    }

    /// Share of rejected flows smaller than `x` octets. Exact for the pinned
    /// histogram edges (300 and 1500).
    pub fn sharpness(&self, x: u64) -> Result<f64, AggregateError> {
        let rejected = self.count(FlowClass::Rejected);
        if rejected == 0 {
            return Err(AggregateError::NoRejectedFlows(self.server));
        }
        Ok(self.histograms[FlowClass::Rejected.index()].count_below(x) as f64 / rejected as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FlowRecord, LabelSource};
    use proptest::prelude::*;

    const S: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 25);

    fn lf(class: FlowClass, bytes: u64) -> LabeledFlow {
        LabeledFlow {
            flow: FlowRecord::smtp(Ipv4Addr::new(192, 0, 2, 1), S, 1, bytes.max(1)),
            label: class,
            reason: None,
            label_source: LabelSource::Synthetic,
        }
    }

    fn stats_from(flows: &[LabeledFlow]) -> ServerStats {
        let mut s = ServerStats::new(S);
        for f in flows {
            s.accumulate(f).unwrap();
        }
        s
    }

    fn with_counts(failed: usize, rejected: usize, accepted: usize) -> ServerStats {
        let mut flows = vec![lf(FlowClass::Failed, 100); failed];
        flows.extend(vec![lf(FlowClass::Rejected, 600); rejected]);
        flows.extend(vec![lf(FlowClass::Accepted, 5000); accepted]);
        stats_from(&flows)
    }

    #[test]
    fn accumulate_counts_one_flow() {
        let s = stats_from(&[lf(FlowClass::Accepted, 5000)]);
        assert_eq!(
            s.counts(),
            ClassCounts {
                failed: 0,
                rejected: 0,
                accepted: 1
            }
        );
        assert_eq!(s.histogram(FlowClass::Accepted).total(), 1);
    }

    #[test]
    fn wrong_server_rejected() {
        let mut s = ServerStats::new(Ipv4Addr::new(10, 0, 0, 1));
        assert!(matches!(
            s.accumulate(&lf(FlowClass::Failed, 40)),
            Err(AggregateError::ServerMismatch { .. })
        ));
        assert!(ServerStats::new(Ipv4Addr::new(10, 0, 0, 1))
            .merge(&ServerStats::new(S))
            .is_err());
    }

    #[test]
    fn rating_examples() {
        assert!((with_counts(0, 800, 200).rating().unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(with_counts(0, 500, 0).rating().unwrap(), 0.0);
        assert!(matches!(
            with_counts(100, 0, 0).rating(),
            Err(AggregateError::NoJudgedFlows(_))
        ));
    }

    #[test]
    fn sharpness_examples() {
        let s = stats_from(&[lf(FlowClass::Rejected, 1500), lf(FlowClass::Rejected, 4000)]);
        assert_eq!(s.sharpness(1500).unwrap(), 0.0);
        let s = stats_from(&[lf(FlowClass::Rejected, 1499), lf(FlowClass::Rejected, 1500)]);
        assert_eq!(s.sharpness(1500).unwrap(), 0.5);
        assert!(matches!(
            with_counts(5, 0, 5).sharpness(1500),
            Err(AggregateError::NoRejectedFlows(_))
        ));
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let x = with_counts(3, 4, 5);
        assert_eq!(x.merge(&ServerStats::new(S)).unwrap(), x);
    }

    fn arb_flows() -> impl Strategy<Value = Vec<LabeledFlow>> {
        proptest::collection::vec((0usize..3, 1u64..100_000), 0..40).prop_map(|v| {
            v.into_iter()
                .map(|(c, b)| lf(FlowClass::ALL[c], b))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn merge_commutes_and_associates(a in arb_flows(), b in arb_flows(), c in arb_flows()) {
            let (a, b, c) = (stats_from(&a), stats_from(&b), stats_from(&c));
            prop_assert_eq!(a.merge(&b).unwrap(), b.merge(&a).unwrap());
            prop_assert_eq!(a.merge(&b).unwrap().merge(&c).unwrap(), a.merge(&b.merge(&c).unwrap()).unwrap());
        }

        #[test]
        fn histogram_totals_match_counts(a in arb_flows()) {
            let s = stats_from(&a);
            for class in FlowClass::ALL {
                prop_assert_eq!(s.histogram(class).total(), s.count(class));
            }
        }
    }
}
