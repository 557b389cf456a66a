//! Three-way flow classification from header features.
//!
//! Each of bytes, packets and bytes-per-packet casts a vote according to
//! [`Thresholds`]; [`classify`] takes the majority and falls back to the
//! bytes vote when no two features agree.

mod calibrate;
mod cdf;

use serde::Serialize;
use thiserror::Error;

pub use calibrate::{calibrate, smallest_minimizer, MIN_CLASS_SAMPLES};
pub use cdf::{compute_cdf, fraction_below, EmpiricalCdf};

use crate::model::{bytes_per_packet, FlowClass, FlowRecord, ModelError, Thresholds};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("empty sample")]
    EmptySample,
    #[error("sample contains NaN")]
    NanSample,
    #[error("need at least {MIN_CLASS_SAMPLES} {0} flows to calibrate")]
    InsufficientClassSamples(FlowClass),
    #[error("calibration produced unusable thresholds: {0}")]
    Degenerate(ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Bytes,
    Packets,
    Bpp,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::Bytes, Feature::Packets, Feature::Bpp];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FeatureVote {
    pub feature: Feature,
    pub vote: FlowClass,
}

/// Decision for one flow plus the votes that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub class: FlowClass,
    pub votes: [FeatureVote; 3],
}

impl Classification {
    pub fn vote(&self, feature: Feature) -> FlowClass {
        self.votes
            .iter()
            .find(|v| v.feature == feature)
            .map(|v| v.vote)
            .expect("all three features vote")
    }
}

pub fn classify_feature(flow: &FlowRecord, feature: Feature, t: &Thresholds) -> FlowClass {
    match feature {
        Feature::Bytes => {
            if flow.bytes < t.byte_lo {
                FlowClass::Failed
            } else if flow.bytes < t.byte_hi {
                FlowClass::Rejected
            } else {
                FlowClass::Accepted
            }
        }
        Feature::Packets => {
            if flow.packets < t.pkt_lo {
                FlowClass::Failed
            } else if flow.packets <= t.pkt_hi {
                FlowClass::Rejected
            } else {
                FlowClass::Accepted
            }
        }
        // Failed and rejected flows share the low range, so this feature
        // never votes Failed.
        Feature::Bpp => {
            if bytes_per_packet(flow) < t.bpp_bound {
                FlowClass::Rejected
            } else {
                FlowClass::Accepted
            }
        }
    }
}

pub fn classify(flow: &FlowRecord, t: &Thresholds) -> Classification {
    let votes = Feature::ALL.map(|feature| FeatureVote {
        feature,
        vote: classify_feature(flow, feature, t),
    });
    let [bytes, packets, bpp] = votes.map(|v| v.vote);
    let class = if packets == bpp && packets != bytes {
        packets
    } else {
        // Either bytes is in the majority or all three disagree.
        bytes
    };
    Classification { class, votes }
}
