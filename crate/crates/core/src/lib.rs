//! Flow-level SMTP traffic analysis.
//!
//! Infers a mail server's pre-filtering verdict (failed, rejected, accepted)
//! for each SMTP flow from NetFlow header fields alone, checks the inference
//! against server logs and black/whitelists, and aggregates per-server and
//! network-wide statistics. A seeded generator supplies labeled traffic with
//! known ground truth.

pub mod aggregate;
pub mod classifier;
pub mod lists;
pub mod logcorr;
pub mod model;
pub mod netflow;
pub mod synth;

pub use classifier::{classify, Classification, Feature};
pub use model::{
    validate_flow, FlowClass, FlowRecord, LabelSource, LabeledFlow, ModelError, RejectReason,
    Thresholds,
};
