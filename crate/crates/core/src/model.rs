//! Shared domain types: flow records, flow classes, thresholds and labels.
//!
//! Everything here is a plain value type. Validation lives next to the
//! types so that every other module can assume a [`FlowRecord`] it receives
//! has passed [`validate_flow`].

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// TCP protocol number in the IPv4 header.
pub const PROTO_TCP: u8 = 6;

/// SMTP well-known port.
pub const SMTP_PORT: u16 = 25;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid flow: {field}: {reason}")]
    InvalidFlow { field: &'static str, reason: String },
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("unknown flow class {0:?}")]
    UnknownClass(String),
    #[error("unknown label source {0:?}")]
    UnknownLabelSource(String),
    #[error("reject reason given for a {0} flow")]
    ReasonWithoutReject(FlowClass),
}

/// One unidirectional flow as exported by a router.
///
/// `bytes` counts layer-3 octets (IP header included), the same quantity
/// NetFlow reports as `dOctets`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowRecord {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: u8,
    pub start_ms: i64,
    pub end_ms: i64,
    pub packets: u64,
    pub bytes: u64,
    pub tcp_flags: u8,
}

impl FlowRecord {
    /// A TCP flow towards port 25 with zeroed timing and flags. Handy for
    /// tests and probes; callers fill in the rest with struct update syntax.
    pub fn smtp(src_ip: Ipv4Addr, dst_ip: Ipv4Addr, packets: u64, bytes: u64) -> Self {
        FlowRecord {
            src_ip,
            dst_ip,
            src_port: 1024,
            dst_port: SMTP_PORT,
            protocol: PROTO_TCP,
            start_ms: 0,
            end_ms: 0,
            packets,
            bytes,
            tcp_flags: 0,
        }
    }

    pub fn duration_ms(&self) -> i64 {
        self.end_ms - self.start_ms
    }

    pub fn is_smtp(&self) -> bool {
        self.protocol == PROTO_TCP && self.dst_port == SMTP_PORT
    }
}

/// Checks every [`FlowRecord`] invariant and hands the record back unchanged.
pub fn validate_flow(raw: FlowRecord) -> Result<FlowRecord, ModelError> {
    if raw.packets < 1 {
        return Err(ModelError::InvalidFlow {
            field: "packets",
            reason: "must be at least 1".into(),
        });
    }
    if raw.bytes < 1 {
        return Err(ModelError::InvalidFlow {
            field: "bytes",
            reason: "must be at least 1".into(),
        });
    }
    if raw.bytes < raw.packets {
        return Err(ModelError::InvalidFlow {
            field: "bytes",
            reason: "bytes < packets".into(),
        });
    }
    if raw.end_ms < raw.start_ms {
        return Err(ModelError::InvalidFlow {
            field: "end_ms",
            reason: "before start".into(),
        });
    }
    Ok(raw)
}

/// Average packet size of a flow in octets.
///
/// Comparisons against [`Thresholds::bpp_bound`] use this unrounded value.
pub fn bytes_per_packet(flow: &FlowRecord) -> f64 {
    flow.bytes as f64 / flow.packets as f64
}

/// The server's decision on a connection, as visible at the flow level.
///
/// The derived ordering `Failed < Rejected < Accepted` follows the phases of
/// mail reception: each later phase moves more bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowClass {
    Failed,
    Rejected,
    Accepted,
}

impl FlowClass {
    pub const ALL: [FlowClass; 3] = [FlowClass::Failed, FlowClass::Rejected, FlowClass::Accepted];

    /// Dense index, usable for per-class arrays.
    pub fn index(self) -> usize {
        match self {
            FlowClass::Failed => 0,
            FlowClass::Rejected => 1,
            FlowClass::Accepted => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlowClass::Failed => "failed",
            FlowClass::Rejected => "rejected",
            FlowClass::Accepted => "accepted",
        }
    }
}

impl fmt::Display for FlowClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FlowClass {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "failed" => Ok(FlowClass::Failed),
            "rejected" => Ok(FlowClass::Rejected),
            "accepted" => Ok(FlowClass::Accepted),
            _ => Err(ModelError::UnknownClass(s.to_string())),
        }
    }
}

/// Per-feature class boundaries.
///
/// Bytes use half-open ranges: `< byte_lo` failed, `[byte_lo, byte_hi)`
/// rejected, `>= byte_hi` accepted. Packets use a closed rejected range:
/// `< pkt_lo` failed, `[pkt_lo, pkt_hi]` rejected, `> pkt_hi` accepted.
/// Bytes per packet only separate `< bpp_bound` from `>= bpp_bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub byte_lo: u64,
    pub byte_hi: u64,
    pub pkt_lo: u64,
    pub pkt_hi: u64,
    pub bpp_bound: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            byte_lo: 300,
            byte_hi: 1500,
            pkt_lo: 5,
            pkt_hi: 10,
            bpp_bound: 100.0,
        }
    }
}

impl Thresholds {
    pub fn new(
        byte_lo: u64,
        byte_hi: u64,
        pkt_lo: u64,
        pkt_hi: u64,
        bpp_bound: f64,
    ) -> Result<Self, ModelError> {
        Thresholds {
            byte_lo,
            byte_hi,
            pkt_lo,
            pkt_hi,
            bpp_bound,
        }
        .validate()
    }

    pub fn validate(self) -> Result<Self, ModelError> {
        if self.byte_lo == 0 || self.pkt_lo == 0 {
            return Err(ModelError::InvalidThresholds(
                "byte_lo and pkt_lo must be positive".into(),
            ));
        }
        if !(self.bpp_bound.is_finite() && self.bpp_bound > 0.0) {
            return Err(ModelError::InvalidThresholds(
                "bpp_bound must be a positive number".into(),
            ));
        }
        if self.byte_lo >= self.byte_hi {
            return Err(ModelError::InvalidThresholds(format!(
                "byte_lo ({}) must be below byte_hi ({})",
                self.byte_lo, self.byte_hi
            )));
        }
        if self.pkt_lo >= self.pkt_hi {
            return Err(ModelError::InvalidThresholds(format!(
                "pkt_lo ({}) must be below pkt_hi ({})",
                self.pkt_lo, self.pkt_hi
            )));
        }
        Ok(self)
    }
}

/// Pre-filter reject reasons a mail server records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    BlacklistDnsbl,
    UserUnknown,
    InvalidDomain,
    HeloNoFqdn,
    RelayDenied,
    Other,
}

impl RejectReason {
    pub const ALL: [RejectReason; 6] = [
        RejectReason::BlacklistDnsbl,
        RejectReason::UserUnknown,
        RejectReason::InvalidDomain,
        RejectReason::HeloNoFqdn,
        RejectReason::RelayDenied,
        RejectReason::Other,
    ];

    /// Reason code used in log lines and CSV files.
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::BlacklistDnsbl => "DNSBL",
            RejectReason::UserUnknown => "USER_UNKNOWN",
            RejectReason::InvalidDomain => "INVALID_DOMAIN",
            RejectReason::HeloNoFqdn => "HELO_NO_FQDN",
            RejectReason::RelayDenied => "RELAY_DENIED",
            RejectReason::Other => "OTHER",
        }
    }

    /// Maps a reason code back to a reason. Unrecognised codes become `Other`.
    pub fn from_code(code: &str) -> Self {
        match code {
            "DNSBL" => RejectReason::BlacklistDnsbl,
            "USER_UNKNOWN" => RejectReason::UserUnknown,
            "INVALID_DOMAIN" => RejectReason::InvalidDomain,
            "HELO_NO_FQDN" => RejectReason::HeloNoFqdn,
            "RELAY_DENIED" => RejectReason::RelayDenied,
            _ => RejectReason::Other,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Where a label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    ServerLog,
    ListMembership,
    Synthetic,
}

impl LabelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::ServerLog => "server_log",
            LabelSource::ListMembership => "list",
            LabelSource::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelSource {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "server_log" => Ok(LabelSource::ServerLog),
            "list" => Ok(LabelSource::ListMembership),
            "synthetic" => Ok(LabelSource::Synthetic),
            _ => Err(ModelError::UnknownLabelSource(s.to_string())),
        }
    }
}

/// A flow joined with a ground-truth (or reference) label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledFlow {
    pub flow: FlowRecord,
    pub label: FlowClass,
    pub reason: Option<RejectReason>,
    pub label_source: LabelSource,
}

impl LabeledFlow {
    /// Builds a label, refusing a reject reason on a non-rejected flow.
    pub fn new(
        flow: FlowRecord,
        label: FlowClass,
        reason: Option<RejectReason>,
        label_source: LabelSource,
    ) -> Result<Self, ModelError> {
        if reason.is_some() && label != FlowClass::Rejected {
            return Err(ModelError::ReasonWithoutReject(label));
        }
        Ok(LabeledFlow {
            flow,
            label,
            reason,
            label_source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flow(packets: u64, bytes: u64, start_ms: i64, end_ms: i64) -> FlowRecord {
        FlowRecord {
            start_ms,
            end_ms,
            ..FlowRecord::smtp(
                Ipv4Addr::new(10, 0, 0, 1),
                Ipv4Addr::new(10, 0, 0, 2),
                packets,
                bytes,
            )
        }
    }

    #[test]
    fn valid_flow_passes() {
        let f = flow(3, 250, 0, 10);
        assert_eq!(validate_flow(f), Ok(f));
    }

    #[test]
    fn bytes_below_packets_rejected() {
        let err = validate_flow(flow(5, 3, 0, 0)).unwrap_err();
        assert_eq!(
            err,
            ModelError::InvalidFlow {
                field: "bytes",
                reason: "bytes < packets".into()
            }
        );
    }

    #[test]
    fn end_before_start_rejected() {
        let err = validate_flow(flow(1, 40, 100, 50)).unwrap_err();
        assert_eq!(
            err,
            ModelError::InvalidFlow {
                field: "end_ms",
                reason: "before start".into()
            }
        );
    }

    #[test]
    fn zero_packets_rejected() {
        assert!(matches!(
            validate_flow(flow(0, 40, 0, 0)),
            Err(ModelError::InvalidFlow {
                field: "packets",
                ..
            })
        ));
    }

    #[test]
    fn bpp_examples() {
        assert!((bytes_per_packet(&flow(7, 600, 0, 0)) - 85.714_285_714).abs() < 1e-6);
        assert_eq!(bytes_per_packet(&flow(1, 1500, 0, 0)), 1500.0);
        assert_eq!(bytes_per_packet(&flow(1, 40, 0, 0)), 40.0);
    }

    #[test]
    fn default_thresholds_are_valid() {
        assert!(Thresholds::default().validate().is_ok());
        assert!(Thresholds::new(300, 300, 5, 10, 100.0).is_err());
        assert!(Thresholds::new(300, 1500, 10, 10, 100.0).is_err());
        assert!(Thresholds::new(0, 1500, 5, 10, 100.0).is_err());
        assert!(Thresholds::new(300, 1500, 5, 10, 0.0).is_err());
    }

    #[test]
    fn reason_codes_roundtrip_and_unknown_is_other() {
        for r in RejectReason::ALL {
            assert_eq!(RejectReason::from_code(r.code()), r);
        }
        assert_eq!(RejectReason::from_code("GREYLISTED"), RejectReason::Other);
    }

    #[test]
    fn labeled_flow_reason_only_on_reject() {
        let f = flow(1, 40, 0, 0);
        assert!(LabeledFlow::new(
            f,
            FlowClass::Accepted,
            Some(RejectReason::Other),
            LabelSource::Synthetic
        )
        .is_err());
        assert!(LabeledFlow::new(
            f,
            FlowClass::Rejected,
            Some(RejectReason::Other),
            LabelSource::Synthetic
        )
        .is_ok());
    }

    proptest! {
        #[test]
        fn validate_is_idempotent(packets in 0u64..50, bytes in 0u64..5000, start in -1000i64..1000, len in -50i64..1000) {
            let f = flow(packets, bytes, start, start + len);
            let once = validate_flow(f);
            if let Ok(v) = once {
                prop_assert_eq!(validate_flow(v), Ok(v));
            }
        }

        #[test]
        fn bpp_bounded_by_bytes(packets in 1u64..1000, extra in 0u64..100_000) {
            let f = flow(packets, packets + extra, 0, 0);
            let f = validate_flow(f).unwrap();
            let bpp = bytes_per_packet(&f);
            prop_assert!(bpp >= 1.0 && bpp <= f.bytes as f64);
        }
    }
}
