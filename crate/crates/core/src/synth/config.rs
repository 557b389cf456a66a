use std::net::Ipv4Addr;
use std::str::FromStr;

use crate::model::{FlowClass, RejectReason};

use super::SynthError;

/// Failed connection attempts: `packets` uniform in 1..=4 with 40..=74 octets
/// each, except for a `tail` share of longer attempts (5..=10 packets,
/// at least 300 octets, under 100 octets per packet).
#[derive(Debug, Clone, PartialEq)]
pub struct FailedModel {
    pub tail: f64,
}

/// Rejected sessions: 300..=1499 octets, with a `low_tail` share of very
/// short sessions under 300 octets and a `high_tail` share of 1500 octets or
/// more.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedModel {
    pub low_tail: f64,
    pub high_tail: f64,
}

/// Accepted sessions: log-normal message size plus per-packet overhead, with
/// packets `base_packets + ceil(message / mss)`. The message distribution is
/// solved so that the flow size has median `median_bytes` and a share
/// `share_below` under `below_bytes`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedModel {
    pub median_bytes: f64,
    pub below_bytes: f64,
    pub share_below: f64,
    pub overhead_per_packet: u64,
    pub mss: u64,
    pub base_packets: u64,
}

impl Default for FailedModel {
    fn default() -> Self {
        FailedModel { tail: 0.05 }
    }
}

impl Default for RejectedModel {
    fn default() -> Self {
        RejectedModel {
            low_tail: 0.03,
            high_tail: 0.01,
        }
    }
}

impl Default for AcceptedModel {
    fn default() -> Self {
        AcceptedModel {
            median_bytes: 5000.0,
            below_bytes: 1500.0,
            share_below: 0.05,
            overhead_per_packet: 78,
            mss: 1460,
            base_packets: 4,
        }
    }
}

/// Daily activity modulation: the rate of class `c` is proportional to
/// `1 + amplitude * cos(2π (hour - phase_hours[c]) / 24)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diurnal {
    pub amplitude: f64,
    pub phase_hours: [f64; 3],
}

/// Who sends the traffic. Each session's sender is a spammer with
/// probability `spam_share[class]`, else a legitimate sender. Spammers are
/// blacklisted with probability `blacklist_coverage`, legitimate senders
/// whitelisted with probability `whitelist_coverage`.
#[derive(Debug, Clone, PartialEq)]
pub struct SenderPopulation {
    pub spam_senders: u32,
    pub legit_senders: u32,
    pub spam_share: [f64; 3],
    pub blacklist_coverage: f64,
    pub whitelist_coverage: f64,
}

impl Default for SenderPopulation {
    fn default() -> Self {
        SenderPopulation {
            spam_senders: 5000,
            legit_senders: 1000,
            spam_share: [1.0, 0.989, 0.31],
            blacklist_coverage: 0.9,
            whitelist_coverage: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_sessions: usize,
    pub p_connect_fail: f64,
    pub p_reject_given_connected: f64,
    /// Indexed by [`RejectReason::index`].
    pub reason_weights: [f64; 6],
    pub failed_model: FailedModel,
    pub rejected_model: RejectedModel,
    pub accepted_model: AcceptedModel,
    pub diurnal: Option<Diurnal>,
    pub servers: Vec<(Ipv4Addr, f64)>,
    pub senders: SenderPopulation,
    pub start_ms: i64,
    pub span_ms: i64,
    /// Offset of a session's log timestamp from its flow start.
    pub log_delay_ms: i64,
}

pub const DEFAULT_REASON_WEIGHTS: [f64; 6] = [0.375, 0.156, 0.183, 0.174, 0.002, 0.110];

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            n_sessions: 100_000,
            p_connect_fail: 0.05,
            p_reject_given_connected: 0.783,
            reason_weights: DEFAULT_REASON_WEIGHTS,
            failed_model: FailedModel::default(),
            rejected_model: RejectedModel::default(),
            accepted_model: AcceptedModel::default(),
            diurnal: None,
            servers: default_servers(),
            senders: SenderPopulation::default(),
            // 2010-01-04 00:00 UTC
            start_ms: 1_262_563_200_000,
            span_ms: 7 * 86_400_000,
            log_delay_ms: 0,
        }
    }
}

/// Ten servers 10.0.0.1 .. 10.0.0.10 with activity weights 1/k.
pub fn default_servers() -> Vec<(Ipv4Addr, f64)> {
    (1..=10u8)
        .map(|k| (Ipv4Addr::new(10, 0, 0, k), 1.0 / k as f64))
        .collect()
}

fn check_prob(field: &str, p: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SynthError::InvalidConfig(field.to_string()))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |f: &str| Err(SynthError::InvalidConfig(f.to_string()));
        check_prob("p_connect_fail", self.p_connect_fail)?;
        check_prob("p_reject_given_connected", self.p_reject_given_connected)?;
        let weights_ok = self.reason_weights.iter().all(|w| *w >= 0.0)
            && (self.reason_weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if !weights_ok {
            return bad("reason_weights");
        }
        check_prob("failed.tail", self.failed_model.tail)?;
        check_prob("rejected.low_tail", self.rejected_model.low_tail)?;
        check_prob("rejected.high_tail", self.rejected_model.high_tail)?;
        if self.rejected_model.low_tail + self.rejected_model.high_tail > 1.0 {
            return bad("rejected.high_tail");
        }
        let a = &self.accepted_model;
        if !(a.share_below > 0.0 && a.share_below < 0.5) {
            return bad("accepted.share_below");
        }
        if !(a.below_bytes > 0.0 && a.median_bytes > a.below_bytes) {
            return bad("accepted.median_bytes");
        }
        if a.mss == 0 {
            return bad("accepted.mss");
        }
        if let Some(d) = &self.diurnal {
            if !(0.0..1.0).contains(&d.amplitude) {
                return bad("diurnal.amplitude");
            }
            if d.phase_hours.iter().any(|p| !p.is_finite()) {
                return bad("diurnal.phase");
            }
        }
        if self.servers.is_empty()
            || !self.servers.iter().all(|(_, w)| *w >= 0.0 && w.is_finite())
            || self.servers.iter().all(|(_, w)| *w == 0.0)
        {
            return bad("servers");
        }
        let s = &self.senders;
        if s.spam_senders == 0 || s.legit_senders == 0 {
            return bad("senders");
        }
        for (c, p) in FlowClass::ALL.iter().zip(s.spam_share) {
            check_prob(&format!("spam_share.{}", c.as_str()), p)?;
        }
        check_prob("blacklist_coverage", s.blacklist_coverage)?;
        check_prob("whitelist_coverage", s.whitelist_coverage)?;
        if self.span_ms <= 0 {
            return bad("span_ms");
        }
        if self.log_delay_ms.abs() > 1000 {
            return bad("log_delay_ms");
        }
        Ok(())
    }

    /// Probability of each true class, indexed by [`FlowClass::index`].
    pub fn class_probabilities(&self) -> [f64; 3] {
        let connected = 1.0 - self.p_connect_fail;
        let mut p = [0.0; 3];
        p[FlowClass::Failed.index()] = self.p_connect_fail;
        p[FlowClass::Rejected.index()] = connected * self.p_reject_given_connected;
        p[FlowClass::Accepted.index()] = connected * (1.0 - self.p_reject_given_connected);
        p
    }

    /// Per-class share of flows whose byte count falls outside the class's
    /// default byte range. Every such flow is built so that the full
    /// classifier also misreads it, and every other flow is classified
    /// correctly.
    pub fn violation_rates(&self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[FlowClass::Failed.index()] = self.failed_model.tail;
        v[FlowClass::Rejected.index()] =
            self.rejected_model.low_tail + self.rejected_model.high_tail;
        v[FlowClass::Accepted.index()] = self.accepted_model.share_below;
        v
    }

    /// Accuracy the default-threshold classifier is expected to reach.
    pub fn expected_accuracy(&self) -> f64 {
        let p = self.class_probabilities();
        let v = self.violation_rates();
        1.0 - (0..3).map(|i| p[i] * v[i]).sum::<f64>()
    }

    /// Expected share of flows under 1500 octets among flows from
    /// (blacklisted, whitelisted) senders.
    pub fn expected_list_cdfs(&self) -> (f64, f64) {
        let p = self.class_probabilities();
        let below = self.share_below_1500();
        let spam = self.senders.spam_share;
        let mix = |weight: &dyn Fn(usize) -> f64| {
            let num: f64 = (0..3).map(|i| p[i] * weight(i) * below[i]).sum();
            let den: f64 = (0..3).map(|i| p[i] * weight(i)).sum();
            num / den
        };
        (mix(&|i| spam[i]), mix(&|i| 1.0 - spam[i]))
    }

    /// Share of each class's flows under 1500 octets implied by the size
    /// models.
    pub fn share_below_1500(&self) -> [f64; 3] {
        let mut b = [0.0; 3];
        // failed flows, tails included, stay under 1000 octets
        b[FlowClass::Failed.index()] = 1.0;
        b[FlowClass::Rejected.index()] = 1.0 - self.rejected_model.high_tail;
        b[FlowClass::Accepted.index()] = self.accepted_model.share_below(1500.0);
        b
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn from_kv(text: &str) -> Result<SynthConfig, SynthError> {
        let mut cfg = SynthConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| SynthError::ConfigSyntax {
                line: i + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected key = value".to_string()))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
        }
        let class_slot = |name: &str| -> Result<usize, String> {
            name.parse::<FlowClass>()
                .map(|c| c.index())
                .map_err(|_| format!("unknown class {name:?}"))
        };
        match key {
            "seed" => self.seed = num(key, value)?,
            "n_sessions" => self.n_sessions = num(key, value)?,
            "p_connect_fail" => self.p_connect_fail = num(key, value)?,
            "p_reject_given_connected" => self.p_reject_given_connected = num(key, value)?,
            "failed.tail" => self.failed_model.tail = num(key, value)?,
            "rejected.low_tail" => self.rejected_model.low_tail = num(key, value)?,
            "rejected.high_tail" => self.rejected_model.high_tail = num(key, value)?,
            "accepted.median_bytes" => self.accepted_model.median_bytes = num(key, value)?,
            "accepted.below_bytes" => self.accepted_model.below_bytes = num(key, value)?,
            "accepted.share_below" => self.accepted_model.share_below = num(key, value)?,
            "accepted.overhead_per_packet" => {
                self.accepted_model.overhead_per_packet = num(key, value)?
            }
            "accepted.mss" => self.accepted_model.mss = num(key, value)?,
            "accepted.base_packets" => self.accepted_model.base_packets = num(key, value)?,
            "diurnal.amplitude" => {
                let amplitude = num(key, value)?;
                self.diurnal
                    .get_or_insert(Diurnal {
                        amplitude,
                        phase_hours: [0.0; 3],
                    })
                    .amplitude = amplitude;
            }
            "servers" => {
                self.servers = value
                    .split(',')
                    .map(|item| {
                        let item = item.trim();
                        let (ip, w) = item.split_once(':').unwrap_or((item, "1"));
                        Ok((num(key, ip.trim())?, num(key, w.trim())?))
                    })
                    .collect::<Result<_, String>>()?;
            }
            "spam_senders" => self.senders.spam_senders = num(key, value)?,
            "legit_senders" => self.senders.legit_senders = num(key, value)?,
            "blacklist_coverage" => self.senders.blacklist_coverage = num(key, value)?,
            "whitelist_coverage" => self.senders.whitelist_coverage = num(key, value)?,
            "start_ms" => self.start_ms = num(key, value)?,
            "span_ms" => self.span_ms = num(key, value)?,
            "log_delay_ms" => self.log_delay_ms = num(key, value)?,
            _ => {
                if let Some(code) = key.strip_prefix("reason.") {
                    let r = RejectReason::ALL
                        .into_iter()
                        .find(|r| r.code() == code)
                        .ok_or_else(|| format!("unknown reason {code:?}"))?;
                    self.reason_weights[r.index()] = num(key, value)?;
                } else if let Some(c) = key.strip_prefix("diurnal.phase.") {
                    let slot = class_slot(c)?;
                    let phase = num(key, value)?;
                    self.diurnal
                        .get_or_insert(Diurnal {
                            amplitude: 0.0,
                            phase_hours: [0.0; 3],
                        })
                        .phase_hours[slot] = phase;
                } else if let Some(c) = key.strip_prefix("spam_share.") {
                    self.senders.spam_share[class_slot(c)?] = num(key, value)?;
                } else {
                    return Err(format!("unknown key {key:?}"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SynthConfig::default().validate().unwrap();
    }

    #[test]
    fn expected_accuracy_from_violation_mixture() {
        let cfg = SynthConfig::default();
        let p = cfg.class_probabilities();
        let by_hand = 1.0 - (0.05 * p[0] + 0.04 * p[1] + 0.05 * p[2]);
        assert!((cfg.expected_accuracy() - by_hand).abs() < 1e-12);
        assert!(cfg.expected_accuracy() > 0.94);
    }

    #[test]
    fn default_population_hits_list_targets() {
        let (black, white) = SynthConfig::default().expected_list_cdfs();
        assert!((black - 0.92).abs() < 0.005, "{black}");
        assert!((white - 0.10).abs() < 0.005, "{white}");
    }

    #[test]
    fn invalid_fields_are_named() {
        let mut cfg = SynthConfig::default();
        cfg.reason_weights[0] = 0.5;
        assert_eq!(
            cfg.validate(),
            Err(SynthError::InvalidConfig("reason_weights".into()))
        );
        let cfg = SynthConfig {
            p_connect_fail: 1.5,
            ..Default::default()
        };
        assert_eq!(
            cfg.validate(),
            Err(SynthError::InvalidConfig("p_connect_fail".into()))
        );
        let cfg = SynthConfig {
            diurnal: Some(Diurnal {
                amplitude: 1.0,
                phase_hours: [0.0; 3],
            }),
            ..Default::default()
        };
        assert_eq!(
            cfg.validate(),
            Err(SynthError::InvalidConfig("diurnal.amplitude".into()))
        );
    }

    #[test]
    fn kv_overrides() {
        let cfg = SynthConfig::from_kv(
            "# test\nseed = 7\nn_sessions=10\nservers = 10.1.1.1:2, 10.1.1.2\n\
             diurnal.amplitude = 0.5\ndiurnal.phase.rejected = 20\nspam_share.accepted = 0.2\n\
             reason.DNSBL = 0.376\nreason.OTHER = 0.109\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.n_sessions, 10);
        assert_eq!(
            cfg.servers,
            vec![
                (Ipv4Addr::new(10, 1, 1, 1), 2.0),
                (Ipv4Addr::new(10, 1, 1, 2), 1.0)
            ]
        );
        assert_eq!(cfg.diurnal.as_ref().unwrap().phase_hours, [0.0, 20.0, 0.0]);
        assert_eq!(cfg.senders.spam_share[2], 0.2);
        assert_eq!(cfg.reason_weights[0], 0.376);
    }

    #[test]
    fn kv_errors_carry_line_numbers() {
        assert!(matches!(
            SynthConfig::from_kv("seed = 1\nbogus = 2\n"),
            Err(SynthError::ConfigSyntax { line: 2, .. })
        ));
        assert!(matches!(
            SynthConfig::from_kv("seed\n"),
            Err(SynthError::ConfigSyntax { line: 1, .. })
        ));
        assert!(matches!(
            SynthConfig::from_kv("p_connect_fail = 2\n"),
            Err(SynthError::InvalidConfig(_))
        ));
    }
}
