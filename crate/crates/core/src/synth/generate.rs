use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::io::{self, Write};
use std::net::Ipv4Addr;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use super::{SizeSampler, SynthConfig, SynthError};
use crate::classifier::{classify_feature, Feature};
use crate::logcorr::{LogEntry, LogOutcome};
use crate::model::{
    FlowClass, FlowRecord, LabelSource, LabeledFlow, RejectReason, Thresholds, PROTO_TCP, SMTP_PORT,
};

const DAY_MS: i64 = 86_400_000;
const HOUR_MS: f64 = 3_600_000.0;
/// First address of the spam sender pool (198.18.0.0/15).
const SPAM_BASE: u32 = 0xC612_0000;
const SPAM_POOL: u32 = 1 << 17;
/// First address of the legitimate sender pool (100.64.0.0/10).
const LEGIT_BASE: u32 = 0x6440_0000;
const LEGIT_POOL: u32 = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SenderKind {
    Spam,
    Legit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSession {
    pub flow: FlowRecord,
    pub log: Option<LogEntry>,
    pub class: FlowClass,
    pub reason: Option<RejectReason>,
    pub sender: SenderKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    /// Sorted by flow start time, then source address.
    pub sessions: Vec<SynthSession>,
    pub blacklist: Vec<Ipv4Addr>,
    pub whitelist: Vec<Ipv4Addr>,
}

impl SynthOutput {
    pub fn flows(&self) -> Vec<FlowRecord> {
        self.sessions.iter().map(|s| s.flow).collect()
    }

    pub fn log_entries(&self) -> Vec<LogEntry> {
        let mut log: Vec<LogEntry> = self.sessions.iter().filter_map(|s| s.log).collect();
        log.sort_by_key(|e| e.timestamp_ms);
        log
    }

    pub fn labeled(&self) -> Vec<LabeledFlow> {
        self.sessions
            .iter()
            .map(|s| LabeledFlow {
                flow: s.flow,
                label: s.class,
                reason: s.reason,
                label_source: LabelSource::Synthetic,
            })
            .collect()
    }
}

fn draw_class<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> FlowClass {
    if rng.random_bool(cfg.p_connect_fail) {
        FlowClass::Failed
    } else if rng.random_bool(cfg.p_reject_given_connected) {
        FlowClass::Rejected
    } else {
        FlowClass::Accepted
    }
}

fn draw_start<R: Rng>(rng: &mut R, cfg: &SynthConfig, class: FlowClass) -> i64 {
    loop {
        let t = cfg.start_ms + rng.random_range(0..cfg.span_ms);
        let Some(d) = &cfg.diurnal else { return t };
        let hour = t.rem_euclid(DAY_MS) as f64 / HOUR_MS;
        let rate =
            1.0 + d.amplitude * (2.0 * PI * (hour - d.phase_hours[class.index()]) / 24.0).cos();
        if rng.random::<f64>() * (1.0 + d.amplitude) < rate {
            return t;
        }
    }
}

/// Generates `cfg.n_sessions` sessions. Equal configurations give equal
/// output.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let pop = &cfg.senders;
    if pop.spam_senders > SPAM_POOL || pop.legit_senders > LEGIT_POOL {
        return Err(SynthError::InvalidConfig("senders".into()));
    }
    let sizes = SizeSampler::new(&cfg.failed_model, &cfg.rejected_model, &cfg.accepted_model)?;
    let reasons = WeightedIndex::new(cfg.reason_weights)
        .map_err(|_| SynthError::InvalidConfig("reason_weights".into()))?;
    let servers = WeightedIndex::new(cfg.servers.iter().map(|s| s.1))
        .map_err(|_| SynthError::InvalidConfig("servers".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let spam_ip = |i: u32| Ipv4Addr::from(SPAM_BASE + i);
    let legit_ip = |i: u32| Ipv4Addr::from(LEGIT_BASE + i);
    let blacklist: Vec<Ipv4Addr> = (0..pop.spam_senders)
        .filter(|_| rng.random_bool(pop.blacklist_coverage))
        .map(spam_ip)
        .collect();
    let whitelist: Vec<Ipv4Addr> = (0..pop.legit_senders)
        .filter(|_| rng.random_bool(pop.whitelist_coverage))
        .map(legit_ip)
        .collect();

    let mut taken: HashSet<(Ipv4Addr, Ipv4Addr, i64)> = HashSet::with_capacity(cfg.n_sessions);
    let mut sessions = Vec::with_capacity(cfg.n_sessions);
    for _ in 0..cfg.n_sessions {
        let class = draw_class(&mut rng, cfg);
        let reason =
            (class == FlowClass::Rejected).then(|| RejectReason::ALL[reasons.sample(&mut rng)]);
        let sender = if rng.random_bool(pop.spam_share[class.index()]) {
            SenderKind::Spam
        } else {
            SenderKind::Legit
        };
        let src_ip = match sender {
            SenderKind::Spam => spam_ip(rng.random_range(0..pop.spam_senders)),
            SenderKind::Legit => legit_ip(rng.random_range(0..pop.legit_senders)),
        };
        let dst_ip = cfg.servers[servers.sample(&mut rng)].0;
        let (packets, bytes) = match class {
            FlowClass::Failed => sizes.failed(&mut rng),
            FlowClass::Rejected => sizes.rejected(&mut rng),
            FlowClass::Accepted => sizes.accepted(&mut rng),
        };
        let mut start_ms = draw_start(&mut rng, cfg, class);
        // one session per (client, server, millisecond) keeps log matching unambiguous
        while !taken.insert((src_ip, dst_ip, start_ms)) {
            start_ms += 1;
        }
        let duration_ms = match class {
            FlowClass::Failed => rng.random_range(0..=3_000),
            FlowClass::Rejected => rng.random_range(200..=10_000),
            FlowClass::Accepted => rng.random_range(500..=30_000),
        };
        let tcp_flags = match class {
            FlowClass::Failed if packets == 1 => 0x02,
            FlowClass::Failed => 0x06,
            _ => 0x1b,
        };
        let flow = FlowRecord {
            src_ip,
            dst_ip,
            src_port: rng.random_range(1024..=u16::MAX),
            dst_port: SMTP_PORT,
            protocol: PROTO_TCP,
            start_ms,
            end_ms: start_ms + duration_ms,
            packets,
            bytes,
            tcp_flags,
        };
        let log = match class {
            FlowClass::Failed => None,
            FlowClass::Rejected => Some((
                LogOutcome::Rejected(reason.expect("rejected sessions carry a reason")),
                1,
            )),
            FlowClass::Accepted => {
                let messages = if rng.random_bool(0.8) {
                    1
                } else {
                    rng.random_range(2..=5)
                };
                Some((LogOutcome::Accepted, messages))
            }
        }
        .map(|(outcome, messages)| LogEntry {
            timestamp_ms: start_ms + cfg.log_delay_ms,
            client_ip: src_ip,
            server_ip: dst_ip,
            outcome,
            messages,
        });
        sessions.push(SynthSession {
            flow,
            log,
            class,
            reason,
            sender,
        });
    }
    sessions.sort_by_key(|s| (s.flow.start_ms, s.flow.src_ip));
    Ok(SynthOutput {
        sessions,
        blacklist,
        whitelist,
    })
}

/// For each true class present in the sample, the share of its flows whose
/// Bytes vote names a different class.
pub fn class_violation_rates<'a, I>(
    sample: I,
    t: &Thresholds,
) -> Result<BTreeMap<FlowClass, f64>, SynthError>
where
    I: IntoIterator<Item = (&'a FlowRecord, FlowClass)>,
{
    let mut totals = [0u64; 3];
    let mut wrong = [0u64; 3];
    for (flow, class) in sample {
        totals[class.index()] += 1;
        if classify_feature(flow, Feature::Bytes, t) != class {
            wrong[class.index()] += 1;
        }
    }
    if totals.iter().all(|&n| n == 0) {
        return Err(SynthError::EmptyInput);
    }
    Ok(FlowClass::ALL
        .into_iter()
        .filter(|c| totals[c.index()] > 0)
        .map(|c| (c, wrong[c.index()] as f64 / totals[c.index()] as f64))
        .collect())
}

/// Ground truth as `flow_id,class,reason`, where `flow_id` is the row index
/// of the flow in the flow CSV written from the same sessions.
pub fn write_truth_csv<W: Write>(sessions: &[SynthSession], mut out: W) -> io::Result<W> {
    writeln!(out, "flow_id,class,reason")?;
    for (i, s) in sessions.iter().enumerate() {
        writeln!(
            out,
            "{},{},{}",
            i,
            s.class,
            s.reason.map_or("", |r| r.code())
        )?;
    }
    Ok(out)
}

pub fn write_log<W: Write>(entries: &[LogEntry], mut out: W) -> io::Result<W> {
    for e in entries {
        writeln!(out, "{}", e.to_line())?;
    }
    Ok(out)
}

pub fn write_list<W: Write>(ips: &[Ipv4Addr], mut out: W) -> io::Result<W> {
    for ip in ips {
        writeln!(out, "{ip}")?;
    }
    Ok(out)
}
