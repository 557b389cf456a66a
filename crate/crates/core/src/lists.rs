//! Black/whitelist membership and sender reputation.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::net::{Ipv4Addr, SocketAddr, ToSocketAddrs};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use ipnet::Ipv4Net;
use serde::Serialize;
use thiserror::Error;

use crate::model::{FlowClass, FlowRecord, LabelSource, LabeledFlow};

#[derive(Debug, Error)]
pub enum ListError {
    #[error("line {line}: malformed entry {text:?}")]
    MalformedEntry { line: usize, text: String },
    #[error("DNSBL zone must not be empty")]
    EmptyZone,
    #[error("DNSBL lookup for {0} timed out")]
    Timeout(Ipv4Addr),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ListKind {
    Black,
    White,
}

/// A set of IPv4 prefixes.
///
/// Prefixes are stored per length, so a lookup probes at most 33 hash sets.
#[derive(Debug, Clone)]
pub struct IpList {
    kind: ListKind,
    by_len: Vec<HashSet<u32>>,
    len: usize,
}

impl IpList {
    pub fn new(kind: ListKind) -> Self {
        IpList {
            kind,
            by_len: vec![HashSet::new(); 33],
            len: 0,
        }
    }

    pub fn kind(&self) -> ListKind {
        self.kind
    }

    /// Adds a prefix; host bits are cleared. Returns false for a duplicate.
    pub fn insert(&mut self, net: Ipv4Net) -> bool {
        let net = net.trunc();
        let added = self.by_len[net.prefix_len() as usize].insert(u32::from(net.network()));
        if added {
            self.len += 1;
        }
        added
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The longest listed prefix covering `ip`, if any.
    pub fn longest_match(&self, ip: Ipv4Addr) -> Option<Ipv4Net> {
        let addr = u32::from(ip);
        (0..=32u8).rev().find_map(|len| {
            let mask = if len == 0 { 0 } else { u32::MAX << (32 - len) };
            let network = addr & mask;
            self.by_len[len as usize]
                .contains(&network)
                .then(|| Ipv4Net::new(Ipv4Addr::from(network), len).expect("len <= 32"))
        })
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        self.longest_match(ip).is_some()
    }

    pub fn prefixes(&self) -> Vec<Ipv4Net> {
        let mut out: Vec<Ipv4Net> = self
            .by_len
            .iter()
            .enumerate()
            .flat_map(|(len, nets)| {
                nets.iter()
                    .map(move |&n| Ipv4Net::new(Ipv4Addr::from(n), len as u8).expect("len <= 32"))
            })
            .collect();
        out.sort();
        out
    }
}

fn parse_entry(text: &str) -> Option<Ipv4Net> {
    if text.contains('/') {
        text.parse::<Ipv4Net>().ok()
    } else {
        text.parse::<Ipv4Addr>().ok().map(Ipv4Net::from)
    }
}

/// Reads one CIDR prefix or address per line. `#` starts a comment; blank
/// lines are skipped; a bare address is a /32.
pub fn load_list<R: BufRead>(input: R, kind: ListKind) -> Result<IpList, ListError> {
    let mut list = IpList::new(kind);
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let text = line.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let net = parse_entry(text).ok_or_else(|| ListError::MalformedEntry {
            line: i + 1,
            text: text.to_string(),
        })?;
        list.insert(net);
    }
    Ok(list)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ListVerdict {
    Blacklisted,
    Whitelisted,
    Both,
    Unknown,
}

pub fn verdict(ip: Ipv4Addr, black: &IpList, white: &IpList) -> ListVerdict {
    match (black.contains(ip), white.contains(ip)) {
        (true, true) => ListVerdict::Both,
        (true, false) => ListVerdict::Blacklisted,
        (false, true) => ListVerdict::Whitelisted,
        (false, false) => ListVerdict::Unknown,
    }
}

/// DNSBL query name: the address octets reversed, then the zone.
pub fn dnsbl_query_name(ip: Ipv4Addr, zone: &str) -> Result<String, ListError> {
    let zone = zone.trim_matches('.');
    if zone.is_empty() {
        return Err(ListError::EmptyZone);
    }
    let [a, b, c, d] = ip.octets();
    Ok(format!("{d}.{c}.{b}.{a}.{zone}"))
}

/// Result of labeling flows by sender list membership.
#[derive(Debug, Default)]
pub struct ListLabeling {
    pub labeled: Vec<LabeledFlow>,
    /// Flows whose sender is on neither list.
    pub unknown: usize,
    /// Flows whose sender is on both lists; left out of the labeled set.
    pub conflicting: usize,
}

/// Blacklisted senders are labeled rejected, whitelisted ones accepted.
pub fn label_by_lists<'a, I>(flows: I, black: &IpList, white: &IpList) -> ListLabeling
where
    I: IntoIterator<Item = &'a FlowRecord>,
{
    let mut out = ListLabeling::default();
    for &flow in flows {
        let label = match verdict(flow.src_ip, black, white) {
            ListVerdict::Blacklisted => FlowClass::Rejected,
            ListVerdict::Whitelisted => FlowClass::Accepted,
            ListVerdict::Both => {
                out.conflicting += 1;
                continue;
            }
            ListVerdict::Unknown => {
                out.unknown += 1;
                continue;
            }
        };
        out.labeled.push(LabeledFlow {
            flow,
            label,
            reason: None,
            label_source: LabelSource::ListMembership,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SenderReputation {
    pub sender: Ipv4Addr,
    pub accepted: u64,
    pub rejected: u64,
    pub failed: u64,
    /// Accepted share of all flows from the sender.
    pub score: f64,
}

/// One reputation per sender, lowest score first (ties by address).
pub fn reputations(labels: &[LabeledFlow]) -> Vec<SenderReputation> {
    let mut counts: BTreeMap<Ipv4Addr, [u64; 3]> = BTreeMap::new();
    for lf in labels {
        counts.entry(lf.flow.src_ip).or_default()[lf.label.index()] += 1;
    }
    let mut out: Vec<SenderReputation> = counts
        .into_iter()
        .map(|(sender, c)| {
            let [failed, rejected, accepted] = c;
            SenderReputation {
                sender,
                accepted,
                rejected,
                failed,
                score: accepted as f64 / (accepted + rejected + failed) as f64,
            }
        })
        .collect();
    out.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.sender.cmp(&b.sender)));
    out
}

/// Live DNSBL lookups through the system resolver.
///
/// A sender is listed when its query name resolves to any address. Lookups
/// run on worker threads, at most `max_in_flight` at a time, each bounded by
/// `timeout`. A timed-out resolver thread is abandoned, not cancelled.
#[derive(Debug, Clone)]
pub struct DnsblClient {
    pub zone: String,
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl DnsblClient {
    pub fn new(zone: impl Into<String>) -> Self {
        DnsblClient {
            zone: zone.into(),
            max_in_flight: 16,
            timeout: Duration::from_secs(2),
        }
    }

    pub fn lookup_many(&self, ips: &[Ipv4Addr]) -> Vec<Result<bool, ListError>> {
        let mut results = Vec::with_capacity(ips.len());
        for chunk in ips.chunks(self.max_in_flight.max(1)) {
            let pending: Vec<_> = chunk
                .iter()
                .map(|&ip| {
                    let name = dnsbl_query_name(ip, &self.zone);
                    let (tx, rx) = mpsc::channel();
                    if let Ok(name) = name.as_ref() {
                        let query = format!("{name}:0");
                        thread::spawn(move || {
                            let listed = query
                                .to_socket_addrs()
                                .map(|mut addrs| addrs.any(|a: SocketAddr| a.is_ipv4()))
                                .unwrap_or(false);
                            let _ = tx.send(listed);
                        });
                    }
                    (ip, name, rx)
                })
                .collect();
            for (ip, name, rx) in pending {
                results.push(match name {
                    Err(e) => Err(e),
                    Ok(_) => rx
                        .recv_timeout(self.timeout)
                        .map_err(|_| ListError::Timeout(ip)),
                });
            }
        }
        results
    }
}
