//! Mail-server log parsing and flow/log correlation.
//!
//! Log lines use a small canonical grammar:
//!
//! ```text
//! <epoch_ms> <client_ip> <server_ip> ACCEPT|REJECT[:<reason-code>] [msgs=<n>]
//! ```
//!
//! A flow with a matching log session takes the session outcome as its label;
//! a flow without one is a failed connection attempt.

use std::collections::HashMap;
use std::io::BufRead;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::model::{FlowClass, FlowRecord, LabelSource, LabeledFlow, RejectReason};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log is empty")]
    EmptyLog,
    #[error("no accepted or rejected flows")]
    EmptyInput,
    #[error("window_ms must be positive")]
    InvalidWindow,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Outcome recorded by the server for a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogOutcome {
    Accepted,
    Rejected(RejectReason),
}

impl LogOutcome {
    pub fn class(self) -> FlowClass {
        match self {
            LogOutcome::Accepted => FlowClass::Accepted,
            LogOutcome::Rejected(_) => FlowClass::Rejected,
        }
    }

    pub fn reason(self) -> Option<RejectReason> {
        match self {
            LogOutcome::Accepted => None,
            LogOutcome::Rejected(r) => Some(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogEntry {
    pub timestamp_ms: i64,
    pub client_ip: Ipv4Addr,
    pub server_ip: Ipv4Addr,
    pub outcome: LogOutcome,
    pub messages: u32,
}

impl LogEntry {
    /// Renders the entry in the canonical grammar. `msgs=` is omitted for
    /// single-message sessions.
    pub fn to_line(&self) -> String {
        let verdict = match self.outcome {
            LogOutcome::Accepted => "ACCEPT".to_string(),
            LogOutcome::Rejected(r) => format!("REJECT:{}", r.code()),
        };
        let mut line = format!(
            "{} {} {} {}",
            self.timestamp_ms, self.client_ip, self.server_ip, verdict
        );
        if self.messages != 1 {
            line.push_str(&format!(" msgs={}", self.messages));
        }
        line
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedLogLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParsedLog {
    pub entries: Vec<LogEntry>,
    pub malformed: Vec<MalformedLogLine>,
}

fn parse_line(text: &str) -> Result<LogEntry, String> {
    let mut parts = text.split_whitespace();
    let mut field = |name: &str| parts.next().ok_or_else(|| format!("missing {name}"));
    let timestamp_ms: i64 = field("timestamp")?
        .parse()
        .map_err(|_| "timestamp is not an integer".to_string())?;
    let client_ip: Ipv4Addr = field("client ip")?
        .parse()
        .map_err(|_| "bad client ip".to_string())?;
    let server_ip: Ipv4Addr = field("server ip")?
        .parse()
        .map_err(|_| "bad server ip".to_string())?;
    let outcome = match field("verdict")? {
        "ACCEPT" => LogOutcome::Accepted,
        "REJECT" => LogOutcome::Rejected(RejectReason::Other),
        v => match v.strip_prefix("REJECT:") {
            Some(code) => LogOutcome::Rejected(RejectReason::from_code(code)),
            None => return Err(format!("unknown verdict {v:?}")),
        },
    };
    let messages = match parts.next() {
        None => 1,
        Some(m) => {
            let n: u32 = m
                .strip_prefix("msgs=")
                .ok_or_else(|| format!("unexpected token {m:?}"))?
                .parse()
                .map_err(|_| "msgs is not a count".to_string())?;
            if n == 0 {
                return Err("msgs must be at least 1".into());
            }
            n
        }
    };
    if let Some(extra) = parts.next() {
        return Err(format!("unexpected token {extra:?}"));
    }
    Ok(LogEntry {
        timestamp_ms,
        client_ip,
        server_ip,
        outcome,
        messages,
    })
}

/// Parses a log stream. Malformed lines are collected with their 1-based line
/// number and skipped; blank lines are ignored. A log with no non-blank line
/// at all is an error.
pub fn parse_log<R: BufRead>(input: R) -> Result<ParsedLog, LogError> {
    let mut parsed = ParsedLog::default();
    let mut seen_any = false;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        seen_any = true;
        match parse_line(text) {
            Ok(entry) => parsed.entries.push(entry),
            Err(reason) => parsed.malformed.push(MalformedLogLine {
                line: i + 1,
                reason,
            }),
        }
    }
    if !seen_any {
        return Err(LogError::EmptyLog);
    }
    Ok(parsed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchConfig {
    /// Half-width of the matching window around the flow start.
    pub window_ms: i64,
    pub require_server_match: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            window_ms: 60_000,
            require_server_match: true,
        }
    }
}

type MatchKey = (Ipv4Addr, Option<Ipv4Addr>);

/// Labels each flow from the log.
///
/// Candidate entries share the flow's client (and server, if required) and lie
/// within `window_ms` of the flow start. Pairs are then taken greedily from
/// the closest in time outward, each flow and each entry used at most once;
/// equal distances go to the earlier flow, then the earlier entry. Flows left
/// without an entry are labeled failed. The output is in input order.
pub fn match_flows(
    flows: &[FlowRecord],
    log: &[LogEntry],
    cfg: &MatchConfig,
) -> Result<Vec<LabeledFlow>, LogError> {
    if cfg.window_ms <= 0 {
        return Err(LogError::InvalidWindow);
    }
    let key = |client: Ipv4Addr, server: Ipv4Addr| -> MatchKey {
        (client, cfg.require_server_match.then_some(server))
    };

    let mut flow_groups: HashMap<MatchKey, Vec<usize>> = HashMap::new();
    for (i, f) in flows.iter().enumerate() {
        flow_groups
            .entry(key(f.src_ip, f.dst_ip))
            .or_default()
            .push(i);
    }
    let mut entry_groups: HashMap<MatchKey, Vec<usize>> = HashMap::new();
    for (j, e) in log.iter().enumerate() {
        entry_groups
            .entry(key(e.client_ip, e.server_ip))
            .or_default()
            .push(j);
    }

    let mut assigned: Vec<Option<usize>> = vec![None; flows.len()];
    for (k, mut flow_idx) in flow_groups {
        let Some(mut entry_idx) = entry_groups.remove(&k) else {
            continue;
        };
        flow_idx.sort_by_key(|&i| (flows[i].start_ms, i));
        entry_idx.sort_by_key(|&j| (log[j].timestamp_ms, j));

        // All (flow, entry) pairs within the window, found with a sliding
        // lower bound over the time-sorted entries.
        let mut pairs: Vec<(i64, usize, usize)> = Vec::new();
        let mut lo = 0;
        for (fi, &i) in flow_idx.iter().enumerate() {
            let t = flows[i].start_ms;
            while lo < entry_idx.len() && log[entry_idx[lo]].timestamp_ms < t - cfg.window_ms {
                lo += 1;
            }
            for (ej, &j) in entry_idx.iter().enumerate().skip(lo) {
                let d = log[j].timestamp_ms - t;
                if d > cfg.window_ms {
                    break;
                }
                pairs.push((d.abs(), fi, ej));
            }
        }
        pairs.sort_unstable();

        let mut flow_used = vec![false; flow_idx.len()];
        let mut entry_used = vec![false; entry_idx.len()];
        for (_, fi, ej) in pairs {
            if flow_used[fi] || entry_used[ej] {
                continue;
            }
            flow_used[fi] = true;
            entry_used[ej] = true;
            assigned[flow_idx[fi]] = Some(entry_idx[ej]);
        }
    }

    Ok(flows
        .iter()
        .zip(assigned)
        .map(|(&flow, entry)| {
            let (label, reason) = match entry {
                Some(j) => (log[j].outcome.class(), log[j].outcome.reason()),
                None => (FlowClass::Failed, None),
            };
            LabeledFlow {
                flow,
                label,
                reason,
                label_source: LabelSource::ServerLog,
            }
        })
        .collect())
}

/// Rejected share among judged sessions; failed flows are left out.
pub fn reject_rate(labels: &[LabeledFlow]) -> Result<f64, LogError> {
    let rejected = labels
        .iter()
        .filter(|l| l.label == FlowClass::Rejected)
        .count();
    let accepted = labels
        .iter()
        .filter(|l| l.label == FlowClass::Accepted)
        .count();
    if rejected + accepted == 0 {
        return Err(LogError::EmptyInput);
    }
    Ok(rejected as f64 / (rejected + accepted) as f64)
}
