//! SMTP flow selection and server ranking.

use std::collections::{HashMap, HashSet};
use std::net::Ipv4Addr;

use crate::model::FlowRecord;

/// Keeps TCP flows to port 25, optionally only those towards `servers`.
/// Input order is preserved.
pub fn filter_smtp<'a, I>(
    flows: I,
    servers: Option<&'a HashSet<Ipv4Addr>>,
) -> impl Iterator<Item = FlowRecord> + 'a
where
    I: IntoIterator<Item = FlowRecord>,
    I::IntoIter: 'a,
{
    flows
        .into_iter()
        .filter(move |f| f.is_smtp() && servers.is_none_or(|s| s.contains(&f.dst_ip)))
}

/// The `n` destinations receiving the most flows, busiest first. Ties go to
/// the numerically smaller address.
pub fn top_servers<'a, I>(flows: I, n: usize) -> Vec<(Ipv4Addr, u64)>
where
    I: IntoIterator<Item = &'a FlowRecord>,
{
    let mut counts: HashMap<Ipv4Addr, u64> = HashMap::new();
    for f in flows {
        *counts.entry(f.dst_ip).or_default() += 1;
    }
    let mut ranked: Vec<_> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(n);
    ranked
}
