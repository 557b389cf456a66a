use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::Ipv4Addr;

use serde::Serialize;

use super::{
    detect_spikes, diurnal_offset, AggregateError, ClassCounts, ServerStats, SpikeEvent,
    SpikeParams, TimeSeries, DEFAULT_BUCKET_MS,
};
use crate::classifier::{compute_cdf, EmpiricalCdf};
use crate::model::{FlowClass, LabeledFlow};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub bucket_ms: i64,
    pub spikes: SpikeParams,
    pub sharpness_at: u64,
    /// Keep only the busiest servers (by total flows).
    pub max_servers: Option<usize>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            bucket_ms: DEFAULT_BUCKET_MS,
            spikes: SpikeParams::default(),
            sharpness_at: 1500,
            max_servers: None,
        }
    }
}

/// One report section. `server` is null for the network-wide section.
/// Fields that could not be computed are null and explained in the report's
/// diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct ServerReport {
    pub server: Option<Ipv4Addr>,
    pub counts: ClassCounts,
    pub rating: Option<f64>,
    pub sharpness: Option<f64>,
    pub series: TimeSeries,
    pub spikes: Option<Vec<SpikeEvent>>,
    pub diurnal_offset_hours: Option<u32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub flows: u64,
    /// Rejected share of judged (non-failed) flows across all servers.
    pub reject_rate: Option<f64>,
    pub network: ServerReport,
    pub servers: Vec<ServerReport>,
    pub diagnostics: Vec<String>,
}

pub fn build_report(
    labels: &[LabeledFlow],
    opts: &ReportOptions,
) -> Result<Report, AggregateError> {
    if opts.bucket_ms <= 0 {
        return Err(AggregateError::InvalidBucket(opts.bucket_ms));
    }
    let t0 = labels
        .iter()
        .map(|lf| lf.flow.start_ms)
        .min()
        .map_or(0, |t| t.div_euclid(opts.bucket_ms) * opts.bucket_ms);

    let mut stats: BTreeMap<Ipv4Addr, ServerStats> = BTreeMap::new();
    let mut series: BTreeMap<Ipv4Addr, TimeSeries> = BTreeMap::new();
    let mut network_series = TimeSeries::new(opts.bucket_ms, t0)?;
    let mut counts = [0u64; 3];
    let mut rejected_below = 0u64;
    for lf in labels {
        let server = lf.flow.dst_ip;
        stats
            .entry(server)
            .or_insert_with(|| ServerStats::new(server))
            .accumulate(lf)?;
        let ts = match series.entry(server) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => {
                let mut ts = TimeSeries::new(opts.bucket_ms, t0)?;
                ts.server = Some(server);
                e.insert(ts)
            }
        };
        ts.add(lf.flow.start_ms, lf.label)?;
        network_series.add(lf.flow.start_ms, lf.label)?;
        counts[lf.label.index()] += 1;
        if lf.label == FlowClass::Rejected && lf.flow.bytes < opts.sharpness_at {
            rejected_below += 1;
        }
    }

    let mut diagnostics = Vec::new();
    let counts = ClassCounts::from(counts);
    let judged = counts.accepted + counts.rejected;
    let (rating, reject_rate) = if judged == 0 {
        diagnostics.push("network: no accepted or rejected flows".to_string());
        (None, None)
    } else {
        let r = counts.accepted as f64 / judged as f64;
        (Some(r), Some(1.0 - r))
    };
    let sharpness = if counts.rejected == 0 {
        diagnostics.push("network: no rejected flows".to_string());
        None
    } else {
        Some(rejected_below as f64 / counts.rejected as f64)
    };
    let len = network_series.len();
    let network = finish_section(
        "network",
        counts,
        rating,
        sharpness,
        network_series,
        opts,
        &mut diagnostics,
    );

    let mut ordered: Vec<ServerStats> = stats.into_values().collect();
    ordered.sort_by(|a, b| b.total().cmp(&a.total()).then(a.server.cmp(&b.server)));
    if let Some(n) = opts.max_servers {
        ordered.truncate(n);
    }
    let mut servers = Vec::with_capacity(ordered.len());
    for st in ordered {
        let name = st.server.to_string();
        let rating = note(&name, st.rating(), &mut diagnostics);
        let sharpness = note(&name, st.sharpness(opts.sharpness_at), &mut diagnostics);
        let mut ts = series
            .remove(&st.server)
            .expect("every server has a series");
        ts.pad_to(len);
        servers.push(finish_section(
            &name,
            st.counts(),
            rating,
            sharpness,
            ts,
            opts,
            &mut diagnostics,
        ));
    }

    Ok(Report {
        flows: counts.total(),
        reject_rate,
        network,
        servers,
        diagnostics,
    })
}

fn note<T>(
    section: &str,
    r: Result<T, AggregateError>,
    diagnostics: &mut Vec<String>,
) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            diagnostics.push(format!("{section}: {e}"));
            None
        }
    }
}

fn finish_section(
    name: &str,
    counts: ClassCounts,
    rating: Option<f64>,
    sharpness: Option<f64>,
    series: TimeSeries,
    opts: &ReportOptions,
    diagnostics: &mut Vec<String>,
) -> ServerReport {
    let spikes = FlowClass::ALL
        .iter()
        .map(|&c| detect_spikes(&series, c, &opts.spikes))
        .collect::<Result<Vec<_>, _>>()
        .map(|per_class| {
            let mut all: Vec<SpikeEvent> = per_class.into_iter().flatten().collect();
            all.sort_by_key(|e| (e.bucket, e.class));
            all
        });
    let spikes = note(name, spikes, diagnostics);
    let diurnal = note(
        name,
        diurnal_offset(&series, &series, FlowClass::Accepted, FlowClass::Rejected),
        diagnostics,
    );
    ServerReport {
        server: series.server,
        counts,
        rating,
        sharpness,
        series,
        spikes,
        diurnal_offset_hours: diurnal,
    }
}

/// Exact byte-count CDFs per class; `None` for classes with no flows.
#[derive(Debug, Clone)]
pub struct ClassCdfs {
    cdfs: [Option<EmpiricalCdf>; 3],
}

impl ClassCdfs {
    pub fn from_labels(labels: &[LabeledFlow]) -> Self {
        let cdfs = FlowClass::ALL.map(|class| {
            compute_cdf(
                labels
                    .iter()
                    .filter(|lf| lf.label == class)
                    .map(|lf| lf.flow.bytes as f64),
            )
            .ok()
        });
        ClassCdfs { cdfs }
    }

    pub fn get(&self, class: FlowClass) -> Option<&EmpiricalCdf> {
        self.cdfs[class.index()].as_ref()
    }
}

/// Two-column CSV, one row per distinct value with the share of the sample
/// at or below it.
pub fn write_cdf_csv<W: Write>(cdf: &EmpiricalCdf, mut out: W) -> io::Result<W> {
    writeln!(out, "value,cumulative_fraction")?;
    for (v, f) in cdf.steps() {
        writeln!(out, "{v},{f}")?;
    }
    Ok(out)
}
