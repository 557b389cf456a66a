//! Subcommands of the `smtpflow` tool.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::UdpSocket;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tempfile::NamedTempFile;
use thiserror::Error;

use smtpflow_core::aggregate::{
    build_report, write_cdf_csv, ClassCdfs, ReportOptions, SpikeParams,
};
use smtpflow_core::classifier::{calibrate, classify};
use smtpflow_core::lists::{label_by_lists, load_list, ListKind};
use smtpflow_core::logcorr::{match_flows, parse_log, MatchConfig};
use smtpflow_core::netflow::{
    parse_v5, read_labeled_csv, write_csv, write_labeled_csv, FlowCsvReader, FlowCsvWriter,
    NetflowError, V5StreamReader, FLOW_COLUMNS,
};
use smtpflow_core::synth::{generate, write_list, write_log, write_truth_csv, SynthConfig};
use smtpflow_core::{FlowClass, FlowRecord, LabeledFlow, Thresholds};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_BAD_INPUT: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {reason}")]
    BadInput { path: PathBuf, reason: String },
    #[error("both a log and lists were given; use one ground-truth source")]
    BothSourcesGiven,
    #[error("no ground-truth source given; pass --log or --blacklist/--whitelist")]
    NoSourceGiven,
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => EXIT_INTERNAL,
            _ => EXIT_BAD_INPUT,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn input(path: &Path, reason: impl ToString) -> Self {
        CliError::BadInput {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "smtpflow",
    version,
    about = "Infer SMTP pre-filtering verdicts from flow records"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify flows as failed, rejected or accepted.
    Classify(ClassifyArgs),
    /// Label flows from a server log or from black/white lists.
    Label(LabelArgs),
    /// Aggregate labeled flows into a JSON report and per-class CDFs.
    Report(ReportArgs),
    /// Generate synthetic flows, logs, ground truth and lists.
    Synth(SynthArgs),
    /// Fit thresholds to labeled flows.
    Calibrate(CalibrateArgs),
    /// Score the classifier against labeled flows.
    Eval(EvalArgs),
    /// Receive NetFlow v5 datagrams over UDP and write flow CSV.
    Collect(CollectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// CSV if the file starts with the flow header, else NetFlow v5.
    Auto,
    Csv,
    V5,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Flow CSV, a file of back-to-back NetFlow v5 datagrams, or udp://HOST:PORT.
    #[arg(long)]
    pub input: String,
    #[arg(long)]
    pub output: PathBuf,
    /// key = value file with byte_lo, byte_hi, pkt_lo, pkt_hi, bpp_bound.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: InputFormat,
    /// Fail on the first malformed record instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub udp: UdpArgs,
}

#[derive(Debug, Args, Clone)]
pub struct UdpArgs {
    /// Stop listening after this many datagrams.
    #[arg(long)]
    pub max_datagrams: Option<u64>,
    /// Stop listening after this long without a datagram.
    #[arg(long, default_value_t = 5000)]
    pub idle_timeout_ms: u64,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Flow CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Server log in the canonical line format.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub blacklist: Option<PathBuf>,
    #[arg(long)]
    pub whitelist: Option<PathBuf>,
    /// Largest flow-to-log time difference accepted as a match.
    #[arg(long, default_value_t = 60_000)]
    pub window_ms: i64,
    /// Match log entries on client address only.
    #[arg(long)]
    pub ignore_server: bool,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Labeled flow CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Report JSON; CDFs go next to it as <stem>.<class>.cdf.csv.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 900_000)]
    pub bucket_ms: i64,
    #[arg(long, default_value_t = 5.0)]
    pub spike_factor: f64,
    /// Buckets in the rolling-median baseline.
    #[arg(long, default_value_t = 96)]
    pub spike_window: usize,
    #[arg(long, default_value_t = 100)]
    pub spike_min_count: u64,
    /// Only report the busiest servers.
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// key = value generator config; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output prefix: writes <prefix>.flows.csv, .log, .truth.csv, .labeled.csv,
    /// .blacklist.txt and .whitelist.txt.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sessions: Option<usize>,
    /// Also write the flows as NetFlow v5 datagrams to <prefix>.v5.
    #[arg(long)]
    pub v5: bool,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Labeled flow CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Thresholds file to write.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Labeled flow CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    /// Address to bind, e.g. 0.0.0.0:2055.
    #[arg(long)]
    pub listen: String,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub udp: UdpArgs,
}

/// Runs one subcommand, writing human-readable results to `out` and
/// diagnostics to `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Classify(a) => cmd_classify(&a, err).map(|n| {
            let _ = writeln!(err, "classified {n} flows");
        }),
        Command::Label(a) => cmd_label(&a, err).map(|n| {
            let _ = writeln!(err, "labeled {n} flows");
        }),
        Command::Report(a) => cmd_report(&a, err).map(|_| ()),
        Command::Synth(a) => cmd_synth(&a).map(|n| {
            let _ = writeln!(err, "generated {n} sessions");
        }),
        Command::Calibrate(a) => cmd_calibrate(&a).map(|t| {
            let _ = write!(out, "{}", format_thresholds(&t));
        }),
        Command::Eval(a) => cmd_eval(&a).map(|e| {
            let _ = write!(out, "{e}");
        }),
        Command::Collect(a) => cmd_collect(&a, err).map(|n| {
            let _ = writeln!(err, "collected {n} flows");
        }),
    }
}

/// Output file that only appears under its final name once complete.
pub struct AtomicFile {
    path: PathBuf,
    tmp: BufWriter<NamedTempFile>,
}

impl AtomicFile {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
        // temp files are created owner-only; finished outputs should read like ordinary files
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            tmp.as_file()
                .set_permissions(std::fs::Permissions::from_mode(0o644))
                .map_err(|e| CliError::io(path, e))?;
        }
        Ok(AtomicFile {
            path: path.to_path_buf(),
            tmp: BufWriter::new(tmp),
        })
    }

    pub fn commit(self) -> Result<(), CliError> {
        let path = self.path;
        let tmp = self
            .tmp
            .into_inner()
            .map_err(|e| CliError::io(&path, e.into_error()))?;
        tmp.persist(&path)
            .map_err(|e| CliError::io(&path, e.error))?;
        Ok(())
    }
}

impl Write for AtomicFile {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.tmp.write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.tmp.flush()
    }
}

fn write_atomic<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut AtomicFile) -> io::Result<()>,
{
    let mut file = AtomicFile::create(path)?;
    f(&mut file).map_err(|e| CliError::io(path, e))?;
    file.commit()
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn netflow_err(path: &Path, e: NetflowError) -> CliError {
    match e {
        NetflowError::Io(io) => CliError::io(path, io),
        other => CliError::input(path, other),
    }
}

pub fn parse_thresholds(text: &str) -> Result<Thresholds, String> {
    let mut t = Thresholds::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = || format!("line {}: bad value {value:?} for {key}", i + 1);
        match key {
            "byte_lo" => t.byte_lo = value.parse().map_err(|_| bad())?,
            "byte_hi" => t.byte_hi = value.parse().map_err(|_| bad())?,
            "pkt_lo" => t.pkt_lo = value.parse().map_err(|_| bad())?,
            "pkt_hi" => t.pkt_hi = value.parse().map_err(|_| bad())?,
            "bpp_bound" => t.bpp_bound = value.parse().map_err(|_| bad())?,
            _ => return Err(format!("line {}: unknown key {key:?}", i + 1)),
        }
    }
    t.validate().map_err(|e| e.to_string())
}

pub fn format_thresholds(t: &Thresholds) -> String {
    format!(
        "byte_lo = {}\nbyte_hi = {}\npkt_lo = {}\npkt_hi = {}\nbpp_bound = {}\n",
        t.byte_lo, t.byte_hi, t.pkt_lo, t.pkt_hi, t.bpp_bound
    )
}

fn load_thresholds(path: Option<&Path>) -> Result<Thresholds, CliError> {
    match path {
        None => Ok(Thresholds::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            parse_thresholds(&text).map_err(|r| CliError::input(p, r))
        }
    }
}

/// Streams flows from a CSV or v5 file, handing each to `sink`. Malformed
/// records are skipped with a diagnostic unless `strict`.
fn for_each_flow<F>(
    path: &Path,
    format: InputFormat,
    strict: bool,
    err: &mut dyn Write,
    mut sink: F,
) -> Result<(), CliError>
where
    F: FnMut(FlowRecord) -> io::Result<()>,
{
    let mut reader = open(path)?;
    let format = match format {
        InputFormat::Auto => {
            let head = reader.fill_buf().map_err(|e| CliError::io(path, e))?;
            if head.is_empty() || head.starts_with(FLOW_COLUMNS[0].as_bytes()) {
                InputFormat::Csv
            } else {
                InputFormat::V5
            }
        }
        f => f,
    };
    let mut skipped = 0u64;
    let mut handle = |item: Result<Vec<FlowRecord>, NetflowError>,
                      err: &mut dyn Write|
     -> Result<(), CliError> {
        match item {
            Ok(flows) => {
                for f in flows {
                    sink(f).map_err(|e| CliError::Io {
                        path: PathBuf::from("<output>"),
                        source: e,
                    })?;
                }
                Ok(())
            }
            Err(NetflowError::Io(e)) => Err(CliError::io(path, e)),
            Err(e) if strict => Err(CliError::input(path, e)),
            Err(e) => {
                skipped += 1;
                let _ = writeln!(err, "{}: skipped: {e}", path.display());
                Ok(())
            }
        }
    };
    match format {
        InputFormat::V5 => {
            for item in V5StreamReader::new(reader) {
                handle(item.map(|(_, flows)| flows), err)?;
            }
        }
        _ => {
            if reader
                .fill_buf()
                .map_err(|e| CliError::io(path, e))?
                .is_empty()
            {
                return Err(CliError::input(path, NetflowError::MissingHeader));
            }
            let rows = FlowCsvReader::new(reader).map_err(|e| netflow_err(path, e))?;
            for row in rows {
                handle(row.map(|f| vec![f]), err)?;
            }
        }
    }
    if skipped > 0 {
        let _ = writeln!(
            err,
            "{}: {skipped} malformed records skipped",
            path.display()
        );
    }
    Ok(())
}

/// Receives datagrams on `addr`, handing each parsed batch to `sink`, until
/// `max_datagrams` arrive or the socket stays idle for `idle_timeout_ms`.
fn for_each_datagram<F>(
    addr: &str,
    udp: &UdpArgs,
    strict: bool,
    err: &mut dyn Write,
    mut sink: F,
) -> Result<(), CliError>
where
    F: FnMut(FlowRecord) -> io::Result<()>,
{
    let label = PathBuf::from(format!("udp://{addr}"));
    let socket = UdpSocket::bind(addr).map_err(|e| CliError::io(&label, e))?;
    socket
        .set_read_timeout(Some(Duration::from_millis(udp.idle_timeout_ms.max(1))))
        .map_err(|e| CliError::io(&label, e))?;
    let mut buf = vec![0u8; 65_536];
    let mut received = 0u64;
    while udp.max_datagrams.is_none_or(|m| received < m) {
        let n = match socket.recv(&mut buf) {
            Ok(n) => n,
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                break
            }
            Err(e) => return Err(CliError::io(&label, e)),
        };
        received += 1;
        match parse_v5(&buf[..n]) {
            Ok((_, flows)) => {
                for f in flows {
                    sink(f).map_err(|e| CliError::io(&label, e))?;
                }
            }
            Err(e) if strict => return Err(CliError::input(&label, e)),
            Err(e) => {
                let _ = writeln!(err, "{}: dropped datagram: {e}", label.display());
            }
        }
    }
    Ok(())
}

fn udp_addr(input: &str) -> Option<&str> {
    input.strip_prefix("udp://")
}

const VOTE_COLUMNS: [&str; 4] = ["class", "vote_bytes", "vote_packets", "vote_bpp"];

/// Writes one row per flow: the flow columns, the class and the three
/// feature votes. Returns the number of flows written.
pub fn cmd_classify(a: &ClassifyArgs, err: &mut dyn Write) -> Result<u64, CliError> {
    let t = load_thresholds(a.thresholds.as_deref())?;
    if udp_addr(&a.input).is_none() && !Path::new(&a.input).exists() {
        return Err(CliError::io(
            Path::new(&a.input),
            io::ErrorKind::NotFound.into(),
        ));
    }
    let mut file = AtomicFile::create(&a.output)?;
    let header: Vec<&str> = FLOW_COLUMNS
        .iter()
        .chain(VOTE_COLUMNS.iter())
        .copied()
        .collect();
    writeln!(file, "{}", header.join(",")).map_err(|e| CliError::io(&a.output, e))?;
    let mut n = 0u64;
    let sink = |f: FlowRecord| -> io::Result<()> {
        let c = classify(&f, &t);
        n += 1;
        writeln!(
            file,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            f.src_ip,
            f.dst_ip,
            f.src_port,
            f.dst_port,
            f.protocol,
            f.start_ms,
            f.end_ms,
            f.packets,
            f.bytes,
            f.tcp_flags,
            c.class,
            c.votes[0].vote,
            c.votes[1].vote,
            c.votes[2].vote
        )
    };
    match udp_addr(&a.input) {
        Some(addr) => for_each_datagram(addr, &a.udp, a.strict, err, sink)?,
        None => for_each_flow(Path::new(&a.input), a.format, a.strict, err, sink)?,
    }
    file.commit()?;
    Ok(n)
}

fn read_flows(path: &Path, strict: bool, err: &mut dyn Write) -> Result<Vec<FlowRecord>, CliError> {
    let mut flows = Vec::new();
    for_each_flow(path, InputFormat::Auto, strict, err, |f| {
        flows.push(f);
        Ok(())
    })?;
    Ok(flows)
}

/// Labels flows from exactly one ground-truth source. Returns the number of
/// labeled flows written.
pub fn cmd_label(a: &LabelArgs, err: &mut dyn Write) -> Result<usize, CliError> {
    let lists = a.blacklist.is_some() || a.whitelist.is_some();
    let labels = match (&a.log, lists) {
        (Some(_), true) => return Err(CliError::BothSourcesGiven),
        (None, false) => return Err(CliError::NoSourceGiven),
        (Some(log_path), false) => {
            let flows = read_flows(&a.input, a.strict, err)?;
            let parsed = parse_log(open(log_path)?).map_err(|e| CliError::input(log_path, e))?;
            for m in &parsed.malformed {
                if a.strict {
                    return Err(CliError::input(
                        log_path,
                        format!("line {}: {}", m.line, m.reason),
                    ));
                }
                let _ = writeln!(err, "{}: line {}: {}", log_path.display(), m.line, m.reason);
            }
            let cfg = MatchConfig {
                window_ms: a.window_ms,
                require_server_match: !a.ignore_server,
            };
            match_flows(&flows, &parsed.entries, &cfg)
                .map_err(|e| CliError::Usage(e.to_string()))?
        }
        (None, true) => {
            let load = |p: &Option<PathBuf>, kind| -> Result<_, CliError> {
                match p {
                    Some(p) => load_list(open(p)?, kind).map_err(|e| CliError::input(p, e)),
                    None => Ok(smtpflow_core::lists::IpList::new(kind)),
                }
            };
            let black = load(&a.blacklist, ListKind::Black)?;
            let white = load(&a.whitelist, ListKind::White)?;
            let flows = read_flows(&a.input, a.strict, err)?;
            let labeling = label_by_lists(&flows, &black, &white);
            let _ = writeln!(
                err,
                "{} flows from unlisted senders, {} from senders on both lists",
                labeling.unknown, labeling.conflicting
            );
            labeling.labeled
        }
    };
    let mut file = AtomicFile::create(&a.output)?;
    write_labeled_csv(&labels, &mut file).map_err(|e| netflow_err(&a.output, e))?;
    file.commit()?;
    Ok(labels.len())
}

fn read_labels(path: &Path) -> Result<Vec<LabeledFlow>, CliError> {
    read_labeled_csv(open(path)?).map_err(|e| netflow_err(path, e))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Writes the JSON report and one CDF CSV per class with flows. Fields that
/// cannot be computed are null and explained on the diagnostic stream.
pub fn cmd_report(
    a: &ReportArgs,
    err: &mut dyn Write,
) -> Result<smtpflow_core::aggregate::Report, CliError> {
    let labels = read_labels(&a.input)?;
    let opts = ReportOptions {
        bucket_ms: a.bucket_ms,
        spikes: SpikeParams {
            factor: a.spike_factor,
            window: a.spike_window,
            min_count: a.spike_min_count,
        },
        max_servers: a.top,
        ..Default::default()
    };
    let report = build_report(&labels, &opts).map_err(|e| CliError::Usage(e.to_string()))?;
    for d in &report.diagnostics {
        let _ = writeln!(err, "{d}");
    }
    let cdfs = ClassCdfs::from_labels(&labels);
    for class in FlowClass::ALL {
        if let Some(cdf) = cdfs.get(class) {
            let path = sibling(&a.output, &format!(".{class}.cdf.csv"));
            write_atomic(&path, |w| write_cdf_csv(cdf, w).map(|_| ()))?;
        }
    }
    let json = serde_json::to_string(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(&a.output, |w| writeln!(w, "{json}"))?;
    Ok(report)
}

/// Returns the number of sessions generated.
pub fn cmd_synth(a: &SynthArgs) -> Result<usize, CliError> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            SynthConfig::from_kv(&text).map_err(|e| CliError::input(p, e))?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.sessions {
        cfg.n_sessions = n;
    }
    let out = generate(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let prefixed = |suffix: &str| {
        let mut s = a.output.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    let flows = out.flows();
    write_atomic(&prefixed(".flows.csv"), |w| {
        write_csv(&flows, w).map(|_| ()).map_err(io::Error::other)
    })?;
    write_atomic(&prefixed(".log"), |w| {
        write_log(&out.log_entries(), w).map(|_| ())
    })?;
    write_atomic(&prefixed(".truth.csv"), |w| {
        write_truth_csv(&out.sessions, w).map(|_| ())
    })?;
    write_atomic(&prefixed(".labeled.csv"), |w| {
        write_labeled_csv(&out.labeled(), w)
            .map(|_| ())
            .map_err(io::Error::other)
    })?;
    write_atomic(&prefixed(".blacklist.txt"), |w| {
        write_list(&out.blacklist, w).map(|_| ())
    })?;
    write_atomic(&prefixed(".whitelist.txt"), |w| {
        write_list(&out.whitelist, w).map(|_| ())
    })?;
    if a.v5 {
        let bytes = v5_datagrams(&flows, cfg.start_ms)?;
        write_atomic(&prefixed(".v5"), |w| w.write_all(&bytes))?;
    }
    Ok(out.sessions.len())
}

/// Packs flows into datagrams of up to 30 records, each stamped with an
/// export time just after its last flow ends. Router uptime starts at
/// `boot_ms`.
fn v5_datagrams(flows: &[FlowRecord], boot_ms: i64) -> Result<Vec<u8>, CliError> {
    use smtpflow_core::netflow::{serialize_v5, NetflowV5Header, MAX_RECORDS};
    let mut out = Vec::new();
    for (seq, chunk) in flows.chunks(MAX_RECORDS).enumerate() {
        let export_ms = chunk.iter().map(|f| f.end_ms).max().unwrap_or(boot_ms) + 1;
        let header = NetflowV5Header {
            version: 5,
            sys_uptime_ms: (export_ms - boot_ms) as u32,
            unix_secs: (export_ms / 1000) as u32,
            unix_nsecs: ((export_ms % 1000) * 1_000_000) as u32,
            flow_sequence: (seq * MAX_RECORDS) as u32,
            ..Default::default()
        };
        let bytes = serialize_v5(&header, chunk).map_err(|e| CliError::Internal(e.to_string()))?;
        out.extend_from_slice(&bytes);
    }
    Ok(out)
}

pub fn cmd_calibrate(a: &CalibrateArgs) -> Result<Thresholds, CliError> {
    let labels = read_labels(&a.input)?;
    let t = calibrate(&labels).map_err(|e| CliError::input(&a.input, e))?;
    let text = format!(
        "# calibrated on {} labeled flows\n{}",
        labels.len(),
        format_thresholds(&t)
    );
    write_atomic(&a.output, |w| w.write_all(text.as_bytes()))?;
    Ok(t)
}

/// Confusion matrix of classifier output against labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// `matrix[truth][predicted]`, indexed by [`FlowClass::index`].
    pub matrix: [[u64; 3]; 3],
}

impl Evaluation {
    pub fn new(labels: &[LabeledFlow], t: &Thresholds) -> Self {
        let mut matrix = [[0; 3]; 3];
        for lf in labels {
            matrix[lf.label.index()][classify(&lf.flow, t).class.index()] += 1;
        }
        Evaluation { matrix }
    }

    pub fn total(&self) -> u64 {
        self.matrix.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let hits: u64 = (0..3).map(|i| self.matrix[i][i]).sum();
        hits as f64 / self.total() as f64
    }
}

impl std::fmt::Display for Evaluation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{:<16}{:>10}{:>10}{:>10}",
            "truth\\predicted", "failed", "rejected", "accepted"
        )?;
        for class in FlowClass::ALL {
            let row = self.matrix[class.index()];
            writeln!(
                f,
                "{:<16}{:>10}{:>10}{:>10}",
                class.as_str(),
                row[0],
                row[1],
                row[2]
            )?;
        }
        writeln!(
            f,
            "accuracy {:.6} ({} flows)",
            self.accuracy(),
            self.total()
        )
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<Evaluation, CliError> {
    let t = load_thresholds(a.thresholds.as_deref())?;
    let labels = read_labels(&a.input)?;
    if labels.is_empty() {
        return Err(CliError::input(&a.input, "no labeled flows"));
    }
    Ok(Evaluation::new(&labels, &t))
}

/// Returns the number of flows written.
pub fn cmd_collect(a: &CollectArgs, err: &mut dyn Write) -> Result<u64, CliError> {
    let mut file = AtomicFile::create(&a.output)?;
    let mut writer = FlowCsvWriter::new(&mut file).map_err(|e| netflow_err(&a.output, e))?;
    let mut n = 0u64;
    for_each_datagram(&a.listen, &a.udp, a.strict, err, |f| {
        n += 1;
        writer.write(&f).map_err(io::Error::other)
    })?;
    writer.finish().map_err(|e| netflow_err(&a.output, e))?;
    file.commit()?;
    Ok(n)
}
