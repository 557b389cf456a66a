//! Canonical CSV interchange for flows and labeled flows.
//!
//! Flow files carry exactly the ten [`FLOW_COLUMNS`] in that order, with a
//! header row. Labeled files append `label,reason,label_source`.

use std::io::{Read, Write};

use super::NetflowError;
use crate::model::{validate_flow, FlowClass, FlowRecord, LabelSource, LabeledFlow, RejectReason};

pub const FLOW_COLUMNS: [&str; 10] = [
    "src_ip",
    "dst_ip",
    "src_port",
    "dst_port",
    "protocol",
    "start_ms",
    "end_ms",
    "packets",
    "bytes",
    "tcp_flags",
];

pub const LABEL_COLUMNS: [&str; 3] = ["label", "reason", "label_source"];

fn check_header<R: Read>(
    reader: &mut csv::Reader<R>,
    expected: &[&str],
) -> Result<(), NetflowError> {
    let headers = reader.headers().map_err(|_| NetflowError::MissingHeader)?;
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h.trim() != *e)
    {
        return Err(NetflowError::MissingHeader);
    }
    Ok(())
}

fn malformed(err: csv::Error, fallback_line: u64) -> NetflowError {
    let line = err.position().map(|p| p.line()).unwrap_or(fallback_line);
    let reason = match err.kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(i) => format!(
                "column {}: {}",
                FLOW_COLUMNS.get(i as usize).unwrap_or(&"?"),
                err.kind()
            ),
            None => err.to_string(),
        },
        _ => err.to_string(),
    };
    NetflowError::MalformedRow { line, reason }
}

/// Streaming reader over a flow CSV. Every yielded record has passed
/// [`validate_flow`]; rows that fail parsing or validation come back as
/// [`NetflowError::MalformedRow`] with their 1-based line number, and the
/// reader continues with the next row.
pub struct FlowCsvReader<R: Read> {
    inner: csv::Reader<R>,
    record: csv::StringRecord,
    headers: csv::StringRecord,
}

impl<R: Read> FlowCsvReader<R> {
    pub fn new(input: R) -> Result<Self, NetflowError> {
        let mut inner = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        check_header(&mut inner, &FLOW_COLUMNS)?;
        let headers = inner
            .headers()
            .map_err(|_| NetflowError::MissingHeader)?
            .clone();
        Ok(FlowCsvReader {
            inner,
            record: csv::StringRecord::new(),
            headers,
        })
    }
}

impl<R: Read> Iterator for FlowCsvReader<R> {
    type Item = Result<FlowRecord, NetflowError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.inner.read_record(&mut self.record) {
            Ok(false) => None,
            Ok(true) => {
                let line = self.record.position().map(|p| p.line()).unwrap_or(0);
                let parsed = self
                    .record
                    .deserialize::<FlowRecord>(Some(&self.headers))
                    .map_err(|e| malformed(e, line))
                    .and_then(|flow| {
                        validate_flow(flow).map_err(|e| NetflowError::MalformedRow {
                            line,
                            reason: e.to_string(),
                        })
                    });
                Some(parsed)
            }
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Some(Err(malformed(e, line)))
            }
        }
    }
}

/// Convenience wrapper: reads a whole flow CSV, failing on the first bad row.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<FlowRecord>, NetflowError> {
    FlowCsvReader::new(input)?.collect()
}

pub struct FlowCsvWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> FlowCsvWriter<W> {
    pub fn new(output: W) -> Result<Self, NetflowError> {
        let mut inner = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(output);
        inner
            .write_record(FLOW_COLUMNS)
            .map_err(NetflowError::from_csv)?;
        Ok(FlowCsvWriter { inner })
    }

    pub fn write(&mut self, flow: &FlowRecord) -> Result<(), NetflowError> {
        self.inner.serialize(flow).map_err(NetflowError::from_csv)
    }

    pub fn finish(mut self) -> Result<W, NetflowError> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| NetflowError::Io(e.into_error()))
    }
}

pub fn write_csv<'a, W, I>(flows: I, output: W) -> Result<W, NetflowError>
where
    W: Write,
    I: IntoIterator<Item = &'a FlowRecord>,
{
    let mut writer = FlowCsvWriter::new(output)?;
    for flow in flows {
        writer.write(flow)?;
    }
    writer.finish()
}

fn labeled_header() -> Vec<&'static str> {
    FLOW_COLUMNS
        .iter()
        .chain(LABEL_COLUMNS.iter())
        .copied()
        .collect()
}

pub fn write_labeled_csv<'a, W, I>(labels: I, output: W) -> Result<W, NetflowError>
where
    W: Write,
    I: IntoIterator<Item = &'a LabeledFlow>,
{
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(output);
    w.write_record(labeled_header())
        .map_err(NetflowError::from_csv)?;
    for lf in labels {
        let f = &lf.flow;
        w.write_record([
            f.src_ip.to_string(),
            f.dst_ip.to_string(),
            f.src_port.to_string(),
            f.dst_port.to_string(),
            f.protocol.to_string(),
            f.start_ms.to_string(),
            f.end_ms.to_string(),
            f.packets.to_string(),
            f.bytes.to_string(),
            f.tcp_flags.to_string(),
            lf.label.as_str().to_string(),
            lf.reason.map(|r| r.code().to_string()).unwrap_or_default(),
            lf.label_source.as_str().to_string(),
        ])
        .map_err(NetflowError::from_csv)?;
    }
    w.flush()?;
    w.into_inner().map_err(|e| NetflowError::Io(e.into_error()))
}

/// Reads a labeled-flow CSV. Unlike the flow reader this is all-or-nothing.
pub fn read_labeled_csv<R: Read>(input: R) -> Result<Vec<LabeledFlow>, NetflowError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    check_header(&mut reader, &labeled_header())?;
    let flow_header = csv::StringRecord::from(FLOW_COLUMNS.to_vec());
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| malformed(e, 0))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| NetflowError::MalformedRow { line, reason };
        let flow_fields: csv::StringRecord = row.iter().take(FLOW_COLUMNS.len()).collect();
        let flow: FlowRecord = flow_fields
            .deserialize(Some(&flow_header))
            .map_err(|e| bad(e.to_string()))?;
        let flow = validate_flow(flow).map_err(|e| bad(e.to_string()))?;
        let label: FlowClass = row[10]
            .parse()
            .map_err(|e: crate::model::ModelError| bad(e.to_string()))?;
        let reason = match row[11].trim() {
            "" => None,
            code => Some(RejectReason::from_code(code)),
        };
        let source: LabelSource = row[12]
            .parse()
            .map_err(|e: crate::model::ModelError| bad(e.to_string()))?;
        out.push(LabeledFlow::new(flow, label, reason, source).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}
