//! NetFlow v5 wire format.
//!
//! A packet is a 24-octet header followed by `count` fixed 48-octet records,
//! all integers big-endian. Flow timestamps on the wire are router uptime
//! values; they are converted to epoch milliseconds using the export time in
//! the header.

use std::net::Ipv4Addr;

use super::NetflowError;
use crate::model::{validate_flow, FlowRecord};

pub const HEADER_LEN: usize = 24;
pub const RECORD_LEN: usize = 48;
pub const MAX_RECORDS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NetflowV5Header {
    pub version: u16,
    pub count: u16,
    pub sys_uptime_ms: u32,
    pub unix_secs: u32,
    pub unix_nsecs: u32,
    pub flow_sequence: u32,
    pub engine_type: u8,
    pub engine_id: u8,
    /// Carried through, never applied.
    pub sampling_interval: u16,
}

impl NetflowV5Header {
    /// Export wall-clock time in epoch milliseconds.
    pub fn export_ms(&self) -> i64 {
        self.unix_secs as i64 * 1000 + (self.unix_nsecs / 1_000_000) as i64
    }

    /// Epoch milliseconds at which the exporting device booted.
    fn boot_ms(&self) -> i64 {
        self.export_ms() - self.sys_uptime_ms as i64
    }
}

/// One record exactly as laid out on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetflowV5Record {
    pub srcaddr: Ipv4Addr,
    pub dstaddr: Ipv4Addr,
    pub nexthop: Ipv4Addr,
    pub input: u16,
    pub output: u16,
    pub d_pkts: u32,
    pub d_octets: u32,
    pub first: u32,
    pub last: u32,
    pub srcport: u16,
    pub dstport: u16,
    pub pad1: u8,
    pub tcp_flags: u8,
    pub prot: u8,
    pub tos: u8,
    pub src_as: u16,
    pub dst_as: u16,
    pub src_mask: u8,
    pub dst_mask: u8,
    pub pad2: u16,
}

/// Big-endian cursor over a byte slice. Every read is bounds-checked.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], NetflowError> {
        let end = self
            .pos
            .checked_add(N)
            .ok_or(NetflowError::TruncatedPacket {
                needed: usize::MAX,
                got: self.buf.len(),
            })?;
        let slice = self
            .buf
            .get(self.pos..end)
            .ok_or(NetflowError::TruncatedPacket {
                needed: end,
                got: self.buf.len(),
            })?;
        self.pos = end;
        let mut out = [0u8; N];
        out.copy_from_slice(slice);
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, NetflowError> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16, NetflowError> {
        Ok(u16::from_be_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32, NetflowError> {
        Ok(u32::from_be_bytes(self.take()?))
    }
    fn ip(&mut self) -> Result<Ipv4Addr, NetflowError> {
        Ok(Ipv4Addr::from(self.u32()?))
    }
}

fn read_header(r: &mut Reader<'_>) -> Result<NetflowV5Header, NetflowError> {
    Ok(NetflowV5Header {
        version: r.u16()?,
        count: r.u16()?,
        sys_uptime_ms: r.u32()?,
        unix_secs: r.u32()?,
        unix_nsecs: r.u32()?,
        flow_sequence: r.u32()?,
        engine_type: r.u8()?,
        engine_id: r.u8()?,
        sampling_interval: r.u16()?,
    })
}

fn read_record(r: &mut Reader<'_>) -> Result<NetflowV5Record, NetflowError> {
    Ok(NetflowV5Record {
        srcaddr: r.ip()?,
        dstaddr: r.ip()?,
        nexthop: r.ip()?,
        input: r.u16()?,
        output: r.u16()?,
        d_pkts: r.u32()?,
        d_octets: r.u32()?,
        first: r.u32()?,
        last: r.u32()?,
        srcport: r.u16()?,
        dstport: r.u16()?,
        pad1: r.u8()?,
        tcp_flags: r.u8()?,
        prot: r.u8()?,
        tos: r.u8()?,
        src_as: r.u16()?,
        dst_as: r.u16()?,
        src_mask: r.u8()?,
        dst_mask: r.u8()?,
        pad2: r.u16()?,
    })
}

/// Decodes the header only, checking version and declared count, and returns
/// the total packet length the header implies.
pub fn peek_header(datagram: &[u8]) -> Result<(NetflowV5Header, usize), NetflowError> {
    if datagram.len() < HEADER_LEN {
        return Err(NetflowError::TruncatedPacket {
            needed: HEADER_LEN,
            got: datagram.len(),
        });
    }
    let header = read_header(&mut Reader::new(datagram))?;
    if header.version != 5 {
        return Err(NetflowError::BadVersion(header.version));
    }
    let count = header.count as usize;
    if count == 0 || count > MAX_RECORDS {
        return Err(NetflowError::CountMismatch {
            declared: header.count,
            reason: format!("count must be within 1..={MAX_RECORDS}"),
        });
    }
    Ok((header, HEADER_LEN + count * RECORD_LEN))
}

/// Decodes one v5 datagram into its header and flow records.
pub fn parse_v5(datagram: &[u8]) -> Result<(NetflowV5Header, Vec<FlowRecord>), NetflowError> {
    let (header, expected) = peek_header(datagram)?;
    if datagram.len() < expected {
        return Err(NetflowError::TruncatedPacket {
            needed: expected,
            got: datagram.len(),
        });
    }
    if datagram.len() > expected {
        return Err(NetflowError::CountMismatch {
            declared: header.count,
            reason: format!("{} trailing octets", datagram.len() - expected),
        });
    }

    let mut reader = Reader::new(&datagram[HEADER_LEN..expected]);
    let boot = header.boot_ms();
    let mut flows = Vec::with_capacity(header.count as usize);
    for index in 0..header.count as usize {
        let rec = read_record(&mut reader)?;
        let flow = FlowRecord {
            src_ip: rec.srcaddr,
            dst_ip: rec.dstaddr,
            src_port: rec.srcport,
            dst_port: rec.dstport,
            protocol: rec.prot,
            start_ms: boot + rec.first as i64,
            end_ms: boot + rec.last as i64,
            packets: rec.d_pkts as u64,
            bytes: rec.d_octets as u64,
            tcp_flags: rec.tcp_flags,
        };
        let flow =
            validate_flow(flow).map_err(|source| NetflowError::InvalidRecord { index, source })?;
        flows.push(flow);
    }
    Ok((header, flows))
}

fn to_u32(value: i64, field: &'static str) -> Result<u32, NetflowError> {
    u32::try_from(value).map_err(|_| NetflowError::FieldOverflow(field))
}

/// Encodes flows as one v5 datagram.
///
/// The `count` in `header` is ignored and replaced by `flows.len()`; the
/// other header fields are written verbatim. Record fields a [`FlowRecord`]
/// does not carry (next hop, interfaces, AS numbers, masks) are zero.
pub fn serialize_v5(
    header: &NetflowV5Header,
    flows: &[FlowRecord],
) -> Result<Vec<u8>, NetflowError> {
    if flows.len() > MAX_RECORDS {
        return Err(NetflowError::TooManyRecords(flows.len()));
    }
    if flows.is_empty() {
        return Err(NetflowError::FieldOverflow("count"));
    }
    if header.version != 5 {
        return Err(NetflowError::BadVersion(header.version));
    }

    let boot = header.boot_ms();
    let mut out = Vec::with_capacity(HEADER_LEN + flows.len() * RECORD_LEN);
    out.extend_from_slice(&header.version.to_be_bytes());
    out.extend_from_slice(&(flows.len() as u16).to_be_bytes());
    out.extend_from_slice(&header.sys_uptime_ms.to_be_bytes());
    out.extend_from_slice(&header.unix_secs.to_be_bytes());
    out.extend_from_slice(&header.unix_nsecs.to_be_bytes());
    out.extend_from_slice(&header.flow_sequence.to_be_bytes());
    out.push(header.engine_type);
    out.push(header.engine_id);
    out.extend_from_slice(&header.sampling_interval.to_be_bytes());

    for flow in flows {
        let d_pkts =
            u32::try_from(flow.packets).map_err(|_| NetflowError::FieldOverflow("packets"))?;
        let d_octets =
            u32::try_from(flow.bytes).map_err(|_| NetflowError::FieldOverflow("bytes"))?;
        let first = to_u32(flow.start_ms - boot, "start_ms")?;
        let last = to_u32(flow.end_ms - boot, "end_ms")?;

        out.extend_from_slice(&flow.src_ip.octets());
        out.extend_from_slice(&flow.dst_ip.octets());
        out.extend_from_slice(&[0; 4]); // nexthop
        out.extend_from_slice(&[0; 4]); // input, output
        out.extend_from_slice(&d_pkts.to_be_bytes());
        out.extend_from_slice(&d_octets.to_be_bytes());
        out.extend_from_slice(&first.to_be_bytes());
        out.extend_from_slice(&last.to_be_bytes());
        out.extend_from_slice(&flow.src_port.to_be_bytes());
        out.extend_from_slice(&flow.dst_port.to_be_bytes());
        out.push(0); // pad1
        out.push(flow.tcp_flags);
        out.push(flow.protocol);
        out.push(0); // tos
        out.extend_from_slice(&[0; 4]); // src_as, dst_as
        out.extend_from_slice(&[0; 2]); // masks
        out.extend_from_slice(&[0; 2]); // pad2
    }
    Ok(out)
}

/// Splits a byte stream of back-to-back v5 datagrams, as written by a
/// collector that appends each received packet to a file.
pub struct V5StreamReader<R> {
    inner: R,
    done: bool,
}

impl<R: std::io::Read> V5StreamReader<R> {
    pub fn new(inner: R) -> Self {
        V5StreamReader { inner, done: false }
    }

    fn read_packet(&mut self) -> Result<Option<Vec<u8>>, NetflowError> {
        let mut header = [0u8; HEADER_LEN];
        let mut filled = 0;
        while filled < HEADER_LEN {
            let n = self.inner.read(&mut header[filled..])?;
            if n == 0 {
                if filled == 0 {
                    return Ok(None);
                }
                return Err(NetflowError::TruncatedPacket {
                    needed: HEADER_LEN,
                    got: filled,
                });
            }
            filled += n;
        }
        let (_, total) = peek_header(&header)?;
        let mut packet = header.to_vec();
        packet.resize(total, 0);
        let mut got = HEADER_LEN;
        while got < total {
            let n = self.inner.read(&mut packet[got..])?;
            if n == 0 {
                return Err(NetflowError::TruncatedPacket { needed: total, got });
            }
            got += n;
        }
        Ok(Some(packet))
    }
}

impl<R: std::io::Read> Iterator for V5StreamReader<R> {
    type Item = Result<(NetflowV5Header, Vec<FlowRecord>), NetflowError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_packet() {
            Ok(Some(packet)) => Some(parse_v5(&packet)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                // Framing is lost after a bad header; stop here.
                self.done = true;
                Some(Err(e))
            }
        }
    }
}
