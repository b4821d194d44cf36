//! CSV packet exports (one packet per row, header required).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DropReason, RawDataset, SourceFormat};
use crate::traffic::{ip_to_numeric, numeric_to_ip, PacketRecord, Protocol};

/// Maps packet fields to CSV header names.
///
/// `tcp_seq` is optional; when unmapped, TCP rows get sequence number 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub timestamp: String,
    pub src_ip: String,
    pub dst_ip: String,
    pub src_port: String,
    pub dst_port: String,
    pub protocol: String,
    pub bytes: String,
    pub ip_id: String,
    pub tcp_seq: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            timestamp: "timestamp".into(),
            src_ip: "src_ip".into(),
            dst_ip: "dst_ip".into(),
            src_port: "src_port".into(),
            dst_port: "dst_port".into(),
            protocol: "protocol".into(),
            bytes: "bytes".into(),
            ip_id: "ip_id".into(),
            tcp_seq: Some("tcp_seq".into()),
        }
    }
}

struct Columns {
    timestamp: usize,
    src_ip: usize,
    dst_ip: usize,
    src_port: usize,
    dst_port: usize,
    protocol: usize,
    bytes: usize,
    ip_id: usize,
    tcp_seq: Option<usize>,
}

impl CsvSchema {
    fn resolve(&self, headers: &::csv::StringRecord) -> Result<Columns> {
        let find = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Schema(format!("missing required column {name:?}")))
        };
        Ok(Columns {
            timestamp: find(&self.timestamp)?,
            src_ip: find(&self.src_ip)?,
            dst_ip: find(&self.dst_ip)?,
            src_port: find(&self.src_port)?,
            dst_port: find(&self.dst_port)?,
            protocol: find(&self.protocol)?,
            bytes: find(&self.bytes)?,
            ip_id: find(&self.ip_id)?,
            tcp_seq: match &self.tcp_seq {
                Some(name) => Some(find(name)?),
                None => None,
            },
        })
    }
}

fn reader<R: Read>(input: R) -> ::csv::Reader<R> {
    ::csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(input)
}

fn row_to_record(row: &::csv::StringRecord, cols: &Columns) -> std::result::Result<PacketRecord, DropReason> {
    let cell = |i: usize| -> std::result::Result<&str, DropReason> {
        match row.get(i) {
            Some(s) if !s.is_empty() => Ok(s),
            _ => Err(DropReason::MissingField),
        }
    };
    fn num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, DropReason> {
        s.parse().map_err(|_| DropReason::Malformed)
    }
    let ip = |s: &str| -> std::result::Result<u32, DropReason> {
        if s.contains(':') {
            return Err(DropReason::NonIpv4);
        }
        ip_to_numeric(s).map_err(|_| DropReason::Malformed)
    };

    let protocol: Protocol = cell(cols.protocol)?.parse().map_err(|_| DropReason::Malformed)?;
    if protocol == Protocol::Other {
        return Err(DropReason::OtherProto);
    }
    let src_ip = ip(cell(cols.src_ip)?)?;
    let dst_ip = ip(cell(cols.dst_ip)?)?;
    let tcp_seq = match (protocol, cols.tcp_seq) {
        (Protocol::Tcp, Some(i)) => Some(num::<u32>(cell(i)?)?),
        (Protocol::Tcp, None) => Some(0),
        _ => None,
    };
    Ok(PacketRecord {
        timestamp: num(cell(cols.timestamp)?)?,
        src_ip,
        dst_ip,
        src_port: num(cell(cols.src_port)?)?,
        dst_port: num(cell(cols.dst_port)?)?,
        protocol,
        length: num(cell(cols.bytes)?)?,
        ip_id: num(cell(cols.ip_id)?)?,
        tcp_seq,
    })
}

/// Parses a packet CSV. Rows that fail conversion are dropped and counted.
pub fn parse_csv<R: Read>(input: R, schema: &CsvSchema) -> Result<RawDataset> {
    parse_csv_with_source(input, schema, "<memory>")
}

pub fn parse_csv_with_source<R: Read>(input: R, schema: &CsvSchema, source: &str) -> Result<RawDataset> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyInput("CSV has no header row".into()));
    }
    let cols = schema.resolve(&headers)?;
    let mut ds = RawDataset::new(source, SourceFormat::Csv);
    for row in rdr.records() {
        let row = row?;
        match row_to_record(&row, &cols) {
            Ok(p) => ds.rows.push(p),
            Err(reason) => ds.record_drop(reason),
        }
    }
    Ok(ds)
}

pub const CSV_HEADER: [&str; 9] = [
    "timestamp",
    "src_ip",
    "dst_ip",
    "src_port",
    "dst_port",
    "protocol",
    "bytes",
    "ip_id",
    "tcp_seq",
];

/// Writes packets with the default schema's column names.
pub fn write_csv<W: Write>(out: W, packets: &[PacketRecord]) -> Result<()> {
    let mut w = ::csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for p in packets {
        w.write_record([
            p.timestamp.to_string(),
            numeric_to_ip(p.src_ip),
            numeric_to_ip(p.dst_ip),
            p.src_port.to_string(),
            p.dst_port.to_string(),
            p.protocol.to_string(),
            p.length.to_string(),
            p.ip_id.to_string(),
            p.tcp_seq.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
