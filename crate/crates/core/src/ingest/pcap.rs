//! Classic libpcap reader and writer (Ethernet / IPv4 / TCP|UDP subset).
//!
//! Record timestamps are microsecond resolution. Header fields inside the
//! frame are network order regardless of the file's byte order.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{DropReason, RawDataset, SourceFormat};
use crate::traffic::{PacketRecord, Protocol};

pub const MAGIC_USEC: u32 = 0xa1b2c3d4;
pub const MAGIC_USEC_SWAPPED: u32 = 0xd4c3b2a1;
const MAGIC_NSEC: u32 = 0xa1b23c4d;
const MAGIC_NSEC_SWAPPED: u32 = 0x4d3cb2a1;
const PCAPNG_SHB: u32 = 0x0a0d0d0a;

pub const LINKTYPE_ETHERNET: u32 = 1;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const ETH_HEADER_LEN: usize = 14;
const ETHERTYPE_IPV4: u16 = 0x0800;
const IPV4_MIN_HEADER: usize = 20;
const TCP_MIN_HEADER: usize = 20;
const UDP_HEADER: usize = 8;

/// Default snap length used by [`PcapWriter`]: enough for Ethernet + IPv4 + TCP
/// headers without options.
pub const DEFAULT_SNAPLEN: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Big,
    Little,
}

impl Endian {
    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self {
            Endian::Big => u32::from_be_bytes(a),
            Endian::Little => u32::from_le_bytes(a),
        }
    }

    fn put_u16(self, v: u16) -> [u8; 2] {
        match self {
            Endian::Big => v.to_be_bytes(),
            Endian::Little => v.to_le_bytes(),
        }
    }

    fn put_u32(self, v: u32) -> [u8; 4] {
        match self {
            Endian::Big => v.to_be_bytes(),
            Endian::Little => v.to_le_bytes(),
        }
    }
}

fn be16(b: &[u8], off: usize) -> u16 {
    u16::from_be_bytes([b[off], b[off + 1]])
}

fn be32(b: &[u8], off: usize) -> u32 {
    u32::from_be_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Outcome of decoding one frame.
enum Decoded {
    Packet(PacketRecord),
    Dropped(DropReason),
}

/// Parses a classic pcap byte stream into packet records.
pub fn parse_pcap(bytes: &[u8]) -> Result<RawDataset> {
    parse_pcap_with_source(bytes, "<memory>")
}

pub fn parse_pcap_file(path: &Path) -> Result<RawDataset> {
    let bytes = std::fs::read(path)?;
    parse_pcap_with_source(&bytes, &path.display().to_string())
}

fn parse_pcap_with_source(bytes: &[u8], source: &str) -> Result<RawDataset> {
    if bytes.len() < GLOBAL_HEADER_LEN {
        return Err(Error::Format(format!(
            "pcap global header needs {GLOBAL_HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let endian = match magic {
        MAGIC_USEC => Endian::Big,
        MAGIC_USEC_SWAPPED => Endian::Little,
        PCAPNG_SHB => {
            return Err(Error::Format(
                "pcapng captures are not supported; convert to classic pcap".into(),
            ))
        }
        MAGIC_NSEC | MAGIC_NSEC_SWAPPED => {
            return Err(Error::Format("nanosecond-resolution pcap is not supported".into()))
        }
        other => return Err(Error::Format(format!("bad pcap magic 0x{other:08x}"))),
    };
    let linktype = endian.u32(&bytes[20..24]);
    if linktype != LINKTYPE_ETHERNET {
        return Err(Error::UnsupportedLinkType(linktype));
    }

    let mut ds = RawDataset::new(source, SourceFormat::Pcap);
    let mut off = GLOBAL_HEADER_LEN;
    let mut index = 0usize;
    while off < bytes.len() {
        let remaining = bytes.len() - off;
        if remaining < RECORD_HEADER_LEN {
            return Err(Error::Truncated {
                index,
                detail: format!("record header needs {RECORD_HEADER_LEN} bytes, {remaining} left"),
            });
        }
        let hdr = &bytes[off..off + RECORD_HEADER_LEN];
        let ts_sec = endian.u32(&hdr[0..4]) as u64;
        let ts_usec = endian.u32(&hdr[4..8]) as u64;
        let incl_len = endian.u32(&hdr[8..12]) as usize;
        let orig_len = endian.u32(&hdr[12..16]);
        off += RECORD_HEADER_LEN;
        if incl_len > bytes.len() - off {
            return Err(Error::Truncated {
                index,
                detail: format!(
                    "captured length {incl_len} exceeds {} remaining bytes",
                    bytes.len() - off
                ),
            });
        }
        let frame = &bytes[off..off + incl_len];
        off += incl_len;
        index += 1;

        match decode_frame(frame, ts_sec * 1_000_000 + ts_usec, orig_len) {
            Decoded::Packet(p) => ds.rows.push(p),
            Decoded::Dropped(reason) => ds.record_drop(reason),
        }
    }
    Ok(ds)
}

fn decode_frame(frame: &[u8], timestamp: u64, orig_len: u32) -> Decoded {
    if frame.len() < ETH_HEADER_LEN {
        return Decoded::Dropped(DropReason::Malformed);
    }
    if be16(frame, 12) != ETHERTYPE_IPV4 {
        return Decoded::Dropped(DropReason::NonIpv4);
    }
    let ip = &frame[ETH_HEADER_LEN..];
    if ip.len() < IPV4_MIN_HEADER {
        return Decoded::Dropped(DropReason::Malformed);
    }
    if ip[0] >> 4 != 4 {
        return Decoded::Dropped(DropReason::NonIpv4);
    }
    let ihl = ((ip[0] & 0x0f) as usize) * 4;
    if ihl < IPV4_MIN_HEADER || ip.len() < ihl {
        return Decoded::Dropped(DropReason::Malformed);
    }
    let ip_id = be16(ip, 4);
    let protocol = Protocol::from_ip_proto(ip[9]);
    let src_ip = be32(ip, 12);
    let dst_ip = be32(ip, 16);
    let l4 = &ip[ihl..];

    let (src_port, dst_port, tcp_seq) = match protocol {
        Protocol::Tcp => {
            // ports + sequence number
            if l4.len() < 8 {
                return Decoded::Dropped(DropReason::Malformed);
            }
            (be16(l4, 0), be16(l4, 2), Some(be32(l4, 4)))
        }
        Protocol::Udp => {
            if l4.len() < 4 {
                return Decoded::Dropped(DropReason::Malformed);
            }
            (be16(l4, 0), be16(l4, 2), None)
        }
        Protocol::Other => return Decoded::Dropped(DropReason::OtherProto),
    };

    Decoded::Packet(PacketRecord {
        timestamp,
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        protocol,
        length: orig_len,
        ip_id,
        tcp_seq,
    })
}

/// Minimum on-wire frame length able to carry the record's headers.
pub fn min_frame_len(protocol: Protocol) -> u32 {
    let l4 = match protocol {
        Protocol::Tcp => TCP_MIN_HEADER,
        Protocol::Udp => UDP_HEADER,
        Protocol::Other => 0,
    };
    (ETH_HEADER_LEN + IPV4_MIN_HEADER + l4) as u32
}

fn mac_for(ip: u32) -> [u8; 6] {
    let b = ip.to_be_bytes();
    [0x02, 0x00, b[0], b[1], b[2], b[3]]
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = 0;
    for chunk in header.chunks(2) {
        sum += u16::from_be_bytes([chunk[0], chunk[1]]) as u32;
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// Builds the full Ethernet frame for a TCP or UDP record, zero-padded to
/// `pkt.length` bytes.
pub fn encode_frame(pkt: &PacketRecord) -> Result<Vec<u8>> {
    let l4_len = match pkt.protocol {
        Protocol::Tcp => TCP_MIN_HEADER,
        Protocol::Udp => UDP_HEADER,
        Protocol::Other => return Err(Error::Parameter("cannot encode a packet with protocol OTHER".into())),
    };
    let min = min_frame_len(pkt.protocol);
    if pkt.length < min || pkt.length > u16::MAX as u32 + ETH_HEADER_LEN as u32 {
        return Err(Error::Parameter(format!(
            "frame length {} outside [{min}, {}] for {}",
            pkt.length,
            u16::MAX as u32 + ETH_HEADER_LEN as u32,
            pkt.protocol
        )));
    }
    let total = pkt.length as usize;
    let mut f = vec![0u8; total];
    f[0..6].copy_from_slice(&mac_for(pkt.dst_ip));
    f[6..12].copy_from_slice(&mac_for(pkt.src_ip));
    f[12..14].copy_from_slice(&ETHERTYPE_IPV4.to_be_bytes());

    let ip_total = (total - ETH_HEADER_LEN) as u16;
    {
        let ip = &mut f[ETH_HEADER_LEN..ETH_HEADER_LEN + IPV4_MIN_HEADER];
        ip[0] = 0x45;
        ip[2..4].copy_from_slice(&ip_total.to_be_bytes());
        ip[4..6].copy_from_slice(&pkt.ip_id.to_be_bytes());
        ip[8] = 64;
        ip[9] = if pkt.protocol == Protocol::Tcp { 6 } else { 17 };
        ip[12..16].copy_from_slice(&pkt.src_ip.to_be_bytes());
        ip[16..20].copy_from_slice(&pkt.dst_ip.to_be_bytes());
        let csum = ipv4_checksum(ip);
        ip[10..12].copy_from_slice(&csum.to_be_bytes());
    }

    let l4_off = ETH_HEADER_LEN + IPV4_MIN_HEADER;
    let l4 = &mut f[l4_off..l4_off + l4_len];
    l4[0..2].copy_from_slice(&pkt.src_port.to_be_bytes());
    l4[2..4].copy_from_slice(&pkt.dst_port.to_be_bytes());
    match pkt.protocol {
        Protocol::Tcp => {
            l4[4..8].copy_from_slice(&pkt.tcp_seq.unwrap_or(0).to_be_bytes());
            l4[12] = 0x50; // data offset 5 words
            l4[13] = 0x18; // PSH|ACK
            l4[14..16].copy_from_slice(&65535u16.to_be_bytes());
        }
        Protocol::Udp => {
            let udp_len = (total - l4_off) as u16;
            l4[4..6].copy_from_slice(&udp_len.to_be_bytes());
        }
        Protocol::Other => unreachable!(),
    }
    Ok(f)
}

/// Streaming classic-pcap writer producing microsecond-resolution Ethernet
/// captures. Frames longer than the snap length are truncated in the file
/// while the record keeps the original length.
pub struct PcapWriter<W: Write> {
    out: W,
    endian: Endian,
    snaplen: u32,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(out: W, endian: Endian, snaplen: u32) -> Result<Self> {
        let mut w = PcapWriter { out, endian, snaplen };
        let e = endian;
        let mut hdr = Vec::with_capacity(GLOBAL_HEADER_LEN);
        hdr.extend_from_slice(&e.put_u32(MAGIC_USEC));
        hdr.extend_from_slice(&e.put_u16(2));
        hdr.extend_from_slice(&e.put_u16(4));
        hdr.extend_from_slice(&e.put_u32(0)); // thiszone
        hdr.extend_from_slice(&e.put_u32(0)); // sigfigs
        hdr.extend_from_slice(&e.put_u32(snaplen));
        hdr.extend_from_slice(&e.put_u32(LINKTYPE_ETHERNET));
        w.out.write_all(&hdr)?;
        Ok(w)
    }

    pub fn write_packet(&mut self, pkt: &PacketRecord) -> Result<()> {
        if pkt.timestamp / 1_000_000 > u32::MAX as u64 {
            return Err(Error::Parameter(format!(
                "timestamp {} does not fit a classic pcap record",
                pkt.timestamp
            )));
        }
        let frame = encode_frame(pkt)?;
        let incl = frame.len().min(self.snaplen as usize);
        let e = self.endian;
        let mut hdr = [0u8; RECORD_HEADER_LEN];
        hdr[0..4].copy_from_slice(&e.put_u32((pkt.timestamp / 1_000_000) as u32));
        hdr[4..8].copy_from_slice(&e.put_u32((pkt.timestamp % 1_000_000) as u32));
        hdr[8..12].copy_from_slice(&e.put_u32(incl as u32));
        hdr[12..16].copy_from_slice(&e.put_u32(frame.len() as u32));
        self.out.write_all(&hdr)?;
        self.out.write_all(&frame[..incl])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Serializes a packet sequence into an in-memory pcap file.
pub fn write_pcap(packets: &[PacketRecord], endian: Endian, snaplen: u32) -> Result<Vec<u8>> {
    let mut w = PcapWriter::new(Vec::new(), endian, snaplen)?;
    for p in packets {
        w.write_packet(p)?;
    }
    w.finish()
}
