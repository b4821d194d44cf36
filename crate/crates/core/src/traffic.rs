//! Packet, flow and window types shared by every stage of the pipeline.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transport protocol of a captured packet.
///
/// `Other` packets are counted during ingest but never featurized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Tcp,
    Udp,
    Other,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Tcp => "tcp",
            Protocol::Udp => "udp",
            Protocol::Other => "other",
        }
    }

    /// Maps an IPv4 protocol number to the enum.
    pub fn from_ip_proto(proto: u8) -> Self {
        match proto {
            6 => Protocol::Tcp,
            17 => Protocol::Udp,
            _ => Protocol::Other,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tcp" | "6" => Ok(Protocol::Tcp),
            "udp" | "17" => Ok(Protocol::Udp),
            "" => Err(Error::Parse("empty protocol".into())),
            _ => Ok(Protocol::Other),
        }
    }
}

/// One parsed IPv4 packet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PacketRecord {
    /// Microseconds since the Unix epoch.
    pub timestamp: u64,
    pub src_ip: u32,
    pub dst_ip: u32,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
    /// Frame length in bytes (original wire length from the capture record).
    pub length: u32,
    /// IPv4 Identification field.
    pub ip_id: u16,
    /// TCP sequence number; `Some` iff `protocol == Tcp`.
    pub tcp_seq: Option<u32>,
}

impl PacketRecord {
    pub fn flow_key(&self) -> FlowKey {
        FlowKey {
            src_ip: self.src_ip,
            dst_ip: self.dst_ip,
            src_port: self.src_port,
            dst_port: self.dst_port,
            protocol: self.protocol,
        }
    }
}

/// Ground-truth or predicted state of a traffic window.
///
/// Encoded as class index `Normal = 0`, `Attacked = 1`; classifier ties
/// resolve toward the higher index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Normal,
    Attacked,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "NORMAL",
            Label::Attacked => "ATTACKED",
        }
    }

    pub fn class_index(self) -> usize {
        self as usize
    }

    pub fn from_class_index(idx: usize) -> Self {
        if idx == 0 {
            Label::Normal
        } else {
            Label::Attacked
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NORMAL" | "0" => Ok(Label::Normal),
            "ATTACKED" | "1" => Ok(Label::Attacked),
            other => Err(Error::Parse(format!("unknown label {other:?}"))),
        }
    }
}

/// Directional 5-tuple. Attacker-to-victim and victim-to-attacker are distinct keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub src_ip: u32,
    pub dst_ip: u32,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
}

/// A fixed-duration, per-device time bucket `[start, start + duration)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: u64,
    pub duration: u64,
    pub device_id: String,
}

impl TimeWindow {
    pub fn end(&self) -> u64 {
        self.start + self.duration
    }

    pub fn contains(&self, ts: u64) -> bool {
        ts >= self.start && ts < self.end()
    }

    /// True when `[start, end)` intersects the window span.
    pub fn intersects(&self, start: u64, end: u64) -> bool {
        start < self.end() && self.start < end
    }
}

/// Converts a dotted quad to its big-endian numeric value.
pub fn ip_to_numeric(dotted: &str) -> Result<u32> {
    let parts: Vec<&str> = dotted.trim().split('.').collect();
    if parts.len() != 4 {
        return Err(Error::Parse(format!("expected dotted quad a.b.c.d, got {dotted:?}")));
    }
    let mut value: u32 = 0;
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() || part.len() > 3 || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::Parse(format!(
                "octet {} of {dotted:?} is not a number: {part:?}",
                i + 1
            )));
        }
        let octet: u32 = part.parse().expect("validated digits");
        if octet > 255 {
            return Err(Error::Parse(format!(
                "octet {} of {dotted:?} out of range: {octet}",
                i + 1
            )));
        }
        value = (value << 8) | octet;
    }
    Ok(value)
}

/// Inverse of [`ip_to_numeric`].
pub fn numeric_to_ip(value: u32) -> String {
    Ipv4Addr::from(value).to_string()
}

/// Places a packet into its aligned window `epoch + k * duration`.
pub fn assign_window(pkt: &PacketRecord, duration: u64, epoch: u64, device_id: &str) -> Result<TimeWindow> {
    Ok(TimeWindow {
        start: window_start(pkt.timestamp, duration, epoch)?,
        duration,
        device_id: device_id.to_string(),
    })
}

/// Start of the aligned window containing `ts`.
pub fn window_start(ts: u64, duration: u64, epoch: u64) -> Result<u64> {
    if duration == 0 {
        return Err(Error::Parameter("window duration must be > 0".into()));
    }
    if ts < epoch {
        return Err(Error::OutOfRange(format!(
            "timestamp {ts} precedes window epoch {epoch}"
        )));
    }
    Ok(epoch + (ts - epoch) / duration * duration)
}
