//! Capture ingest: pcap and CSV parsing, dataset cleaning and label joins.

pub mod csv;
pub mod pcap;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::WindowFeatures;
use crate::traffic::{Label, PacketRecord, Protocol, TimeWindow};

pub use self::csv::{parse_csv, write_csv, CsvSchema};
pub use self::pcap::{parse_pcap, parse_pcap_file, write_pcap, Endian, PcapWriter};

/// Why an input row did not make it into a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DropReason {
    #[serde(rename = "malformed")]
    Malformed,
    #[serde(rename = "non-IPv4")]
    NonIpv4,
    #[serde(rename = "other-proto")]
    OtherProto,
    #[serde(rename = "duplicate")]
    Duplicate,
    #[serde(rename = "missing-field")]
    MissingField,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Malformed => "malformed",
            DropReason::NonIpv4 => "non-IPv4",
            DropReason::OtherProto => "other-proto",
            DropReason::Duplicate => "duplicate",
            DropReason::MissingField => "missing-field",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Pcap,
    Csv,
    Memory,
}

/// Parsed packet rows plus what was dropped on the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    pub rows: Vec<PacketRecord>,
    pub source: String,
    pub format: SourceFormat,
    pub dropped_counts: BTreeMap<DropReason, usize>,
}

impl RawDataset {
    pub fn new(source: impl Into<String>, format: SourceFormat) -> Self {
        RawDataset {
            rows: Vec::new(),
            source: source.into(),
            format,
            dropped_counts: BTreeMap::new(),
        }
    }

    pub fn from_rows(rows: Vec<PacketRecord>) -> Self {
        RawDataset {
            rows,
            ..RawDataset::new("<memory>", SourceFormat::Memory)
        }
    }

    pub fn record_drop(&mut self, reason: DropReason) {
        *self.dropped_counts.entry(reason).or_insert(0) += 1;
    }

    pub fn dropped(&self, reason: DropReason) -> usize {
        self.dropped_counts.get(&reason).copied().unwrap_or(0)
    }

    pub fn total_dropped(&self) -> usize {
        self.dropped_counts.values().sum()
    }

    /// Rows seen by the ingest step, kept or not.
    pub fn input_count(&self) -> usize {
        self.rows.len() + self.total_dropped()
    }
}

/// Window feature vectors aligned with their ground-truth labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub features: Vec<WindowFeatures>,
    pub labels: Vec<Label>,
}

impl LabeledDataset {
    pub fn new(features: Vec<WindowFeatures>, labels: Vec<Label>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Shape {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if let Some(bad) = features.iter().find(|f| !f.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite feature vector in window {} @ {}",
                bad.window.device_id, bad.window.start
            )));
        }
        Ok(LabeledDataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn filter_protocol(&self, protocol: Protocol) -> LabeledDataset {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.features[i].protocol == protocol)
            .collect();
        self.subset(&idx)
    }
}

fn is_noisy(p: &PacketRecord) -> bool {
    let transport = matches!(p.protocol, Protocol::Tcp | Protocol::Udp);
    p.length == 0 || p.timestamp == 0 || (transport && (p.src_port == 0 || p.dst_port == 0))
}

/// Removes sentinel-valued records and exact duplicates, keeping first
/// occurrences in input order. Idempotent.
pub fn clean_dataset(raw: RawDataset) -> RawDataset {
    let RawDataset {
        rows,
        source,
        format,
        mut dropped_counts,
    } = raw;
    let mut seen: HashSet<PacketRecord> = HashSet::with_capacity(rows.len());
    let mut kept = Vec::with_capacity(rows.len());
    for row in rows {
        if is_noisy(&row) {
            *dropped_counts.entry(DropReason::MissingField).or_insert(0) += 1;
        } else if seen.contains(&row) {
            *dropped_counts.entry(DropReason::Duplicate).or_insert(0) += 1;
        } else {
            seen.insert(row.clone());
            kept.push(row);
        }
    }
    RawDataset {
        rows: kept,
        source,
        format,
        dropped_counts,
    }
}

/// Half-open attack span `[start, end)` on one device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackInterval {
    pub start: u64,
    pub end: u64,
    pub device_id: String,
}

/// Rejects empty intervals and overlapping intervals on the same device.
pub fn validate_intervals(intervals: &[AttackInterval]) -> Result<()> {
    let mut by_device: HashMap<&str, Vec<&AttackInterval>> = HashMap::new();
    for iv in intervals {
        if iv.end <= iv.start {
            return Err(Error::Config(format!(
                "attack interval [{}, {}) on {} is empty",
                iv.start, iv.end, iv.device_id
            )));
        }
        by_device.entry(iv.device_id.as_str()).or_default().push(iv);
    }
    for (device, mut ivs) in by_device {
        ivs.sort_by_key(|iv| iv.start);
        for pair in ivs.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(Error::Config(format!(
                    "overlapping attack intervals on {device}: [{}, {}) and [{}, {})",
                    pair[0].start, pair[0].end, pair[1].start, pair[1].end
                )));
            }
        }
    }
    Ok(())
}

/// Labels each window ATTACKED iff it intersects an attack interval on its device.
pub fn join_labels(windows: &[TimeWindow], intervals: &[AttackInterval]) -> Result<Vec<Label>> {
    validate_intervals(intervals)?;
    let mut by_device: HashMap<&str, Vec<&AttackInterval>> = HashMap::new();
    for iv in intervals {
        by_device.entry(iv.device_id.as_str()).or_default().push(iv);
    }
    Ok(windows
        .iter()
        .map(|w| {
            let hit = by_device
                .get(w.device_id.as_str())
                .is_some_and(|ivs| ivs.iter().any(|iv| w.intersects(iv.start, iv.end)));
            if hit {
                Label::Attacked
            } else {
                Label::Normal
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(ts: u64, dst_port: u16) -> PacketRecord {
        PacketRecord {
            timestamp: ts,
            src_ip: 10,
            dst_ip: 20,
            src_port: 1234,
            dst_port,
            protocol: Protocol::Tcp,
            length: 60,
            ip_id: 9,
            tcp_seq: Some(1),
        }
    }

    fn win(start_s: u64, dur_s: u64) -> TimeWindow {
        TimeWindow {
            start: start_s * 1_000_000,
            duration: dur_s * 1_000_000,
            device_id: "dev-0".into(),
        }
    }

    fn iv(start_s: u64, end_s: u64, dev: &str) -> AttackInterval {
        AttackInterval {
            start: start_s * 1_000_000,
            end: end_s * 1_000_000,
            device_id: dev.into(),
        }
    }

    #[test]
    fn clean_removes_duplicates() {
        let (r1, r2) = (rec(1, 80), rec(2, 80));
        let out = clean_dataset(RawDataset::from_rows(vec![r1.clone(), r1.clone(), r2.clone()]));
        assert_eq!(out.rows, vec![r1, r2]);
        assert_eq!(out.dropped(DropReason::Duplicate), 1);
    }

    #[test]
    fn clean_empty() {
        let out = clean_dataset(RawDataset::from_rows(vec![]));
        assert!(out.rows.is_empty());
        assert_eq!(out.total_dropped(), 0);
    }

    #[test]
    fn clean_drops_sentinels() {
        let out = clean_dataset(RawDataset::from_rows(vec![rec(1, 0)]));
        assert!(out.rows.is_empty());
        assert_eq!(out.dropped(DropReason::MissingField), 1);

        let mut zero_len = rec(1, 80);
        zero_len.length = 0;
        let out = clean_dataset(RawDataset::from_rows(vec![zero_len, rec(0, 80)]));
        assert_eq!(out.dropped(DropReason::MissingField), 2);
    }

    #[test]
    fn retransmission_at_new_time_is_kept() {
        let out = clean_dataset(RawDataset::from_rows(vec![rec(1, 80), rec(2, 80)]));
        assert_eq!(out.rows.len(), 2);
    }

    #[test]
    fn label_join_examples() {
        let ivs = [iv(5, 9, "dev-0")];
        let labels = join_labels(&[win(4, 2), win(0, 2), win(9, 2)], &ivs).unwrap();
        assert_eq!(labels, vec![Label::Attacked, Label::Normal, Label::Normal]);
    }

    #[test]
    fn label_join_is_per_device() {
        let labels = join_labels(&[win(4, 2)], &[iv(5, 9, "dev-1")]).unwrap();
        assert_eq!(labels, vec![Label::Normal]);
    }

    #[test]
    fn overlapping_intervals_rejected() {
        let err = join_labels(&[win(0, 2)], &[iv(0, 5, "dev-0"), iv(4, 8, "dev-0")]);
        assert!(matches!(err, Err(Error::Config(_))));
        // touching half-open intervals are fine, as is overlap across devices
        join_labels(&[win(0, 2)], &[iv(0, 5, "dev-0"), iv(5, 8, "dev-0"), iv(1, 6, "dev-1")]).unwrap();
    }

    #[test]
    fn labeled_dataset_rejects_misaligned() {
        assert!(LabeledDataset::new(vec![], vec![Label::Normal]).is_err());
    }

    fn arb_rows() -> impl Strategy<Value = Vec<PacketRecord>> {
        proptest::collection::vec(
            (0u64..4, 0u16..3, 0u32..2).prop_map(|(ts, port, len)| PacketRecord {
                timestamp: ts,
                src_ip: 1,
                dst_ip: 2,
                src_port: 7,
                dst_port: port,
                protocol: Protocol::Udp,
                length: len * 60,
                ip_id: 0,
                tcp_seq: None,
            }),
            0..30,
        )
    }

    proptest! {
        #[test]
        fn clean_is_idempotent_and_conserving(rows in arb_rows()) {
            let n = rows.len();
            let once = clean_dataset(RawDataset::from_rows(rows));
            prop_assert_eq!(once.input_count(), n);
            prop_assert!(once.rows.len() <= n);
            let twice = clean_dataset(once.clone());
            prop_assert_eq!(&twice.rows, &once.rows);
            prop_assert_eq!(&twice.dropped_counts, &once.dropped_counts);
        }
    }
}
