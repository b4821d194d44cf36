//! Packet-to-window plumbing shared by the generator, the CLI and the
//! bindings: device mapping, windowing, labeling and train/test splits.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_features, WindowFeatures};
use crate::ingest::{join_labels, AttackInterval, LabeledDataset};
use crate::telemetry::Verdict;
use crate::traffic::{ip_to_numeric, numeric_to_ip, window_start, Label, PacketRecord, Protocol, TimeWindow};

/// A monitored device and its address.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceInfo {
    pub id: String,
    pub ip: String,
}

/// Lookup from IPv4 address to device id.
#[derive(Debug, Clone, Default)]
pub struct DeviceMap {
    by_ip: HashMap<u32, String>,
}

impl DeviceMap {
    pub fn new(devices: &[DeviceInfo]) -> Result<Self> {
        let mut by_ip = HashMap::new();
        for d in devices {
            let ip = ip_to_numeric(&d.ip)?;
            if let Some(prev) = by_ip.insert(ip, d.id.clone()) {
                return Err(Error::Config(format!(
                    "devices {prev} and {} share address {}",
                    d.id,
                    numeric_to_ip(ip)
                )));
            }
        }
        Ok(DeviceMap { by_ip })
    }

    /// Devices a packet belongs to: its source and/or destination device.
    pub fn devices_of(&self, p: &PacketRecord) -> Vec<&str> {
        let mut out = Vec::with_capacity(2);
        if let Some(d) = self.by_ip.get(&p.src_ip) {
            out.push(d.as_str());
        }
        if let Some(d) = self.by_ip.get(&p.dst_ip) {
            if out.first() != Some(&d.as_str()) {
                out.push(d.as_str());
            }
        }
        out
    }
}

/// Groups packets by `(device, window start, protocol)` and extracts one
/// feature vector per non-empty group, ordered by device, start, protocol.
/// Packets touching no known device and non-TCP/UDP packets are skipped.
pub fn extract_windows(
    packets: &[PacketRecord],
    devices: &DeviceMap,
    window_us: u64,
    epoch: u64,
) -> Result<Vec<WindowFeatures>> {
    let mut groups: BTreeMap<(String, u64, Protocol), Vec<PacketRecord>> = BTreeMap::new();
    for p in packets {
        if p.protocol == Protocol::Other {
            continue;
        }
        let devs = devices.devices_of(p);
        if devs.is_empty() {
            continue;
        }
        let start = window_start(p.timestamp, window_us, epoch)?;
        for d in devs {
            groups
                .entry((d.to_string(), start, p.protocol))
                .or_default()
                .push(p.clone());
        }
    }
    let groups: Vec<_> = groups.into_iter().collect();
    groups
        .par_iter()
        .map(|((device, start, protocol), pkts)| {
            let window = TimeWindow {
                start: *start,
                duration: window_us,
                device_id: device.clone(),
            };
            extract_features(pkts, *protocol, &window)
        })
        .collect()
}

/// An attack span tagged with the protocol its traffic uses and the
/// attribution verdict it should produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthInterval {
    pub interval: AttackInterval,
    pub protocol: Protocol,
    pub verdict: Verdict,
}

/// A window is ATTACKED iff it intersects an interval on its device whose
/// traffic uses the window's protocol.
pub fn label_windows(features: &[WindowFeatures], truth: &[TruthInterval]) -> Result<Vec<Label>> {
    let mut labels = vec![Label::Normal; features.len()];
    for protocol in [Protocol::Tcp, Protocol::Udp] {
        let idx: Vec<usize> = (0..features.len())
            .filter(|&i| features[i].protocol == protocol)
            .collect();
        let windows: Vec<TimeWindow> = idx.iter().map(|&i| features[i].window.clone()).collect();
        let ivs: Vec<AttackInterval> = truth
            .iter()
            .filter(|t| t.protocol == protocol)
            .map(|t| t.interval.clone())
            .collect();
        for (i, l) in idx.into_iter().zip(join_labels(&windows, &ivs)?) {
            labels[i] = l;
        }
    }
    Ok(labels)
}

/// The intended attribution verdict of a window, if it intersects an
/// attack of its protocol.
pub fn intended_verdict(f: &WindowFeatures, truth: &[TruthInterval]) -> Option<Verdict> {
    truth
        .iter()
        .find(|t| {
            t.protocol == f.protocol
                && t.interval.device_id == f.window.device_id
                && f.window.intersects(t.interval.start, t.interval.end)
        })
        .map(|t| t.verdict)
}

/// True when the window intersects any attack interval on its device,
/// whatever the protocol.
pub fn in_attack_period(window: &TimeWindow, truth: &[TruthInterval]) -> bool {
    truth
        .iter()
        .any(|t| t.interval.device_id == window.device_id && window.intersects(t.interval.start, t.interval.end))
}

pub fn labeled_dataset(features: Vec<WindowFeatures>, truth: &[TruthInterval]) -> Result<LabeledDataset> {
    let labels = label_windows(&features, truth)?;
    LabeledDataset::new(features, labels)
}

/// Seeded shuffle split; `train_fraction` of the indices (rounded) go to
/// training. Both halves are returned sorted.
pub fn train_test_split(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (n as f64 * train_fraction).round() as usize;
    let mut train = perm[..cut].to_vec();
    let mut test = perm[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub const LABELS_HEADER: [&str; 5] = ["device_id", "window_start_us", "protocol", "label", "intended_verdict"];

/// Window ground truth: one row per featurized window.
pub fn write_labels_csv<W: Write>(out: W, features: &[WindowFeatures], truth: &[TruthInterval]) -> Result<()> {
    let labels = label_windows(features, truth)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LABELS_HEADER)?;
    for (f, l) in features.iter().zip(&labels) {
        w.write_record([
            f.window.device_id.clone(),
            f.window.start.to_string(),
            f.protocol.to_string(),
            l.to_string(),
            intended_verdict(f, truth).map_or_else(String::new, |v| v.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const SCHEDULE_HEADER: [&str; 6] = ["kind", "device_id", "start_us", "end_us", "protocol", "verdict"];

pub fn write_truth_csv<W: Write>(out: W, kinds: &[String], truth: &[TruthInterval]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCHEDULE_HEADER)?;
    for (k, t) in kinds.iter().zip(truth) {
        w.write_record([
            k.clone(),
            t.interval.device_id.clone(),
            t.interval.start.to_string(),
            t.interval.end.to_string(),
            t.protocol.to_string(),
            t.verdict.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a schedule CSV back into `(kind, interval)` pairs.
pub fn read_truth_csv<R: Read>(input: R) -> Result<Vec<(String, TruthInterval)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    let mut col = [0usize; 6];
    for (i, name) in SCHEDULE_HEADER.iter().enumerate() {
        col[i] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| Error::Schema(format!("schedule CSV is missing column {name:?}")))?;
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let f = |i: usize| rec.get(col[i]).unwrap_or("").to_string();
        let num = |i: usize| -> Result<u64> {
            f(i).parse()
                .map_err(|_| Error::Parse(format!("schedule row {row}: bad {} {:?}", SCHEDULE_HEADER[i], f(i))))
        };
        out.push((
            f(0),
            TruthInterval {
                interval: AttackInterval {
                    device_id: f(1),
                    start: num(2)?,
                    end: num(3)?,
                },
                protocol: f(4).parse()?,
                verdict: f(5).parse()?,
            },
        ));
    }
    Ok(out)
}
