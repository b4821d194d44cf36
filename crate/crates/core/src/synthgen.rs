//! Deterministic synthetic corpora: per-device traffic and telemetry with a
//! scheduled set of attacks.
//!
//! Normal devices talk to a handful of peers over TCP (sequence numbers
//! advance by a per-flow constant, IP ids are random, lengths are a mix of
//! small and large frames) and send DNS queries over UDP. Three attack
//! kinds are available:
//!
//! | kind             | protocol | signature                                                   | telemetry            |
//! |------------------|----------|-------------------------------------------------------------|----------------------|
//! | `DDOS`           | TCP      | botnet sources, one target port, random seq, constant id/len | energy +10σ          |
//! | `EC_DDOS`        | UDP      | botnet sources, random ports, constant length               | energy +10σ, memory +2σ |
//! | `MEMORY_EXHAUST` | TCP      | one source, one port, constant id, large constant length    | memory +5σ rising to +10σ |
//!
//! Every random draw comes from a ChaCha stream keyed by the seed, the
//! device and the component, so a corpus is a pure function of its config.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::WindowFeatures;
use crate::ingest::pcap::DEFAULT_SNAPLEN;
use crate::ingest::{validate_intervals, write_csv, AttackInterval, Endian, LabeledDataset, PcapWriter};
use crate::pipeline::{
    extract_windows, label_windows, write_labels_csv, write_truth_csv, DeviceInfo, DeviceMap, TruthInterval,
};
use crate::telemetry::{write_telemetry_csv, DeviceState, TelemetrySample, Verdict};
use crate::traffic::{numeric_to_ip, Label, PacketRecord, Protocol};

pub const WINDOW_CHOICES: [u64; 4] = [2, 3, 5, 10];
const DNS_SERVER: u32 = 0xC0A8_0101; // 192.168.1.1
const SERVICE_PORTS: [u16; 6] = [80, 443, 1883, 8883, 5683, 8080];
const US: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AttackKind {
    Ddos,
    EcDdos,
    MemoryExhaust,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::Ddos, AttackKind::EcDdos, AttackKind::MemoryExhaust];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Ddos => "DDOS",
            AttackKind::EcDdos => "EC_DDOS",
            AttackKind::MemoryExhaust => "MEMORY_EXHAUST",
        }
    }

    pub fn protocol(self) -> Protocol {
        match self {
            AttackKind::EcDdos => Protocol::Udp,
            _ => Protocol::Tcp,
        }
    }

    /// Attribution verdict the attack is built to produce.
    pub fn intended_verdict(self) -> Verdict {
        match self {
            AttackKind::MemoryExhaust => Verdict::MemoryAttack,
            _ => Verdict::EnergyAttack,
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parameter(format!("unknown attack kind {s:?}")))
    }
}

/// One attack, in whole seconds relative to the corpus start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledAttack {
    pub kind: AttackKind,
    pub device: usize,
    pub start_s: u64,
    pub end_s: u64,
}

/// Packets per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficRates {
    pub normal_tcp: f64,
    pub normal_udp: f64,
    pub ddos: f64,
    pub ec_ddos: f64,
    pub memory_exhaust: f64,
}

impl Default for TrafficRates {
    fn default() -> Self {
        TrafficRates {
            normal_tcp: 40.0,
            normal_udp: 10.0,
            ddos: 250.0,
            ec_ddos: 250.0,
            memory_exhaust: 150.0,
        }
    }
}

impl TrafficRates {
    pub fn normal_total(&self) -> f64 {
        self.normal_tcp + self.normal_udp
    }

    pub fn attack(&self, kind: AttackKind) -> f64 {
        match kind {
            AttackKind::Ddos => self.ddos,
            AttackKind::EcDdos => self.ec_ddos,
            AttackKind::MemoryExhaust => self.memory_exhaust,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TelemetryParams {
    pub period_us: u64,
    pub energy_mean: f64,
    pub energy_std: f64,
    pub memory_mean: f64,
    pub memory_std: f64,
    /// Energy shift during DDOS and EC_DDOS, in stddevs.
    pub energy_shift_sigma: f64,
    /// Final memory shift of MEMORY_EXHAUST, in stddevs; the shift starts at half.
    pub memory_shift_sigma: f64,
    /// Memory shift during EC_DDOS, in stddevs.
    pub ec_memory_shift_sigma: f64,
}

impl Default for TelemetryParams {
    fn default() -> Self {
        TelemetryParams {
            period_us: 250_000,
            energy_mean: 100.0,
            energy_std: 5.0,
            memory_mean: 2048.0,
            memory_std: 40.0,
            energy_shift_sigma: 10.0,
            memory_shift_sigma: 10.0,
            ec_memory_shift_sigma: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub devices: usize,
    pub duration_s: u64,
    pub window_secs: u64,
    /// Corpus start in microseconds since the Unix epoch; also the window origin.
    pub start_us: u64,
    pub rates: TrafficRates,
    pub telemetry: TelemetryParams,
    /// `None` uses [`default_schedule`].
    pub schedule: Option<Vec<ScheduledAttack>>,
    pub check_separation: bool,
    pub max_signature_overlap: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 42,
            devices: 5,
            duration_s: 600,
            window_secs: 2,
            start_us: 1_700_000_000 * US,
            rates: TrafficRates::default(),
            telemetry: TelemetryParams::default(),
            schedule: None,
            check_separation: true,
            max_signature_overlap: 0.05,
        }
    }
}

/// Each device gets one attack of every kind, each lasting a tenth of the
/// run, staggered across devices and aligned to window boundaries.
pub fn default_schedule(devices: usize, duration_s: u64, window_secs: u64) -> Vec<ScheduledAttack> {
    let w = window_secs.max(1);
    let align = |s: u64| s / w * w;
    let len = align(duration_s / 10).max(w);
    let mut out = Vec::new();
    for d in 0..devices {
        let stagger = (d % 5) as u64 * duration_s / 50;
        for (kind, frac) in [
            (AttackKind::Ddos, 10),
            (AttackKind::EcDdos, 40),
            (AttackKind::MemoryExhaust, 70),
        ] {
            let start = align(duration_s * frac / 100 + stagger);
            let end = (start + len).min(align(duration_s));
            if end > start {
                out.push(ScheduledAttack {
                    kind,
                    device: d,
                    start_s: start,
                    end_s: end,
                });
            }
        }
    }
    out
}

impl ScenarioConfig {
    pub fn window_us(&self) -> u64 {
        self.window_secs * US
    }

    pub fn end_us(&self) -> u64 {
        self.start_us + self.duration_s * US
    }

    pub fn effective_schedule(&self) -> Vec<ScheduledAttack> {
        self.schedule
            .clone()
            .unwrap_or_else(|| default_schedule(self.devices, self.duration_s, self.window_secs))
    }

    pub fn device_list(&self) -> Vec<DeviceInfo> {
        (0..self.devices)
            .map(|i| DeviceInfo {
                id: format!("dev-{i}"),
                ip: numeric_to_ip(device_ip(i)),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices == 0 || self.devices > 200 {
            return Err(Error::Config(format!(
                "device count must be in 1..=200, got {}",
                self.devices
            )));
        }
        if self.duration_s == 0 {
            return Err(Error::Config("duration must be > 0".into()));
        }
        if !WINDOW_CHOICES.contains(&self.window_secs) {
            return Err(Error::Config(format!(
                "window duration must be one of {WINDOW_CHOICES:?} s, got {}",
                self.window_secs
            )));
        }
        if self.end_us() / US > u32::MAX as u64 {
            return Err(Error::Config(
                "corpus extends past the 32-bit pcap timestamp range".into(),
            ));
        }
        let r = &self.rates;
        for (name, v) in [
            ("normal_tcp", r.normal_tcp),
            ("normal_udp", r.normal_udp),
            ("ddos", r.ddos),
            ("ec_ddos", r.ec_ddos),
            ("memory_exhaust", r.memory_exhaust),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("rate {name} must be > 0, got {v}")));
            }
        }
        let t = &self.telemetry;
        if t.period_us == 0
            || t.energy_std.is_nan()
            || t.energy_std <= 0.0
            || t.memory_std.is_nan()
            || t.memory_std <= 0.0
        {
            return Err(Error::Config("telemetry period and stddevs must be > 0".into()));
        }
        for a in self.effective_schedule() {
            if a.device >= self.devices {
                return Err(Error::Config(format!("attack targets unknown device {}", a.device)));
            }
            if a.end_s > self.duration_s {
                return Err(Error::Config(format!(
                    "attack [{}, {}) s extends past the {} s run",
                    a.start_s, a.end_s, self.duration_s
                )));
            }
        }
        validate_intervals(&self.attack_intervals())
    }

    fn attack_intervals(&self) -> Vec<AttackInterval> {
        self.effective_schedule()
            .iter()
            .map(|a| AttackInterval {
                start: self.start_us + a.start_s * US,
                end: self.start_us + a.end_s * US,
                device_id: format!("dev-{}", a.device),
            })
            .collect()
    }

    /// Ground-truth intervals in microseconds, with their kinds.
    pub fn truth(&self) -> Vec<(AttackKind, TruthInterval)> {
        self.effective_schedule()
            .iter()
            .zip(self.attack_intervals())
            .map(|(a, interval)| {
                (
                    a.kind,
                    TruthInterval {
                        interval,
                        protocol: a.kind.protocol(),
                        verdict: a.kind.intended_verdict(),
                    },
                )
            })
            .collect()
    }
}

/// `192.168.1.(10 + i)`
pub fn device_ip(i: usize) -> u32 {
    0xC0A8_0100 + 10 + i as u32
}

const STREAM_NORMAL_TCP: u64 = 0;
const STREAM_NORMAL_UDP: u64 = 1;
const STREAM_TELEMETRY: u64 = 2;
const STREAM_ATTACK: u64 = 3;

fn stream_rng(seed: u64, device: usize, component: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((device as u64) << 40) | component);
    rng
}

/// Poisson arrival times in `[span.0, span.1)`.
fn arrivals<R: Rng>(rng: &mut R, rate: f64, span: (u64, u64)) -> Vec<u64> {
    let gap = Exp::new(rate).expect("rate validated > 0");
    let len = (span.1 - span.0) as f64;
    let mut out = Vec::with_capacity((rate * len / US as f64) as usize + 16);
    let mut off = 0.0;
    loop {
        off += gap.sample(rng) * US as f64;
        if off >= len {
            return out;
        }
        out.push(span.0 + off as u64);
    }
}

fn ephemeral_port<R: Rng>(rng: &mut R) -> u16 {
    rng.random_range(1024..=65535)
}

fn normal_tcp(cfg: &ScenarioConfig, device: usize, span: (u64, u64)) -> Vec<PacketRecord> {
    let mut rng = stream_rng(cfg.seed, device, STREAM_NORMAL_TCP);
    let ip = device_ip(device);
    let n_peers = rng.random_range(3..=8usize);
    // (peer ip, dst port, src port, per-flow sequence increment)
    let flows: Vec<(u32, u16, u16, u32)> = (0..n_peers)
        .map(|j| {
            let peer = 0x5DB8_0000 | ((device as u32 & 0xff) << 8) | (10 + j as u32);
            (
                peer,
                SERVICE_PORTS[j % SERVICE_PORTS.len()],
                ephemeral_port(&mut rng),
                rng.random_range(200..=1460),
            )
        })
        .collect();
    let mut cursor: u32 = rng.random();
    arrivals(&mut rng, cfg.rates.normal_tcp, span)
        .into_iter()
        .map(|ts| {
            let (peer, dport, sport, inc) = flows[rng.random_range(0..flows.len())];
            let seq = cursor;
            cursor = cursor.wrapping_add(inc);
            let length = if rng.random_bool(0.5) {
                rng.random_range(60..=120)
            } else {
                rng.random_range(800..=1500)
            };
            PacketRecord {
                timestamp: ts,
                src_ip: ip,
                dst_ip: peer,
                src_port: sport,
                dst_port: dport,
                protocol: Protocol::Tcp,
                length,
                ip_id: rng.random(),
                tcp_seq: Some(seq),
            }
        })
        .collect()
}

fn normal_udp(cfg: &ScenarioConfig, device: usize, span: (u64, u64)) -> Vec<PacketRecord> {
    let mut rng = stream_rng(cfg.seed, device, STREAM_NORMAL_UDP);
    let ip = device_ip(device);
    arrivals(&mut rng, cfg.rates.normal_udp, span)
        .into_iter()
        .map(|ts| PacketRecord {
            timestamp: ts,
            src_ip: ip,
            dst_ip: DNS_SERVER,
            src_port: ephemeral_port(&mut rng),
            dst_port: 53,
            protocol: Protocol::Udp,
            length: rng.random_range(70..=300),
            ip_id: rng.random(),
            tcp_seq: None,
        })
        .collect()
}

/// Normal TCP and UDP traffic of one device over `span` (microseconds),
/// ordered by timestamp.
pub fn gen_normal_traffic(cfg: &ScenarioConfig, device: usize, span: (u64, u64)) -> Vec<PacketRecord> {
    let mut out = normal_tcp(cfg, device, span);
    out.extend(normal_udp(cfg, device, span));
    out.sort_by_key(|p| p.timestamp);
    out
}

fn botnet<R: Rng>(rng: &mut R, size: usize) -> Vec<u32> {
    (0..size)
        .map(|_| 0x2D00_0000 | (rng.random::<u32>() & 0x00FF_FFFF))
        .collect()
}

/// Attack traffic of one kind against `device` over `span`, ordered by
/// timestamp.
pub fn gen_attack_traffic(
    cfg: &ScenarioConfig,
    kind: AttackKind,
    device: usize,
    span: (u64, u64),
) -> Vec<PacketRecord> {
    let component = STREAM_ATTACK + ((kind as u64) << 4) + ((span.0 / US) << 8);
    let mut rng = stream_rng(cfg.seed, device, component);
    let target = device_ip(device);
    let times = arrivals(&mut rng, cfg.rates.attack(kind), span);
    match kind {
        AttackKind::Ddos => {
            let pool = botnet(&mut rng, 64);
            let ip_id: u16 = rng.random();
            times
                .into_iter()
                .map(|ts| PacketRecord {
                    timestamp: ts,
                    src_ip: pool[rng.random_range(0..pool.len())],
                    dst_ip: target,
                    src_port: ephemeral_port(&mut rng),
                    dst_port: 80,
                    protocol: Protocol::Tcp,
                    length: 60,
                    ip_id,
                    tcp_seq: Some(rng.random()),
                })
                .collect()
        }
        AttackKind::EcDdos => {
            let pool = botnet(&mut rng, 64);
            times
                .into_iter()
                .map(|ts| PacketRecord {
                    timestamp: ts,
                    src_ip: pool[rng.random_range(0..pool.len())],
                    dst_ip: target,
                    src_port: ephemeral_port(&mut rng),
                    dst_port: rng.random_range(1..=65535),
                    protocol: Protocol::Udp,
                    length: 100,
                    ip_id: rng.random(),
                    tcp_seq: None,
                })
                .collect()
        }
        AttackKind::MemoryExhaust => {
            let src = botnet(&mut rng, 1)[0];
            let sport = ephemeral_port(&mut rng);
            let ip_id: u16 = rng.random();
            let mut seq: u32 = rng.random();
            times
                .into_iter()
                .map(|ts| {
                    let s = seq;
                    seq = seq.wrapping_add(1346);
                    PacketRecord {
                        timestamp: ts,
                        src_ip: src,
                        dst_ip: target,
                        src_port: sport,
                        dst_port: 8080,
                        protocol: Protocol::Tcp,
                        length: 1400,
                        ip_id,
                        tcp_seq: Some(s),
                    }
                })
                .collect()
        }
    }
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Telemetry of one device sampled every `period_us` over `span`, shifted
/// during the given attacks `(kind, start_us, end_us)`.
pub fn gen_telemetry(
    cfg: &ScenarioConfig,
    device: usize,
    span: (u64, u64),
    attacks: &[(AttackKind, u64, u64)],
) -> Vec<TelemetrySample> {
    let p = &cfg.telemetry;
    let mut rng = stream_rng(cfg.seed, device, STREAM_TELEMETRY);
    let energy = Normal::new(p.energy_mean, p.energy_std).expect("validated stddev");
    let memory = Normal::new(p.memory_mean, p.memory_std).expect("validated stddev");
    let id = format!("dev-{device}");
    let mut out = Vec::new();
    let mut t = span.0;
    while t < span.1 {
        let mut e = energy.sample(&mut rng);
        let mut m = memory.sample(&mut rng);
        let mut state = DeviceState::Normal;
        for &(kind, s, end) in attacks {
            if t < s || t >= end {
                continue;
            }
            state = DeviceState::Abnormal;
            match kind {
                AttackKind::Ddos => e += p.energy_shift_sigma * p.energy_std,
                AttackKind::EcDdos => {
                    e += p.energy_shift_sigma * p.energy_std;
                    m += p.ec_memory_shift_sigma * p.memory_std;
                }
                AttackKind::MemoryExhaust => {
                    let frac = (t - s) as f64 / (end - s) as f64;
                    m += p.memory_shift_sigma * p.memory_std * (1.0 + frac) / 2.0;
                }
            }
        }
        out.push(TelemetrySample {
            timestamp: t,
            device_id: id.clone(),
            energy_mw: round3(e.max(0.0)),
            memory_kib: round3(m.max(0.0)),
            state,
        });
        t += p.period_us;
    }
    out
}

/// Share of all windows lying inside the intersection of the normal and
/// attack value ranges of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationStat {
    pub protocol: Protocol,
    pub feature: String,
    pub overlap: f64,
    pub normal_range: (f64, f64),
    pub attack_range: (f64, f64),
}

pub const SEPARATION_FEATURES: [&str; 4] = ["iden_entropy", "dst_port_entropy", "len_stddev", "num_packet"];

fn separation_value(f: &WindowFeatures, name: &str) -> f64 {
    match name {
        "iden_entropy" => f.iden_entropy,
        "dst_port_entropy" => f.dst_port_entropy,
        "len_stddev" => f.len_stddev,
        _ => f.num_packet as f64,
    }
}

fn range(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

pub fn range_overlap(normal: &[f64], attack: &[f64]) -> f64 {
    if normal.is_empty() || attack.is_empty() {
        return 0.0;
    }
    let (nlo, nhi) = range(normal);
    let (alo, ahi) = range(attack);
    let lo = nlo.max(alo);
    let hi = nhi.min(ahi);
    if lo > hi {
        return 0.0;
    }
    let inside = normal.iter().chain(attack).filter(|&&x| x >= lo && x <= hi).count();
    inside as f64 / (normal.len() + attack.len()) as f64
}

/// Overlap statistics per protocol and signature feature.
pub fn signature_separation(features: &[WindowFeatures], labels: &[Label]) -> Vec<SeparationStat> {
    let mut out = Vec::new();
    for protocol in [Protocol::Tcp, Protocol::Udp] {
        for name in SEPARATION_FEATURES {
            let mut normal = Vec::new();
            let mut attack = Vec::new();
            for (f, l) in features.iter().zip(labels) {
                if f.protocol != protocol {
                    continue;
                }
                let v = separation_value(f, name);
                match l {
                    Label::Normal => normal.push(v),
                    Label::Attacked => attack.push(v),
                }
            }
            if normal.is_empty() || attack.is_empty() {
                continue;
            }
            out.push(SeparationStat {
                protocol,
                feature: name.to_string(),
                overlap: range_overlap(&normal, &attack),
                normal_range: range(&normal),
                attack_range: range(&attack),
            });
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: ScenarioConfig,
    pub devices: Vec<DeviceInfo>,
    pub packets: Vec<PacketRecord>,
    pub telemetry: Vec<TelemetrySample>,
    pub schedule: Vec<(AttackKind, TruthInterval)>,
    pub windows: Vec<WindowFeatures>,
    pub labels: Vec<Label>,
    pub separation: Vec<SeparationStat>,
}

impl SyntheticCorpus {
    pub fn truth(&self) -> Vec<TruthInterval> {
        self.schedule.iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn dataset(&self) -> Result<LabeledDataset> {
        LabeledDataset::new(self.windows.clone(), self.labels.clone())
    }
}

/// Generates, merges and windows a full corpus. With separation checking
/// enabled, any signature feature whose normal/attack overlap reaches the
/// configured limit aborts the build.
pub fn build_corpus(cfg: &ScenarioConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let schedule = cfg.truth();
    let span = (cfg.start_us, cfg.end_us());
    let per_device: Vec<(Vec<PacketRecord>, Vec<TelemetrySample>)> = (0..cfg.devices)
        .into_par_iter()
        .map(|d| {
            let id = format!("dev-{d}");
            let attacks: Vec<(AttackKind, u64, u64)> = schedule
                .iter()
                .filter(|(_, t)| t.interval.device_id == id)
                .map(|(k, t)| (*k, t.interval.start, t.interval.end))
                .collect();
            let mut pkts = gen_normal_traffic(cfg, d, span);
            for &(kind, s, e) in &attacks {
                pkts.extend(gen_attack_traffic(cfg, kind, d, (s, e)));
            }
            (pkts, gen_telemetry(cfg, d, span, &attacks))
        })
        .collect();
    let mut packets = Vec::new();
    let mut telemetry = Vec::new();
    for (p, t) in per_device {
        packets.extend(p);
        telemetry.extend(t);
    }
    packets.sort_by_key(|p| p.timestamp);
    telemetry.sort_by_key(|s| s.timestamp);

    let devices = cfg.device_list();
    let map = DeviceMap::new(&devices)?;
    let windows = extract_windows(&packets, &map, cfg.window_us(), cfg.start_us)?;
    let truth: Vec<TruthInterval> = schedule.iter().map(|(_, t)| t.clone()).collect();
    let labels = label_windows(&windows, &truth)?;
    let separation = signature_separation(&windows, &labels);
    if cfg.check_separation {
        if let Some(bad) = separation.iter().find(|s| s.overlap >= cfg.max_signature_overlap) {
            return Err(Error::SignatureOverlap {
                feature: bad.feature.clone(),
                protocol: bad.protocol.to_string(),
                overlap: bad.overlap,
            });
        }
    }
    Ok(SyntheticCorpus {
        config: cfg.clone(),
        devices,
        packets,
        telemetry,
        schedule,
        windows,
        labels,
        separation,
    })
}

/// File names written by [`write_corpus_files`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusFiles {
    pub pcap: PathBuf,
    pub packets_csv: PathBuf,
    pub telemetry_csv: PathBuf,
    pub schedule_csv: PathBuf,
    pub labels_csv: PathBuf,
}

impl CorpusFiles {
    pub fn in_dir(dir: &Path) -> Self {
        CorpusFiles {
            pcap: dir.join("capture.pcap"),
            packets_csv: dir.join("packets.csv"),
            telemetry_csv: dir.join("telemetry.csv"),
            schedule_csv: dir.join("schedule.csv"),
            labels_csv: dir.join("labels.csv"),
        }
    }
}

fn csv_file(path: &Path, header: &str) -> Result<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(path)?);
    if !header.is_empty() {
        writeln!(w, "{header}")?;
    }
    Ok(w)
}

/// Writes the capture (little-endian pcap), packet CSV, telemetry CSV,
/// schedule CSV and window-label CSV into `dir`. `header` (for example a
/// `# ...` comment line) is prepended to every CSV file when non-empty.
pub fn write_corpus_files(dir: &Path, corpus: &SyntheticCorpus, header: &str) -> Result<CorpusFiles> {
    std::fs::create_dir_all(dir)?;
    let files = CorpusFiles::in_dir(dir);

    let mut pcap = PcapWriter::new(
        BufWriter::new(File::create(&files.pcap)?),
        Endian::Little,
        DEFAULT_SNAPLEN,
    )?;
    for p in &corpus.packets {
        pcap.write_packet(p)?;
    }
    pcap.finish()?.flush()?;

    let mut w = csv_file(&files.packets_csv, header)?;
    write_csv(&mut w, &corpus.packets)?;
    w.flush()?;

    let mut w = csv_file(&files.telemetry_csv, header)?;
    write_telemetry_csv(&mut w, &corpus.telemetry)?;
    w.flush()?;

    let kinds: Vec<String> = corpus.schedule.iter().map(|(k, _)| k.to_string()).collect();
    let mut w = csv_file(&files.schedule_csv, header)?;
    write_truth_csv(&mut w, &kinds, &corpus.truth())?;
    w.flush()?;

    let mut w = csv_file(&files.labels_csv, header)?;
    write_labels_csv(&mut w, &corpus.windows, &corpus.truth())?;
    w.flush()?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract_features, mean_std};
    use crate::traffic::TimeWindow;

    fn small_cfg() -> ScenarioConfig {
        ScenarioConfig {
            devices: 2,
            duration_s: 60,
            ..ScenarioConfig::default()
        }
    }

    fn windows_of(pkts: &[PacketRecord], protocol: Protocol, span: (u64, u64), w: u64) -> Vec<WindowFeatures> {
        let mut out = Vec::new();
        let mut s = span.0;
        while s + w <= span.1 {
            let inside: Vec<PacketRecord> = pkts
                .iter()
                .filter(|p| p.timestamp >= s && p.timestamp < s + w)
                .cloned()
                .collect();
            let win = TimeWindow {
                start: s,
                duration: w,
                device_id: "d".into(),
            };
            if let Ok(f) = extract_features(&inside, protocol, &win) {
                out.push(f);
            }
            s += w;
        }
        out
    }

    #[test]
    fn normal_traffic_is_deterministic() {
        let cfg = small_cfg();
        let span = (cfg.start_us, cfg.start_us + 10 * US);
        assert_eq!(gen_normal_traffic(&cfg, 0, span), gen_normal_traffic(&cfg, 0, span));
        let other = ScenarioConfig { seed: 7, ..small_cfg() };
        assert_ne!(gen_normal_traffic(&cfg, 0, span), gen_normal_traffic(&other, 0, span));
    }

    #[test]
    fn normal_udp_uses_one_service_port() {
        let cfg = small_cfg();
        let span = (cfg.start_us, cfg.start_us + 20 * US);
        let w = windows_of(&gen_normal_traffic(&cfg, 1, span), Protocol::Udp, span, 2 * US);
        assert!(!w.is_empty());
        assert!(w.iter().all(|f| f.dst_port_entropy == 0.0));
    }

    #[test]
    fn normal_tcp_has_three_to_eight_peers() {
        let cfg = small_cfg();
        let span = (cfg.start_us, cfg.start_us + 20 * US);
        for d in 0..5 {
            for f in windows_of(&gen_normal_traffic(&cfg, d, span), Protocol::Tcp, span, 2 * US) {
                assert!((3..=8).contains(&f.dst_ip_count), "{}", f.dst_ip_count);
            }
        }
    }

    #[test]
    fn seq_irregularity_separates_normal_from_ddos() {
        let cfg = ScenarioConfig::default();
        let span = (cfg.start_us, cfg.start_us + 2_000 * US);
        let mut normal_max: f64 = 0.0;
        let mut attack_min = f64::INFINITY;
        let mut count = 0;
        for d in 0..5 {
            let n = windows_of(&gen_normal_traffic(&cfg, d, span), Protocol::Tcp, span, 2 * US);
            count += n.len();
            normal_max = n.iter().map(|f| f.seq_irregularity).fold(normal_max, f64::max);
        }
        assert!(count >= 1000);
        let aspan = (cfg.start_us, cfg.start_us + 200 * US);
        for d in 0..5 {
            let a = windows_of(
                &gen_attack_traffic(&cfg, AttackKind::Ddos, d, aspan),
                Protocol::Tcp,
                aspan,
                2 * US,
            );
            attack_min = a.iter().map(|f| f.seq_irregularity).fold(attack_min, f64::min);
        }
        assert!(
            normal_max < attack_min,
            "normal max {normal_max}, attack min {attack_min}"
        );
    }

    #[test]
    fn attack_signatures() {
        let cfg = small_cfg();
        let span = (cfg.start_us, cfg.start_us + 200 * US);
        let ec = windows_of(
            &gen_attack_traffic(&cfg, AttackKind::EcDdos, 0, span),
            Protocol::Udp,
            span,
            2 * US,
        );
        for f in &ec {
            assert!(f.dominant_port_fraction <= 3.0 / f.num_packet as f64);
            assert_eq!(f.len_stddev, 0.0);
        }
        let ddos = windows_of(
            &gen_attack_traffic(&cfg, AttackKind::Ddos, 0, span),
            Protocol::Tcp,
            span,
            2 * US,
        );
        assert!(ddos.iter().all(|f| f.iden_entropy == 0.0 && f.dst_ip_count == 1));
        let mem = windows_of(
            &gen_attack_traffic(&cfg, AttackKind::MemoryExhaust, 0, span),
            Protocol::Tcp,
            span,
            2 * US,
        );
        assert!(mem
            .iter()
            .all(|f| f.iden_entropy == 0.0 && f.len_stddev == 0.0 && f.mean_len == 1400.0));
    }

    #[test]
    fn attack_rate_at_least_five_times_normal() {
        let cfg = small_cfg();
        let span = (cfg.start_us, cfg.start_us + 200 * US);
        let normal = windows_of(&gen_normal_traffic(&cfg, 0, span), Protocol::Tcp, span, 2 * US);
        let normal_mean = normal.iter().map(|f| f.num_packet as f64).sum::<f64>() / normal.len() as f64;
        for kind in [AttackKind::Ddos, AttackKind::EcDdos] {
            let a = windows_of(&gen_attack_traffic(&cfg, kind, 0, span), kind.protocol(), span, 2 * US);
            assert_eq!(a.len(), 100);
            let mean = a.iter().map(|f| f.num_packet as f64).sum::<f64>() / a.len() as f64;
            assert!(mean >= 5.0 * normal_mean, "{kind}: {mean} vs {normal_mean}");
        }
    }

    #[test]
    fn telemetry_shapes() {
        let cfg = ScenarioConfig::default();
        let s = cfg.start_us;
        let quiet = gen_telemetry(&cfg, 0, (s, s + 600 * US), &[]);
        assert!(quiet.iter().all(|t| t.state == DeviceState::Normal));
        let e: Vec<f64> = quiet.iter().map(|t| t.energy_mw).collect();
        let (m, sd) = mean_std(&e);
        let max_z = e.iter().map(|v| ((v - m) / sd).abs()).fold(0.0, f64::max);
        assert!(max_z <= 5.0, "max |z| {max_z}");

        let attacks = [(AttackKind::Ddos, s + 100 * US, s + 200 * US)];
        let t = gen_telemetry(&cfg, 0, (s, s + 300 * US), &attacks);
        let mid: Vec<f64> = t
            .iter()
            .filter(|x| x.timestamp >= s + 140 * US && x.timestamp < s + 160 * US)
            .map(|x| x.energy_mw)
            .collect();
        let mean = mid.iter().sum::<f64>() / mid.len() as f64;
        assert!((mean - 150.0).abs() < 3.0, "{mean}");

        let attacks = [(AttackKind::MemoryExhaust, s + 100 * US, s + 200 * US)];
        let t = gen_telemetry(&cfg, 0, (s, s + 300 * US), &attacks);
        let end: Vec<f64> = t
            .iter()
            .filter(|x| x.timestamp >= s + 190 * US && x.timestamp < s + 200 * US)
            .map(|x| x.memory_kib)
            .collect();
        let mean = end.iter().sum::<f64>() / end.len() as f64;
        assert!((mean - 2448.0).abs() < 30.0, "{mean}");
        assert!(
            t.iter()
                .all(|x| (x.state == DeviceState::Abnormal)
                    == (x.timestamp >= s + 100 * US && x.timestamp < s + 200 * US))
        );
    }

    #[test]
    fn empty_and_full_schedules() {
        let quiet = build_corpus(&ScenarioConfig {
            schedule: Some(vec![]),
            ..small_cfg()
        })
        .unwrap();
        assert!(quiet.labels.iter().all(|l| *l == Label::Normal));

        let full = build_corpus(&ScenarioConfig {
            schedule: Some(vec![
                ScheduledAttack {
                    kind: AttackKind::Ddos,
                    device: 0,
                    start_s: 0,
                    end_s: 30,
                },
                ScheduledAttack {
                    kind: AttackKind::EcDdos,
                    device: 0,
                    start_s: 30,
                    end_s: 60,
                },
            ]),
            devices: 1,
            check_separation: false,
            ..small_cfg()
        })
        .unwrap();
        for (f, l) in full.windows.iter().zip(&full.labels) {
            let attacked_proto = if f.window.start < full.config.start_us + 30 * US {
                Protocol::Tcp
            } else {
                Protocol::Udp
            };
            assert_eq!(*l == Label::Attacked, f.protocol == attacked_proto);
        }
    }

    #[test]
    fn labels_rederive_from_schedule() {
        let c = build_corpus(&small_cfg()).unwrap();
        assert_eq!(label_windows(&c.windows, &c.truth()).unwrap(), c.labels);
        assert!(c.labels.contains(&Label::Attacked));
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            ScenarioConfig {
                window_secs: 4,
                ..small_cfg()
            },
            ScenarioConfig {
                devices: 0,
                ..small_cfg()
            },
            ScenarioConfig {
                schedule: Some(vec![ScheduledAttack {
                    kind: AttackKind::Ddos,
                    device: 5,
                    start_s: 0,
                    end_s: 10,
                }]),
                ..small_cfg()
            },
            ScenarioConfig {
                schedule: Some(vec![
                    ScheduledAttack {
                        kind: AttackKind::Ddos,
                        device: 0,
                        start_s: 0,
                        end_s: 10,
                    },
                    ScheduledAttack {
                        kind: AttackKind::EcDdos,
                        device: 0,
                        start_s: 5,
                        end_s: 15,
                    },
                ]),
                ..small_cfg()
            },
        ] {
            assert!(build_corpus(&cfg).is_err(), "{cfg:?}");
        }
        assert!("SYN_FLOOD".parse::<AttackKind>().is_err());
    }

    #[test]
    fn overlap_measure() {
        assert_eq!(range_overlap(&[0.0, 1.0], &[2.0, 3.0]), 0.0);
        assert_eq!(range_overlap(&[0.0, 2.0], &[1.0, 3.0]), 0.5);
        assert_eq!(range_overlap(&[0.0, 0.0], &[0.0]), 1.0);
    }

    #[test]
    fn default_schedule_is_aligned_and_valid() {
        for w in WINDOW_CHOICES {
            let cfg = ScenarioConfig {
                window_secs: w,
                ..ScenarioConfig::default()
            };
            let s = cfg.effective_schedule();
            assert_eq!(s.len(), 15);
            assert!(s
                .iter()
                .all(|a| a.start_s % w == 0 && a.end_s % w == 0 && a.end_s <= 600));
            cfg.validate().unwrap();
        }
    }
}
